use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::model::{
    ActionKind, ActionSpec, HandReq, HandReqPair, HandRequirement, HoldSpec, RoleDecl, RoleRef,
    RoleSpec, Scenario, ScenarioGraph, Step, Transition,
};
use super::validate::check_structure;
use super::{sort_diagnostics, Code, Diagnostic, Location, ANYONE};
use crate::hands::{HandState, Hands};
use crate::ids::{is_valid_token, Ability, ActionId, ObjectId, RoleName, StepId};
use crate::world::{Point, Relation, StateEffect, WorldObject, WorldState};

/// Where each declared item starts in the source text. Kept apart from the
/// scenario so that two scenarios with the same content compare equal
/// whatever their layout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub objects: BTreeMap<ObjectId, Location>,
    pub relations: BTreeMap<String, Location>,
    pub roles: BTreeMap<RoleName, Location>,
    pub actions: BTreeMap<ActionId, Location>,
    pub steps: BTreeMap<StepId, Location>,
    pub transitions: Vec<Location>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub scenario: Scenario,
    pub source_map: SourceMap,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{}", render(.diagnostics))]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

fn render(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

impl ParseError {
    fn single(code: Code, location: Option<Location>, message: impl Into<String>) -> Self {
        Self {
            diagnostics: vec![Diagnostic::new(code, location, message)],
        }
    }

    pub fn codes(&self) -> Vec<Code> {
        self.diagnostics.iter().map(|d| d.code).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    World,
    Roles,
    Actions,
    Graph,
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::single(Code::Syntax, Some(Location::new(line, column)), message)
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().enumerate().peekable();
    let mut current: Option<Token> = None;
    while let Some((idx, c)) = chars.next() {
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                if let Some(token) = current.take() {
                    tokens.push(token);
                }
            }
            '"' => {
                let token = current.get_or_insert_with(|| Token {
                    text: String::new(),
                    column: idx + 1,
                });
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, '"')) => token.text.push('"'),
                            Some((_, '\\')) => token.text.push('\\'),
                            Some((_, 'n')) => token.text.push('\n'),
                            Some((j, other)) => {
                                return Err(syntax(
                                    lineno,
                                    j + 1,
                                    format!("unknown escape `\\{other}`"),
                                ))
                            }
                            None => break,
                        },
                        c => token.text.push(c),
                    }
                }
                if !closed {
                    return Err(syntax(lineno, idx + 1, "unterminated string"));
                }
            }
            c => current
                .get_or_insert_with(|| Token {
                    text: String::new(),
                    column: idx + 1,
                })
                .text
                .push(c),
        }
    }
    if let Some(token) = current {
        tokens.push(token);
    }
    Ok(tokens)
}

/// `key=value` attributes and bare flags following the positional tokens.
struct Attrs {
    line: usize,
    values: BTreeMap<String, (String, usize)>,
    flags: BTreeMap<String, usize>,
}

impl Attrs {
    fn new(tokens: &[Token], line: usize) -> Result<Self, ParseError> {
        let mut values = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for token in tokens {
            if let Some((key, value)) = token.text.split_once('=') {
                if values
                    .insert(key.to_string(), (value.to_string(), token.column))
                    .is_some()
                {
                    return Err(syntax(
                        line,
                        token.column,
                        format!("attribute `{key}` given twice"),
                    ));
                }
            } else if flags.insert(token.text.clone(), token.column).is_some() {
                return Err(syntax(
                    line,
                    token.column,
                    format!("flag `{}` given twice", token.text),
                ));
            }
        }
        Ok(Self {
            line,
            values,
            flags,
        })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.values.remove(key)
    }

    fn require(&mut self, key: &str, column: usize) -> Result<(String, usize), ParseError> {
        self.take(key)
            .ok_or_else(|| syntax(self.line, column, format!("missing attribute `{key}=`")))
    }

    fn flag(&mut self, name: &str) -> bool {
        self.flags.remove(name).is_some()
    }

    fn finish(self) -> Result<(), ParseError> {
        if let Some((key, (_, column))) = self.values.into_iter().next() {
            return Err(syntax(
                self.line,
                column,
                format!("unknown attribute `{key}`"),
            ));
        }
        if let Some((flag, column)) = self.flags.into_iter().next() {
            return Err(syntax(
                self.line,
                column,
                format!("unexpected token `{flag}`"),
            ));
        }
        Ok(())
    }
}

fn ident(token: &Token, line: usize, what: &str) -> Result<String, ParseError> {
    if is_valid_token(&token.text) {
        Ok(token.text.clone())
    } else {
        Err(syntax(
            line,
            token.column,
            format!("invalid {what} `{}`", token.text),
        ))
    }
}

fn token_list(value: &str, line: usize, column: usize) -> Result<Vec<String>, ParseError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            if is_valid_token(item) {
                Ok(item.to_string())
            } else {
                Err(syntax(line, column, format!("invalid list item `{item}`")))
            }
        })
        .collect()
}

fn abilities(value: &str, line: usize, column: usize) -> Result<BTreeSet<Ability>, ParseError> {
    Ok(token_list(value, line, column)?
        .into_iter()
        .map(Ability::from)
        .collect())
}

fn point(value: &str, line: usize, column: usize) -> Result<Point, ParseError> {
    let bad = || syntax(line, column, format!("expected `x,y`, got `{value}`"));
    let (x, y) = value.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.parse().map_err(|_| bad())?;
    let y: f64 = y.parse().map_err(|_| bad())?;
    if !x.is_finite() || !y.is_finite() {
        return Err(bad());
    }
    Ok(Point::new(x, y))
}

fn hand_req(token: &str, line: usize, column: usize) -> Result<HandReq, ParseError> {
    Ok(match token {
        "free" => HandReq::Free,
        "busy" => HandReq::Busy,
        "any" => HandReq::Indifferent,
        "hold:target" => HandReq::Holding(HoldSpec::Target),
        other => match other.strip_prefix("hold:") {
            Some(ability) if is_valid_token(ability) => {
                HandReq::Holding(HoldSpec::Ability(Ability::from(ability)))
            }
            _ => {
                return Err(syntax(
                    line,
                    column,
                    format!("invalid hand state `{other}`"),
                ))
            }
        },
    })
}

fn hand_pair(value: &str, line: usize, column: usize) -> Result<HandReqPair, ParseError> {
    let (left, right) = value.split_once(',').ok_or_else(|| {
        syntax(
            line,
            column,
            format!("expected `left,right`, got `{value}`"),
        )
    })?;
    Ok(HandReqPair::new(
        hand_req(left, line, column)?,
        hand_req(right, line, column)?,
    ))
}

fn hand_requirement(
    value: &str,
    line: usize,
    column: usize,
) -> Result<HandRequirement, ParseError> {
    match value.split_once("->") {
        Some((before, after)) => Ok(HandRequirement {
            before: hand_pair(before, line, column)?,
            after: hand_pair(after, line, column)?,
        }),
        None => Ok(HandRequirement {
            before: hand_pair(value, line, column)?,
            after: HandReqPair::indifferent(),
        }),
    }
}

fn initial_hands(value: &str, line: usize, column: usize) -> Result<Hands, ParseError> {
    let pair = hand_pair(value, line, column)?;
    let state = |req: &HandReq| match req {
        HandReq::Free => Ok(HandState::Free),
        HandReq::Busy => Ok(HandState::Busy),
        _ => Err(syntax(
            line,
            column,
            "initial hands must be `free` or `busy`",
        )),
    };
    Ok(Hands::new(state(&pair.left)?, state(&pair.right)?))
}

fn role_specs(value: &str, line: usize, column: usize) -> Result<Vec<RoleSpec>, ParseError> {
    let mut specs = Vec::new();
    for item in value.split(',').filter(|s| !s.is_empty()) {
        let (role, priority) = item.split_once(':').ok_or_else(|| {
            syntax(
                line,
                column,
                format!("expected `role:priority`, got `{item}`"),
            )
        })?;
        if !is_valid_token(role) {
            return Err(syntax(line, column, format!("invalid role `{role}`")));
        }
        let priority: u32 = priority
            .parse()
            .map_err(|_| syntax(line, column, format!("invalid priority `{priority}`")))?;
        if priority == 0 {
            return Err(ParseError::single(
                Code::BadPriority,
                Some(Location::new(line, column)),
                format!("priority of `{role}` must be at least 1"),
            ));
        }
        let role = if role == ANYONE {
            RoleRef::Anyone
        } else {
            RoleRef::Named(RoleName::from(role))
        };
        specs.push(RoleSpec { role, priority });
    }
    Ok(specs)
}

fn effects(value: &str, line: usize, column: usize) -> Result<Vec<StateEffect>, ParseError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let (sign, tag) = item.split_at(item.chars().next().map_or(0, char::len_utf8));
            if !is_valid_token(tag) {
                return Err(syntax(line, column, format!("invalid effect `{item}`")));
            }
            match sign {
                "+" => Ok(StateEffect::AddTag(tag.to_string())),
                "-" => Ok(StateEffect::RemoveTag(tag.to_string())),
                _ => Err(syntax(
                    line,
                    column,
                    format!("effect `{item}` must start with + or -"),
                )),
            }
        })
        .collect()
}

#[derive(Default)]
struct Builder {
    name: Option<String>,
    world: WorldState,
    roles: BTreeMap<RoleName, RoleDecl>,
    actions: BTreeMap<ActionId, ActionSpec>,
    graph: ScenarioGraph,
    map: SourceMap,
    duplicates: Vec<Diagnostic>,
}

impl Builder {
    fn duplicate(&mut self, kind: &str, id: &str, at: Location) {
        self.duplicates.push(Diagnostic::new(
            Code::DuplicateId,
            Some(at),
            format!("{kind} `{id}` declared twice"),
        ));
    }

    fn world_line(&mut self, tokens: &[Token], line: usize) -> Result<(), ParseError> {
        let keyword = &tokens[0];
        let at = Location::new(line, keyword.column);
        let id_token = tokens.get(1).ok_or_else(|| {
            syntax(
                line,
                keyword.column,
                format!("`{}` needs an id", keyword.text),
            )
        })?;
        let mut attrs = Attrs::new(&tokens[2..], line)?;
        match keyword.text.as_str() {
            "object" => {
                let id = ObjectId::from(ident(id_token, line, "object id")?);
                let mut object = WorldObject::new(id.clone());
                if let Some((name, _)) = attrs.take("name") {
                    object.name = name;
                }
                if let Some((value, col)) = attrs.take("abilities") {
                    object.abilities = abilities(&value, line, col)?;
                }
                if let Some((value, col)) = attrs.take("at") {
                    object.position = point(&value, line, col)?;
                }
                if let Some((value, col)) = attrs.take("tags") {
                    object.tags = token_list(&value, line, col)?.into_iter().collect();
                }
                attrs.finish()?;
                if self.world.objects.contains_key(&id) {
                    self.duplicate("object", id.as_str(), at);
                } else {
                    self.map.objects.insert(id, at);
                    self.world
                        .add_object(object)
                        .expect("checked for duplicates");
                }
            }
            "relation" => {
                let name = ident(id_token, line, "relation name")?;
                let mut relation = Relation::new(name.clone());
                if let Some((value, col)) = attrs.take("actor") {
                    relation.actor_abilities = abilities(&value, line, col)?;
                }
                if let Some((value, col)) = attrs.take("target") {
                    relation.target_abilities = abilities(&value, line, col)?;
                }
                if let Some((value, col)) = attrs.take("tool") {
                    if !is_valid_token(&value) {
                        return Err(syntax(line, col, format!("invalid tool ability `{value}`")));
                    }
                    relation.tool = Some(Ability::from(value));
                }
                if let Some((value, col)) = attrs.take("effects") {
                    relation.effects = effects(&value, line, col)?;
                }
                attrs.finish()?;
                if self.world.relations.contains_key(&name) {
                    self.duplicate("relation", &name, at);
                } else {
                    self.map.relations.insert(name, at);
                    self.world
                        .add_relation(relation)
                        .expect("checked for duplicates");
                }
            }
            other => {
                return Err(syntax(
                    line,
                    keyword.column,
                    format!("unexpected `{other}` in WORLD"),
                ))
            }
        }
        Ok(())
    }

    fn role_line(&mut self, tokens: &[Token], line: usize) -> Result<(), ParseError> {
        let keyword = &tokens[0];
        if keyword.text != "role" {
            return Err(syntax(
                line,
                keyword.column,
                format!("unexpected `{}` in ROLES", keyword.text),
            ));
        }
        let at = Location::new(line, keyword.column);
        let id_token = tokens
            .get(1)
            .ok_or_else(|| syntax(line, keyword.column, "`role` needs a name"))?;
        let name = ident(id_token, line, "role name")?;
        if name == ANYONE {
            return Err(syntax(line, id_token.column, "`ANYONE` is reserved"));
        }
        let mut decl = RoleDecl::new(name.as_str());
        let mut attrs = Attrs::new(&tokens[2..], line)?;
        if let Some((value, col)) = attrs.take("abilities") {
            decl.abilities = abilities(&value, line, col)?;
        }
        if let Some((value, col)) = attrs.take("at") {
            decl.position = Some(point(&value, line, col)?);
        }
        if let Some((value, col)) = attrs.take("hands") {
            decl.hands = Some(initial_hands(&value, line, col)?);
        }
        attrs.finish()?;
        let name = RoleName::from(name);
        if self.roles.contains_key(&name) {
            self.duplicate("role", name.as_str(), at);
        } else {
            self.map.roles.insert(name.clone(), at);
            self.roles.insert(name, decl);
        }
        Ok(())
    }

    fn action_line(&mut self, tokens: &[Token], line: usize) -> Result<(), ParseError> {
        let keyword = &tokens[0];
        if keyword.text != "action" {
            return Err(syntax(
                line,
                keyword.column,
                format!("unexpected `{}` in ACTIONS", keyword.text),
            ));
        }
        let at = Location::new(line, keyword.column);
        let (Some(id_token), Some(kind_token)) = (tokens.get(1), tokens.get(2)) else {
            return Err(syntax(
                line,
                keyword.column,
                "expected `action <id> <kind> ...`",
            ));
        };
        let id = ActionId::from(ident(id_token, line, "action id")?);
        let mut attrs = Attrs::new(&tokens[3..], line)?;
        let kc = kind_token.column;
        let kind = match kind_token.text.as_str() {
            "interact" => ActionKind::Interaction {
                relation: attrs.require("relation", kc)?.0,
                target: ObjectId::from(attrs.require("target", kc)?.0),
            },
            "communicate" => {
                let (to, col) = attrs.require("to", kc)?;
                if !is_valid_token(&to) {
                    return Err(syntax(line, col, format!("invalid recipient role `{to}`")));
                }
                ActionKind::Communication {
                    recipient: RoleName::from(to),
                    message: attrs.require("message", kc)?.0,
                }
            }
            "notify" => ActionKind::NotifyIntent {
                collaborative: ActionId::from(attrs.require("collaborative", kc)?.0),
            },
            "collaborative" => {
                let (slots, col) = attrs.require("slots", kc)?;
                let slots = token_list(&slots, line, col)?
                    .into_iter()
                    .map(ActionId::from)
                    .collect();
                let (timeout, col) = attrs.require("timeout", kc)?;
                let timeout_ticks: u32 = timeout
                    .parse()
                    .map_err(|_| syntax(line, col, format!("invalid timeout `{timeout}`")))?;
                if timeout_ticks == 0 {
                    return Err(ParseError::single(
                        Code::BadTimeout,
                        Some(Location::new(line, col)),
                        format!("collaborative `{id}` needs a timeout of at least one tick"),
                    ));
                }
                ActionKind::Collaborative {
                    slots,
                    timeout_ticks,
                }
            }
            other => return Err(syntax(line, kc, format!("unknown action kind `{other}`"))),
        };
        let (roles, col) = attrs.require("roles", keyword.column)?;
        let roles = role_specs(&roles, line, col)?;
        let mut action = ActionSpec::new(id.clone(), kind, roles);
        if let Some((value, col)) = attrs.take("hands") {
            if !matches!(action.kind, ActionKind::Interaction { .. }) {
                return Err(syntax(line, col, "`hands=` applies to interactions only"));
            }
            action.hands = hand_requirement(&value, line, col)?;
        }
        action.urgent = attrs.flag("urgent");
        attrs.finish()?;
        if self.actions.contains_key(&id) {
            self.duplicate("action", id.as_str(), at);
        } else {
            self.map.actions.insert(id.clone(), at);
            self.actions.insert(id, action);
        }
        Ok(())
    }

    fn graph_line(&mut self, tokens: &[Token], line: usize) -> Result<(), ParseError> {
        let keyword = &tokens[0];
        let at = Location::new(line, keyword.column);
        match keyword.text.as_str() {
            "step" => {
                let id_token = tokens
                    .get(1)
                    .ok_or_else(|| syntax(line, keyword.column, "`step` needs an id"))?;
                let id = StepId::from(ident(id_token, line, "step id")?);
                let mut attrs = Attrs::new(&tokens[2..], line)?;
                let action = attrs.take("action").map(|(a, _)| ActionId::from(a));
                let step = Step {
                    id: id.clone(),
                    action,
                    initial: attrs.flag("initial"),
                    terminal: attrs.flag("terminal"),
                };
                attrs.finish()?;
                if self.graph.steps.contains_key(&id) {
                    self.duplicate("step", id.as_str(), at);
                } else {
                    self.map.steps.insert(id.clone(), at);
                    self.graph.steps.insert(id, step);
                }
            }
            "transition" => {
                let [_, from, arrow, to] = tokens else {
                    return Err(syntax(
                        line,
                        keyword.column,
                        "expected `transition a,b -> c`",
                    ));
                };
                if arrow.text != "->" {
                    return Err(syntax(line, arrow.column, "expected `->`"));
                }
                let steps = |token: &Token| -> Result<BTreeSet<StepId>, ParseError> {
                    let list = token_list(&token.text, line, token.column)?;
                    if list.is_empty() {
                        return Err(syntax(line, token.column, "empty step list"));
                    }
                    Ok(list.into_iter().map(StepId::from).collect())
                };
                self.graph.transitions.push(Transition {
                    from: steps(from)?,
                    to: steps(to)?,
                });
                self.map.transitions.push(at);
            }
            other => {
                return Err(syntax(
                    line,
                    keyword.column,
                    format!("unexpected `{other}` in GRAPH"),
                ))
            }
        }
        Ok(())
    }
}

/// Parses and validates a scenario. Structural problems (unknown
/// references, dangling notifications, unreachable steps, ...) are all
/// reported together; a syntax error stops at the offending line.
pub fn parse(source: &str) -> Result<Parsed, ParseError> {
    let mut builder = Builder::default();
    let mut section: Option<Section> = None;
    let mut seen_content = false;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw, line)?;
        let Some(first) = tokens.first() else {
            continue;
        };
        seen_content = true;
        let header = match first.text.as_str() {
            "WORLD" => Some(Section::World),
            "ROLES" => Some(Section::Roles),
            "ACTIONS" => Some(Section::Actions),
            "GRAPH" => Some(Section::Graph),
            _ => None,
        };
        if let Some(next) = header {
            if tokens.len() > 1 {
                return Err(syntax(
                    line,
                    tokens[1].column,
                    "section headers stand alone",
                ));
            }
            section = Some(next);
            continue;
        }
        match section {
            None if first.text == "scenario" && builder.name.is_none() => {
                let [_, name] = tokens.as_slice() else {
                    return Err(syntax(line, first.column, "expected `scenario \"name\"`"));
                };
                builder.name = Some(name.text.clone());
            }
            None => {
                return Err(syntax(
                    line,
                    first.column,
                    "expected a section header (WORLD, ROLES, ACTIONS, GRAPH)",
                ))
            }
            Some(Section::World) => builder.world_line(&tokens, line)?,
            Some(Section::Roles) => builder.role_line(&tokens, line)?,
            Some(Section::Actions) => builder.action_line(&tokens, line)?,
            Some(Section::Graph) => builder.graph_line(&tokens, line)?,
        }
    }

    if !seen_content || (builder.actions.is_empty() && builder.graph.steps.is_empty()) {
        return Err(ParseError::single(
            Code::EmptyScenario,
            None,
            "scenario declares no actions and no steps",
        ));
    }

    let scenario = Scenario {
        name: builder.name.unwrap_or_default(),
        world: builder.world,
        roles: builder.roles,
        actions: builder.actions,
        graph: builder.graph,
    };
    let mut diagnostics = builder.duplicates;
    diagnostics.extend(check_structure(&scenario, Some(&builder.map)));
    if diagnostics.is_empty() {
        Ok(Parsed {
            scenario,
            source_map: builder.map,
        })
    } else {
        sort_diagnostics(&mut diagnostics);
        Err(ParseError { diagnostics })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COLLAB: &str = r#"
scenario "heavy lift"
WORLD
object crate abilities=liftable at=1,1
relation lift actor=strong target=liftable
ROLES
role a
role b
ACTIONS
action na notify collaborative=hold roles=a:1
action nb notify collaborative=hold roles=b:1
action hold collaborative slots=na,nb timeout=10 roles=a:1,b:1
GRAPH
step s0 action=na initial
step s1 action=nb initial
step s2 action=hold
step end terminal
transition s0,s1 -> s2
transition s2 -> end
"#;

    #[test]
    fn collaborative_is_preceded_by_join_of_notifications() {
        let parsed = parse(COLLAB).unwrap();
        let graph = &parsed.scenario.graph;
        let s2 = StepId::from("s2");
        let incoming: Vec<_> = graph.incoming(&s2).collect();
        assert_eq!(incoming.len(), 1);
        let expected: BTreeSet<StepId> = ["s0", "s1"].into_iter().map(StepId::from).collect();
        assert_eq!(incoming[0].from, expected);
        assert_eq!(parsed.scenario.name, "heavy lift");
    }

    #[test]
    fn empty_source_is_rejected() {
        for source in ["", "   \n# only a comment\n"] {
            let err = parse(source).unwrap_err();
            assert_eq!(err.codes(), vec![Code::EmptyScenario]);
        }
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let err = parse("WORLD\nobject x at=1\n").unwrap_err();
        assert_eq!(err.codes(), vec![Code::Syntax]);
        assert_eq!(err.diagnostics[0].location, Some(Location::new(2, 10)));
    }

    #[test]
    fn quoted_messages_keep_spaces_and_escapes() {
        let src = r#"
ROLES
role guide
role driver
ACTIONS
action say communicate to=driver message="turn on the \"right\"" roles=guide:1
GRAPH
step s action=say initial
step e terminal
transition s -> e
"#;
        let parsed = parse(src).unwrap();
        let action = &parsed.scenario.actions[&ActionId::from("say")];
        assert_eq!(
            action.kind,
            ActionKind::Communication {
                recipient: "driver".into(),
                message: "turn on the \"right\"".into()
            }
        );
    }

    #[test]
    fn dangling_notify_and_unknown_references_are_distinct() {
        let src = r#"
ACTIONS
action n notify collaborative=nothing roles=a:1
action x interact relation=nope target=ghost roles=a:1
GRAPH
step s action=n initial
step t action=x
step e terminal
transition s -> t
transition t -> e
"#;
        let err = parse(src).unwrap_err();
        let codes = err.codes();
        assert!(codes.contains(&Code::DanglingNotify), "{codes:?}");
        assert!(codes.contains(&Code::UnknownRelation), "{codes:?}");
        assert!(codes.contains(&Code::UnknownObject), "{codes:?}");
    }

    #[test]
    fn unreachable_step_is_reported() {
        let src = r#"
ACTIONS
action a communicate to=r message=hi roles=r:1
action b communicate to=r message=ho roles=r:1
GRAPH
step s action=a initial
step lost action=b
step e terminal
transition s -> e
transition lost -> e
"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.codes(), vec![Code::UnreachableStep]);
        assert_eq!(err.diagnostics[0].location, Some(Location::new(7, 1)));
    }

    #[test]
    fn zero_timeout_and_zero_priority_have_their_own_codes() {
        let err =
            parse("ACTIONS\naction c collaborative slots=a,b timeout=0 roles=r:1\n").unwrap_err();
        assert_eq!(err.codes(), vec![Code::BadTimeout]);
        let err = parse("ACTIONS\naction c communicate to=r message=m roles=r:0\n").unwrap_err();
        assert_eq!(err.codes(), vec![Code::BadPriority]);
    }

    #[test]
    fn duplicate_ids_are_collected() {
        let src = "ROLES\nrole r\nrole r\nACTIONS\naction a communicate to=r message=m roles=r:1\nGRAPH\nstep s action=a initial\nstep e terminal\ntransition s -> e\n";
        let err = parse(src).unwrap_err();
        assert_eq!(err.codes(), vec![Code::DuplicateId]);
    }

    #[test]
    fn anyone_is_a_role_wildcard() {
        let src = "ACTIONS\naction a communicate to=r message=m roles=r:1,ANYONE:2\nGRAPH\nstep s action=a initial\nstep e terminal\ntransition s -> e\n";
        let parsed = parse(src).unwrap();
        let roles = &parsed.scenario.actions[&ActionId::from("a")].roles;
        assert_eq!(roles[1], RoleSpec::anyone(2));
    }
}
