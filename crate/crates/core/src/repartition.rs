//! Candidate scoring for enabled actions.
//!
//! Every idle humanoid allowed to perform an enabled action is a candidate.
//! A candidate's score is `Σ weight × coefficient(value)` over the
//! configured criteria, where each criterion maps the candidate to one of a
//! fixed set of values. Candidates are ranked by descending score; scores
//! within a relative `1e-9` of each other count as tied and are ordered by
//! humanoid id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ActionKind, ActionSpec, Scenario};
use crate::engine::{enabled_actions, ScenarioState};
use crate::hands::{verdict_from, Hand, HandState};
use crate::ids::{ActionId, HumanoidId};
use crate::world::{HumanoidKind, WorldState};
use crate::DEFAULT_LOOKAHEAD_DEPTH;

pub const ROLE_PRIORITY: &str = "role_priority";
pub const PROXIMITY: &str = "proximity";
pub const EASINESS: &str = "easiness";
pub const TOOL_IN_HAND: &str = "tool_in_hand";
pub const PARTICIPANT_KIND: &str = "participant_kind";

/// Relative tolerance under which two scores are considered equal.
pub const TIE_EPSILON: f64 = 1e-9;

/// The criteria shipped by default. Tuned so that a priority-1 holder who
/// would be stuck halfway loses to a nearby helper with a free hand.
pub const DEFAULT_CRITERIA_TOML: &str = r#"lookahead_depth = 4

[[criterion]]
name = "role_priority"
weight = 1.0
coefficients = { "1" = 1.0, "2" = 0.5, "3+" = 0.2, "none" = -1.0 }

[[criterion]]
name = "proximity"
weight = 1.0
coefficients = { "<1m" = 1.0, "<3m" = 0.5, "<10m" = 0.0, ">=10m" = -0.5 }

[[criterion]]
name = "easiness"
weight = 2.0
coefficients = { "feasible" = 1.0, "requires-collaboration" = -1.0, "infeasible" = -5.0 }
"#;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("criteria config is not valid TOML: {0}")]
    Toml(String),
    #[error("criteria config lists no criteria")]
    Empty,
    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("criterion `{0}` is listed twice")]
    DuplicateCriterion(String),
    #[error("criterion `{name}` has invalid weight {weight}")]
    BadWeight { name: String, weight: String },
    #[error("criterion `{name}` has no coefficient for value `{value}`")]
    MissingCoefficient { name: String, value: String },
    #[error("criterion `{name}` has a coefficient for unknown value `{value}`")]
    UnknownValue { name: String, value: String },
    #[error("criterion `{name}` has a non-finite coefficient for `{value}`")]
    BadCoefficient { name: String, value: String },
    #[error("lookahead depth must be at least 1")]
    BadDepth,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepartitionError {
    #[error("action `{0}` has no candidate")]
    NoCandidate(ActionId),
}

/// The value set of a built-in criterion, in display order.
pub fn criterion_values(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        ROLE_PRIORITY => &["1", "2", "3+", "none"],
        PROXIMITY => &["<1m", "<3m", "<10m", ">=10m"],
        EASINESS => &["feasible", "requires-collaboration", "infeasible"],
        TOOL_IN_HAND => &["in-hand", "not-in-hand", "no-tool"],
        PARTICIPANT_KIND => &["avatar", "virtual"],
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub weight: f64,
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    #[serde(default = "default_depth")]
    pub lookahead_depth: usize,
    #[serde(rename = "criterion", default)]
    pub criteria: Vec<Criterion>,
}

fn default_depth() -> usize {
    DEFAULT_LOOKAHEAD_DEPTH
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CRITERIA_TOML).expect("default criteria are valid")
    }
}

impl CriteriaConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("criteria serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.criteria.is_empty() {
            return Err(ConfigError::Empty);
        }
        if self.lookahead_depth == 0 {
            return Err(ConfigError::BadDepth);
        }
        let mut seen = BTreeSet::new();
        for criterion in &self.criteria {
            let name = &criterion.name;
            let values = criterion_values(name)
                .ok_or_else(|| ConfigError::UnknownCriterion(name.clone()))?;
            if !seen.insert(name.as_str()) {
                return Err(ConfigError::DuplicateCriterion(name.clone()));
            }
            if !criterion.weight.is_finite() || criterion.weight < 0.0 {
                return Err(ConfigError::BadWeight {
                    name: name.clone(),
                    weight: criterion.weight.to_string(),
                });
            }
            for value in values {
                match criterion.coefficients.get(*value) {
                    None => {
                        return Err(ConfigError::MissingCoefficient {
                            name: name.clone(),
                            value: value.to_string(),
                        })
                    }
                    Some(c) if !c.is_finite() => {
                        return Err(ConfigError::BadCoefficient {
                            name: name.clone(),
                            value: value.to_string(),
                        })
                    }
                    Some(_) => {}
                }
            }
            if let Some(extra) = criterion
                .coefficients
                .keys()
                .find(|k| !values.contains(&k.as_str()))
            {
                return Err(ConfigError::UnknownValue {
                    name: name.clone(),
                    value: extra.clone(),
                });
            }
        }
        Ok(())
    }

    /// Same config with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for criterion in &mut out.criteria {
            criterion.weight *= factor;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub criterion: String,
    pub value: String,
    pub weight: f64,
    pub coefficient: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub action: ActionId,
    pub humanoid: HumanoidId,
    pub score: f64,
    pub breakdown: Vec<Contribution>,
    pub rank: usize,
    pub sole_candidate: bool,
}

/// Ranked candidates per enabled action. Actions nobody can take map to an
/// empty list.
pub type Repartition = BTreeMap<ActionId, Vec<CandidateScore>>;

pub fn best_candidate(
    scores: &Repartition,
    action: &ActionId,
) -> Result<HumanoidId, RepartitionError> {
    scores
        .get(action)
        .and_then(|list| list.first())
        .map(|c| c.humanoid.clone())
        .ok_or_else(|| RepartitionError::NoCandidate(action.clone()))
}

/// Raw value of a built-in criterion for one candidate.
pub fn criterion_value(
    name: &str,
    scenario: &Scenario,
    world: &WorldState,
    action: &ActionSpec,
    humanoid: &HumanoidId,
    depth: usize,
) -> String {
    let Some(h) = world.humanoids.get(humanoid) else {
        return String::new();
    };
    match name {
        ROLE_PRIORITY => match action.priority_for(h, world) {
            Some(1) => "1".into(),
            Some(2) => "2".into(),
            Some(_) => "3+".into(),
            None => "none".into(),
        },
        PROXIMITY => {
            let distance = action
                .target()
                .and_then(|t| world.object_position(t).ok())
                .map_or(0.0, |p| p.distance(&h.position));
            proximity_bucket(distance).into()
        }
        EASINESS => verdict_from(world, humanoid, scenario, &action.id, depth)
            .label()
            .into(),
        TOOL_IN_HAND => {
            let tool = match &action.kind {
                ActionKind::Interaction { relation, .. } => {
                    world.relations.get(relation).and_then(|r| r.tool.clone())
                }
                _ => None,
            };
            match tool {
                None => "no-tool".into(),
                Some(ability) => {
                    let held = Hand::BOTH.iter().any(|hand| {
                        matches!(h.hands.get(*hand), HandState::Holding(o)
                            if world.objects.get(o).is_some_and(|o| o.abilities.contains(&ability)))
                    });
                    if held { "in-hand" } else { "not-in-hand" }.into()
                }
            }
        }
        PARTICIPANT_KIND => match h.kind {
            HumanoidKind::Avatar => "avatar".into(),
            HumanoidKind::Virtual => "virtual".into(),
        },
        _ => String::new(),
    }
}

pub fn proximity_bucket(distance: f64) -> &'static str {
    if distance < 1.0 {
        "<1m"
    } else if distance < 3.0 {
        "<3m"
    } else if distance < 10.0 {
        "<10m"
    } else {
        ">=10m"
    }
}

/// Scores and ranks candidates for every enabled action.
pub fn score_candidates(
    scenario: &Scenario,
    state: &ScenarioState,
    world: &WorldState,
    config: &CriteriaConfig,
) -> Repartition {
    enabled_actions(state, scenario)
        .into_iter()
        .filter_map(|(id, _)| scenario.action(&id))
        .map(|action| {
            (
                action.id.clone(),
                score_action(scenario, world, config, action),
            )
        })
        .collect()
}

/// Ranked candidates for one action, whether or not it is enabled.
pub fn score_action(
    scenario: &Scenario,
    world: &WorldState,
    config: &CriteriaConfig,
    action: &ActionSpec,
) -> Vec<CandidateScore> {
    let mut list: Vec<CandidateScore> = world
        .humanoids
        .values()
        .filter(|h| h.is_idle() && action.priority_for(h, world).is_some())
        .map(|h| {
            let breakdown: Vec<Contribution> = config
                .criteria
                .iter()
                .map(|c| {
                    let value = criterion_value(
                        &c.name,
                        scenario,
                        world,
                        action,
                        &h.id,
                        config.lookahead_depth,
                    );
                    let coefficient = c.coefficients.get(&value).copied().unwrap_or(0.0);
                    Contribution {
                        criterion: c.name.clone(),
                        weight: c.weight,
                        coefficient,
                        contribution: c.weight * coefficient,
                        value,
                    }
                })
                .collect();
            CandidateScore {
                action: action.id.clone(),
                humanoid: h.id.clone(),
                score: breakdown.iter().map(|c| c.contribution).sum(),
                breakdown,
                rank: 0,
                sole_candidate: false,
            }
        })
        .collect();
    rank(&mut list);
    list
}

/// Orders by descending score with near-equal scores grouped and ordered by
/// humanoid id, then assigns ranks 1..n.
pub fn rank(list: &mut [CandidateScore]) {
    list.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.humanoid.cmp(&b.humanoid))
    });
    let mut start = 0;
    while start < list.len() {
        let leader = list[start].score;
        let tolerance = TIE_EPSILON * leader.abs().max(1.0);
        let mut end = start + 1;
        while end < list.len() && leader - list[end].score <= tolerance {
            end += 1;
        }
        list[start..end].sort_by(|a, b| a.humanoid.cmp(&b.humanoid));
        start = end;
    }
    let sole = list.len() == 1;
    for (i, candidate) in list.iter_mut().enumerate() {
        candidate.rank = i + 1;
        candidate.sole_candidate = sole;
    }
}
