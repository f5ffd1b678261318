//! Virtual human decision-making: collect, tag, select.
//!
//! `collect` gathers what the humanoid could do: scenario actions it is a
//! candidate for, interactions the world allows outside the scenario, and
//! actions a pedagogy component asks for. `tag` annotates them. `select`
//! draws a behavior from the pedagogical profile and picks one candidate
//! for that behavior, falling back to following the procedure and then to
//! idling when the drawn behavior has nothing to offer.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ActionKind, ActionSpec, HandReq, HoldSpec, Scenario};
use crate::engine::ScenarioState;
use crate::hands::{plan_hands, HandPlan, ImplicitStep};
use crate::ids::{ActionId, HumanoidId, ObjectId};
use crate::repartition::{best_candidate, Repartition};
use crate::world::{PossibleInteraction, WorldState};

/// Tolerance on the sum of profile probabilities.
pub const PROFILE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("unknown profile preset `{0}`")]
    UnknownPreset(String),
    #[error("probability `{name}` = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("profile probabilities sum to {0}, not 1")]
    BadSum(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tutor,
    Companion,
    Troublemaker,
    Custom,
}

/// Propensities to follow the procedure, make mistakes, hinder others or
/// stay idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedagogicalProfile {
    pub preset: Preset,
    pub p_follow: f64,
    pub p_error: f64,
    pub p_hinder: f64,
    pub p_idle: f64,
}

impl PedagogicalProfile {
    pub fn tutor() -> Self {
        Self::preset_values(Preset::Tutor, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn companion() -> Self {
        Self::preset_values(Preset::Companion, 0.85, 0.1, 0.0, 0.05)
    }

    pub fn troublemaker() -> Self {
        Self::preset_values(Preset::Troublemaker, 0.4, 0.2, 0.3, 0.1)
    }

    fn preset_values(
        preset: Preset,
        p_follow: f64,
        p_error: f64,
        p_hinder: f64,
        p_idle: f64,
    ) -> Self {
        Self {
            preset,
            p_follow,
            p_error,
            p_hinder,
            p_idle,
        }
    }

    pub fn from_preset(name: &str) -> Result<Self, ProfileError> {
        match name {
            "tutor" => Ok(Self::tutor()),
            "companion" => Ok(Self::companion()),
            "troublemaker" => Ok(Self::troublemaker()),
            other => Err(ProfileError::UnknownPreset(other.to_string())),
        }
    }

    pub fn custom(
        p_follow: f64,
        p_error: f64,
        p_hinder: f64,
        p_idle: f64,
    ) -> Result<Self, ProfileError> {
        let profile = Self::preset_values(Preset::Custom, p_follow, p_error, p_hinder, p_idle);
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for (name, value) in [
            ("p_follow", self.p_follow),
            ("p_error", self.p_error),
            ("p_hinder", self.p_hinder),
            ("p_idle", self.p_idle),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileError::OutOfRange { name, value });
            }
        }
        let sum = self.p_follow + self.p_error + self.p_hinder + self.p_idle;
        if (sum - 1.0).abs() > PROFILE_TOLERANCE {
            return Err(ProfileError::BadSum(sum));
        }
        Ok(())
    }

    /// Maps a uniform draw in [0, 1) to a behavior by cumulative probability.
    pub fn branch(&self, u: f64) -> Branch {
        if u < self.p_follow {
            Branch::Follow
        } else if u < self.p_follow + self.p_error {
            Branch::Error
        } else if u < self.p_follow + self.p_error + self.p_hinder {
            Branch::Hinder
        } else {
            Branch::Idle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Follow,
    Error,
    Hinder,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Important,
    Collaborative,
    Urgent,
    Hindering,
    BestForMe,
    SoleCandidate,
    PedagogicalDemand,
    OffScenario,
}

/// Something a humanoid could do.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    Scenario(ActionId),
    OffScenario(PossibleInteraction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedAction {
    pub candidate: Candidate,
    pub tags: BTreeSet<Tag>,
    /// The humanoid's own repartition score; `None` off scenario.
    pub score: Option<f64>,
    /// Whether the hands can be brought to the action's requirement now.
    pub feasible: bool,
}

impl TaggedAction {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Perform {
        candidate: Candidate,
    },
    NotifyIntent {
        slot: ActionId,
        collaborative: ActionId,
    },
    Idle,
}

/// Everything the decision loop reads. Agents never write through it.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub scenario: &'a Scenario,
    pub state: &'a ScenarioState,
    pub world: &'a WorldState,
    pub repartition: &'a Repartition,
    /// Actions requested by the pedagogy component.
    pub demands: &'a [ActionId],
}

impl DecisionContext<'_> {
    fn is_candidate(&self, humanoid: &HumanoidId, action: &ActionId) -> bool {
        self.repartition
            .get(action)
            .is_some_and(|list| list.iter().any(|c| &c.humanoid == humanoid))
            && self
                .state
                .check_perform(
                    self.scenario,
                    self.world,
                    action,
                    std::slice::from_ref(humanoid),
                )
                .is_ok()
    }

    /// The scenario action an interaction corresponds to, if it is one the
    /// humanoid is a candidate for right now.
    fn scenario_match(
        &self,
        humanoid: &HumanoidId,
        interaction: &PossibleInteraction,
    ) -> Option<ActionId> {
        self.repartition.keys().find_map(|id| {
            let action = self.scenario.action(id)?;
            match &action.kind {
                ActionKind::Interaction { relation, target }
                    if relation == &interaction.relation
                        && target == &interaction.target
                        && self.is_candidate(humanoid, id) =>
                {
                    Some(id.clone())
                }
                _ => None,
            }
        })
    }
}

/// Candidate actions for an idle humanoid, deduplicated and sorted.
pub fn collect(ctx: &DecisionContext<'_>, humanoid: &HumanoidId) -> Vec<Candidate> {
    let Some(h) = ctx.world.humanoids.get(humanoid) else {
        return Vec::new();
    };
    if !h.is_idle() {
        return Vec::new();
    }
    let mut out: BTreeSet<Candidate> = ctx
        .repartition
        .keys()
        .chain(ctx.demands)
        .filter(|id| ctx.is_candidate(humanoid, id))
        .map(|id| Candidate::Scenario(id.clone()))
        .collect();
    for interaction in ctx
        .world
        .possible_interactions(humanoid)
        .unwrap_or_default()
    {
        if ctx.scenario_match(humanoid, &interaction).is_none() {
            out.insert(Candidate::OffScenario(interaction));
        }
    }
    out.into_iter().collect()
}

/// The action a humanoid would run for an off-scenario interaction: the
/// relation applied to the target. The planner adds the relation's tool.
pub fn off_scenario_spec(interaction: &PossibleInteraction) -> ActionSpec {
    ActionSpec::new(
        format!("off:{}:{}", interaction.relation, interaction.target),
        ActionKind::Interaction {
            relation: interaction.relation.clone(),
            target: interaction.target.clone(),
        },
        Vec::new(),
    )
}

/// Objects the plan puts in the humanoid's hands that were not there before.
fn grasped(world: &WorldState, humanoid: &HumanoidId, plan: &HandPlan) -> BTreeSet<ObjectId> {
    plan.steps()
        .iter()
        .filter_map(|s| match s {
            ImplicitStep::Grasp { object, .. } => Some(object.clone()),
            ImplicitStep::Lay { .. } => None,
        })
        .filter(|o| {
            world
                .objects
                .get(o)
                .is_none_or(|o| o.held_by.as_ref().is_none_or(|h| &h.humanoid != humanoid))
        })
        .collect()
}

/// Objects the candidate would take hold of (or, off scenario, act on).
pub fn occupied_objects(
    ctx: &DecisionContext<'_>,
    humanoid: &HumanoidId,
    candidate: &Candidate,
) -> BTreeSet<ObjectId> {
    match candidate {
        Candidate::Scenario(id) => {
            let Some(action) = ctx.scenario.action(id) else {
                return BTreeSet::new();
            };
            let mut out = grasped(
                ctx.world,
                humanoid,
                &plan_hands(ctx.world, humanoid, action),
            );
            let holds_target = [&action.hands.after.left, &action.hands.after.right]
                .into_iter()
                .any(|r| r == &HandReq::Holding(HoldSpec::Target));
            if let (true, Some(target)) = (holds_target, action.target()) {
                out.insert(target.clone());
            }
            out
        }
        Candidate::OffScenario(interaction) => {
            let mut out = grasped(
                ctx.world,
                humanoid,
                &plan_hands(ctx.world, humanoid, &off_scenario_spec(interaction)),
            );
            out.insert(interaction.target.clone());
            out
        }
    }
}

/// Objects an enabled action needs: its target and whatever its best
/// candidate would grasp for it.
pub fn needed_objects(ctx: &DecisionContext<'_>, action: &ActionId) -> BTreeSet<ObjectId> {
    let Some(spec) = ctx.scenario.action(action) else {
        return BTreeSet::new();
    };
    let mut out: BTreeSet<ObjectId> = spec.target().into_iter().cloned().collect();
    if let Ok(best) = best_candidate(ctx.repartition, action) {
        out.extend(grasped(
            ctx.world,
            &best,
            &plan_hands(ctx.world, &best, spec),
        ));
    }
    out
}

fn is_hindering(ctx: &DecisionContext<'_>, humanoid: &HumanoidId, candidate: &Candidate) -> bool {
    let occupied = occupied_objects(ctx, humanoid, candidate);
    if occupied.is_empty() {
        return false;
    }
    ctx.repartition.keys().any(|other| {
        if matches!(candidate, Candidate::Scenario(own) if own == other) {
            return false;
        }
        let someone_else =
            best_candidate(ctx.repartition, other).is_ok_and(|best| &best != humanoid);
        someone_else && !needed_objects(ctx, other).is_disjoint(&occupied)
    })
}

pub fn tag(
    ctx: &DecisionContext<'_>,
    humanoid: &HumanoidId,
    candidates: Vec<Candidate>,
) -> Vec<TaggedAction> {
    candidates
        .into_iter()
        .map(|candidate| {
            let mut tags = BTreeSet::new();
            let (score, feasible) = match &candidate {
                Candidate::Scenario(id) => {
                    let action = ctx.scenario.action(id);
                    if let Some(action) = action {
                        if action.is_collaborative() {
                            tags.insert(Tag::Collaborative);
                        }
                        if action.urgent {
                            tags.insert(Tag::Urgent);
                        }
                    }
                    let own = ctx
                        .repartition
                        .get(id)
                        .and_then(|list| list.iter().find(|c| &c.humanoid == humanoid));
                    if own.is_some_and(|c| c.rank == 1) {
                        tags.insert(Tag::BestForMe);
                    }
                    if own.is_some_and(|c| c.sole_candidate) {
                        tags.insert(Tag::SoleCandidate);
                    }
                    if ctx.demands.contains(id) {
                        tags.insert(Tag::PedagogicalDemand);
                    }
                    let feasible =
                        action.is_some_and(|a| plan_hands(ctx.world, humanoid, a).is_feasible());
                    (own.map(|c| c.score), feasible)
                }
                Candidate::OffScenario(interaction) => {
                    tags.insert(Tag::OffScenario);
                    let feasible = plan_hands(ctx.world, humanoid, &off_scenario_spec(interaction))
                        .is_feasible();
                    (None, feasible)
                }
            };
            if tags.contains(&Tag::Collaborative) || tags.contains(&Tag::Urgent) {
                tags.insert(Tag::Important);
            }
            if is_hindering(ctx, humanoid, &candidate) {
                tags.insert(Tag::Hindering);
            }
            TaggedAction {
                candidate,
                tags,
                score,
                feasible,
            }
        })
        .collect()
}

/// Procedure-following order: pedagogical demands, then actions only this
/// humanoid can do, then actions it is best placed for, then important
/// ones, then the rest by descending own score. Action id breaks ties.
fn follow_choice(tagged: &[TaggedAction]) -> Option<&TaggedAction> {
    tagged
        .iter()
        .filter(|t| t.feasible && matches!(t.candidate, Candidate::Scenario(_)))
        .min_by(|a, b| {
            let key = |t: &TaggedAction| {
                [
                    !t.has(Tag::PedagogicalDemand),
                    !t.has(Tag::SoleCandidate),
                    !t.has(Tag::BestForMe),
                    !(t.has(Tag::Collaborative) || t.has(Tag::Urgent)),
                ]
            };
            key(a)
                .cmp(&key(b))
                .then_with(|| {
                    let score = |t: &TaggedAction| t.score.unwrap_or(f64::NEG_INFINITY);
                    score(b).total_cmp(&score(a))
                })
                .then_with(|| a.candidate.cmp(&b.candidate))
        })
}

fn uniform_choice<'a, R: Rng>(
    pool: Vec<&'a TaggedAction>,
    rng: &mut R,
) -> Option<&'a TaggedAction> {
    if pool.is_empty() {
        None
    } else {
        let index = rng.gen_range(0..pool.len());
        Some(pool[index])
    }
}

fn as_decision(scenario: &Scenario, chosen: &TaggedAction) -> Decision {
    if let Candidate::Scenario(id) = &chosen.candidate {
        if let Some(ActionKind::NotifyIntent { collaborative }) =
            scenario.action(id).map(|a| &a.kind)
        {
            return Decision::NotifyIntent {
                slot: id.clone(),
                collaborative: collaborative.clone(),
            };
        }
    }
    Decision::Perform {
        candidate: chosen.candidate.clone(),
    }
}

/// Draws a behavior and picks an action for it. Consumes one uniform draw,
/// plus one index draw when the error or hinder behavior has a pool.
pub fn select<R: Rng>(
    scenario: &Scenario,
    tagged: &[TaggedAction],
    profile: &PedagogicalProfile,
    rng: &mut R,
) -> (Branch, Decision) {
    let branch = profile.branch(rng.gen::<f64>());
    let chosen = match branch {
        Branch::Follow => follow_choice(tagged),
        Branch::Error => {
            let pool = tagged
                .iter()
                .filter(|t| t.feasible && t.has(Tag::OffScenario))
                .collect();
            uniform_choice(pool, rng).or_else(|| follow_choice(tagged))
        }
        Branch::Hinder => {
            let pool = tagged
                .iter()
                .filter(|t| t.feasible && t.has(Tag::Hindering))
                .collect();
            uniform_choice(pool, rng).or_else(|| follow_choice(tagged))
        }
        Branch::Idle => None,
    };
    let decision = chosen.map_or(Decision::Idle, |c| as_decision(scenario, c));
    (branch, decision)
}

/// Full loop for one humanoid.
pub fn decide<R: Rng>(
    ctx: &DecisionContext<'_>,
    humanoid: &HumanoidId,
    profile: &PedagogicalProfile,
    rng: &mut R,
) -> Decision {
    let candidates = collect(ctx, humanoid);
    let tagged = tag(ctx, humanoid, candidates);
    select(ctx.scenario, &tagged, profile, rng).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_are_valid_distributions() {
        for name in ["tutor", "companion", "troublemaker"] {
            PedagogicalProfile::from_preset(name)
                .unwrap()
                .validate()
                .unwrap();
        }
        assert!(PedagogicalProfile::from_preset("saint").is_err());
        assert!(PedagogicalProfile::custom(0.5, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn empty_list_is_idle() {
        let scenario = crate::dsl::parse(
            "ACTIONS\naction a communicate to=r message=m roles=r:1\nGRAPH\nstep s action=a initial\nstep e terminal\ntransition s -> e\n",
        )
        .unwrap()
        .scenario;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for profile in [
            PedagogicalProfile::tutor(),
            PedagogicalProfile::troublemaker(),
        ] {
            assert_eq!(select(&scenario, &[], &profile, &mut rng).1, Decision::Idle);
        }
    }

    #[test]
    fn branch_thresholds_are_cumulative() {
        let profile = PedagogicalProfile::troublemaker();
        assert_eq!(profile.branch(0.0), Branch::Follow);
        assert_eq!(profile.branch(0.45), Branch::Error);
        assert_eq!(profile.branch(0.75), Branch::Hinder);
        assert_eq!(profile.branch(0.95), Branch::Idle);
    }
}
