use cotrain_core::dsl::Scenario;
use cotrain_core::engine::enabled_actions;
use cotrain_core::hands::{Hand, HandState};
use cotrain_core::repartition::{
    criterion_values, proximity_bucket, score_candidates, ConfigError, CriteriaConfig, Criterion,
    Repartition,
};
use cotrain_core::{
    parse, ActionId, Humanoid, HumanoidId, HumanoidKind, Point, RoleName, ScenarioState, WorldState,
};
use cotrain_testkit::bundled;
use cotrain_testkit::gen::{
    populate, random_humanoids, random_integer_criteria, random_scenario, rng, GenOptions,
};
use cotrain_testkit::scoring::ranked;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

struct Case {
    scenario: Scenario,
    state: ScenarioState,
    world: WorldState,
    config: CriteriaConfig,
}

/// Random scenario advanced a few steps, with random humanoids and integer
/// criteria.
fn case(seed: u64) -> Case {
    let mut r = rng(seed);
    let scenario = random_scenario(&mut r, GenOptions::default());
    let count = r.gen_range(1..=5);
    let humanoids = random_humanoids(&mut r, &scenario, count);
    let world = populate(&scenario, &humanoids);
    let mut state = ScenarioState::new(&scenario);
    for tick in 0..r.gen_range(0..4) {
        let enabled = enabled_actions(&state, &scenario);
        let Some((action, _)) = enabled.choose(&mut r) else {
            break;
        };
        for h in &humanoids {
            if state
                .perform(&scenario, &world, action, std::slice::from_ref(&h.id), tick)
                .is_ok()
            {
                break;
            }
        }
    }
    let config = random_integer_criteria(&mut r);
    Case {
        scenario,
        state,
        world,
        config,
    }
}

fn as_pairs(rep: &Repartition) -> Vec<(ActionId, Vec<(String, i64)>)> {
    rep.iter()
        .map(|(a, list)| {
            let scores = list
                .iter()
                .map(|c| (c.humanoid.to_string(), c.score as i64))
                .collect();
            (a.clone(), scores)
        })
        .collect()
}

fn order(rep: &Repartition) -> Vec<(ActionId, Vec<String>)> {
    rep.iter()
        .map(|(a, list)| {
            (
                a.clone(),
                list.iter().map(|c| c.humanoid.to_string()).collect(),
            )
        })
        .collect()
}

#[test]
fn scores_match_integer_oracle() {
    for seed in 0..400 {
        let c = case(seed);
        let got = score_candidates(&c.scenario, &c.state, &c.world, &c.config);
        let want: Vec<(ActionId, Vec<(String, i64)>)> =
            ranked(&c.scenario, &c.state, &c.world, &c.config)
                .into_iter()
                .map(|(a, list)| {
                    (
                        a,
                        list.into_iter().map(|(h, s)| (h.to_string(), s)).collect(),
                    )
                })
                .collect();
        assert_eq!(as_pairs(&got), want, "seed {seed}");
        for list in got.values() {
            for (i, candidate) in list.iter().enumerate() {
                assert_eq!(candidate.rank, i + 1);
                assert_eq!(candidate.sole_candidate, list.len() == 1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn positive_scaling_keeps_the_ranking(seed in any::<u64>(), factor in prop::sample::select(vec![0.25, 0.5, 2.0, 3.0, 10.0])) {
        let c = case(seed);
        let base = score_candidates(&c.scenario, &c.state, &c.world, &c.config);
        let scaled = score_candidates(&c.scenario, &c.state, &c.world, &c.config.scaled(factor));
        prop_assert_eq!(order(&base), order(&scaled));
    }

    #[test]
    fn score_is_the_sum_of_its_breakdown(seed in any::<u64>()) {
        let c = case(seed);
        for list in score_candidates(&c.scenario, &c.state, &c.world, &c.config).values() {
            for candidate in list {
                prop_assert_eq!(candidate.breakdown.len(), c.config.criteria.len());
                let mut total = 0.0;
                for (part, criterion) in candidate.breakdown.iter().zip(&c.config.criteria) {
                    prop_assert_eq!(&part.criterion, &criterion.name);
                    prop_assert_eq!(part.weight, criterion.weight);
                    prop_assert_eq!(part.coefficient, criterion.coefficients[&part.value]);
                    prop_assert_eq!(part.contribution, part.weight * part.coefficient);
                    total += part.contribution;
                }
                prop_assert_eq!(candidate.score, total);
            }
        }
    }

    #[test]
    fn a_newcomer_does_not_reorder_the_others(seed in any::<u64>(), x in -5i32..=5, y in -5i32..=5) {
        let c = case(seed);
        let before = score_candidates(&c.scenario, &c.state, &c.world, &c.config);
        let mut world = c.world.clone();
        let newcomer = Humanoid::new("newcomer", HumanoidKind::Avatar)
            .with_roles(c.scenario.roles.keys().cloned())
            .at(Point::new(f64::from(x), f64::from(y)));
        world.add_humanoid(newcomer).unwrap();
        let after = score_candidates(&c.scenario, &c.state, &world, &c.config);
        for (action, list) in &before {
            let kept: Vec<_> = after[action]
                .iter()
                .filter(|cand| cand.humanoid.as_str() != "newcomer")
                .map(|cand| (cand.humanoid.clone(), cand.score))
                .collect();
            let old: Vec<_> = list.iter().map(|cand| (cand.humanoid.clone(), cand.score)).collect();
            prop_assert_eq!(kept, old);
        }
    }

    #[test]
    fn closer_is_never_worse_on_proximity(d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
        let config = CriteriaConfig::default();
        let proximity = config.criteria.iter().find(|c| c.name == "proximity").unwrap();
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(proximity.coefficients[proximity_bucket(near)] >= proximity.coefficients[proximity_bucket(far)]);
    }

    #[test]
    fn configs_survive_a_toml_round_trip(seed in any::<u64>()) {
        let config = random_integer_criteria(&mut rng(seed));
        prop_assert_eq!(CriteriaConfig::from_toml(&config.to_toml()).unwrap(), config);
    }
}

#[test]
fn zero_weights_tie_everyone_and_order_by_id() {
    let mut zero = CriteriaConfig::default();
    zero.criteria.iter_mut().for_each(|c| c.weight = 0.0);
    for seed in 0..100 {
        let c = case(seed);
        for list in score_candidates(&c.scenario, &c.state, &c.world, &zero).values() {
            let ids: Vec<_> = list.iter().map(|c| c.humanoid.clone()).collect();
            let mut sorted = ids.clone();
            sorted.sort();
            assert_eq!(ids, sorted);
            assert!(list.iter().all(|c| c.score == 0.0));
        }
    }
}

#[test]
fn near_equal_scores_count_as_tied() {
    let text = "ROLES\nrole a\nACTIONS\naction go communicate to=a message=m roles=a:1\nGRAPH\nstep s action=go initial\nstep e terminal\ntransition s -> e\n";
    let scenario = parse(text).unwrap().scenario;
    let mut world = scenario.world.clone();
    for id in ["zed", "amy"] {
        world
            .add_humanoid(Humanoid::new(id, HumanoidKind::Virtual).with_roles(["a"]))
            .unwrap();
    }
    let kind = |v: f64| Criterion {
        name: "participant_kind".into(),
        weight: 1.0,
        coefficients: [
            ("avatar".to_string(), v),
            ("virtual".to_string(), 0.1 + 0.2),
        ]
        .into(),
    };
    // amy scores 0.3, zed 0.1 + 0.2 which is a hair above.
    world
        .humanoids
        .get_mut(&HumanoidId::from("amy"))
        .unwrap()
        .kind = HumanoidKind::Avatar;
    let config = CriteriaConfig {
        lookahead_depth: 4,
        criteria: vec![kind(0.3)],
    };
    let rep = score_candidates(&scenario, &ScenarioState::new(&scenario), &world, &config);
    let ids: Vec<_> = rep[&ActionId::from("go")]
        .iter()
        .map(|c| c.humanoid.to_string())
        .collect();
    assert_eq!(ids, ["amy", "zed"]);
}

fn dark_screw_world(scenario: &Scenario, worker_hands_busy: bool) -> WorldState {
    let mut world = scenario.world.clone();
    for role in ["worker1", "helper"] {
        let mut h =
            scenario.humanoid_for_roles(role, HumanoidKind::Virtual, &[RoleName::from(role)]);
        if role == "worker1" && !worker_hands_busy {
            h.hands.set(Hand::Left, HandState::Free);
        }
        world.add_humanoid(h).unwrap();
    }
    world
}

#[test]
fn dark_screw_prefers_the_helper_while_the_lamp_is_held() {
    let scenario = parse(&bundled("dark-screw.lora.txt")).unwrap().scenario;
    let state = ScenarioState::new(&scenario);
    let config = CriteriaConfig::default();

    let busy = score_candidates(
        &scenario,
        &state,
        &dark_screw_world(&scenario, true),
        &config,
    );
    let list = &busy[&ActionId::from("hold-plate")];
    let scores: Vec<(String, f64)> = list
        .iter()
        .map(|c| (c.humanoid.to_string(), c.score))
        .collect();
    assert_eq!(
        scores,
        [("helper".to_string(), 3.0), ("worker1".to_string(), -0.5)]
    );

    let free = score_candidates(
        &scenario,
        &state,
        &dark_screw_world(&scenario, false),
        &config,
    );
    let list = &free[&ActionId::from("hold-plate")];
    let scores: Vec<(String, f64)> = list
        .iter()
        .map(|c| (c.humanoid.to_string(), c.score))
        .collect();
    assert_eq!(
        scores,
        [("worker1".to_string(), 3.5), ("helper".to_string(), 3.0)]
    );
}

#[test]
fn invalid_configs_are_rejected() {
    let good = CriteriaConfig::default().to_toml();
    assert!(matches!(
        CriteriaConfig::from_toml("lookahead_depth = 4\n"),
        Err(ConfigError::Empty)
    ));
    assert!(matches!(
        CriteriaConfig::from_toml(&good.replace("lookahead_depth = 4", "lookahead_depth = 0")),
        Err(ConfigError::BadDepth)
    ));
    assert!(matches!(
        CriteriaConfig::from_toml(&good.replacen("\"proximity\"", "\"charisma\"", 1)),
        Err(ConfigError::UnknownCriterion(_))
    ));
    assert!(CriteriaConfig::from_toml(&good.replacen("\"proximity\"", "\"easiness\"", 1)).is_err());
    assert!(matches!(
        CriteriaConfig::from_toml("not [ toml"),
        Err(ConfigError::Toml(_))
    ));
    let mut negative = CriteriaConfig::default();
    negative.criteria[0].weight = -1.0;
    assert!(matches!(
        negative.validate(),
        Err(ConfigError::BadWeight { .. })
    ));
    let mut missing = CriteriaConfig::default();
    missing.criteria[0].coefficients.remove("none");
    assert!(matches!(
        missing.validate(),
        Err(ConfigError::MissingCoefficient { .. })
    ));
    let mut extra = CriteriaConfig::default();
    extra.criteria[0].coefficients.insert("4".into(), 0.0);
    assert!(matches!(
        extra.validate(),
        Err(ConfigError::UnknownValue { .. })
    ));
    for name in [
        "role_priority",
        "proximity",
        "easiness",
        "tool_in_hand",
        "participant_kind",
    ] {
        assert!(criterion_values(name).is_some());
    }
}
