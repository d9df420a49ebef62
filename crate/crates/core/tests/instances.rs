//! Instance generators: the hard family (constants selection, structure,
//! closed forms, verification), MDP embeddings, and seeded random games.

mod common;

use common::mdp_value_iteration;
use proptest::prelude::*;
use zsmg::error::Error;
use zsmg::game::{policy_evaluate, Owner, StationaryPolicy};
use zsmg::instances::{
    build_hard_instance, embed_mdp, random_game, select_constants, verify_instance,
    HardInstanceSpec, Hypothesis, MdpSpec, RewardId, BETA_BOUND,
};
use zsmg::plan::{shapley_value_iteration, PlanConfig};
use zsmg::rng::RngSpec;

fn null_spec(gamma: f64, eps: f64) -> HardInstanceSpec {
    HardInstanceSpec::with_selected(1, 2, 2, gamma, eps, Hypothesis::Null, RewardId::R1).unwrap()
}

#[test]
fn constants_satisfy_their_defining_formulas() {
    for (gamma, eps) in [(0.7, 1e-3), (0.8, 2e-3), (0.9, 5e-3)] {
        let sel = select_constants(gamma, eps).unwrap();
        let d = 1.0 - gamma * gamma;
        let unit = d * d * eps / gamma;
        assert_eq!(sel.alpha1, sel.c_prime as f64 * unit);
        assert_eq!(sel.alpha2, sel.c as f64 * unit);
        assert!(sel.c >= 2 * sel.c_prime, "α₂ must dominate 2α₁");
    }
}

#[test]
fn infeasible_parameter_ranges_name_the_binding_constraint() {
    // Very large ε: the loop probabilities cannot stay above 1/2.
    match select_constants(0.7, 0.15) {
        Err(Error::Infeasible { first_violation, .. }) => {
            assert!(first_violation.contains("p0_window"), "{first_violation}")
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
    // Slightly past the frontier at γ=0.7: the mixing bound β binds.
    match select_constants(0.7, 2e-3) {
        Err(Error::Infeasible { first_violation, c_prime, c }) => {
            assert!(first_violation.contains("beta_bound"), "{first_violation}");
            assert!(c_prime > 0 && c > 0);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
    // And γ too small for the family at any tested ε here.
    assert!(select_constants(0.45, 1e-3).is_err());
}

#[test]
fn feasibility_frontier_brackets_at_gamma_07() {
    assert!(select_constants(0.7, 1.6e-3).is_ok());
    assert!(select_constants(0.7, 2e-3).is_err());
}

/// Independent closed-form oracle: read (self-loop p, loop reward ι) straight
/// out of the built game's arrays and recompute γ·ι/(1−γ·p).
fn closed_form_from_game_arrays(inst: &zsmg::instances::HardInstance) -> Vec<Vec<Vec<f64>>> {
    let spec = &inst.spec;
    (0..spec.k)
        .map(|k| {
            (0..spec.l1)
                .map(|a| {
                    (0..spec.l2)
                        .map(|b| {
                            let y1 = inst.y1_index(k, a, b);
                            // Loop states are action-invariant; read (0,0).
                            let p = inst.game.transition[y1][0][0][y1];
                            let iota = inst.game.reward[y1][0][0];
                            spec.gamma * iota / (1.0 - spec.gamma * p)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[test]
fn baseline_instance_builds_verifies_and_matches_its_closed_form() {
    let spec = null_spec(0.7, 1e-3);
    let inst = build_hard_instance(&spec).unwrap();
    assert_eq!(inst.game.num_states, 1 + 2 * 4);
    let report = verify_instance(&inst).unwrap();
    assert!(report.all_passed());
    assert_eq!(report.checks.len(), 7);

    let oracle = closed_form_from_game_arrays(&inst);
    for (k, per_a) in oracle.iter().enumerate() {
        for (a, per_b) in per_a.iter().enumerate() {
            for (b, &v) in per_b.iter().enumerate() {
                assert!(
                    (inst.q_closed_form.0[k][a][b] - v).abs() < 1e-14,
                    "closed form mismatch at ({k},{a},{b})"
                );
            }
        }
    }

    // The planner reproduces the closed form at the decision state.
    let plan = shapley_value_iteration(&inst.game, &PlanConfig::exact(1e-8)).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            assert!((plan.q_star_hat.0[0][a][b] - inst.q_closed_form.0[0][a][b]).abs() < 1e-6);
        }
    }
    // Baseline equilibrium: the (0,0) cell, whose value is γ/(D+γα₁).
    let ne = inst.spec.claimed_ne().unwrap();
    assert_eq!(ne[&0], [0, 0]);
    let d = 1.0 - 0.7 * 0.7;
    let expect = 0.7 / (d + 0.7 * inst.spec.alpha1);
    assert!((plan.v_star_hat.0[0] - expect).abs() < 1e-6);
}

#[test]
fn matched_alternative_moves_the_equilibrium_to_the_flagged_cell() {
    let spec = HardInstanceSpec::with_selected(
        1,
        2,
        2,
        0.7,
        1e-3,
        Hypothesis::Alt { k: 1, l1: 2, l2: 2 },
        RewardId::Alt { k: 1, l1: 2, l2: 2 },
    )
    .unwrap();
    let inst = build_hard_instance(&spec).unwrap();
    assert!(verify_instance(&inst).unwrap().all_passed());
    let ne = inst.spec.claimed_ne().unwrap();
    assert_eq!(ne[&0], [1, 1], "equilibrium must sit on the perturbed cell");

    // The claimed cell strictly dominates: with the alternative kernel the
    // flagged loop is slower to exit, so its Q is the row-max/column-min.
    let q = &inst.q_closed_form.0[0];
    assert!(q[1][1] >= q[0][1] + 20.0 * 1e-3 - 1e-9);
    assert!(q[1][1] <= q[1][0] - 20.0 * 1e-3 + 1e-9);
}

#[test]
fn mismatched_reward_produces_a_strictly_mixed_equilibrium() {
    let spec = HardInstanceSpec::with_selected(
        1,
        2,
        2,
        0.7,
        1.6e-3,
        Hypothesis::Null,
        RewardId::Alt { k: 1, l1: 2, l2: 2 },
    )
    .unwrap();
    assert!(spec.claimed_ne().is_none(), "mixed combinations claim no pure cell");
    let inst = build_hard_instance(&spec).unwrap();
    let report = verify_instance(&inst).unwrap();
    assert!(report.all_passed(), "failed: {:?}", report.failed_names());

    // Check the 2×2 mixed equilibrium against the closed-form interchange:
    // the planner's decision-state strategies put weight on both actions.
    let plan = shapley_value_iteration(&inst.game, &PlanConfig::exact(1e-9)).unwrap();
    for w in &plan.mu_hat.dist[0] {
        assert!(*w > 0.05, "max-player weight {w} not interior");
    }
    for w in &plan.nu_hat.dist[0] {
        assert!(*w > 0.05, "min-player weight {w} not interior");
    }
}

#[test]
fn single_transition_entry_separates_null_from_alternative() {
    let gamma = 0.7;
    let eps = 1e-3;
    let null = build_hard_instance(&null_spec(gamma, eps)).unwrap();
    let alt = build_hard_instance(
        &HardInstanceSpec::with_selected(
            1,
            2,
            2,
            gamma,
            eps,
            Hypothesis::Alt { k: 1, l1: 2, l2: 2 },
            RewardId::R1,
        )
        .unwrap(),
    )
    .unwrap();
    let mut differing = 0;
    for (k, a, b) in (0..1).flat_map(|k| (0..2).flat_map(move |a| (0..2).map(move |b| (k, a, b))))
    {
        let y1 = null.y1_index(k, a, b);
        if null.game.transition[y1][0][0] != alt.game.transition[y1][0][0] {
            differing += 1;
        }
    }
    assert_eq!(differing, 1, "hypotheses must differ in exactly one loop row");
    assert_eq!(null.game.reward, alt.game.reward, "rewards are hypothesis-independent");
}

#[test]
fn verification_rejects_a_tampered_instance() {
    let mut inst = build_hard_instance(&null_spec(0.7, 1e-3)).unwrap();
    // Corrupt the stored closed form.
    inst.q_closed_form.0[0][0][0] += 0.01;
    match verify_instance(&inst) {
        Err(Error::Verification { report }) => {
            assert!(report.failed_names().iter().any(|n| n == "closed_form_q"));
        }
        other => panic!("expected verification failure, got {other:?}"),
    }
}

#[test]
fn sidecar_roundtrip_rebuilds_the_same_instance() {
    let inst = build_hard_instance(&null_spec(0.7, 1e-3)).unwrap();
    let text = inst.sidecar_json().unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let spec_back: HardInstanceSpec = serde_json::from_value(doc["spec"].clone()).unwrap();
    let rebuilt = build_hard_instance(&spec_back).unwrap();
    assert_eq!(rebuilt.game, inst.game);
    assert_eq!(rebuilt.q_closed_form, inst.q_closed_form);
    assert_eq!(rebuilt.instance_id(), inst.instance_id());
}

#[test]
fn beta_stays_below_its_bound_on_feasible_points() {
    // β = (q(α₁) − q(2α₂) + ε)/(q(0) − q(2α₂)) must respect the bound the
    // selection enforces; recompute it from the returned constants.
    for (gamma, eps) in [(0.7, 1e-3), (0.7, 1.6e-3), (0.8, 2e-3), (0.9, 5e-3)] {
        let sel = select_constants(gamma, eps).unwrap();
        let d = 1.0 - gamma * gamma;
        let q = |alpha: f64| gamma / (d + gamma * alpha);
        let beta = (q(sel.alpha1) - q(2.0 * sel.alpha2) + eps) / (q(0.0) - q(2.0 * sel.alpha2));
        assert!(beta <= BETA_BOUND + 1e-12, "beta {beta} at ({gamma}, {eps})");
    }
}

#[test]
fn embedded_mdp_ignores_the_dummy_opponent() {
    let mdp = MdpSpec {
        gamma: 0.8,
        transition: vec![
            vec![vec![0.6, 0.4], vec![0.1, 0.9]],
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        ],
        reward: vec![vec![0.2, 0.9], vec![0.0, 0.7]],
    };
    let v_ref = mdp_value_iteration(&mdp.transition, &mdp.reward, 0.8, 400);
    for dummy in [1, 2, 4] {
        let game = embed_mdp(&mdp.transition, &mdp.reward, mdp.gamma, dummy).unwrap();
        assert_eq!(game.num_actions_min, dummy);
        let plan = shapley_value_iteration(&game, &PlanConfig::exact(1e-8)).unwrap();
        for s in 0..2 {
            assert!((plan.v_star_hat.0[s] - v_ref[s]).abs() < 1e-6);
        }
        // The min player's choice is irrelevant for any fixed max policy.
        let mu = StationaryPolicy::pure(Owner::MaxPlayer, &[1, 0], 2);
        let nu_a = StationaryPolicy::pure(Owner::MinPlayer, &[0, 0], dummy);
        let nu_b = StationaryPolicy::pure(Owner::MinPlayer, &[dummy - 1, 0], dummy);
        let (_, va) = policy_evaluate(&game, &mu, &nu_a).unwrap();
        let (_, vb) = policy_evaluate(&game, &mu, &nu_b).unwrap();
        assert!(va.linf_distance(&vb) < 1e-12);
    }
}

#[test]
fn mdp_spec_json_roundtrip() {
    let mdp = MdpSpec {
        gamma: 0.75,
        transition: vec![vec![vec![1.0]]],
        reward: vec![vec![0.5]],
    };
    let text = mdp.to_json_string().unwrap();
    let back = MdpSpec::from_json_str(&text).unwrap();
    assert_eq!(mdp.gamma, back.gamma);
    assert_eq!(mdp.transition, back.transition);
    assert_eq!(mdp.reward, back.reward);
}

#[test]
fn random_games_are_reproducible_and_structured() {
    let a = random_game(5, 3, 2, 0.9, 2, RngSpec::new(42, 400)).unwrap();
    let b = random_game(5, 3, 2, 0.9, 2, RngSpec::new(42, 400)).unwrap();
    assert_eq!(a, b);
    let c = random_game(5, 3, 2, 0.9, 2, RngSpec::new(43, 400)).unwrap();
    assert_ne!(a, c);
    for s in 0..5 {
        for x in 0..3 {
            for y in 0..2 {
                let support = a.transition[s][x][y].iter().filter(|&&p| p > 0.0).count();
                assert_eq!(support, 2, "branching must fix the support size");
                let reward = a.reward[s][x][y];
                assert!((0.0..=1.0).contains(&reward));
            }
        }
    }
    assert!(random_game(3, 2, 2, 0.9, 7, RngSpec::new(1, 401)).is_err(), "branching > |S|");
}

#[test]
fn instance_ids_are_stable() {
    let spec = null_spec(0.7, 1e-3);
    let inst = build_hard_instance(&spec).unwrap();
    assert_eq!(inst.instance_id(), "hard-K1L2x2-g0.7-e1e-3-null-r1");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn selected_constants_always_yield_valid_instances(
        gamma_milli in 550u64..950,
        eps_exp in 0usize..4,
    ) {
        let gamma = gamma_milli as f64 / 1000.0;
        let eps = [1e-4, 3e-4, 1e-3, 3e-3][eps_exp];
        if let Ok(sel) = select_constants(gamma, eps) {
            // Whenever selection succeeds, the resulting spec must pass full
            // validation and produce a buildable, well-formed game.
            let spec = HardInstanceSpec::new(
                1, 2, 2, gamma, eps, sel.alpha1, sel.alpha2,
                Hypothesis::Null, RewardId::R1,
            ).unwrap();
            let inst = build_hard_instance(&spec).unwrap();
            prop_assert_eq!(inst.game.num_states, 9);
            inst.game.validate().unwrap();
            // Saddle margins at the baseline cell: (0,0) is the column max
            // (max player loses ≥ 20ε by deviating) and the row min (min
            // player pays ≥ 20ε more by deviating).
            let q = &inst.q_closed_form.0[0];
            prop_assert!(q[0][0] - q[1][0] >= 20.0 * eps - 1e-12);
            prop_assert!(q[0][1] - q[0][0] >= 20.0 * eps - 1e-12);
        }
    }
}

#[test]
fn hard_game_rewards_use_the_unit_range() {
    let inst = build_hard_instance(&HardInstanceSpec::with_selected(
        2,
        2,
        3,
        0.8,
        1e-3,
        Hypothesis::Alt { k: 2, l1: 2, l2: 3 },
        RewardId::Alt { k: 2, l1: 2, l2: 3 },
    )
    .unwrap())
    .unwrap();
    assert_eq!(inst.game.num_states, 2 + 2 * 2 * 2 * 3);
    inst.game.validate().unwrap();
    assert!(verify_instance(&inst).unwrap().all_passed());
}
