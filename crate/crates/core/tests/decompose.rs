use prefdecomp::conditional::{
    pessimistic_weights, weighting_for, PromptWeighting, Scheme, SchemeParams,
};
use prefdecomp::decompose::{
    decompose_batch, decompose_pair, phi, solve_from_gaps, solve_prompt_free_gap, CandidateGaps,
    SearchConfig,
};
use prefdecomp::reward::{RewardModel, TabularReward};
use prefdecomp::synth::{gen_base_dataset, random_reward_function, WorldConfig};
use prefdecomp::types::{
    PreferenceDataset, PromptFeatures, PromptId, ResponseFeatures, ResponseId,
};
use proptest::prelude::*;

fn world(seed: u64) -> PreferenceDataset {
    gen_base_dataset(&WorldConfig {
        n_prompts: 24,
        n_responses: 40,
        n_pairs: 60,
        d_x: 3,
        d_y: 3,
        seed,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn gaps_strategy() -> impl Strategy<Value = CandidateGaps> {
    proptest::collection::vec((0.01f64..1.0, -10.0f64..10.0), 1..12).prop_map(|v| {
        let total: f64 = v.iter().map(|p| p.0).sum();
        CandidateGaps {
            weights: v.iter().map(|p| p.0 / total).collect(),
            gaps: v.iter().map(|p| p.1).collect(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bisection_lands_on_the_half_crossing(g in gaps_strategy()) {
        let cfg = SearchConfig::default();
        let d = solve_from_gaps(&g, (-5.0, 5.0), &cfg).unwrap();
        prop_assert!((g.phi(d) - 0.5).abs() <= cfg.epsilon / 4.0);
        prop_assert!(g.phi(d - cfg.epsilon) > 0.5);
        prop_assert!(g.phi(d + cfg.epsilon) < 0.5);
    }

    #[test]
    fn phi_strictly_decreases(g in gaps_strategy(), a in -10.0f64..10.0, step in 1e-3f64..2.0) {
        prop_assert!(g.phi(a + step) < g.phi(a));
    }

    #[test]
    fn phi_limits_bracket_one_half(g in gaps_strategy()) {
        prop_assert!(g.phi(-10.0) >= 0.5);
        prop_assert!(g.phi(10.0) <= 0.5);
    }

    #[test]
    fn candidate_order_does_not_matter(g in gaps_strategy(), rot in 0usize..12) {
        let n = g.gaps.len();
        let mut r = g.clone();
        r.weights.rotate_left(rot % n);
        r.gaps.rotate_left(rot % n);
        let cfg = SearchConfig::default();
        let a = solve_from_gaps(&g, (-5.0, 5.0), &cfg).unwrap();
        let b = solve_from_gaps(&r, (-5.0, 5.0), &cfg).unwrap();
        prop_assert!((a - b).abs() <= cfg.epsilon);
    }

    #[test]
    fn single_prompt_evidence_is_prompt_free(seed in 0u64..200, idx in 0usize..60) {
        let d = world(seed % 5);
        let m = random_reward_function(&d, 0.7, seed).unwrap();
        let s = &d.samples()[idx];
        let w = pessimistic_weights(&d, s, 1, 1.0, seed).unwrap();
        let dec = decompose_pair(&m, s, &w, &SearchConfig::default()).unwrap();
        prop_assert!((dec.prompt_free_gap - dec.total_gap).abs() <= 1e-6);
        prop_assert!(dec.prompt_related_gap.abs() <= 1e-6);
    }

    #[test]
    fn prompt_blind_model_has_no_prompt_related_gap(seed in 0u64..200, idx in 0usize..60) {
        let d = world(seed % 5);
        let m = random_reward_function(&d, 0.7, seed).unwrap().without_prompt_interactions();
        let s = &d.samples()[idx];
        let w = weighting_for(&d, s, &SchemeParams::default()).unwrap();
        let dec = decompose_pair(&m, s, &w, &SearchConfig::default()).unwrap();
        prop_assert!(dec.prompt_related_gap.abs() <= 1e-6);
    }

    #[test]
    fn residual_identity_holds(seed in 0u64..200) {
        let d = world(seed % 5);
        let m = random_reward_function(&d, 1.5, seed).unwrap();
        let src = prefdecomp::conditional::OnDemand { dataset: &d, params: SchemeParams::default() };
        for (s, dec) in d.samples().iter().zip(decompose_batch(&m, d.samples(), &src, &SearchConfig::default()).unwrap()) {
            let total = m.reward_gap(&s.prompt, &s.chosen, &s.rejected).unwrap();
            prop_assert_eq!(dec.total_gap, total);
            prop_assert_eq!(dec.prompt_related_gap, total - dec.prompt_free_gap);
        }
    }
}

#[test]
fn swapping_the_pair_negates_the_prompt_free_gap() {
    let d = world(3);
    let m = random_reward_function(&d, 1.0, 3).unwrap();
    let cfg = SearchConfig::default();
    for s in d.samples().iter().take(20) {
        let w = weighting_for(&d, s, &SchemeParams::default()).unwrap();
        let a = solve_prompt_free_gap(&m, &s.chosen, &s.rejected, &w, &cfg).unwrap();
        let b = solve_prompt_free_gap(&m, &s.rejected, &s.chosen, &w, &cfg).unwrap();
        assert!((a + b).abs() <= 2.0 * cfg.epsilon, "{a} {b}");
    }
}

#[test]
fn two_prompt_example_by_hand() {
    // gaps +2 and −2 with equal weight: Φ is symmetric about 0
    let x0 = PromptFeatures::new(PromptId(0), vec![]);
    let x1 = PromptFeatures::new(PromptId(1), vec![]);
    let y1 = ResponseFeatures::new(ResponseId(0), vec![], 10);
    let y2 = ResponseFeatures::new(ResponseId(1), vec![], 10);
    let mut m = TabularReward::new(-5.0, 5.0).unwrap();
    m.set(x0.id, y1.id, 2.0).unwrap();
    m.set(x0.id, y2.id, 0.0).unwrap();
    m.set(x1.id, y1.id, 0.0).unwrap();
    m.set(x1.id, y2.id, 2.0).unwrap();
    let w = PromptWeighting::new(vec![x0, x1], vec![0.5, 0.5], Scheme::ExactBayes).unwrap();
    let d = solve_prompt_free_gap(&m, &y1, &y2, &w, &SearchConfig::default()).unwrap();
    assert!(d.abs() <= 1e-6);
    assert!((phi(&m, &y1, &y2, &w, 0.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn too_few_iterations_is_a_config_error() {
    let g = CandidateGaps {
        weights: vec![1.0],
        gaps: vec![0.3],
    };
    let cfg = SearchConfig {
        epsilon: 1e-6,
        max_iterations: 10,
    };
    assert!(solve_from_gaps(&g, (-5.0, 5.0), &cfg).is_err());
    let cfg = SearchConfig {
        epsilon: 0.0,
        max_iterations: 64,
    };
    assert!(solve_from_gaps(&g, (-5.0, 5.0), &cfg).is_err());
}
