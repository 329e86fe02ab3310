use cogcoop::erasure::NodeSet;
use cogcoop::experiments::{deviation_study, write_deviation_csv, GridSpec};
use cogcoop::region::{
    alg2_parametric_point, best_mix_params, full_outer_max_r2, inner_bound_max_r2,
    outer_bound_max_r2, r1_upper_bound, region_membership, t_hat, Bound, RatePair,
};
use cogcoop::sim::{run_with, ModelChannel, TraceRecord};
use cogcoop::{
    algorithm1_policy, algorithm2_policy, CaseLabel, ErasureModel, MixParams, SimConfig,
    Transmitter,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model_from(seed: u64) -> ErasureModel {
    ErasureModel::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// A random model satisfying the region preconditions, with its case.
fn admissible(seed: u64) -> (ErasureModel, CaseLabel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = ErasureModel::random(&mut rng);
        if let Ok(c) = m.classify_case() {
            return (m, c.case);
        }
    }
}

fn subsets(tx: Transmitter) -> Vec<NodeSet> {
    tx.listeners()
        .subsets()
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marginals_shrink_on_supersets(seed in any::<u64>()) {
        let m = model_from(seed);
        prop_assert!((m.node1_masses().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!((m.node2_masses().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for tx in [Transmitter::Primary, Transmitter::Secondary] {
            let sets = subsets(tx);
            for s in &sets {
                for t in &sets {
                    if s.is_subset(*t) {
                        let es = m.marginal_erasure_prob(tx, *s).unwrap();
                        let et = m.marginal_erasure_prob(tx, *t).unwrap();
                        prop_assert!(et <= es + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn runs_conserve_packets_and_count_every_slot(
        seed in any::<u64>(),
        k1 in 0usize..40,
        k2 in 0usize..40,
        alg2 in any::<bool>(),
        g in 0.0f64..1.0,
        frac_s in 0.0f64..1.0,
        u in 0.0f64..1.0,
    ) {
        prop_assume!(k1 + k2 > 0);
        let m = model_from(seed);
        let mut cfg = SimConfig::new(m.clone(), k1, k2, seed ^ 0x5eed);
        // every slot boundary checks mirrors, the ≤1 mark buffer and conservation
        cfg.check_invariants = true;
        let params = MixParams::new(g, frac_s * (1.0 - g), u).unwrap();
        let run = |trace: &mut Vec<TraceRecord>| {
            if alg2 {
                run_with(&cfg, &mut algorithm2_policy(params), &mut ModelChannel(&m), Some(trace))
            } else {
                run_with(&cfg, &mut algorithm1_policy(), &mut ModelChannel(&m), Some(trace))
            }
        };
        let mut trace = Vec::new();
        let r = run(&mut trace).unwrap();
        prop_assert!(r.completed);
        prop_assert!(r.decoded_ok.node3 && r.decoded_ok.node4);
        prop_assert_eq!(r.phases.iter().map(|p| p.slots).sum::<u64>(), r.total_slots);
        prop_assert_eq!(r.schedule_counter("tau_1") + r.schedule_counter("tau_2"), r.total_slots);
        prop_assert_eq!(trace.len() as u64, r.total_slots);

        // steps run in order
        let order: Vec<usize> = trace.iter().map(|t| r.phases.iter().position(|p| p.step == t.step).unwrap()).collect();
        prop_assert!(order.windows(2).all(|w| w[0] <= w[1]));

        // same seed, same run
        let mut again = Vec::new();
        let r2 = run(&mut again).unwrap();
        prop_assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&r2).unwrap());
        prop_assert_eq!(serde_json::to_string(&trace).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn outer_bound_is_nonincreasing(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (m, case) = admissible(seed);
        let bmax = r1_upper_bound(&m).unwrap();
        let (lo, hi) = (a.min(b) * bmax, a.max(b) * bmax);
        prop_assert!(full_outer_max_r2(&m, hi).unwrap() <= full_outer_max_r2(&m, lo).unwrap() + 1e-12);
        // the Case-3 closed form trades R1 for S, which loosens the second
        // inequality once ρ₄ > 1
        if case != CaseLabel::Case3 || m.classify_case().unwrap().ratio_4 <= 1.0 {
            prop_assert!(outer_bound_max_r2(&m, hi).unwrap() <= outer_bound_max_r2(&m, lo).unwrap() + 1e-12);
        }
    }

    #[test]
    fn inner_never_exceeds_outer(seed in any::<u64>(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (m, case) = admissible(seed);
        prop_assume!(case == CaseLabel::Case3);
        let r1 = x * r1_upper_bound(&m).unwrap();
        let inner = inner_bound_max_r2(&m, r1).unwrap();
        prop_assert!(inner <= outer_bound_max_r2(&m, r1).unwrap() + 1e-9);
        let rates = RatePair { r1, r2: y * inner };
        if region_membership(&m, rates, Bound::Inner).unwrap() {
            prop_assert!(region_membership(&m, rates, Bound::Outer).unwrap());
            prop_assert!(region_membership(&m, rates, Bound::Full).unwrap());
        }
    }

    #[test]
    fn parametric_optimum_reaches_capacity_in_cases_1_and_2(seed in any::<u64>(), x in 0.0f64..1.0) {
        let (m, case) = admissible(seed);
        prop_assume!(case != CaseLabel::Case3);
        let r1 = x * r1_upper_bound(&m).unwrap();
        let (p, _) = best_mix_params(&m, r1).unwrap();
        let point = alg2_parametric_point(&m, r1, p).unwrap();
        prop_assert!((point.r2_max - outer_bound_max_r2(&m, r1).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn case1_completion_time_marks_the_region(seed in any::<u64>(), r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let (m, case) = admissible(seed);
        prop_assume!(case == CaseLabel::Case1);
        let rates = RatePair { r1, r2 };
        let t = t_hat(&m, rates).unwrap();
        prop_assume!((t - 1.0).abs() > 1e-12);
        prop_assert_eq!(t <= 1.0, region_membership(&m, rates, Bound::Outer).unwrap());
    }
}

#[test]
fn case3_closed_form_can_rise_with_r1() {
    let m = ErasureModel::joint(
        [0.18, 0.046, 0.009, 0.198, 0.281, 0.047, 0.227, 0.012],
        [0.387, 0.006, 0.588, 0.019],
    )
    .unwrap();
    let c = m.classify_case().unwrap();
    assert_eq!(c.case, CaseLabel::Case3);
    assert!(c.ratio_4 > 1.0);
    let b = r1_upper_bound(&m).unwrap();
    assert!(outer_bound_max_r2(&m, 0.5 * b).unwrap() > outer_bound_max_r2(&m, 0.0).unwrap());
    assert!(full_outer_max_r2(&m, 0.5 * b).unwrap() < full_outer_max_r2(&m, 0.0).unwrap());
}

#[test]
fn membership_corner_points() {
    for seed in 0..200 {
        let (m, _) = admissible(seed);
        let b = r1_upper_bound(&m).unwrap();
        for bound in [Bound::Outer, Bound::Full] {
            assert!(region_membership(&m, RatePair { r1: 0.0, r2: 0.0 }, bound).unwrap());
            assert!(!region_membership(
                &m,
                RatePair {
                    r1: b + 0.01,
                    r2: 0.0
                },
                bound
            )
            .unwrap());
        }
    }
}

#[test]
fn empirical_erasures_within_four_sigma() {
    let n = 1_000_000;
    for m in [
        ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap(),
        model_from(77),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for tx in [Transmitter::Primary, Transmitter::Secondary] {
            let sets = subsets(tx);
            let mut hits = vec![0u64; sets.len()];
            for _ in 0..n {
                let r = m.sample(tx, &mut rng);
                for (h, s) in hits.iter_mut().zip(&sets) {
                    if s.iter().all(|node| r.erased(node)) {
                        *h += 1;
                    }
                }
            }
            for (h, s) in hits.iter().zip(&sets) {
                let p = m.marginal_erasure_prob(tx, *s).unwrap();
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                let freq = *h as f64 / n as f64;
                assert!(
                    (freq - p).abs() <= 4.0 * sigma + 1e-12,
                    "{tx:?} {s:?}: {freq} vs {p}"
                );
            }
        }
    }
}

#[test]
fn deviation_output_is_reproducible_and_filtered() {
    let grid = GridSpec {
        values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        ..GridSpec::default()
    };
    let a = deviation_study(&grid).unwrap();
    let b = deviation_study(&grid).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_deviation_csv(&a.records, &mut ca).unwrap();
    write_deviation_csv(&b.records, &mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a.summary.histogram.total() as usize, a.summary.cells);
    assert_eq!(a.records.len(), a.summary.cells);
    for r in &a.records {
        assert!((0.0..=1.0).contains(&r.d));
        assert!(r.e13 >= r.e23);
        let m = ErasureModel::independent(r.e12, r.e13, r.e14, r.e23, r.e24).unwrap();
        assert_eq!(m.classify_case().unwrap().case, CaseLabel::Case3);
        let outer = outer_bound_max_r2(&m, r.r1).unwrap();
        let inner = inner_bound_max_r2(&m, r.r1).unwrap();
        assert!((r.d - (outer - inner) / outer).abs() < 1e-12);
    }
}
