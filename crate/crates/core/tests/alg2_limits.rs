//! Long-run behaviour of the eight-step schedule against the parametric
//! relations for G, S and U and its completion-time prediction.

use cogcoop::experiments::mean_stderr;
use cogcoop::region::{
    alg2_parametric_point, alg2_t_hat, best_mix_params, r1_upper_bound, RatePair,
};
use cogcoop::{
    algorithm2_policy, run_loop, CaseLabel, ErasureModel, MixParams, SimConfig, SimResult,
};
use rayon::prelude::*;

fn runs(
    m: &ErasureModel,
    rates: RatePair,
    n: u64,
    p: MixParams,
    seeds: std::ops::Range<u64>,
) -> Vec<SimResult> {
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut cfg = SimConfig::for_rates(m.clone(), rates.r1, rates.r2, n, seed);
            cfg.deadline = None;
            run_loop(&cfg, &mut algorithm2_policy(p)).unwrap()
        })
        .collect()
}

fn mean_fraction(rs: &[SimResult], n: u64, f: impl Fn(&SimResult) -> u64) -> f64 {
    let xs: Vec<f64> = rs.iter().map(|r| f(r) as f64 / n as f64).collect();
    mean_stderr(&xs).0
}

#[test]
fn step_fractions_match_g_s_u() {
    let m = ErasureModel::independent(0.1, 0.7, 0.6, 0.6, 0.3).unwrap();
    let p = MixParams::new(0.3, 0.5, 0.7).unwrap();
    let r1 = 0.4 * r1_upper_bound(&m).unwrap();
    let point = alg2_parametric_point(&m, r1, p).unwrap();
    let r2 = 0.9 * point.feasible_r2.unwrap();
    assert!(r2 >= point.coded_supply_min_r2);
    let n = 200_000;
    let rs = runs(&m, RatePair { r1, r2 }, n, p, 0..10);

    // node-1 retransmissions of G, pushes of coded constituents, and the
    // kept share of constituents already at node 3
    let g = mean_fraction(&rs, n, |r| r.phase("step2"));
    let s = mean_fraction(&rs, n, |r| r.phase("step6"));
    let u = mean_fraction(&rs, n, |r| r.phase("step7"));
    for (name, got, want) in [
        ("G", g, point.aux.g),
        ("S", s, point.aux.s),
        ("U", u, point.aux.u),
    ] {
        assert!((got - want).abs() <= 0.03 * want, "{name}: {got} vs {want}");
    }
    let t = mean_fraction(&rs, n, |r| r.total_slots);
    let t_hat = alg2_t_hat(&m, RatePair { r1, r2 }, p).unwrap();
    assert!((t - t_hat).abs() <= 0.02 * t_hat, "T/n {t} vs {t_hat}");
}

#[test]
fn inner_bound_point_completes_in_n_slots() {
    let m = ErasureModel::independent(0.2, 0.9, 0.1, 0.1, 0.5).unwrap();
    assert_eq!(m.classify_case().unwrap().case, CaseLabel::Case3);
    let r1 = 0.5 * r1_upper_bound(&m).unwrap();
    let (p, r2) = best_mix_params(&m, r1).unwrap();
    let rates = RatePair { r1, r2 };
    assert!((alg2_t_hat(&m, rates, p).unwrap() - 1.0).abs() < 1e-9);
    let n = 200_000;
    let rs = runs(&m, rates, n, p, 0..8);
    let t = mean_fraction(&rs, n, |r| r.total_slots);
    assert!((t - 1.0).abs() <= 0.02, "T/n = {t}");
}
