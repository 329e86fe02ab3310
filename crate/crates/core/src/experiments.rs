//! Batch drivers: the inner/outer deviation study over a grid of
//! independent-erasure models, convergence sweeps of simulated completion
//! times, deadline trials and phase-time accounting.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alg1::{algorithm1_policy, STEP2_TO_RELAY};
use crate::alg2::{algorithm2_policy, MixParams};
use crate::erasure::{CaseLabel, ErasureModel};
use crate::error::{Error, Result};
use crate::region::{alg2_t_hat, t_hat, Coefficients, InnerOptions, RatePair};
use crate::sim::{run_loop, Policy, QueueId, SimConfig, SimResult};

/// How R₁ is swept between 0.1B and 0.9B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum R1Step {
    /// R₁/B = 0.1, 0.15, …, 0.9.
    #[default]
    FractionOfB,
    /// R₁ = 0.1B, 0.1B + 0.05, … while at most 0.9B.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Values each of the five link erasure probabilities takes.
    pub values: Vec<f64>,
    pub r1_step: R1Step,
    /// Restricted subgrid: ε¹₄ and ε²₄ at most this value.
    pub restrict_max: f64,
    pub bin_width: f64,
    pub hist_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            values: (1..10).map(|i| i as f64 / 10.0).collect(),
            r1_step: R1Step::FractionOfB,
            restrict_max: 0.6,
            bin_width: 0.005,
            hist_max: 0.10,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("grid has no probability values"));
        }
        if self.values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::config("grid probabilities must lie in (0, 1)"));
        }
        if !(self.bin_width > 0.0 && self.hist_max > 0.0) {
            return Err(Error::config(
                "histogram bin width and range must be positive",
            ));
        }
        Ok(())
    }

    /// The R₁ values for a model with bound `b`, as (R₁/B, R₁).
    pub fn r1_points(&self, b: f64) -> Vec<(f64, f64)> {
        match self.r1_step {
            R1Step::FractionOfB => (0..17)
                .map(|i| {
                    let frac = (10 + 5 * i) as f64 / 100.0;
                    (frac, frac * b)
                })
                .collect(),
            R1Step::Absolute => {
                let mut out = Vec::new();
                let mut i = 0;
                loop {
                    let r1 = 0.1 * b + 0.05 * i as f64;
                    if r1 > 0.9 * b + 1e-12 {
                        break;
                    }
                    out.push((r1 / b, r1));
                    i += 1;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationRecord {
    pub e12: f64,
    pub e13: f64,
    pub e14: f64,
    pub e23: f64,
    pub e24: f64,
    #[serde(rename = "R1_frac")]
    pub r1_frac: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "outer_R2")]
    pub outer_r2: f64,
    #[serde(rename = "inner_R2")]
    pub inner_r2: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// Outer value over the full three-inequality region.
    #[serde(skip)]
    pub full_outer_r2: f64,
}

impl DeviationRecord {
    fn full_d(&self) -> f64 {
        relative_gap(self.full_outer_r2, self.inner_r2)
    }
}

fn relative_gap(outer: f64, inner: f64) -> f64 {
    if outer > 0.0 {
        ((outer - inner) / outer).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub max: f64,
    /// Counts of `[k·w, (k+1)·w)`.
    pub counts: Vec<u64>,
    /// Values at or above `max`.
    pub overflow: u64,
}

impl Histogram {
    pub fn new(bin_width: f64, max: f64) -> Self {
        let bins = (max / bin_width).round() as usize;
        Histogram {
            bin_width,
            max,
            counts: vec![0; bins],
            overflow: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x >= self.max {
            self.overflow += 1;
        } else {
            let k = ((x.max(0.0) / self.bin_width).floor() as usize).min(self.counts.len() - 1);
            self.counts[k] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetStats {
    pub cells: usize,
    /// Fraction with D < 0.05.
    pub frac_below_0_05: f64,
    /// Fraction with D ≤ 0.05.
    pub frac_at_most_0_05: f64,
    #[serde(rename = "max_D")]
    pub max_d: f64,
    /// Largest D among the cells with D > 0.05, if any.
    #[serde(rename = "remainder_max_D")]
    pub remainder_max_d: Option<f64>,
}

impl SubsetStats {
    fn of(ds: impl Iterator<Item = f64>) -> Self {
        let (mut cells, mut below, mut at_most, mut max_d) = (0usize, 0usize, 0usize, 0.0f64);
        let mut rem: Option<f64> = None;
        for d in ds {
            cells += 1;
            below += (d < 0.05) as usize;
            at_most += (d <= 0.05) as usize;
            max_d = max_d.max(d);
            if d > 0.05 {
                rem = Some(rem.map_or(d, |r| r.max(d)));
            }
        }
        let frac = |k: usize| {
            if cells > 0 {
                k as f64 / cells as f64
            } else {
                0.0
            }
        };
        SubsetStats {
            cells,
            frac_below_0_05: frac(below),
            frac_at_most_0_05: frac(at_most),
            max_d,
            remainder_max_d: rem,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictedStats {
    /// ε¹₄ and ε²₄ are at most this value.
    pub max_e4: f64,
    #[serde(flatten)]
    pub stats: SubsetStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationSummary {
    pub models: usize,
    pub cells: usize,
    pub frac_below_0_05: f64,
    #[serde(rename = "max_D")]
    pub max_d: f64,
    pub r1_step: R1Step,
    pub restricted: RestrictedStats,
    /// The same statistics on the ε¹₄, ε²₄ ≤ 0.5 subgrid.
    pub restricted_half: RestrictedStats,
    /// Statistics with the outer value taken over the full three-inequality
    /// region instead of the per-case closed form.
    pub full_outer: SubsetStats,
    pub histogram: Histogram,
}

#[derive(Debug, Clone)]
pub struct DeviationStudy {
    pub records: Vec<DeviationRecord>,
    pub summary: DeviationSummary,
}

/// Records for one grid model, or `None` when it is filtered out.
pub fn deviation_cell(e: [f64; 5], grid: &GridSpec) -> Result<Option<Vec<DeviationRecord>>> {
    let model = ErasureModel::independent(e[0], e[1], e[2], e[3], e[4])?;
    // ε¹₃ ≥ ε²₃ is part of the preconditions
    let Ok(c) = Coefficients::new(&model) else {
        return Ok(None);
    };
    if c.case != CaseLabel::Case3 {
        return Ok(None);
    }
    let inner = c.inner_region(InnerOptions::default());
    let full = c.outer_region();
    grid.r1_points(c.b)
        .into_iter()
        .map(|(r1_frac, r1)| {
            let outer_r2 = c.outer_optimum(r1)?.0;
            let inner_r2 = inner
                .max_r2(r1)
                .ok_or_else(|| Error::Internal(format!("inner LP failed at {e:?}, R1 = {r1}")))?
                .0;
            let full_outer_r2 = full
                .max_r2(r1)
                .ok_or_else(|| Error::Internal(format!("outer LP failed at {e:?}, R1 = {r1}")))?
                .0;
            Ok(DeviationRecord {
                e12: e[0],
                e13: e[1],
                e14: e[2],
                e23: e[3],
                e24: e[4],
                r1_frac,
                r1,
                b: c.b,
                outer_r2,
                inner_r2,
                d: relative_gap(outer_r2, inner_r2),
                full_outer_r2,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Sweep every grid model that is in Case 3 with ε¹₃ ≥ ε²₃ and record the
/// relative gap between outer and inner bound at each R₁.
pub fn deviation_study(grid: &GridSpec) -> Result<DeviationStudy> {
    grid.validate()?;
    let v = &grid.values;
    let n = v.len();
    let combos: Vec<[f64; 5]> = (0..n.pow(5))
        .map(|mut i| {
            let mut e = [0.0; 5];
            for slot in e.iter_mut().rev() {
                *slot = v[i % n];
                i /= n;
            }
            e
        })
        .collect();
    let per_model: Vec<Option<Vec<DeviationRecord>>> = combos
        .par_iter()
        .map(|e| deviation_cell(*e, grid))
        .collect::<Result<_>>()?;
    let models = per_model.iter().flatten().count();
    let records: Vec<DeviationRecord> = per_model.into_iter().flatten().flatten().collect();
    if records.is_empty() {
        return Err(Error::config("no grid model passed the filter"));
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.e13 < r.e23 || !(0.0..=1.0).contains(&r.d))
    {
        return Err(Error::Internal(format!(
            "kept cell violates the filter: {r:?}"
        )));
    }

    let mut histogram = Histogram::new(grid.bin_width, grid.hist_max);
    for r in &records {
        histogram.add(r.d);
    }
    let all = SubsetStats::of(records.iter().map(|r| r.d));
    let restricted = |max_e4: f64| RestrictedStats {
        max_e4,
        stats: SubsetStats::of(
            records
                .iter()
                .filter(|r| r.e14 <= max_e4 + 1e-9 && r.e24 <= max_e4 + 1e-9)
                .map(|r| r.d),
        ),
    };
    let summary = DeviationSummary {
        models,
        cells: all.cells,
        frac_below_0_05: all.frac_below_0_05,
        max_d: all.max_d,
        r1_step: grid.r1_step,
        restricted: restricted(grid.restrict_max),
        restricted_half: restricted(0.5),
        full_outer: SubsetStats::of(records.iter().map(DeviationRecord::full_d)),
        histogram,
    };
    Ok(DeviationStudy { records, summary })
}

pub fn write_deviation_csv<W: Write>(records: &[DeviationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)
            .map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Internal(format!("csv: {e}")))
}

/// Which schedule to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Algorithm {
    Alg1,
    Alg2(MixParams),
}

impl Algorithm {
    pub fn policy(&self) -> Box<dyn Policy> {
        match self {
            Algorithm::Alg1 => Box::new(algorithm1_policy()),
            Algorithm::Alg2(p) => Box::new(algorithm2_policy(*p)),
        }
    }

    /// Predicted limit of T/n.
    pub fn t_hat(&self, model: &ErasureModel, rates: RatePair) -> Result<f64> {
        match self {
            Algorithm::Alg1 => t_hat(model, rates),
            Algorithm::Alg2(p) => alg2_t_hat(model, rates, *p),
        }
    }
}

fn simulate(
    model: &ErasureModel,
    rates: RatePair,
    n: u64,
    seed: u64,
    alg: Algorithm,
    deadline: bool,
) -> Result<SimResult> {
    let mut cfg = SimConfig::for_rates(model.clone(), rates.r1, rates.r2, n, seed);
    if !deadline {
        cfg.deadline = None;
    }
    run_loop(&cfg, alg.policy().as_mut())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub runs: usize,
    pub mean_t_over_n: f64,
    pub stderr: f64,
    pub t_hat: f64,
}

/// Mean T/n over `seeds` for each `n`, next to the predicted limit.
pub fn convergence_sweep(
    model: &ErasureModel,
    rates: RatePair,
    n_list: &[u64],
    seeds: &[u64],
    alg: Algorithm,
) -> Result<Vec<ConvergenceRow>> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let predicted = alg.t_hat(model, rates)?;
    n_list
        .iter()
        .map(|&n| {
            let ts: Vec<f64> = seeds
                .par_iter()
                .map(|&seed| {
                    simulate(model, rates, n, seed, alg, false)
                        .map(|r| r.total_slots as f64 / n as f64)
                })
                .collect::<Result<_>>()?;
            let (mean, stderr) = mean_stderr(&ts);
            Ok(ConvergenceRow {
                n,
                runs: ts.len(),
                mean_t_over_n: mean,
                stderr,
                t_hat: predicted,
            })
        })
        .collect()
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeadlineReport {
    pub n: u64,
    pub runs: usize,
    pub met: usize,
    pub fraction_met: f64,
}

/// Run the deadline code `runs` times: success when all ⌈nR⌉ packets are
/// delivered within n slots.
pub fn deadline_trials(
    model: &ErasureModel,
    rates: RatePair,
    n: u64,
    seeds: &[u64],
    alg: Algorithm,
) -> Result<DeadlineReport> {
    let met: Vec<bool> = seeds
        .par_iter()
        .map(|&seed| {
            simulate(model, rates, n, seed, alg, true).map(|r| r.deadline_met == Some(true))
        })
        .collect::<Result<_>>()?;
    let k = met.iter().filter(|m| **m).count();
    Ok(DeadlineReport {
        n,
        runs: met.len(),
        met: k,
        fraction_met: if met.is_empty() {
            0.0
        } else {
            k as f64 / met.len() as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauEntry {
    pub name: &'static str,
    pub empirical: f64,
    pub predicted: f64,
    /// Relative error, or absolute error when the prediction is 0.
    pub error: f64,
}

/// Empirical per-slot fractions (counts over `n`) of a four-step run
/// against their limits.
pub fn tau_accounting(
    run: &SimResult,
    rates: RatePair,
    n: u64,
    model: &ErasureModel,
) -> Result<Vec<TauEntry>> {
    if !run.completed {
        return Err(Error::config("phase accounting needs a completed run"));
    }
    if run.algorithm != "alg1" {
        return Err(Error::config(
            "phase limits are those of the four-step schedule",
        ));
    }
    let c = Coefficients::new(model)?;
    let m = &c.marginals;
    let RatePair { r1, r2 } = rates;
    let n = n as f64;
    let parts = c.t_hat_parts(rates);
    let delta = m.e2_3 - m.e2_34;
    let snap = |label: &str, q: QueueId| run.snapshot(label, q.name()).unwrap_or(0) as f64;
    let step1 = run.phase("step1") as f64;
    let rows: Vec<(&'static str, f64, f64)> = vec![
        ("T1", step1, parts.t1),
        ("T2", run.phase("step2") as f64, parts.t2),
        ("T3", run.phase("step3") as f64, parts.t3),
        ("T4", run.phase("step4") as f64, parts.t4),
        (
            "M",
            run.counter(STEP2_TO_RELAY) as f64,
            r1 * c.f * delta / (1.0 - m.e2_34),
        ),
        (
            "Q1_2,~3~4 after step1",
            snap("after_step1", QueueId::RelayFresh),
            r1 * c.f,
        ),
        (
            "Q1_2,~34 after step1",
            snap("after_step1", QueueId::RelayAt4),
            r1 * (c.a1 - c.f),
        ),
        (
            "Q_2,3~4 after step3",
            snap("after_step3", QueueId::OwnAt3),
            r2 * (m.e2_4 - m.e2_34) / (1.0 - m.e2_34),
        ),
        ("tau_1", run.schedule_counter("tau_1") as f64, parts.t1),
        (
            "tau_2",
            run.schedule_counter("tau_2") as f64,
            parts.t2 + parts.t3 + parts.t4,
        ),
        ("tau_1[3]", run.schedule_counter("tau_1[3]") as f64, 0.0),
        (
            "tau_1[2&~3]",
            run.schedule_counter("tau_1[2&~3]") as f64,
            0.0,
        ),
        (
            "tau_1[~3&4]",
            run.schedule_counter("tau_1[~3&4]") as f64,
            r1 * (m.e1_23 - m.e1_234) / ((1.0 - m.e1_234) * (1.0 - m.e1_23)),
        ),
    ];
    Ok(rows
        .into_iter()
        .map(|(name, count, predicted)| {
            let empirical = count / n;
            let error = if predicted != 0.0 {
                (empirical - predicted).abs() / predicted.abs()
            } else {
                (empirical - predicted).abs()
            };
            TauEntry {
                name,
                empirical,
                predicted,
                error,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSample {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "outer_R2")]
    pub outer_r2: f64,
    /// Achievable R₂: the inner bound in Case 3, the capacity otherwise.
    #[serde(rename = "inner_R2")]
    pub inner_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCurve {
    pub case: CaseLabel,
    #[serde(rename = "B")]
    pub b: f64,
    pub samples: Vec<RegionSample>,
}

/// Outer and achievable R₂ at `points` evenly spaced R₁ values in [0, B].
pub fn region_curve(model: &ErasureModel, points: usize) -> Result<RegionCurve> {
    if points < 2 {
        return Err(Error::config("a region curve needs at least 2 points"));
    }
    let c = Coefficients::new(model)?;
    let inner = c.inner_region(InnerOptions::default());
    let samples = (0..points)
        .map(|i| {
            let r1 = c.b * i as f64 / (points - 1) as f64;
            let outer_r2 = c.outer_optimum(r1)?.0;
            let inner_r2 = match c.case {
                CaseLabel::Case3 => {
                    inner
                        .max_r2(r1)
                        .ok_or_else(|| Error::Internal(format!("inner LP failed at R1 = {r1}")))?
                        .0
                }
                _ => outer_r2,
            };
            Ok(RegionSample {
                r1,
                outer_r2,
                inner_r2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RegionCurve {
        case: c.case,
        b: c.b,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r1_points_fraction_and_absolute() {
        let g = GridSpec::default();
        let pts = g.r1_points(0.5);
        assert_eq!(pts.len(), 17);
        assert!((pts[0].0 - 0.1).abs() < 1e-12 && (pts[16].0 - 0.9).abs() < 1e-12);
        let g = GridSpec {
            r1_step: R1Step::Absolute,
            ..GridSpec::default()
        };
        let pts = g.r1_points(0.5);
        // 0.05 .. 0.45 in steps of 0.05
        assert_eq!(pts.len(), 9);
        assert!((pts[8].1 - 0.45).abs() < 1e-12);
    }

    #[test]
    fn histogram_conserves_mass() {
        let mut h = Histogram::new(0.005, 0.10);
        assert_eq!(h.counts.len(), 20);
        for x in [0.0, 0.0049, 0.005, 0.0999, 0.1, 0.5, -1e-18] {
            h.add(x);
        }
        assert_eq!(h.total(), 7);
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.overflow, 2);
    }

    #[test]
    fn single_cell_matches_region_oracles() {
        let e = [0.2, 0.9, 0.1, 0.1, 0.5];
        let recs = deviation_cell(e, &GridSpec::default()).unwrap().unwrap();
        let half = &recs[8];
        assert!((half.r1_frac - 0.5).abs() < 1e-12);
        let model = ErasureModel::independent(0.2, 0.9, 0.1, 0.1, 0.5).unwrap();
        let outer = crate::region::outer_bound_max_r2(&model, half.r1).unwrap();
        let inner = crate::region::inner_bound_max_r2(&model, half.r1).unwrap();
        assert!((half.d - (outer - inner) / outer).abs() < 1e-12);
    }

    #[test]
    fn filtered_models_yield_nothing() {
        // symmetric model is Case 1
        assert!(deviation_cell([0.5; 5], &GridSpec::default())
            .unwrap()
            .is_none());
        // ε¹₃ < ε²₃
        assert!(
            deviation_cell([0.5, 0.2, 0.5, 0.4, 0.5], &GridSpec::default())
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn zero_erasure_sweep_is_exact() {
        let model = ErasureModel::independent(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let rows = convergence_sweep(
            &model,
            RatePair { r1: 0.5, r2: 0.5 },
            &[10, 100],
            &[1, 2],
            Algorithm::Alg1,
        )
        .unwrap();
        for r in rows {
            assert_eq!(r.mean_t_over_n, 1.0);
            assert_eq!(r.t_hat, 1.0);
        }
    }

    #[test]
    fn zero_erasure_tau_is_rates() {
        let model = ErasureModel::independent(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let rates = RatePair { r1: 0.3, r2: 0.6 };
        let mut cfg = SimConfig::for_rates(model.clone(), 0.3, 0.6, 1000, 4);
        cfg.deadline = Some(1000);
        let run = run_loop(&cfg, &mut algorithm1_policy()).unwrap();
        let rep = tau_accounting(&run, rates, 1000, &model).unwrap();
        let get = |name: &str| rep.iter().find(|e| e.name == name).unwrap().empirical;
        assert_eq!(get("tau_1"), 0.3);
        assert_eq!(get("tau_2"), 0.6);
    }

    #[test]
    fn region_curve_case1_coincides() {
        let model = ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        let curve = region_curve(&model, 11).unwrap();
        assert_eq!(curve.case, CaseLabel::Case1);
        assert!(curve.samples.iter().all(|s| s.outer_r2 == s.inner_r2));
        assert!((curve.samples[0].outer_r2 - 0.5).abs() < 1e-12);
    }
}
