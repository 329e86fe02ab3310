//! Rate regions: the outer bound, its per-case closed forms, the inner bound
//! achieved by the eight-step schedule, and expected completion times.
//!
//! Throughout, `A`, `C` are the `R₁` coefficients of the two rate lines,
//! `d1 = 1/(1−ε²₃₄)`, `d2 = 1/(1−ε²₄)`, and the `ρ` ratios are the gains a
//! unit of `G`, `S` or `U` brings to the respective line.

pub mod simplex;

use serde::Serialize;

use crate::alg2::MixParams;
use crate::erasure::{CaseLabel, ErasureModel, Marginals};
use crate::error::{Error, Result};
use simplex::{maximize, LpOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 >= 0.0 && r2 >= 0.0 && r1.is_finite() && r2.is_finite()) {
            return Err(Error::domain(format!(
                "rates must be finite and nonnegative: ({r1}, {r2})"
            )));
        }
        Ok(RatePair { r1, r2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AuxVars {
    pub g: f64,
    pub s: f64,
    pub u: f64,
}

/// `Σ coeffs[i]·x[i] ≤ rhs` over `x = (R1, R2, G, S, U)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inequality {
    pub coeffs: [f64; 5],
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRegion {
    pub constraints: Vec<Inequality>,
}

impl LinearRegion {
    pub const VARIABLES: [&'static str; 5] = ["R1", "R2", "G", "S", "U"];

    fn new(rows: Vec<([f64; 5], f64)>) -> Self {
        let mut constraints: Vec<Inequality> = rows
            .into_iter()
            .map(|(coeffs, rhs)| Inequality { coeffs, rhs })
            .collect();
        for i in 0..5 {
            let mut coeffs = [0.0; 5];
            coeffs[i] = -1.0;
            constraints.push(Inequality { coeffs, rhs: 0.0 });
        }
        LinearRegion { constraints }
    }

    pub fn contains(&self, x: [f64; 5], tol: f64) -> bool {
        self.constraints
            .iter()
            .all(|c| c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= c.rhs + tol)
    }

    /// Fix the first `fixed.len()` variables and optimize `objective` over
    /// the remaining ones.
    fn solve_fixed(&self, fixed: &[f64], objective: &[f64]) -> LpOutcome {
        let k = fixed.len();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for c in &self.constraints {
            let rest = c.coeffs[k..].to_vec();
            let shift: f64 = c.coeffs[..k].iter().zip(fixed).map(|(x, y)| x * y).sum();
            if rest.iter().all(|v| *v == 0.0) {
                if shift > c.rhs + 1e-12 {
                    return LpOutcome::Infeasible;
                }
                continue;
            }
            a.push(rest);
            b.push(c.rhs - shift);
        }
        maximize(objective, &a, &b)
    }

    /// Largest `R2` with some feasible `(G, S, U)` at the given `R1`.
    pub fn max_r2(&self, r1: f64) -> Option<(f64, AuxVars)> {
        match self.solve_fixed(&[r1], &[1.0, 0.0, 0.0, 0.0]) {
            LpOutcome::Optimal { value, x } => Some((
                value,
                AuxVars {
                    g: x[1],
                    s: x[2],
                    u: x[3],
                },
            )),
            _ => None,
        }
    }

    /// Whether some `(G, S, U)` certifies the rate pair.
    pub fn admits(&self, rates: RatePair) -> bool {
        matches!(
            self.solve_fixed(&[rates.r1, rates.r2], &[0.0, 0.0, 0.0]),
            LpOutcome::Optimal { .. }
        )
    }

    /// Largest `λ` such that `λ·direction` is in the region.
    pub fn max_scale(&self, direction: RatePair) -> Option<f64> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for c in &self.constraints {
            let lam = c.coeffs[0] * direction.r1 + c.coeffs[1] * direction.r2;
            a.push(vec![lam, c.coeffs[2], c.coeffs[3], c.coeffs[4]]);
            b.push(c.rhs);
        }
        maximize(&[1.0, 0.0, 0.0, 0.0], &a, &b).value()
    }
}

/// Every coefficient the region formulas use, computed once per model.
#[derive(Debug, Clone, Serialize)]
pub struct Coefficients {
    pub marginals: Marginals,
    pub case: CaseLabel,
    /// 1/(1−ε¹₂₃)
    pub inv23: f64,
    pub a: f64,
    pub c: f64,
    /// (ε¹₃₄−ε¹₂₃₄)/((1−ε¹₂₃₄)(1−ε²₃₄))
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub rho3: f64,
    pub rho34: f64,
    pub rho4: f64,
    /// (ε¹₃₄−ε¹₂₃₄)/((1−ε¹₂₃₄)(1−ε¹₃₄)), the cap on G/R₁ and S/R₁.
    pub k: f64,
    /// (ε¹₃₄−ε¹₂₃₄)/(1−ε¹₂₃₄), node-1 packets per R₁ heard by node 2 only.
    pub f: f64,
    /// (ε¹₃−ε¹₂₃)/(1−ε¹₂₃), node-1 packets per R₁ heard by 2 and not 3.
    pub a1: f64,
    /// Largest admissible R₁.
    pub b: f64,
}

impl Coefficients {
    pub fn new(model: &ErasureModel) -> Result<Self> {
        let case = model.classify_case()?.case;
        Ok(Self::from_marginals(model.marginals(), case))
    }

    fn from_marginals(m: Marginals, case: CaseLabel) -> Self {
        let inv23 = 1.0 / (1.0 - m.e1_23);
        let a = (m.e1_3 - m.e1_23) / ((1.0 - m.e2_3) * (1.0 - m.e1_23)) + inv23;
        let c2 = (m.e1_34 - m.e1_234) / ((1.0 - m.e1_234) * (1.0 - m.e2_34));
        Coefficients {
            marginals: m,
            case,
            inv23,
            a,
            c: c2 + inv23,
            c2,
            d1: 1.0 / (1.0 - m.e2_34),
            d2: 1.0 / (1.0 - m.e2_4),
            rho3: (1.0 - m.e1_3) / (1.0 - m.e2_3),
            rho34: (1.0 - m.e1_34) / (1.0 - m.e2_34),
            rho4: (1.0 - m.e1_4) / (1.0 - m.e2_4),
            k: (m.e1_34 - m.e1_234) / ((1.0 - m.e1_234) * (1.0 - m.e1_34)),
            f: (m.e1_34 - m.e1_234) / (1.0 - m.e1_234),
            a1: (m.e1_3 - m.e1_23) / (1.0 - m.e1_23),
            b: 1.0 / a,
        }
    }

    fn check_r1(&self, r1: f64) -> Result<()> {
        if !(r1 >= 0.0 && r1 <= self.b * (1.0 + 1e-12)) {
            return Err(Error::domain(format!(
                "R1 = {r1} outside [0, B = {}]",
                self.b
            )));
        }
        Ok(())
    }

    /// ε²₃ − ε²₃₄
    fn delta(&self) -> f64 {
        self.marginals.e2_3 - self.marginals.e2_34
    }

    /// Bracket of the U relation, (1−ε²₄)/(1−ε¹₄) − (ε²₃−ε²₃₄)/(1−ε¹₃₄).
    pub fn u_bracket(&self) -> f64 {
        let m = &self.marginals;
        (1.0 - m.e2_4) / (1.0 - m.e1_4) - self.delta() / (1.0 - m.e1_34)
    }

    /// Left-hand sides of the two rate inequalities with `G+S+U` moved
    /// over; the pair is feasible when both are at most 1.
    fn rate_lines(&self, rates: RatePair, x: AuxVars) -> [f64; 2] {
        [
            self.a * rates.r1 + self.d1 * rates.r2 + (1.0 - self.rho3) * (x.g + x.s) + x.u,
            self.c * rates.r1
                + self.d2 * rates.r2
                + (1.0 - self.rho34) * x.g
                + (1.0 - self.rho4) * (x.s + x.u),
        ]
    }

    pub fn outer_region(&self) -> LinearRegion {
        let (r3, r34, r4) = (1.0 - self.rho3, 1.0 - self.rho34, 1.0 - self.rho4);
        LinearRegion::new(vec![
            ([self.inv23, self.d2, 1.0, 1.0, 1.0], 1.0),
            ([self.a, self.d1, r3, r3, 1.0], 1.0),
            ([self.c, self.d2, r34, r4, r4], 1.0),
        ])
    }

    /// The per-case simplification of the outer region: only the auxiliary
    /// variable that helps in this case is kept, capped at `K·R1`.
    ///
    /// In Cases 1 and 2 this has the same `(R1, R2)` projection as
    /// [`Coefficients::outer_region`]. In Case 3 the cap does not imply the
    /// first outer inequality, so this region can be strictly larger.
    pub fn case_region(&self) -> LinearRegion {
        let (r3, r34, r4) = (1.0 - self.rho3, 1.0 - self.rho34, 1.0 - self.rho4);
        let mut rows = vec![
            ([self.a, self.d1, r3, r3, 1.0], 1.0),
            ([self.c, self.d2, r34, r4, r4], 1.0),
            ([0.0, 0.0, 0.0, 0.0, 1.0], 0.0),
        ];
        let (g, s) = match self.case {
            CaseLabel::Case1 => (0.0, 0.0),
            CaseLabel::Case2 => (self.k, 0.0),
            CaseLabel::Case3 => (0.0, self.k),
        };
        rows.push(([-g, 0.0, 1.0, 0.0, 0.0], 0.0));
        rows.push(([-s, 0.0, 0.0, 1.0, 0.0], 0.0));
        LinearRegion::new(rows)
    }

    pub fn inner_region(&self, opts: InnerOptions) -> LinearRegion {
        let m = &self.marginals;
        let (r3, r34, r4) = (1.0 - self.rho3, 1.0 - self.rho34, 1.0 - self.rho4);
        let delta = self.delta();
        let gamma = (1.0 - m.e2_4) * (1.0 - m.e1_34) / (1.0 - m.e1_4);
        let lambda = (1.0 - m.e1_4) * (1.0 - m.e2_34) / ((1.0 - m.e2_4) * (1.0 - m.e1_34));
        let kappa =
            delta * (m.e2_4 - m.e2_34) / ((1.0 - m.e1_34) * (1.0 - m.e2_4) * (1.0 - m.e2_34));
        let mut rows = vec![
            ([self.a, self.d1, r3, r3, 1.0], 1.0),
            ([self.c, self.d2, r34, r4, r4], 1.0),
            ([-delta * self.k, 0.0, delta, 1.0 - m.e2_34, 0.0], 0.0),
            ([0.0, 0.0, 0.0, -(gamma - delta), delta], 0.0),
            ([-self.k, 0.0, 1.0, lambda, lambda], 0.0),
            ([0.0, -kappa, 0.0, 1.0, 0.0], 0.0),
        ];
        if opts.with_time_sharing {
            rows.push(([self.inv23, self.d2, 1.0, 1.0, 1.0], 1.0));
        }
        LinearRegion::new(rows)
    }

    /// Outer-bound optimum at `R1` from the per-case closed forms.
    pub fn outer_optimum(&self, r1: f64) -> Result<(f64, AuxVars)> {
        self.check_r1(r1)?;
        let base1 = (1.0 - self.a * r1) / self.d1;
        let base2 = (1.0 - self.c * r1) / self.d2;
        let slope1 = -(1.0 - self.rho3) / self.d1;
        Ok(match self.case {
            CaseLabel::Case1 => (base1.min(base2), AuxVars::default()),
            CaseLabel::Case2 => {
                let (v, x) = max_min_lines(
                    base1,
                    slope1,
                    base2,
                    (self.rho34 - 1.0) / self.d2,
                    self.k * r1,
                );
                (
                    v,
                    AuxVars {
                        g: x,
                        ..AuxVars::default()
                    },
                )
            }
            CaseLabel::Case3 => {
                let (v, x) = max_min_lines(
                    base1,
                    slope1,
                    base2,
                    (self.rho4 - 1.0) / self.d2,
                    self.k * r1,
                );
                (
                    v,
                    AuxVars {
                        s: x,
                        ..AuxVars::default()
                    },
                )
            }
        })
    }

    /// Expected normalized completion time of the four-step schedule.
    pub fn t_hat(&self, rates: RatePair) -> f64 {
        let [x, y] = self.rate_lines(rates, AuxVars::default());
        x.max(y)
    }

    /// The same quantity summed phase by phase.
    pub fn t_hat_parts(&self, rates: RatePair) -> THatParts {
        let m = &self.marginals;
        let RatePair { r1, r2 } = rates;
        let t1 = r1 * self.inv23;
        let t2 = r1 * self.c2;
        let t3 = r2 / (1.0 - m.e2_34);
        let relay = r1 * self.a1 + r1 * self.f * (self.delta() / (1.0 - m.e2_34) - 1.0);
        let own = r2 * (m.e2_4 - m.e2_34) / (1.0 - m.e2_34);
        let t4 = (relay / (1.0 - m.e2_3)).max(own / (1.0 - m.e2_4));
        THatParts {
            t1,
            t2,
            t3,
            t4,
            total: t1 + t2 + t3 + t4,
        }
    }

    /// G, S, U produced by branching parameters at rate `R1`.
    pub fn aux_from_params(&self, r1: f64, p: MixParams) -> AuxVars {
        let m = &self.marginals;
        let base = self.k * r1;
        AuxVars {
            g: p.g * base,
            s: p.s * base * self.delta() / (1.0 - m.e2_34),
            u: p.u * p.s * base * (1.0 - m.e1_34) / (1.0 - m.e2_34) * self.u_bracket(),
        }
    }

    /// Inverse of [`Coefficients::aux_from_params`]; parameters that do not
    /// influence anything are set to 0.
    pub fn params_from_aux(&self, r1: f64, x: AuxVars) -> MixParams {
        let m = &self.marginals;
        let base = self.k * r1;
        let ratio = |num: f64, den: f64| {
            if den > 1e-15 {
                (num / den).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let g = ratio(x.g, base);
        let s = ratio(x.s, base * self.delta() / (1.0 - m.e2_34)).min(1.0 - g);
        let u = ratio(
            x.u,
            s * base * (1.0 - m.e1_34) / (1.0 - m.e2_34) * self.u_bracket(),
        );
        MixParams { g, s, u }
    }

    /// Smallest R₂ for which Q₂,₃₄̄ can feed the coded step, S/κ.
    fn coded_supply_min_r2(&self, s: f64) -> f64 {
        let m = &self.marginals;
        let kappa = self.delta() * (m.e2_4 - m.e2_34)
            / ((1.0 - m.e1_34) * (1.0 - m.e2_4) * (1.0 - m.e2_34));
        if s <= 0.0 {
            0.0
        } else if kappa > 0.0 {
            s / kappa
        } else {
            f64::INFINITY
        }
    }
}

/// Options of the inner-bound LP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InnerOptions {
    /// Also impose the first outer-bound inequality.
    pub with_time_sharing: bool,
}

/// Phase-by-phase terms of the completion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct THatParts {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub total: f64,
}

/// `max_{x ∈ [0, hi]} min(p1 + s1·x, p2 + s2·x)`; the optimum is at an
/// endpoint or where the lines cross.
fn max_min_lines(p1: f64, s1: f64, p2: f64, s2: f64, hi: f64) -> (f64, f64) {
    let eval = |x: f64| (p1 + s1 * x).min(p2 + s2 * x);
    let mut best = (eval(0.0), 0.0);
    let mut consider = |x: f64| {
        let v = eval(x);
        if v > best.0 {
            best = (v, x);
        }
    };
    consider(hi);
    if s1 != s2 {
        let x = (p2 - p1) / (s1 - s2);
        if x > 0.0 && x < hi {
            consider(x);
        }
    }
    best
}

pub fn outer_bound_region(model: &ErasureModel) -> Result<LinearRegion> {
    Ok(Coefficients::new(model)?.outer_region())
}

pub fn r1_upper_bound(model: &ErasureModel) -> Result<f64> {
    Ok(Coefficients::new(model)?.b)
}

/// Largest R₂ of the outer bound at `R1`, from the per-case closed forms.
pub fn outer_bound_max_r2(model: &ErasureModel, r1: f64) -> Result<f64> {
    Ok(Coefficients::new(model)?.outer_optimum(r1)?.0)
}

/// The same quantity from a generic LP over the per-case region.
pub fn outer_bound_max_r2_lp(model: &ErasureModel, r1: f64) -> Result<f64> {
    let c = Coefficients::new(model)?;
    c.check_r1(r1)?;
    c.case_region()
        .max_r2(r1)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Internal(format!("outer LP has no optimum at R1 = {r1}")))
}

/// Largest R₂ over the full three-inequality outer region. Equal to
/// [`outer_bound_max_r2`] in Cases 1 and 2, possibly smaller in Case 3.
pub fn full_outer_max_r2(model: &ErasureModel, r1: f64) -> Result<f64> {
    let c = Coefficients::new(model)?;
    c.check_r1(r1)?;
    c.outer_region()
        .max_r2(r1)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Internal(format!("outer LP has no optimum at R1 = {r1}")))
}

/// Largest R₂ of the inner bound at `R1`. Only defined in Case 3; in the
/// other cases the capacity region is the outer bound.
pub fn inner_bound_max_r2(model: &ErasureModel, r1: f64) -> Result<f64> {
    inner_bound_optimum(model, r1, InnerOptions::default()).map(|(v, _)| v)
}

pub fn inner_bound_optimum(
    model: &ErasureModel,
    r1: f64,
    opts: InnerOptions,
) -> Result<(f64, AuxVars)> {
    let c = Coefficients::new(model)?;
    if c.case != CaseLabel::Case3 {
        return Err(Error::domain(format!(
            "the inner bound is only needed in Case3; this model is {}",
            c.case
        )));
    }
    c.check_r1(r1)?;
    c.inner_region(opts)
        .max_r2(r1)
        .ok_or_else(|| Error::Internal(format!("inner LP has no optimum at R1 = {r1}")))
}

/// Largest achievable R₂: the capacity in Cases 1 and 2, the inner bound
/// in Case 3.
pub fn achievable_max_r2(model: &ErasureModel, r1: f64) -> Result<f64> {
    let c = Coefficients::new(model)?;
    match c.case {
        CaseLabel::Case3 => inner_bound_max_r2(model, r1),
        _ => Ok(c.outer_optimum(r1)?.0),
    }
}

fn t_hat_denominators(model: &ErasureModel) -> Result<Coefficients> {
    let m = model.marginals();
    for (name, v) in [
        ("ε¹₂₃", m.e1_23),
        ("ε¹₂₃₄", m.e1_234),
        ("ε²₃", m.e2_3),
        ("ε²₄", m.e2_4),
        ("ε²₃₄", m.e2_34),
    ] {
        if v >= 1.0 {
            return Err(Error::precondition(format!(
                "{name} = 1 makes the completion time infinite"
            )));
        }
    }
    // the case label is irrelevant here, and classification needs more
    // than the completion time does
    Ok(Coefficients::from_marginals(m, CaseLabel::Case1))
}

/// Limit of T/n for the four-step schedule carrying `⌈nR⌉` packets.
/// Both the two-branch form and the phase-by-phase sum are evaluated and
/// must agree.
pub fn t_hat(model: &ErasureModel, rates: RatePair) -> Result<f64> {
    let c = t_hat_denominators(model)?;
    let direct = c.t_hat(rates);
    let parts = c.t_hat_parts(rates).total;
    if (direct - parts).abs() > 1e-12 * direct.abs().max(1.0) {
        return Err(Error::Internal(format!(
            "completion time forms disagree: {direct} vs {parts}"
        )));
    }
    Ok(direct)
}

pub fn t_hat_parts(model: &ErasureModel, rates: RatePair) -> Result<THatParts> {
    Ok(t_hat_denominators(model)?.t_hat_parts(rates))
}

/// Limit of T/n for the eight-step schedule with parameters `params`.
pub fn alg2_t_hat(model: &ErasureModel, rates: RatePair, params: MixParams) -> Result<f64> {
    let c = t_hat_denominators(model)?;
    let x = c.aux_from_params(rates.r1, params);
    let [p, q] = c.rate_lines(rates, x);
    Ok(p.max(q))
}

/// One point of the eight-step schedule's parametric region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParametricPoint {
    pub aux: AuxVars,
    /// Largest R₂ meeting the two rate inequalities (may be negative).
    pub r2_max: f64,
    /// Smallest R₂ that keeps the coded step supplied with node-2 packets.
    pub coded_supply_min_r2: f64,
    /// The U bracket is negative, so U < 0 whenever u·s > 0.
    pub out_of_envelope: bool,
    /// `r2_max` when the point is usable, i.e. nonnegative and at least
    /// `coded_supply_min_r2`.
    pub feasible_r2: Option<f64>,
}

pub fn alg2_parametric_point(
    model: &ErasureModel,
    r1: f64,
    params: MixParams,
) -> Result<ParametricPoint> {
    let c = Coefficients::new(model)?;
    c.check_r1(r1)?;
    let aux = c.aux_from_params(r1, params);
    let [p, q] = c.rate_lines(RatePair { r1, r2: 0.0 }, aux);
    let r2_max = ((1.0 - p) / c.d1).min((1.0 - q) / c.d2);
    let min_r2 = c.coded_supply_min_r2(aux.s);
    let usable = r2_max >= -1e-12 && r2_max >= min_r2 - 1e-12 && aux.u >= 0.0;
    Ok(ParametricPoint {
        aux,
        r2_max,
        coded_supply_min_r2: min_r2,
        out_of_envelope: c.u_bracket() < 0.0,
        feasible_r2: usable.then_some(r2_max.max(0.0)),
    })
}

/// Branching parameters that reach the largest R₂ at `R1`, and that R₂.
pub fn best_mix_params(model: &ErasureModel, r1: f64) -> Result<(MixParams, f64)> {
    let c = Coefficients::new(model)?;
    let (r2, aux) = match c.case {
        CaseLabel::Case3 => inner_bound_optimum(model, r1, InnerOptions::default())?,
        _ => {
            let (r2, aux) = c.outer_optimum(r1)?;
            (r2, AuxVars { s: 0.0, ..aux })
        }
    };
    Ok((c.params_from_aux(r1, aux), r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// The per-case outer region, consistent with [`outer_bound_max_r2`].
    Outer,
    /// The full three-inequality outer region.
    Full,
    Inner,
}

/// Whether some auxiliary variables certify `rates` for the chosen bound.
pub fn region_membership(model: &ErasureModel, rates: RatePair, which: Bound) -> Result<bool> {
    let c = Coefficients::new(model)?;
    let region = match which {
        Bound::Outer => c.case_region(),
        Bound::Full => c.outer_region(),
        Bound::Inner => {
            if c.case != CaseLabel::Case3 {
                return Err(Error::domain("the inner bound is only defined in Case3"));
            }
            c.inner_region(InnerOptions::default())
        }
    };
    Ok(region.admits(rates))
}

/// Largest `λ` with `λ·direction` inside the achievable region (capacity
/// in Cases 1–2, inner bound in Case 3).
pub fn achievable_scale(model: &ErasureModel, direction: RatePair) -> Result<f64> {
    let c = Coefficients::new(model)?;
    let region = match c.case {
        CaseLabel::Case3 => c.inner_region(InnerOptions::default()),
        _ => c.case_region(),
    };
    region
        .max_scale(direction)
        .ok_or_else(|| Error::Internal("scaling LP has no optimum".into()))
}
