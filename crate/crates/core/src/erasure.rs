//! Per-slot erasure statistics of the two transmitters.
//!
//! A node-1 transmission is heard (or not) by nodes 2, 3 and 4; a node-2
//! transmission by nodes 3 and 4. Within a slot the reception indicators may
//! be arbitrarily correlated, so the model stores the full joint mass of the
//! indicator vector for each transmitter. Slots are i.i.d.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for normalization checks and floating-point case ties.
pub const PROB_TOL: f64 = 1e-12;

/// The transmitting node of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transmitter {
    /// Node 1, the primary (licensed) transmitter.
    #[serde(rename = "1")]
    Primary,
    /// Node 2, the secondary transmitter.
    #[serde(rename = "2")]
    Secondary,
}

impl Transmitter {
    pub fn node(self) -> u8 {
        match self {
            Transmitter::Primary => 1,
            Transmitter::Secondary => 2,
        }
    }

    pub fn from_node(node: u8) -> Result<Self> {
        match node {
            1 => Ok(Transmitter::Primary),
            2 => Ok(Transmitter::Secondary),
            other => Err(Error::domain(format!("node {other} is not a transmitter"))),
        }
    }

    /// Nodes that listen to this transmitter.
    pub fn listeners(self) -> NodeSet {
        match self {
            Transmitter::Primary => NodeSet(0b11100),
            Transmitter::Secondary => NodeSet(0b11000),
        }
    }
}

/// A set of receiving nodes, stored as a bitmask indexed by node number.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NodeSet(u8);

impl NodeSet {
    pub fn new(nodes: &[u8]) -> Result<Self> {
        let mut bits = 0u8;
        for &n in nodes {
            if !(2..=4).contains(&n) {
                return Err(Error::domain(format!("node {n} is not a receiver")));
            }
            bits |= 1 << n;
        }
        Ok(NodeSet(bits))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, node: u8) -> bool {
        node < 8 && self.0 & (1 << node) != 0
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (2..=4).filter(move |&n| self.contains(n))
    }

    /// All nonempty subsets.
    pub fn subsets(self) -> Vec<NodeSet> {
        let members: Vec<u8> = self.iter().collect();
        (1u32..(1 << members.len()))
            .map(|mask| {
                let mut bits = 0;
                for (i, &n) in members.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        bits |= 1 << n;
                    }
                }
                NodeSet(bits)
            })
            .collect()
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Which listeners received a transmission in one slot.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Reception(NodeSet);

impl Reception {
    pub fn new(receivers: NodeSet) -> Self {
        Reception(receivers)
    }

    /// Node-1 outcome from the indicators (z2, z3, z4).
    pub fn primary(z2: bool, z3: bool, z4: bool) -> Self {
        Reception(NodeSet(
            ((z2 as u8) << 2) | ((z3 as u8) << 3) | ((z4 as u8) << 4),
        ))
    }

    /// Node-2 outcome from the indicators (z3, z4).
    pub fn secondary(z3: bool, z4: bool) -> Self {
        Reception(NodeSet(((z3 as u8) << 3) | ((z4 as u8) << 4)))
    }

    pub fn received(self, node: u8) -> bool {
        self.0.contains(node)
    }

    pub fn erased(self, node: u8) -> bool {
        !self.0.contains(node)
    }

    pub fn receivers(self) -> NodeSet {
        self.0
    }

    /// Indicator vector in listener order, 1 = received.
    pub fn indicators(self, tx: Transmitter) -> Vec<u8> {
        tx.listeners()
            .iter()
            .map(|n| self.received(n) as u8)
            .collect()
    }

    fn primary_index(self) -> usize {
        (self.received(2) as usize) << 2
            | (self.received(3) as usize) << 1
            | self.received(4) as usize
    }

    fn secondary_index(self) -> usize {
        (self.received(3) as usize) << 1 | self.received(4) as usize
    }

    fn from_primary_index(idx: usize) -> Self {
        Reception::primary(idx & 4 != 0, idx & 2 != 0, idx & 1 != 0)
    }

    fn from_secondary_index(idx: usize) -> Self {
        Reception::secondary(idx & 2 != 0, idx & 1 != 0)
    }
}

impl fmt::Debug for Reception {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reception{:?}", self.0)
    }
}

/// The three statistical regimes distinguishing the region formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    Case1,
    Case2,
    Case3,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseLabel::Case1 => "Case1",
            CaseLabel::Case2 => "Case2",
            CaseLabel::Case3 => "Case3",
        };
        f.write_str(s)
    }
}

/// Outcome of [`ErasureModel::classify_case`], with the two ratios that
/// decided it: `(1-ε¹₃₄)/(1-ε²₃₄)` and `(1-ε¹₄)/(1-ε²₄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub case: CaseLabel,
    pub ratio_34: f64,
    pub ratio_4: f64,
    /// True when the decision was taken on exact rational inputs.
    pub exact: bool,
}

/// All marginal erasure probabilities used by the region formulas.
///
/// Field `e1_23` is the probability that a node-1 transmission is erased at
/// both node 2 and node 3, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Marginals {
    pub e1_2: f64,
    pub e1_3: f64,
    pub e1_4: f64,
    pub e1_23: f64,
    pub e1_24: f64,
    pub e1_34: f64,
    pub e1_234: f64,
    pub e2_3: f64,
    pub e2_4: f64,
    pub e2_34: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ExactMasses {
    node1: [BigRational; 8],
    node2: [BigRational; 4],
}

impl ExactMasses {
    fn erasure(&self, tx: Transmitter, set: NodeSet) -> BigRational {
        let mut total = BigRational::zero();
        match tx {
            Transmitter::Primary => {
                for (idx, m) in self.node1.iter().enumerate() {
                    if set
                        .iter()
                        .all(|n| Reception::from_primary_index(idx).erased(n))
                    {
                        total += m;
                    }
                }
            }
            Transmitter::Secondary => {
                for (idx, m) in self.node2.iter().enumerate() {
                    if set
                        .iter()
                        .all(|n| Reception::from_secondary_index(idx).erased(n))
                    {
                        total += m;
                    }
                }
            }
        }
        total
    }
}

/// Joint per-slot erasure distribution of both transmitters.
///
/// `node1[i]` is the mass of the outcome `(z2, z3, z4)` whose bits, read in
/// that order, spell `i` (z = 1 means received); `node2[i]` likewise for
/// `(z3, z4)`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ErasureModel {
    node1: [f64; 8],
    node2: [f64; 4],
    cdf1: [f64; 8],
    cdf2: [f64; 4],
    exact: Option<Arc<ExactMasses>>,
}

impl PartialEq for ErasureModel {
    fn eq(&self, other: &Self) -> bool {
        self.node1 == other.node1 && self.node2 == other.node2
    }
}

fn check_pmf(masses: &[f64], what: &str) -> Result<()> {
    for (i, &m) in masses.iter().enumerate() {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::domain(format!(
                "{what} mass #{i} = {m} is not a probability"
            )));
        }
    }
    let sum: f64 = masses.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::domain(format!("{what} masses sum to {sum}, not 1")));
    }
    Ok(())
}

fn cumulative<const N: usize>(masses: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    let mut acc = 0.0;
    for i in 0..N {
        acc += masses[i];
        out[i] = acc;
    }
    out[N - 1] = f64::INFINITY;
    out
}

impl ErasureModel {
    /// Build from joint masses (see the type docs for the outcome order).
    pub fn joint(node1: [f64; 8], node2: [f64; 4]) -> Result<Self> {
        check_pmf(&node1, "node-1")?;
        check_pmf(&node2, "node-2")?;
        Ok(ErasureModel {
            cdf1: cumulative(&node1),
            cdf2: cumulative(&node2),
            node1,
            node2,
            exact: None,
        })
    }

    /// Build from exact rational masses. The floating masses are the nearest
    /// doubles; case classification uses the rationals.
    pub fn joint_exact(node1: [BigRational; 8], node2: [BigRational; 4]) -> Result<Self> {
        for (what, masses) in [("node-1", &node1[..]), ("node-2", &node2[..])] {
            if masses.iter().any(|m| m.is_negative()) {
                return Err(Error::domain(format!("{what} has a negative mass")));
            }
            let sum = masses.iter().fold(BigRational::zero(), |acc, m| acc + m);
            if !sum.is_one() {
                return Err(Error::domain(format!("{what} masses sum to {sum}, not 1")));
            }
        }
        let to_f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
        let mut model = ErasureModel::joint(
            std::array::from_fn(|i| to_f(&node1[i])),
            std::array::from_fn(|i| to_f(&node2[i])),
        )?;
        model.exact = Some(Arc::new(ExactMasses { node1, node2 }));
        Ok(model)
    }

    /// Independent erasures with the given per-link erasure probabilities.
    pub fn independent(e12: f64, e13: f64, e14: f64, e23: f64, e24: f64) -> Result<Self> {
        for (name, e) in [
            ("e12", e12),
            ("e13", e13),
            ("e14", e14),
            ("e23", e23),
            ("e24", e24),
        ] {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::domain(format!("{name} = {e} is outside [0, 1)")));
            }
        }
        let p = |erase: f64, received: bool| if received { 1.0 - erase } else { erase };
        let node1 = std::array::from_fn(|idx| {
            let r = Reception::from_primary_index(idx);
            p(e12, r.received(2)) * p(e13, r.received(3)) * p(e14, r.received(4))
        });
        let node2 = std::array::from_fn(|idx| {
            let r = Reception::from_secondary_index(idx);
            p(e23, r.received(3)) * p(e24, r.received(4))
        });
        ErasureModel::joint(node1, node2)
    }

    /// Independent erasures with exact rational link probabilities.
    pub fn independent_exact(links: [BigRational; 5]) -> Result<Self> {
        let one = BigRational::one();
        for (name, e) in ["e12", "e13", "e14", "e23", "e24"].iter().zip(&links) {
            if e.is_negative() || *e >= one {
                return Err(Error::domain(format!("{name} = {e} is outside [0, 1)")));
            }
        }
        let p = |erase: &BigRational, received: bool| {
            if received {
                &one - erase
            } else {
                erase.clone()
            }
        };
        let [e12, e13, e14, e23, e24] = &links;
        let node1 = std::array::from_fn(|idx| {
            let r = Reception::from_primary_index(idx);
            p(e12, r.received(2)) * p(e13, r.received(3)) * p(e14, r.received(4))
        });
        let node2 = std::array::from_fn(|idx| {
            let r = Reception::from_secondary_index(idx);
            p(e23, r.received(3)) * p(e24, r.received(4))
        });
        ErasureModel::joint_exact(node1, node2)
    }

    /// A random joint model with full support (flat Dirichlet masses).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        fn dirichlet<R: Rng + ?Sized, const N: usize>(rng: &mut R) -> [f64; N] {
            let mut w: [f64; N] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            // absorb rounding so the sum is 1 to machine precision
            let drift = 1.0 - w.iter().sum::<f64>();
            w[0] += drift;
            w
        }
        let node1 = dirichlet::<R, 8>(rng);
        let node2 = dirichlet::<R, 4>(rng);
        ErasureModel::joint(node1, node2).expect("dirichlet masses are a valid pmf")
    }

    pub fn node1_masses(&self) -> &[f64; 8] {
        &self.node1
    }

    pub fn node2_masses(&self) -> &[f64; 4] {
        &self.node2
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Probability that a transmission of `tx` is erased at every node of `set`.
    pub fn marginal_erasure_prob(&self, tx: Transmitter, set: NodeSet) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::domain("erasure set is empty"));
        }
        if !set.is_subset(tx.listeners()) {
            return Err(Error::domain(format!(
                "set {set:?} is not contained in the listeners {:?} of node {}",
                tx.listeners(),
                tx.node()
            )));
        }
        Ok(self.erasure_unchecked(tx, set))
    }

    fn erasure_unchecked(&self, tx: Transmitter, set: NodeSet) -> f64 {
        match tx {
            Transmitter::Primary => self
                .node1
                .iter()
                .enumerate()
                .filter(|(idx, _)| {
                    set.iter()
                        .all(|n| Reception::from_primary_index(*idx).erased(n))
                })
                .map(|(_, m)| m)
                .sum(),
            Transmitter::Secondary => self
                .node2
                .iter()
                .enumerate()
                .filter(|(idx, _)| {
                    set.iter()
                        .all(|n| Reception::from_secondary_index(*idx).erased(n))
                })
                .map(|(_, m)| m)
                .sum(),
        }
    }

    /// Shorthand for node-1 marginals, e.g. `eps1(&[2, 3])` is ε¹₂₃.
    pub fn eps1(&self, nodes: &[u8]) -> f64 {
        let set = NodeSet::new(nodes).expect("valid node list");
        self.marginal_erasure_prob(Transmitter::Primary, set)
            .expect("valid node-1 set")
    }

    /// Shorthand for node-2 marginals, e.g. `eps2(&[3, 4])` is ε²₃₄.
    pub fn eps2(&self, nodes: &[u8]) -> f64 {
        let set = NodeSet::new(nodes).expect("valid node list");
        self.marginal_erasure_prob(Transmitter::Secondary, set)
            .expect("valid node-2 set")
    }

    pub fn marginals(&self) -> Marginals {
        Marginals {
            e1_2: self.eps1(&[2]),
            e1_3: self.eps1(&[3]),
            e1_4: self.eps1(&[4]),
            e1_23: self.eps1(&[2, 3]),
            e1_24: self.eps1(&[2, 4]),
            e1_34: self.eps1(&[3, 4]),
            e1_234: self.eps1(&[2, 3, 4]),
            e2_3: self.eps2(&[3]),
            e2_4: self.eps2(&[4]),
            e2_34: self.eps2(&[3, 4]),
        }
    }

    /// Probability that `tx` is received by at least one node in `set`.
    pub fn reach_prob(&self, tx: Transmitter, nodes: &[u8]) -> f64 {
        let set = NodeSet::new(nodes).expect("valid node list");
        1.0 - self.erasure_unchecked(tx, set)
    }

    /// Draw the reception outcome of one slot.
    pub fn sample<R: Rng + ?Sized>(&self, tx: Transmitter, rng: &mut R) -> Reception {
        let u: f64 = rng.gen();
        match tx {
            Transmitter::Primary => {
                let idx = self.cdf1.iter().position(|&c| u < c).unwrap_or(7);
                Reception::from_primary_index(idx)
            }
            Transmitter::Secondary => {
                let idx = self.cdf2.iter().position(|&c| u < c).unwrap_or(3);
                Reception::from_secondary_index(idx)
            }
        }
    }

    /// Joint mass of one outcome.
    pub fn outcome_prob(&self, tx: Transmitter, outcome: Reception) -> f64 {
        match tx {
            Transmitter::Primary => self.node1[outcome.primary_index()],
            Transmitter::Secondary => self.node2[outcome.secondary_index()],
        }
    }

    /// Checks the standing assumptions of the region formulas: cooperation
    /// can help the primary (ε¹₃ ≥ ε²₃) and no formula denominator vanishes.
    pub fn check_region_preconditions(&self) -> Result<()> {
        if let Some(exact) = &self.exact {
            return check_exact_preconditions(exact);
        }
        let m = self.marginals();
        if m.e1_3 < m.e2_3 - PROB_TOL {
            return Err(Error::precondition(format!(
                "ε¹₃ ≥ ε²₃ violated ({} < {})",
                m.e1_3, m.e2_3
            )));
        }
        for (name, e) in [
            ("ε¹₂₃", m.e1_23),
            ("ε¹₂₃₄", m.e1_234),
            ("ε¹₃₄", m.e1_34),
            ("ε¹₄", m.e1_4),
            ("ε²₃", m.e2_3),
            ("ε²₄", m.e2_4),
            ("ε²₃₄", m.e2_34),
        ] {
            if 1.0 - e <= PROB_TOL {
                return Err(Error::precondition(format!(
                    "{name} < 1 violated ({name} = {e})"
                )));
            }
        }
        Ok(())
    }

    /// Decide which of the three regimes applies.
    ///
    /// Case1 when both ratios are at most 1; otherwise Case2 when the first
    /// ratio attains the maximum (ties go to Case2) and Case3 when only the
    /// second does.
    pub fn classify_case(&self) -> Result<Classification> {
        self.check_region_preconditions()?;
        let m = self.marginals();
        let ratio_34 = (1.0 - m.e1_34) / (1.0 - m.e2_34);
        let ratio_4 = (1.0 - m.e1_4) / (1.0 - m.e2_4);
        let case = match &self.exact {
            Some(exact) => classify_exact(exact),
            None => {
                if ratio_34.max(ratio_4) <= 1.0 + PROB_TOL {
                    CaseLabel::Case1
                } else if ratio_34 >= ratio_4 - PROB_TOL {
                    CaseLabel::Case2
                } else {
                    CaseLabel::Case3
                }
            }
        };
        Ok(Classification {
            case,
            ratio_34,
            ratio_4,
            exact: self.exact.is_some(),
        })
    }
}

fn set(nodes: &[u8]) -> NodeSet {
    NodeSet::new(nodes).expect("static node set")
}

fn check_exact_preconditions(exact: &ExactMasses) -> Result<()> {
    use Transmitter::{Primary, Secondary};
    let e13 = exact.erasure(Primary, set(&[3]));
    let e23 = exact.erasure(Secondary, set(&[3]));
    if e13 < e23 {
        return Err(Error::precondition(format!(
            "ε¹₃ ≥ ε²₃ violated ({e13} < {e23})"
        )));
    }
    let one = BigRational::one();
    for (name, tx, nodes) in [
        ("ε¹₂₃", Primary, &[2u8, 3][..]),
        ("ε¹₂₃₄", Primary, &[2, 3, 4]),
        ("ε¹₃₄", Primary, &[3, 4]),
        ("ε¹₄", Primary, &[4]),
        ("ε²₃", Secondary, &[3]),
        ("ε²₄", Secondary, &[4]),
        ("ε²₃₄", Secondary, &[3, 4]),
    ] {
        let e = exact.erasure(tx, set(nodes));
        if e >= one {
            return Err(Error::precondition(format!(
                "{name} < 1 violated ({name} = {e})"
            )));
        }
    }
    Ok(())
}

fn classify_exact(exact: &ExactMasses) -> CaseLabel {
    use Transmitter::{Primary, Secondary};
    let one = BigRational::one();
    let ratio = |a: BigRational, b: BigRational| (&one - a) / (&one - b);
    let r34 = ratio(
        exact.erasure(Primary, set(&[3, 4])),
        exact.erasure(Secondary, set(&[3, 4])),
    );
    let r4 = ratio(
        exact.erasure(Primary, set(&[4])),
        exact.erasure(Secondary, set(&[4])),
    );
    if r34 <= one && r4 <= one {
        CaseLabel::Case1
    } else if r34 >= r4 {
        CaseLabel::Case2
    } else {
        CaseLabel::Case3
    }
}

/// A probability as written in a model file: a JSON number, or a string
/// holding a decimal (`"0.125"`) or fraction (`"1/8"`) that is kept exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Number(f64),
    Text(String),
}

impl Prob {
    fn exact(&self) -> Option<Result<BigRational>> {
        match self {
            Prob::Number(_) => None,
            Prob::Text(s) => Some(parse_rational(s)),
        }
    }

    fn value(&self) -> Result<f64> {
        match self {
            Prob::Number(x) => Ok(*x),
            Prob::Text(s) => parse_rational(s).map(|r| r.to_f64().unwrap_or(f64::NAN)),
        }
    }
}

impl From<f64> for Prob {
    fn from(x: f64) -> Self {
        Prob::Number(x)
    }
}

/// Parse a plain decimal (`"0.125"`) or a fraction (`"1/8"`) exactly.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::config(format!("cannot parse {text:?} as an exact probability"));
    if let Some((num, den)) = s.split_once('/') {
        let n = BigInt::from_str(num.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(den.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
    if frac_part.chars().any(|c| !c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let digits = if digits == "-" || digits == "+" || digits.is_empty() {
        return Err(bad());
    } else {
        digits
    };
    let n = BigInt::from_str(&digits).map_err(|_| bad())?;
    let d = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(n, d))
}

/// Serialized form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelDescription {
    Independent {
        e12: Prob,
        e13: Prob,
        e14: Prob,
        e23: Prob,
        e24: Prob,
    },
    Joint {
        node1: Vec<Prob>,
        node2: Vec<Prob>,
    },
}

impl ModelDescription {
    /// When every probability is a string the model keeps exact masses.
    pub fn build(&self) -> Result<ErasureModel> {
        match self {
            ModelDescription::Independent {
                e12,
                e13,
                e14,
                e23,
                e24,
            } => {
                let links = [e12, e13, e14, e23, e24];
                if let Some(exact) = all_exact(&links)? {
                    let arr: [BigRational; 5] = exact.try_into().expect("five links");
                    ErasureModel::independent_exact(arr)
                } else {
                    ErasureModel::independent(
                        e12.value()?,
                        e13.value()?,
                        e14.value()?,
                        e23.value()?,
                        e24.value()?,
                    )
                }
            }
            ModelDescription::Joint { node1, node2 } => {
                if node1.len() != 8 || node2.len() != 4 {
                    return Err(Error::config(format!(
                        "joint model needs 8 node-1 and 4 node-2 masses, got {} and {}",
                        node1.len(),
                        node2.len()
                    )));
                }
                let all: Vec<&Prob> = node1.iter().chain(node2.iter()).collect();
                if let Some(exact) = all_exact(&all)? {
                    let (a, b) = exact.split_at(8);
                    ErasureModel::joint_exact(
                        a.to_vec().try_into().expect("eight masses"),
                        b.to_vec().try_into().expect("four masses"),
                    )
                } else {
                    let vals = |v: &[Prob]| v.iter().map(Prob::value).collect::<Result<Vec<f64>>>();
                    let n1 = vals(node1)?;
                    let n2 = vals(node2)?;
                    ErasureModel::joint(
                        n1.try_into().expect("eight masses"),
                        n2.try_into().expect("four masses"),
                    )
                }
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("model JSON: {e}")))
    }
}

fn all_exact(probs: &[&Prob]) -> Result<Option<Vec<BigRational>>> {
    let exact: Vec<_> = probs.iter().map(|p| p.exact()).collect();
    if exact.iter().all(Option::is_some) {
        exact
            .into_iter()
            .map(|e| e.expect("checked"))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    } else {
        Ok(None)
    }
}

impl From<&ErasureModel> for ModelDescription {
    fn from(model: &ErasureModel) -> Self {
        ModelDescription::Joint {
            node1: model.node1.iter().map(|&x| Prob::Number(x)).collect(),
            node2: model.node2.iter().map(|&x| Prob::Number(x)).collect(),
        }
    }
}
