//! Query-complexity benchmarks: minimal certifying query sets, the regret
//! bound of the adaptive search, the two-curve lower-bound construction and
//! synthetic quantile curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{ln_pow2_diff, log_sum_exp};
use crate::model::{ModelError, QuantileCurve};
use crate::oracle::{CurveBehavior, CurveOracle, OracleError};

/// Largest `n` for the exhaustive minimum search.
pub const MAX_EXHAUSTIVE_N: usize = 20;

const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("query set is malformed: {0}")]
    MalformedSet(String),
    #[error("kappa must be finite and > 1, got {0}")]
    InvalidKappa(f64),
    #[error("exhaustive search supports n <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Curve(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptMethod {
    GreedySegment,
    ExhaustiveGlobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub query_indices: Vec<usize>,
    pub opt_size: usize,
    pub kappa: f64,
    pub method: OptMethod,
    /// True when the size is the proven minimum under the global constraint.
    pub certified_global: bool,
    /// Whether `UB(B) <= kappa LB(B)` holds for the returned set.
    pub feasible: bool,
    /// Greedy only: the sweep's own set failed the global check and the full
    /// index set was returned instead.
    pub fell_back: bool,
}

fn check_set(curve: &QuantileCurve, set: &[usize]) -> Result<(), OptError> {
    let n = curve.n();
    if set.first() != Some(&0) || set.last() != Some(&n) {
        return Err(OptError::MalformedSet(format!("must start at 0 and end at {n}")));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OptError::MalformedSet("indices must be strictly increasing".into()));
    }
    if n == 0 && set.len() != 1 {
        return Err(OptError::MalformedSet("n = 0 admits only {0}".into()));
    }
    Ok(())
}

/// `(ln LB(B), ln UB(B))`: between consecutive points `p < q` of `B`, the
/// `2^q - 2^p` weights in the slice are bounded by `b_q` below and `b_p`
/// above; `b_0` is added to both.
pub fn segment_bounds(curve: &QuantileCurve, set: &[usize]) -> Result<(f64, f64), OptError> {
    check_set(curve, set)?;
    let b = curve.values();
    let mut lower = vec![b[0]];
    let mut upper = vec![b[0]];
    for w in set.windows(2) {
        let (p, q) = (w[0], w[1]);
        let width = ln_pow2_diff(p, q);
        lower.push(b[q] + width);
        upper.push(b[p] + width);
    }
    Ok((log_sum_exp(&lower), log_sum_exp(&upper)))
}

pub fn is_feasible(curve: &QuantileCurve, set: &[usize], kappa: f64) -> Result<bool, OptError> {
    let (lb, ub) = segment_bounds(curve, set)?;
    Ok(ub <= kappa.ln() + lb + FEASIBILITY_TOL)
}

pub fn compute_opt(curve: &QuantileCurve, kappa: f64, method: OptMethod) -> Result<OptResult, OptError> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(OptError::InvalidKappa(kappa));
    }
    match method {
        OptMethod::GreedySegment => greedy(curve, kappa),
        OptMethod::ExhaustiveGlobal => exhaustive(curve, kappa),
    }
}

/// Farthest-reach sweep under `b_i <= kappa b_r` (ties extend). When not even
/// `i + 1` is reachable, the sweep steps to `i + 1` anyway.
fn greedy(curve: &QuantileCurve, kappa: f64) -> Result<OptResult, OptError> {
    let n = curve.n();
    let b = curve.values();
    let ln_kappa = kappa.ln();
    let mut set = vec![0];
    let mut i = 0;
    while i < n {
        let mut r = i + 1;
        while r < n && b[i] <= ln_kappa + b[r + 1] {
            r += 1;
        }
        set.push(r);
        i = r;
    }
    let mut fell_back = false;
    let mut feasible = is_feasible(curve, &set, kappa)?;
    if !feasible {
        set = (0..=n).collect();
        feasible = is_feasible(curve, &set, kappa)?;
        fell_back = true;
    }
    Ok(OptResult {
        opt_size: set.len(),
        query_indices: set,
        kappa,
        method: OptMethod::GreedySegment,
        certified_global: false,
        feasible,
        fell_back,
    })
}

/// Iterative deepening over the number of interior points.
fn exhaustive(curve: &QuantileCurve, kappa: f64) -> Result<OptResult, OptError> {
    let n = curve.n();
    if n > MAX_EXHAUSTIVE_N {
        return Err(OptError::TooLarge {
            n,
            limit: MAX_EXHAUSTIVE_N,
        });
    }
    let done = |set: Vec<usize>, feasible: bool| OptResult {
        opt_size: set.len(),
        query_indices: set,
        kappa,
        method: OptMethod::ExhaustiveGlobal,
        certified_global: feasible,
        feasible,
        fell_back: false,
    };
    if n == 0 {
        return Ok(done(vec![0], true));
    }
    let interior = n - 1;
    for k in 0..=interior {
        let mut pick: Vec<usize> = (1..=k).collect();
        loop {
            let mut set = Vec::with_capacity(k + 2);
            set.push(0);
            set.extend_from_slice(&pick);
            set.push(n);
            if is_feasible(curve, &set, kappa)? {
                return Ok(done(set, true));
            }
            if !next_combination(&mut pick, interior) {
                break;
            }
        }
    }
    Ok(done((0..=n).collect(), false))
}

/// Advances an increasing selection from `1..=top` in lexicographic order.
fn next_combination(pick: &mut [usize], top: usize) -> bool {
    let k = pick.len();
    for pos in (0..k).rev() {
        if pick[pos] < top - (k - 1 - pos) {
            pick[pos] += 1;
            for j in pos + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `ceil((opt - 1)(2 + log2 n)) + 1`.
pub fn regret_bound(opt_size: usize, n: usize) -> u64 {
    let opt = opt_size.max(1) as f64;
    let log_n = (n.max(1) as f64).log2();
    ((opt - 1.0) * (2.0 + log_n)).ceil() as u64 + 1
}

/// One step of the two-function construction: `count` elements at weights
/// `w1` and `w2` (all natural logs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSegment {
    pub log_count: f64,
    pub log_w1: f64,
    pub log_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialPair {
    pub n: usize,
    /// `n` rounded up to a multiple of `ceil(kappa^2)`.
    pub padded_n: usize,
    pub kappa: f64,
    /// The top element (weight 1 in both) followed by one entry per segment.
    pub segments: Vec<AdversarialSegment>,
    /// `(ln rank, ln value)` at segment boundaries; both functions agree here.
    pub query_positions: Vec<(f64, f64)>,
    /// Sums over the segments.
    pub w1_sum: f64,
    pub w2_sum: f64,
    /// `1 + s(1 - 1/K)` and `1 + s(K - 1)` with `K = kappa^2`, `s` segments.
    pub w1_closed_form: f64,
    pub w2_closed_form: f64,
}

impl AdversarialPair {
    pub fn ratio(&self) -> f64 {
        self.w2_sum / self.w1_sum
    }
}

/// Two weight functions that agree at every boundary rank `K^i`
/// (`K = kappa^2`) but differ by close to `K` in total. Segment `i` holds
/// `K^{i+1} - K^i` elements, valued `1/K^{i+1}` under the first function
/// and `1/K^i` under the second.
///
/// The boundary element closing segment `i` is counted inside the segment,
/// so under the second function it carries `1/K^i` rather than the shared
/// boundary value `1/K^{i+1}`; the totals follow the per-segment counts.
pub fn gen_adversarial_pair(n: usize, kappa: f64) -> Result<AdversarialPair, OptError> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(OptError::InvalidKappa(kappa));
    }
    let big_k = kappa * kappa;
    let step = big_k.ceil() as usize;
    let padded_n = n.div_ceil(step) * step;
    let s = padded_n / step;
    let ln_k = big_k.ln();
    let mut segments = vec![AdversarialSegment {
        log_count: 0.0,
        log_w1: 0.0,
        log_w2: 0.0,
    }];
    let mut query_positions = vec![(0.0, 0.0)];
    for i in 0..s {
        let lo = i as f64 * ln_k;
        let hi = (i + 1) as f64 * ln_k;
        // ln(K^{i+1} - K^i)
        let log_count = if big_k == 1.0 {
            f64::NEG_INFINITY
        } else {
            lo + (big_k - 1.0).ln()
        };
        segments.push(AdversarialSegment {
            log_count,
            log_w1: -hi,
            log_w2: -lo,
        });
        query_positions.push((hi, -hi));
    }
    let w1_terms: Vec<f64> = segments.iter().map(|g| g.log_count + g.log_w1).collect();
    let w2_terms: Vec<f64> = segments.iter().map(|g| g.log_count + g.log_w2).collect();
    let s_f = s as f64;
    Ok(AdversarialPair {
        n,
        padded_n,
        kappa,
        segments,
        query_positions,
        w1_sum: log_sum_exp(&w1_terms).exp(),
        w2_sum: log_sum_exp(&w2_terms).exp(),
        w1_closed_form: 1.0 + s_f * (1.0 - 1.0 / big_k),
        w2_closed_form: 1.0 + s_f * (big_k - 1.0),
    })
}

/// Step curve: `log_values[j]` from `breakpoints[j-1]` (inclusive) onwards.
pub fn gen_kvalued_curve(n: usize, log_values: &[f64], breakpoints: &[usize]) -> Result<QuantileCurve, OptError> {
    if log_values.is_empty() || breakpoints.len() + 1 != log_values.len() {
        return Err(OptError::MalformedSet(format!(
            "{} values need {} breakpoints, got {}",
            log_values.len(),
            log_values.len().saturating_sub(1),
            breakpoints.len()
        )));
    }
    if log_values.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less)) {
        return Err(OptError::MalformedSet("values must be strictly decreasing".into()));
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints.iter().any(|&p| p == 0 || p > n) {
        return Err(OptError::MalformedSet(format!(
            "breakpoints must be strictly increasing within 1..={n}"
        )));
    }
    let values = (0..=n)
        .map(|i| log_values[breakpoints.partition_point(|&p| p <= i)])
        .collect();
    Ok(QuantileCurve::new(values)?)
}

/// `b_i = ratio^{-i}`.
pub fn gen_geometric_curve(n: usize, ratio: f64) -> Result<QuantileCurve, OptError> {
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(OptError::MalformedSet(format!("ratio must be finite and >= 1, got {ratio}")));
    }
    let ln_r = ratio.ln();
    Ok(QuantileCurve::new((0..=n).map(|i| -(i as f64) * ln_r).collect())?)
}

/// Random curve alternating plateaus, geometric stretches and single drops.
pub fn gen_mixed_curve(n: usize, seed: u64) -> QuantileCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n + 1);
    let mut current = 0.0f64;
    values.push(current);
    while values.len() <= n {
        let remaining = n + 1 - values.len();
        let len = rng.gen_range(1..=remaining.min((n / 4).max(2)));
        match rng.gen_range(0..3) {
            0 => values.extend(std::iter::repeat_n(current, len)),
            1 => {
                let rate = rng.gen_range(0.02..1.5);
                for _ in 0..len {
                    current -= rate;
                    values.push(current);
                }
            }
            _ => {
                current -= rng.gen_range(0.5..8.0);
                values.extend(std::iter::repeat_n(current, len));
            }
        }
    }
    QuantileCurve::new(values).expect("generated curve is non-increasing")
}

/// Wraps a curve as an oracle so schedules can run without a model.
pub fn synthetic_oracle(curve: QuantileCurve, behavior: CurveBehavior) -> Result<CurveOracle, OptError> {
    Ok(CurveOracle::new(curve, behavior)?)
}
