//! Fixed and adaptive estimation schedules.
//!
//! Both schedules fill a vector of quantile estimates `b~_0..b~_n` and report
//! `W~ = b~_0 + sum_{i<n} 2^i b~_i` in the log domain.
//!
//! The adaptive schedule bisects `[l, r]`: an interval of length one queries
//! both ends; otherwise, when the upper bound at `l` is within a factor `beta`
//! of the lower bound at `r`, every index in `l..r` takes the lower bound at
//! `r`, and the interval is split at the midpoint if not.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{ln_pow2_diff, log_sum_exp};
use crate::model::{QuantileCurve, WeightedModel};
use crate::oracle::{
    ConstrainedMax, LedgerSnapshot, ModelOracle, OracleConfig, OracleError, OracleProfile, QuantileOracle,
    QueryLedger, QueryRole,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("beta must be finite and > 1, got {0}")]
    InvalidBeta(f64),
    #[error("search interval [{l}, {r}] is invalid for n = {n}")]
    InvalidInterval { l: usize, r: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    Wish,
    AdaWish { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Guarantee {
    /// `W / kappa <= W~ <= kappa W` with probability at least `1 - delta`.
    Proven { kappa: f64, delta: f64 },
    Heuristic,
}

impl Guarantee {
    pub fn is_proven(&self) -> bool {
        matches!(self, Guarantee::Proven { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub log_w_estimate: f64,
    pub quantile_estimates: Vec<f64>,
    pub ledger: LedgerSnapshot,
    pub guarantee: Guarantee,
    pub schedule: Schedule,
}

impl EstimateResult {
    pub fn distinct_queries(&self) -> u64 {
        self.ledger.distinct_queries
    }

    pub fn queried_indices(&self) -> BTreeSet<usize> {
        self.ledger.queried_indices()
    }
}

/// Lower and upper sums `b_0 + sum_{i=1}^n b_i 2^{i-1}` and
/// `b_0 + sum_{i=1}^n b_{i-1} 2^{i-1}`, as natural logs.
pub fn slice_bounds(curve: &QuantileCurve) -> (f64, f64) {
    let b = curve.values();
    let n = curve.n();
    let mut lower = vec![b[0]];
    let mut upper = vec![b[0]];
    for i in 1..=n {
        let width = ln_pow2_diff(i - 1, i);
        lower.push(b[i] + width);
        upper.push(b[i - 1] + width);
    }
    (log_sum_exp(&lower), log_sum_exp(&upper))
}

/// Smallest and largest total weight of any function whose quantiles are
/// exactly `curve`, as natural logs. The slice between ranks `2^{i-1}` and
/// `2^i` ends in an element of weight `b_i`; its other `2^{i-1} - 1` elements
/// lie between `b_i` and `b_{i-1}`.
pub fn implied_weight_range(curve: &QuantileCurve) -> (f64, f64) {
    let b = curve.values();
    let mut upper = vec![b[0]];
    for i in 1..=curve.n() {
        upper.push(b[i]);
        if i >= 2 {
            upper.push(b[i - 1] + ln_pow2_diff(0, i - 1));
        }
    }
    (slice_bounds(curve).0, log_sum_exp(&upper))
}

/// `ln(b_0 + sum_{i=0}^{n-1} 2^i b_i)` from log-domain estimates.
pub fn assemble_estimate(estimates: &[f64]) -> f64 {
    let n = estimates.len() - 1;
    let mut terms = Vec::with_capacity(n + 1);
    terms.push(estimates[0]);
    terms.extend((0..n).map(|i| estimates[i] + i as f64 * std::f64::consts::LN_2));
    log_sum_exp(&terms)
}

fn guarantee_for(profile: &OracleProfile, schedule: Schedule, incumbent_only: u64) -> Guarantee {
    if incumbent_only > 0 {
        return Guarantee::Heuristic;
    }
    let beta = match schedule {
        Schedule::Wish => 1.0,
        Schedule::AdaWish { beta } => beta,
    };
    match *profile {
        OracleProfile::Exact => Guarantee::Proven {
            kappa: 2.0 * beta,
            delta: 0.0,
        },
        OracleProfile::PointWise { gamma } => Guarantee::Proven {
            kappa: match schedule {
                Schedule::Wish => 2.0 * gamma,
                Schedule::AdaWish { beta } => 2.0 * beta * gamma * gamma,
            },
            delta: 0.0,
        },
        OracleProfile::Neighbor {
            c,
            repetitions,
            required_repetitions: Some(required),
            delta,
        } if repetitions >= required => Guarantee::Proven {
            kappa: 2f64.powi(2 * c as i32) * beta,
            delta,
        },
        OracleProfile::Neighbor { .. } => Guarantee::Heuristic,
        OracleProfile::AdversarialNeighbor { c } => Guarantee::Proven {
            kappa: 2f64.powi(2 * c as i32) * beta,
            delta: 0.0,
        },
    }
}

fn finish(
    oracle: &dyn QuantileOracle,
    ledger: QueryLedger,
    estimates: Vec<f64>,
    schedule: Schedule,
) -> EstimateResult {
    let ledger = ledger.snapshot();
    EstimateResult {
        log_w_estimate: assemble_estimate(&estimates),
        quantile_estimates: estimates,
        guarantee: guarantee_for(&oracle.profile(), schedule, ledger.incumbent_only),
        ledger,
        schedule,
    }
}

/// Queries every index `0..=n`.
pub fn wish_estimate(oracle: &dyn QuantileOracle) -> Result<EstimateResult, EstimatorError> {
    let ledger = QueryLedger::new();
    let estimates = (0..=oracle.n())
        .into_par_iter()
        .map(|i| oracle.query(QueryRole::Approx, i, &ledger, 0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(finish(oracle, ledger, estimates, Schedule::Wish))
}

fn check_beta(beta: f64) -> Result<f64, EstimatorError> {
    if beta > 1.0 && beta.is_finite() {
        Ok(beta.ln())
    } else {
        Err(EstimatorError::InvalidBeta(beta))
    }
}

/// Adaptive schedule. Intervals at the same bisection depth are processed as
/// one batch: their distinct base indices are fetched in parallel, then each
/// interval is decided and split.
pub fn adawish_estimate(oracle: &dyn QuantileOracle, beta: f64) -> Result<EstimateResult, EstimatorError> {
    let ln_beta = check_beta(beta)?;
    let n = oracle.n();
    let ledger = QueryLedger::new();
    let mut estimates = vec![f64::NAN; n + 1];
    if n == 0 {
        estimates[0] = oracle.query(QueryRole::Approx, 0, &ledger, 0)?;
        return Ok(finish(oracle, ledger, estimates, Schedule::AdaWish { beta }));
    }
    let mut frontier = vec![(0usize, n)];
    let mut depth = 0;
    while !frontier.is_empty() {
        let requests = |&(l, r): &(usize, usize)| {
            if r == l + 1 {
                [(QueryRole::Approx, l), (QueryRole::Approx, r)]
            } else {
                [(QueryRole::Upper, l), (QueryRole::Lower, r)]
            }
        };
        let pending: BTreeSet<usize> = frontier
            .iter()
            .flat_map(requests)
            .map(|(role, i)| oracle.base_index(role, i))
            .filter(|&j| ledger.memo_get(j).is_none())
            .collect();
        pending
            .into_par_iter()
            .try_for_each(|j| ledger.fetch(j, depth, |j| oracle.raw_query(j)).map(drop))?;

        let mut next = Vec::new();
        for &(l, r) in &frontier {
            let [(ra, ia), (rb, ib)] = requests(&(l, r));
            let a = oracle.query(ra, ia, &ledger, depth)?;
            let b = oracle.query(rb, ib, &ledger, depth)?;
            if r == l + 1 {
                estimates[l] = a;
                if r == n {
                    estimates[r] = b;
                }
            } else if a <= ln_beta + b {
                estimates[l..r].fill(b);
                if r == n {
                    estimates[r] = b;
                }
            } else {
                let m = (l + r) / 2;
                next.push((l, m));
                next.push((m, r));
            }
        }
        frontier = next;
        depth += 1;
    }
    Ok(finish(oracle, ledger, estimates, Schedule::AdaWish { beta }))
}

/// Recursive form of the adaptive interval search, writing into `estimates`.
pub fn search(
    l: usize,
    r: usize,
    beta: f64,
    oracle: &dyn QuantileOracle,
    ledger: &QueryLedger,
    estimates: &mut [f64],
) -> Result<(), EstimatorError> {
    let ln_beta = check_beta(beta)?;
    let n = oracle.n();
    if l >= r || r > n || estimates.len() != n + 1 {
        return Err(EstimatorError::InvalidInterval { l, r, n });
    }
    search_at(l, r, ln_beta, oracle, ledger, estimates, 0)
}

fn search_at(
    l: usize,
    r: usize,
    ln_beta: f64,
    oracle: &dyn QuantileOracle,
    ledger: &QueryLedger,
    estimates: &mut [f64],
    depth: usize,
) -> Result<(), EstimatorError> {
    if r == l + 1 {
        estimates[l] = oracle.query(QueryRole::Approx, l, ledger, depth)?;
        estimates[r] = oracle.query(QueryRole::Approx, r, ledger, depth)?;
        return Ok(());
    }
    let upper = oracle.query(QueryRole::Upper, l, ledger, depth)?;
    let lower = oracle.query(QueryRole::Lower, r, ledger, depth)?;
    if upper <= ln_beta + lower {
        estimates[l..=r].fill(lower);
        return Ok(());
    }
    let m = (l + r) / 2;
    search_at(l, m, ln_beta, oracle, ledger, estimates, depth + 1)?;
    search_at(m, r, ln_beta, oracle, ledger, estimates, depth + 1)
}

/// Adaptive schedule driven by the sequential recursion.
pub fn adawish_estimate_recursive(oracle: &dyn QuantileOracle, beta: f64) -> Result<EstimateResult, EstimatorError> {
    check_beta(beta)?;
    let n = oracle.n();
    let ledger = QueryLedger::new();
    let mut estimates = vec![f64::NAN; n + 1];
    if n == 0 {
        estimates[0] = oracle.query(QueryRole::Approx, 0, &ledger, 0)?;
    } else {
        search(0, n, beta, oracle, &ledger, &mut estimates)?;
    }
    Ok(finish(oracle, ledger, estimates, Schedule::AdaWish { beta }))
}

/// Builds a model oracle and runs the chosen schedule on it.
pub fn estimate_model(
    model: &WeightedModel,
    config: &OracleConfig,
    solver: impl ConstrainedMax,
    schedule: Schedule,
) -> Result<EstimateResult, EstimatorError> {
    let oracle = ModelOracle::new(model, config.clone(), solver)?;
    match schedule {
        Schedule::Wish => wish_estimate(&oracle),
        Schedule::AdaWish { beta } => adawish_estimate(&oracle, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_clique_ising, gen_grid_ising, gen_random_factors};
    use crate::oracle::{adversarial_neighbor_stub, CurveOracle, MapSolver, StubPolicy};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn linear_sums(b: &[f64]) -> (f64, f64) {
        let n = b.len() - 1;
        let lb = b[0] + (1..=n).map(|i| b[i] * 2f64.powi(i as i32 - 1)).sum::<f64>();
        let ub = b[0] + (1..=n).map(|i| b[i - 1] * 2f64.powi(i as i32 - 1)).sum::<f64>();
        (lb, ub)
    }

    #[test]
    fn slice_bounds_hand_arithmetic() {
        let (lb, ub) = slice_bounds(&QuantileCurve::from_linear(&[8.0, 4.0, 1.0]).unwrap());
        assert!((lb.exp() - 14.0).abs() < 1e-12);
        assert!((ub.exp() - 24.0).abs() < 1e-12);
        let (lb, ub) = slice_bounds(&QuantileCurve::flat(3, 0.0));
        assert!((lb.exp() - 8.0).abs() < 1e-12 && (ub.exp() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn slice_bounds_sandwich_grid() {
        let m = gen_grid_ising(3, 3, 1.0, 2).unwrap();
        let (lb, ub) = slice_bounds(&m.exact_quantiles().unwrap());
        let w = m.exact_partition().unwrap();
        assert!(lb <= w + 1e-9 && w <= ub + 1e-9 && ub <= lb + LN_2 + 1e-9);
    }

    #[test]
    fn implied_range_brackets_realizations() {
        let curve = QuantileCurve::from_linear(&[8.0, 4.0, 2.0, 1.0]).unwrap();
        let (lo, hi) = implied_weight_range(&curve);
        // minimal: 8 | 4 | 2 2 | 1 1 1 1 ; maximal: 8 | 4 | 4 2 | 2 2 2 1
        assert!((lo.exp() - 20.0).abs() < 1e-12);
        assert!((hi.exp() - 25.0).abs() < 1e-12);
        let (lb, ub) = slice_bounds(&curve);
        assert!(lb == lo && hi <= ub);
        for seed in 0..5 {
            let m = gen_random_factors(9, 12, 3, seed).unwrap();
            let (lo, hi) = implied_weight_range(&m.exact_quantiles().unwrap());
            let w = m.exact_partition().unwrap();
            assert!(lo <= w + 1e-9 && w <= hi + 1e-9);
        }
    }

    #[test]
    fn wish_constant_model() {
        let m = WeightedModel::uniform(5);
        let r = estimate_model(&m, &OracleConfig::exact(), MapSolver::default(), Schedule::Wish).unwrap();
        assert!((r.log_w_estimate - 5.0 * LN_2).abs() < 1e-12);
        assert_eq!(r.distinct_queries(), 6);
        assert_eq!(r.guarantee, Guarantee::Proven { kappa: 2.0, delta: 0.0 });
    }

    #[test]
    fn wish_exact_equals_upper_sum() {
        let m = gen_clique_ising(10, 0.1, 7).unwrap();
        let curve = m.exact_quantiles().unwrap();
        let r = wish_estimate(&CurveOracle::exact(curve.clone())).unwrap();
        let (_, ub) = slice_bounds(&curve);
        assert!((r.log_w_estimate - ub).abs() < 1e-12);
        let w = m.exact_partition().unwrap();
        assert!((r.log_w_estimate - w).abs() <= LN_2 + 1e-9);
    }

    #[test]
    fn adawish_flat_stops_at_root() {
        let m = WeightedModel::uniform(16);
        let r = estimate_model(&m, &OracleConfig::exact(), MapSolver::default(), Schedule::AdaWish { beta: 1.01 })
            .unwrap();
        assert_eq!(r.distinct_queries(), 2);
        assert_eq!(r.queried_indices().into_iter().collect::<Vec<_>>(), vec![0, 16]);
        assert!((r.log_w_estimate - 16.0 * LN_2).abs() < 1e-9);
    }

    #[test]
    fn interval_of_one_queries_both_ends() {
        let o = CurveOracle::exact(QuantileCurve::from_linear(&[4.0, 1.0]).unwrap());
        let ledger = QueryLedger::new();
        let mut est = vec![f64::NAN; 2];
        search(0, 1, 2.0, &o, &ledger, &mut est).unwrap();
        assert_eq!(ledger.distinct_queries(), 2);
        assert!((est[0] - 4f64.ln()).abs() < 1e-12 && est[1] == 0.0);
    }

    #[test]
    fn geometric_halving_queries_everything() {
        let lin: Vec<f64> = (0..=8).map(|i| 2f64.powi(-i)).collect();
        let o = CurveOracle::exact(QuantileCurve::from_linear(&lin).unwrap());
        let r = adawish_estimate(&o, 1.5).unwrap();
        assert_eq!(r.distinct_queries(), 9);
        let w = wish_estimate(&o).unwrap();
        assert_eq!(r.queried_indices(), w.queried_indices());
        assert_eq!(r.quantile_estimates, w.quantile_estimates);
    }

    #[test]
    fn adawish_clique_within_two_beta() {
        let m = gen_clique_ising(10, 0.1, 7).unwrap();
        let w = m.exact_partition().unwrap();
        let r = estimate_model(&m, &OracleConfig::exact(), MapSolver::default(), Schedule::AdaWish { beta: 1.1 })
            .unwrap();
        assert!((r.log_w_estimate - w).abs() <= (2.2f64).ln() + 1e-9);
        assert_eq!(r.guarantee, Guarantee::Proven { kappa: 2.2, delta: 0.0 });
    }

    #[test]
    fn rejects_bad_beta() {
        let o = CurveOracle::exact(QuantileCurve::flat(4, 0.0));
        assert!(matches!(adawish_estimate(&o, 1.0), Err(EstimatorError::InvalidBeta(_))));
        assert!(matches!(adawish_estimate(&o, f64::NAN), Err(EstimatorError::InvalidBeta(_))));
    }

    #[test]
    fn zero_tail_stops() {
        let o = CurveOracle::exact(QuantileCurve::new(vec![0.0, -1.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap());
        let r = adawish_estimate(&o, 2.0).unwrap();
        let (lb, ub) = slice_bounds(o.curve());
        assert!(r.log_w_estimate >= lb - (4f64).ln() && r.log_w_estimate <= ub + (4f64).ln());
        assert_eq!(r.quantile_estimates[3], f64::NEG_INFINITY);
    }

    #[test]
    fn incumbent_runs_are_heuristic() {
        let m = gen_clique_ising(12, 0.1, 3).unwrap();
        let cfg = OracleConfig::neighbor(5, 1).with_repetitions(2);
        let solver = MapSolver::branch_and_bound().with_node_limit(2);
        let r = estimate_model(&m, &cfg, solver, Schedule::Wish).unwrap();
        assert!(r.ledger.incumbent_only > 0);
        assert_eq!(r.guarantee, Guarantee::Heuristic);
    }

    #[test]
    fn neighbor_guarantee_needs_enough_repetitions() {
        let m = gen_grid_ising(2, 3, 1.0, 1).unwrap();
        let full = OracleConfig::neighbor(5, 1);
        let r = estimate_model(&m, &full, MapSolver::default(), Schedule::AdaWish { beta: 2.0 }).unwrap();
        assert_eq!(r.guarantee, Guarantee::Proven { kappa: 2048.0, delta: 0.01 });
        let short = OracleConfig::neighbor(5, 1).with_repetitions(3);
        let r = estimate_model(&m, &short, MapSolver::default(), Schedule::AdaWish { beta: 2.0 }).unwrap();
        assert_eq!(r.guarantee, Guarantee::Heuristic);
    }

    #[test]
    fn stub_guarantee() {
        let o = adversarial_neighbor_stub(QuantileCurve::flat(6, 0.0), 2, StubPolicy::AlwaysLower);
        let r = adawish_estimate(&o, 2.0).unwrap();
        assert_eq!(r.guarantee, Guarantee::Proven { kappa: 32.0, delta: 0.0 });
    }

    #[test]
    fn exact_fill_is_monotone() {
        for seed in 0..20 {
            let m = gen_random_factors(10, 14, 3, seed).unwrap();
            let o = CurveOracle::exact(m.exact_quantiles().unwrap());
            let r = adawish_estimate(&o, 2.0).unwrap();
            assert!(r.quantile_estimates.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    fn arb_curve() -> impl Strategy<Value = QuantileCurve> {
        (1usize..40, prop::collection::vec(0.0f64..3.0, 40), prop::collection::vec(0u8..4, 40)).prop_map(
            |(n, steps, kinds)| {
                let mut v = vec![0.0];
                for i in 0..n {
                    // mix of plateaus and drops
                    let step = if kinds[i] == 0 { 0.0 } else { steps[i] };
                    v.push(v[i] - step);
                }
                QuantileCurve::new(v).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn parallel_and_recursive_routes_agree(curve in arb_curve(), beta in 1.05f64..50.0) {
            for oracle in [
                CurveOracle::exact(curve.clone()),
                adversarial_neighbor_stub(curve.clone(), 2, StubPolicy::SeededChoice(5)),
            ] {
                let a = adawish_estimate(&oracle, beta).unwrap();
                let b = adawish_estimate_recursive(&oracle, beta).unwrap();
                prop_assert_eq!(&a.quantile_estimates, &b.quantile_estimates);
                prop_assert_eq!(&a.ledger.memo, &b.ledger.memo);
                prop_assert_eq!(a.distinct_queries(), b.distinct_queries());
                prop_assert_eq!(a.log_w_estimate.to_bits(), b.log_w_estimate.to_bits());
            }
        }

        #[test]
        fn slice_bounds_match_linear_arithmetic(lin in prop::collection::vec(0.01f64..100.0, 1..20)) {
            let mut lin = lin;
            lin.sort_by(|a, b| b.total_cmp(a));
            let (lb, ub) = slice_bounds(&QuantileCurve::from_linear(&lin).unwrap());
            let (elb, eub) = linear_sums(&lin);
            prop_assert!((lb - elb.ln()).abs() < 1e-9);
            prop_assert!((ub - eub.ln()).abs() < 1e-9);
            prop_assert!(lb <= ub && ub <= lb + LN_2 + 1e-12);
        }

        #[test]
        fn adawish_exact_within_two_beta(curve in arb_curve(), beta in 1.05f64..20.0) {
            let o = CurveOracle::exact(curve.clone());
            let r = adawish_estimate(&o, beta).unwrap();
            let (lb, ub) = slice_bounds(&curve);
            // any W consistent with the curve lies in [lb, ub]
            let k = (2.0 * beta).ln() + 1e-9;
            prop_assert!(r.log_w_estimate <= lb + k && r.log_w_estimate >= ub - k);
            prop_assert!(r.distinct_queries() as usize <= curve.n() + 1);
        }
    }
}
