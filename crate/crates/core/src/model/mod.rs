//! Weighted binary models and exact ground truth at desk scale.
//!
//! A [`WeightedModel`] is a product of non-negative factors over `n` binary
//! variables, stored in the log domain. Variable `v` of an assignment mask is
//! bit `v` (least significant bit first). Factor tables follow the UAI order:
//! the last variable of the scope varies fastest.

mod generators;
mod uai;

pub use generators::{
    clique_ising_couplings, gen_clique_ising, gen_grid_ising, gen_random_factors, grid_ising_couplings,
    CliqueCouplings, GridCouplings, GridIsingParams, DEFAULT_CLIQUE_COUPLING, DEFAULT_GRID_COUPLING,
};
pub use uai::{parse_uai, serialize_uai};

use rayon::prelude::*;
use thiserror::Error;

use crate::logspace::{log_sum_exp, log_sum_exp_tree};

/// Largest model that exact enumeration will touch.
pub const MAX_ENUMERABLE_VARS: usize = 24;

const BLOCK_BITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("assignment has {found} variables, model has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factor {factor}: {reason}")]
    InvalidScope { factor: usize, reason: String },
    #[error("factor {factor}: table has {found} entries, scope needs {expected}")]
    TableSize { factor: usize, expected: usize, found: usize },
    #[error("factor {factor}: entry {entry} is not a valid log-weight")]
    InvalidWeight { factor: usize, entry: usize },
    #[error("model has {n} variables; exact enumeration is limited to {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: variable {variable} has cardinality {cardinality}; only binary variables are supported")]
    UnsupportedCardinality {
        line: usize,
        variable: usize,
        cardinality: u64,
    },
    #[error("quantile curve: {0}")]
    InvalidCurve(String),
}

/// A factor over an ordered scope with `2^|scope|` log-weight entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, table: Vec<f64>) -> Self {
        Self { scope, table }
    }

    /// Pairwise factor from four log-weights indexed by `(x_i, x_j)` in the
    /// order 00, 01, 10, 11.
    pub fn pairwise(i: usize, j: usize, table: [f64; 4]) -> Self {
        Self::new(vec![i, j], table.to_vec())
    }

    pub fn unary(i: usize, off: f64, on: f64) -> Self {
        Self::new(vec![i], vec![off, on])
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    fn index_of_mask(&self, mask: u64) -> usize {
        self.scope
            .iter()
            .fold(0usize, |acc, &v| (acc << 1) | ((mask >> v) & 1) as usize)
    }

    #[inline]
    pub(crate) fn index_of(&self, assignment: &[bool]) -> usize {
        self.scope
            .iter()
            .fold(0usize, |acc, &v| (acc << 1) | assignment[v] as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedModel {
    name: String,
    n: usize,
    factors: Vec<Factor>,
}

impl WeightedModel {
    pub fn new(name: impl Into<String>, n: usize, factors: Vec<Factor>) -> Result<Self, ModelError> {
        for (fi, f) in factors.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for &v in &f.scope {
                if v >= n {
                    return Err(ModelError::InvalidScope {
                        factor: fi,
                        reason: format!("variable {v} out of range for {n} variables"),
                    });
                }
                if !seen.insert(v) {
                    return Err(ModelError::InvalidScope {
                        factor: fi,
                        reason: format!("variable {v} repeated"),
                    });
                }
            }
            if f.scope.len() >= usize::BITS as usize {
                return Err(ModelError::InvalidScope {
                    factor: fi,
                    reason: "scope too large".into(),
                });
            }
            let expected = 1usize << f.scope.len();
            if f.table.len() != expected {
                return Err(ModelError::TableSize {
                    factor: fi,
                    expected,
                    found: f.table.len(),
                });
            }
            if let Some(entry) = f.table.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(ModelError::InvalidWeight { factor: fi, entry });
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            factors,
        })
    }

    /// Model with no factors: `w(σ) = 1` everywhere.
    pub fn uniform(n: usize) -> Self {
        Self {
            name: format!("uniform-{n}"),
            n,
            factors: Vec::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// `ln w(σ)`: sum over factors of the entry selected by the scope bits.
    pub fn log_weight(&self, assignment: &[bool]) -> Result<f64, ModelError> {
        if assignment.len() != self.n {
            return Err(ModelError::DimensionMismatch {
                expected: self.n,
                found: assignment.len(),
            });
        }
        Ok(self.log_weight_unchecked(assignment))
    }

    #[inline]
    pub(crate) fn log_weight_unchecked(&self, assignment: &[bool]) -> f64 {
        self.factors
            .iter()
            .map(|f| f.table[f.index_of(assignment)])
            .sum()
    }

    /// `ln w(σ)` for an assignment packed into the low `n` bits of `mask`.
    pub fn log_weight_mask(&self, mask: u64) -> f64 {
        debug_assert!(self.n <= 64);
        self.factors
            .iter()
            .map(|f| f.table[f.index_of_mask(mask)])
            .sum()
    }

    fn check_enumerable(&self) -> Result<(), ModelError> {
        if self.n > MAX_ENUMERABLE_VARS {
            return Err(ModelError::TooLarge {
                n: self.n,
                limit: MAX_ENUMERABLE_VARS,
            });
        }
        Ok(())
    }

    /// Log-weights of all `2^n` assignments, indexed by mask.
    pub fn all_log_weights(&self) -> Result<Vec<f64>, ModelError> {
        self.check_enumerable()?;
        Ok((0..1u64 << self.n)
            .into_par_iter()
            .map(|m| self.log_weight_mask(m))
            .collect())
    }

    /// Exact `ln W` by enumeration. Blocks of `2^12` assignments are summed
    /// independently and combined by a fixed pairwise tree, so the result does
    /// not depend on thread scheduling.
    pub fn exact_partition(&self) -> Result<f64, ModelError> {
        self.check_enumerable()?;
        let total = 1u64 << self.n;
        let block = 1u64 << BLOCK_BITS.min(self.n);
        let partials: Vec<f64> = (0..total / block)
            .into_par_iter()
            .map(|b| {
                let ws: Vec<f64> = (b * block..(b + 1) * block)
                    .map(|m| self.log_weight_mask(m))
                    .collect();
                log_sum_exp(&ws)
            })
            .collect();
        Ok(log_sum_exp_tree(partials))
    }

    /// The exact quantile curve: `b_i` is the `2^i`-th largest weight
    /// (1-based rank), for `i = 0..=n`.
    pub fn exact_quantiles(&self) -> Result<QuantileCurve, ModelError> {
        let mut ws = self.all_log_weights()?;
        ws.par_sort_unstable_by(|a, b| b.total_cmp(a));
        let values = (0..=self.n).map(|i| ws[(1usize << i) - 1]).collect();
        QuantileCurve::new(values)
    }
}

/// A non-increasing sequence `b_0 >= b_1 >= ... >= b_n` of log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    values: Vec<f64>,
}

impl QuantileCurve {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidCurve("curve needs at least b_0".into()));
        }
        if let Some(i) = values.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(ModelError::InvalidCurve(format!("b_{i} is not a valid log-weight")));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(ModelError::InvalidCurve(format!("b_{} > b_{i}", i + 1)));
        }
        Ok(Self { values })
    }

    /// Builds a curve from linear-domain weights.
    pub fn from_linear(weights: &[f64]) -> Result<Self, ModelError> {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(ModelError::InvalidCurve("negative weight".into()));
        }
        Self::new(weights.iter().map(|w| w.ln()).collect())
    }

    /// Constant curve `b_i = exp(log_value)` over `0..=n`.
    pub fn flat(n: usize, log_value: f64) -> Self {
        Self::new(vec![log_value; n + 1]).expect("flat curve is valid")
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(mask: u64, n: usize) -> Vec<bool> {
        (0..n).map(|i| (mask >> i) & 1 == 1).collect()
    }

    #[test]
    fn empty_model_weighs_one() {
        let m = WeightedModel::uniform(5);
        for mask in 0..32 {
            assert_eq!(m.log_weight(&bits(mask, 5)).unwrap(), 0.0);
        }
        assert!((m.exact_partition().unwrap() - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn wrong_assignment_length() {
        let m = WeightedModel::uniform(3);
        assert_eq!(
            m.log_weight(&[true, false]),
            Err(ModelError::DimensionMismatch { expected: 3, found: 2 })
        );
    }

    #[test]
    fn single_variable_partition() {
        let m = WeightedModel::new("one", 1, vec![Factor::unary(0, 1f64.ln(), 3f64.ln())]).unwrap();
        assert!((m.exact_partition().unwrap() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn random_model_matches_reference_evaluator() {
        let m = gen_random_factors(3, 4, 3, 9).unwrap();
        for mask in 0..8u64 {
            let sigma = bits(mask, 3);
            // direct table lookup, first scope variable most significant
            let mut reference = 0.0;
            for f in m.factors() {
                let mut idx = 0;
                for &v in f.scope() {
                    idx = idx * 2 + usize::from(sigma[v]);
                }
                reference += f.table()[idx];
            }
            assert_eq!(m.log_weight(&sigma).unwrap(), reference);
            assert_eq!(m.log_weight_mask(mask), reference);
        }
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(matches!(
            WeightedModel::new("x", 2, vec![Factor::new(vec![0, 2], vec![0.0; 4])]),
            Err(ModelError::InvalidScope { .. })
        ));
        assert!(matches!(
            WeightedModel::new("x", 2, vec![Factor::new(vec![1, 1], vec![0.0; 4])]),
            Err(ModelError::InvalidScope { .. })
        ));
        assert!(matches!(
            WeightedModel::new("x", 2, vec![Factor::new(vec![0], vec![0.0; 4])]),
            Err(ModelError::TableSize { .. })
        ));
        assert!(matches!(
            WeightedModel::new("x", 2, vec![Factor::new(vec![0], vec![0.0, f64::NAN])]),
            Err(ModelError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn partition_guard() {
        let m = WeightedModel::uniform(25);
        assert!(matches!(m.exact_partition(), Err(ModelError::TooLarge { .. })));
        assert!(matches!(m.exact_quantiles(), Err(ModelError::TooLarge { .. })));
    }

    #[test]
    fn constant_model_quantiles() {
        let q = WeightedModel::uniform(4).exact_quantiles().unwrap();
        assert_eq!(q.values(), &[0.0; 5]);
    }

    #[test]
    fn rank_readout() {
        // weights over masks 00,01,10,11 (bit 0 = variable 0)
        let table = [8f64.ln(), 2f64.ln(), 4f64.ln(), 1f64.ln()];
        let m = WeightedModel::new("t", 2, vec![Factor::pairwise(0, 1, table)]).unwrap();
        let q = m.exact_quantiles().unwrap();
        let lin: Vec<f64> = q.values().iter().map(|x| x.exp()).collect();
        assert!((lin[0] - 8.0).abs() < 1e-12);
        assert!((lin[1] - 4.0).abs() < 1e-12);
        assert!((lin[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clique_partition_matches_linear_sum() {
        let m = gen_clique_ising(10, 0.1, 7).unwrap();
        let linear: f64 = (0..1u64 << 10).map(|mask| m.log_weight_mask(mask).exp()).sum();
        let lw = m.exact_partition().unwrap();
        assert!((lw - linear.ln()).abs() < 1e-12);
        let ws = m.all_log_weights().unwrap();
        assert!((lw - log_sum_exp(&ws)).abs() < 1e-12);
    }

    #[test]
    fn curve_validation() {
        assert!(QuantileCurve::new(vec![]).is_err());
        assert!(QuantileCurve::new(vec![0.0, 1.0]).is_err());
        assert!(QuantileCurve::new(vec![0.0, f64::NAN]).is_err());
        assert!(QuantileCurve::new(vec![1.0, 0.0, f64::NEG_INFINITY]).is_ok());
        let c = QuantileCurve::from_linear(&[8.0, 4.0, 1.0]).unwrap();
        assert_eq!(c.n(), 2);
    }

    #[test]
    fn quantiles_are_non_increasing() {
        for seed in 0..10 {
            let m = gen_random_factors(8, 10, 3, seed).unwrap();
            let q = m.exact_quantiles().unwrap();
            assert!(q.values().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
