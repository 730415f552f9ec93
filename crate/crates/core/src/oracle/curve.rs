//! Oracles backed directly by a quantile curve, for runs that need no model.

use serde::{Deserialize, Serialize};

use super::{
    mix_seed, neighbor_index, point_adjust, point_value, OracleError, OracleProfile, QuantileOracle, QueryOutcome,
    QueryRole,
};
use crate::model::QuantileCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StubPolicy {
    /// Answer `b_{max(i-c, 0)}`.
    AlwaysUpper,
    /// Answer `b_{min(i+c, n)}`.
    AlwaysLower,
    /// Answer `b_j` for a seeded `j` in `[i-c, i+c]` (clamped).
    SeededChoice(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveBehavior {
    Exact,
    PointWise { gamma: f64, seed: u64 },
    AdversarialNeighbor { c: usize, policy: StubPolicy },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOracle {
    curve: QuantileCurve,
    behavior: CurveBehavior,
}

impl CurveOracle {
    pub fn new(curve: QuantileCurve, behavior: CurveBehavior) -> Result<Self, OracleError> {
        match behavior {
            CurveBehavior::PointWise { gamma, .. } if !(gamma >= 1.0 && gamma.is_finite()) => {
                Err(OracleError::InvalidConfig(format!("gamma must be finite and >= 1, got {gamma}")))
            }
            _ => Ok(Self { curve, behavior }),
        }
    }

    pub fn exact(curve: QuantileCurve) -> Self {
        Self {
            curve,
            behavior: CurveBehavior::Exact,
        }
    }

    pub fn curve(&self) -> &QuantileCurve {
        &self.curve
    }

    pub fn behavior(&self) -> &CurveBehavior {
        &self.behavior
    }

    /// The stub's neighbour answer at `j`. Index 0 always answers `b_0`: with
    /// no parity rows the constrained maximum is the global one.
    fn stub_value(&self, j: usize, c: usize, policy: StubPolicy) -> f64 {
        let n = self.curve.n();
        if j == 0 {
            return self.curve.get(0);
        }
        let (lo, hi) = (j.saturating_sub(c), (j + c).min(n));
        let k = match policy {
            StubPolicy::AlwaysUpper => lo,
            StubPolicy::AlwaysLower => hi,
            StubPolicy::SeededChoice(seed) => lo + (mix_seed(&[seed, j as u64]) % (hi - lo + 1) as u64) as usize,
        };
        self.curve.get(k)
    }
}

/// Deterministic worst-case stand-in for the XOR-backed neighbour oracle.
pub fn adversarial_neighbor_stub(curve: QuantileCurve, c: usize, policy: StubPolicy) -> CurveOracle {
    CurveOracle {
        curve,
        behavior: CurveBehavior::AdversarialNeighbor { c, policy },
    }
}

impl QuantileOracle for CurveOracle {
    fn n(&self) -> usize {
        self.curve.n()
    }

    fn base_index(&self, role: QueryRole, i: usize) -> usize {
        match self.behavior {
            CurveBehavior::AdversarialNeighbor { c, .. } => neighbor_index(role, i, c, self.n()),
            _ => i,
        }
    }

    fn raw_query(&self, j: usize) -> Result<QueryOutcome, OracleError> {
        let n = self.n();
        if j > n {
            return Err(OracleError::IndexOutOfRange { index: j, n });
        }
        let v = match self.behavior {
            CurveBehavior::Exact => self.curve.get(j),
            CurveBehavior::PointWise { gamma, seed } => point_value(self.curve.get(j), seed, j, gamma),
            CurveBehavior::AdversarialNeighbor { c, policy } => self.stub_value(j, c, policy),
        };
        Ok(QueryOutcome::exact(v))
    }

    fn adjust(&self, role: QueryRole, value: f64) -> f64 {
        match self.behavior {
            CurveBehavior::PointWise { gamma, .. } => point_adjust(role, value, gamma),
            _ => value,
        }
    }

    fn profile(&self) -> OracleProfile {
        match self.behavior {
            CurveBehavior::Exact => OracleProfile::Exact,
            CurveBehavior::PointWise { gamma, .. } => OracleProfile::PointWise { gamma },
            CurveBehavior::AdversarialNeighbor { c, .. } => OracleProfile::AdversarialNeighbor { c },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::QueryLedger;

    fn curve(lin: &[f64]) -> QuantileCurve {
        QuantileCurve::from_linear(lin).unwrap()
    }

    #[test]
    fn always_upper_on_constant_curve() {
        let o = adversarial_neighbor_stub(QuantileCurve::flat(6, 0.0), 2, StubPolicy::AlwaysUpper);
        let ledger = QueryLedger::new();
        for i in 0..=6 {
            assert_eq!(o.approx_query(i, &ledger).unwrap(), 0.0);
        }
    }

    #[test]
    fn always_lower_reads_shifted_index() {
        let o = adversarial_neighbor_stub(curve(&[8.0, 4.0, 2.0, 1.0, 0.5]), 2, StubPolicy::AlwaysLower);
        let ledger = QueryLedger::new();
        // b_3 of (8, 4, 2, 1, 0.5)
        assert!((o.approx_query(1, &ledger).unwrap() - 1f64.ln()).abs() < 1e-12);
        assert!((o.approx_query(4, &ledger).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert!((o.approx_query(0, &ledger).unwrap() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stub_answers_stay_in_sandwich() {
        let lin: Vec<f64> = (0..=12).map(|i| 0.7f64.powi(i)).collect();
        let cv = curve(&lin);
        for policy in [StubPolicy::AlwaysUpper, StubPolicy::AlwaysLower, StubPolicy::SeededChoice(17)] {
            let o = adversarial_neighbor_stub(cv.clone(), 3, policy);
            let ledger = QueryLedger::new();
            for i in 0..=12 {
                let v = o.approx_query(i, &ledger).unwrap();
                assert!(v <= cv.get(i.saturating_sub(3)) && v >= cv.get((i + 3).min(12)));
            }
        }
    }

    #[test]
    fn point_wise_curve_bounds() {
        let cv = curve(&[10.0, 5.0, 5.0, 1.0, 0.0]);
        let o = CurveOracle::new(cv.clone(), CurveBehavior::PointWise { gamma: 1.5, seed: 2 }).unwrap();
        let ledger = QueryLedger::new();
        for i in 0..=4 {
            let (lo, hi) = (o.lower_bound_query(i, &ledger).unwrap(), o.upper_bound_query(i, &ledger).unwrap());
            assert!(lo <= cv.get(i) + 1e-12 && cv.get(i) <= hi + 1e-12);
        }
        assert!(CurveOracle::new(cv, CurveBehavior::PointWise { gamma: 0.9, seed: 2 }).is_err());
    }
}
