//! Quantile oracles.
//!
//! Every oracle answers three kinds of question about the quantile curve
//! `b_0 >= ... >= b_n`: a point estimate, an upper bound and a lower bound.
//! Each question is mapped to one *base index* that is fetched through a
//! [`QueryLedger`], so repeated questions about the same index cost nothing
//! and the ledger's `distinct_queries` counts oracle accesses.
//!
//! Behaviours:
//! - `Exact`: `b_i` itself, from enumeration.
//! - `PointWise`: `b_i` scaled by a seeded factor in `[1/gamma, gamma]`;
//!   bounds widen the answer by `gamma` either way.
//! - `Neighbor`: median of `T` parity-constrained MAP values with `i` random
//!   rows; bounds read the answers at `i + c` and `i - c` (clamped).

mod curve;
mod ledger;
mod map;

pub use curve::{adversarial_neighbor_stub, CurveBehavior, CurveOracle, StubPolicy};
pub use ledger::{LedgerSnapshot, QueryLedger, QueryOutcome, TraceEntry};
pub use map::{ConstrainedMax, MapOutcome, MapSolver, MapStatus, SolverStrategy};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{Gf2Error, Gf2System};
use crate::model::{ModelError, QuantileCurve, WeightedModel};

/// Draws of `(A, d)` tried per repetition before an empty bucket is accepted.
pub const MAX_HASH_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
    #[error("parity system has {found} columns, model has {expected} variables")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{free} free variables exceed the enumeration limit of {limit}")]
    TooLarge { free: usize, limit: usize },
    #[error("quantile index {index} out of range 0..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleKind {
    Exact,
    PointWise,
    Neighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Neighbour slack `c`.
    pub c: usize,
    /// Repetitions `T`; derived from `delta`, `alpha` and `n` when unset.
    pub repetitions: Option<usize>,
    pub delta: f64,
    /// Concentration constant for slack `c`. Only `c = 5` has a default.
    pub alpha: Option<f64>,
    pub gamma: f64,
    pub master_seed: u64,
}

/// Concentration constant used when `c = 5` and none is given.
pub const ALPHA_C5: f64 = 0.078;

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: OracleKind::Exact,
            c: 5,
            repetitions: None,
            delta: 0.01,
            alpha: None,
            gamma: 1.0,
            master_seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn point_wise(gamma: f64, seed: u64) -> Self {
        Self {
            kind: OracleKind::PointWise,
            gamma,
            master_seed: seed,
            ..Self::default()
        }
    }

    pub fn neighbor(c: usize, seed: u64) -> Self {
        Self {
            kind: OracleKind::Neighbor,
            c,
            master_seed: seed,
            ..Self::default()
        }
    }

    pub fn with_repetitions(mut self, t: usize) -> Self {
        self.repetitions = Some(t);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha.or((self.c == 5).then_some(ALPHA_C5))
    }

    /// `ceil(ln(1/delta) / alpha * ln n)`, at least 1; `None` without alpha.
    pub fn required_repetitions(&self, n: usize) -> Option<usize> {
        let alpha = self.alpha()?;
        let t = ((1.0 / self.delta).ln() / alpha * (n.max(1) as f64).ln()).ceil();
        Some((t as usize).max(1))
    }

    pub fn repetitions_for(&self, n: usize) -> Result<usize, OracleError> {
        match self.repetitions {
            Some(t) => Ok(t),
            None => self.required_repetitions(n).ok_or_else(|| {
                OracleError::InvalidConfig(format!(
                    "no default alpha for c = {}; supply alpha or an explicit repetition count",
                    self.c
                ))
            }),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |msg: String| Err(OracleError::InvalidConfig(msg));
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and >= 1, got {}", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("alpha must be positive, got {a}"));
            }
        }
        if self.repetitions == Some(0) {
            return bad("repetitions must be >= 1".into());
        }
        if self.kind == OracleKind::Neighbor && self.c < 2 {
            return bad(format!("neighbour slack c must be >= 2, got {}", self.c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryRole {
    Approx,
    Upper,
    Lower,
}

/// What an oracle promises about its answers, used for guarantee bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleProfile {
    Exact,
    PointWise {
        gamma: f64,
    },
    Neighbor {
        c: usize,
        repetitions: usize,
        required_repetitions: Option<usize>,
        delta: f64,
    },
    /// Deterministic oracle that always lands inside the neighbour sandwich.
    AdversarialNeighbor {
        c: usize,
    },
}

pub trait QuantileOracle: Send + Sync {
    fn n(&self) -> usize;

    /// Index fetched through the ledger to answer `role` at `i`.
    fn base_index(&self, role: QueryRole, i: usize) -> usize;

    /// Unmemoized answer at base index `j`.
    fn raw_query(&self, j: usize) -> Result<QueryOutcome, OracleError>;

    /// Turns the fetched value into the answer for `role`.
    fn adjust(&self, _role: QueryRole, value: f64) -> f64 {
        value
    }

    fn profile(&self) -> OracleProfile;

    fn query(&self, role: QueryRole, i: usize, ledger: &QueryLedger, depth: usize) -> Result<f64, OracleError> {
        let n = self.n();
        if i > n {
            return Err(OracleError::IndexOutOfRange { index: i, n });
        }
        let j = self.base_index(role, i);
        let v = ledger.fetch(j, depth, |j| self.raw_query(j))?;
        Ok(self.adjust(role, v))
    }

    fn approx_query(&self, i: usize, ledger: &QueryLedger) -> Result<f64, OracleError> {
        self.query(QueryRole::Approx, i, ledger, 0)
    }

    fn upper_bound_query(&self, i: usize, ledger: &QueryLedger) -> Result<f64, OracleError> {
        self.query(QueryRole::Upper, i, ledger, 0)
    }

    fn lower_bound_query(&self, i: usize, ledger: &QueryLedger) -> Result<f64, OracleError> {
        self.query(QueryRole::Lower, i, ledger, 0)
    }
}

pub(crate) fn neighbor_index(role: QueryRole, i: usize, c: usize, n: usize) -> usize {
    match role {
        QueryRole::Approx => i,
        QueryRole::Upper => i.saturating_sub(c),
        QueryRole::Lower => (i + c).min(n),
    }
}

/// Order-free seed derivation: a splitmix64 chain over the words.
pub fn mix_seed(words: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    words.iter().fold(0x6A09_E667_F3BC_C909, |h, &w| splitmix(h ^ splitmix(w)))
}

/// Seeded multiplicative jitter for point-wise answers, as a log-factor in
/// `[-ln gamma, ln gamma]`.
pub(crate) fn point_jitter(seed: u64, index: usize, gamma: f64) -> f64 {
    let bits = mix_seed(&[seed, index as u64, 0x5057_4a49]);
    let u = (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
    u * gamma.ln()
}

/// Point-wise answer: jittered `b_i`, which stays `-inf` for zero weights.
pub(crate) fn point_value(b: f64, seed: u64, index: usize, gamma: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        b
    } else {
        b + point_jitter(seed, index, gamma)
    }
}

pub(crate) fn point_adjust(role: QueryRole, value: f64, gamma: f64) -> f64 {
    match role {
        QueryRole::Approx => value,
        QueryRole::Upper => value + gamma.ln(),
        QueryRole::Lower => value - gamma.ln(),
    }
}

/// Median of `repetitions` constrained MAP values with `i` random parity rows.
///
/// Repetition `t` draws `(A, d)` from a seed mixed from
/// `(master_seed, i, t, attempt)`. A draw whose bucket is empty is redrawn
/// with the next attempt number, up to [`MAX_HASH_ATTEMPTS`]; after that the
/// repetition contributes `-inf`. For even counts the lower middle value is
/// taken.
pub fn xor_sample_median(
    model: &WeightedModel,
    i: usize,
    repetitions: usize,
    master_seed: u64,
    solver: &dyn ConstrainedMax,
) -> Result<QueryOutcome, OracleError> {
    let n = model.n();
    if i > n {
        return Err(OracleError::IndexOutOfRange { index: i, n });
    }
    if repetitions == 0 {
        return Err(OracleError::InvalidConfig("repetitions must be >= 1".into()));
    }
    let samples = (0..repetitions as u64)
        .into_par_iter()
        .map(|t| {
            let mut calls = 0;
            for attempt in 0..MAX_HASH_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[master_seed, i as u64, t, attempt]));
                let hash = Gf2System::random(i, n, &mut rng);
                let out = solver.solve(model, &hash)?;
                calls += 1;
                if out.status != MapStatus::Infeasible {
                    return Ok((out.log_value, calls, u64::from(!out.is_exact())));
                }
            }
            Ok((f64::NEG_INFINITY, calls, 0))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let mut values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    values.sort_by(f64::total_cmp);
    Ok(QueryOutcome {
        log_value: values[(repetitions - 1) / 2],
        map_calls: samples.iter().map(|s| s.1).sum(),
        incumbent_only: samples.iter().map(|s| s.2).sum(),
    })
}

/// Memoized XOR query at index `i`.
pub fn xor_query(
    i: usize,
    model: &WeightedModel,
    config: &OracleConfig,
    solver: &dyn ConstrainedMax,
    ledger: &QueryLedger,
) -> Result<f64, OracleError> {
    config.validate()?;
    let t = config.repetitions_for(model.n())?;
    ledger.fetch(i, 0, |i| xor_sample_median(model, i, t, config.master_seed, solver))
}

/// Oracle over a model, dispatching on the configured kind.
pub struct ModelOracle<'a> {
    model: &'a WeightedModel,
    config: OracleConfig,
    solver: Box<dyn ConstrainedMax + 'a>,
    repetitions: usize,
    curve: Option<QuantileCurve>,
}

impl<'a> ModelOracle<'a> {
    /// Exact and point-wise kinds enumerate the model once here.
    pub fn new(
        model: &'a WeightedModel,
        config: OracleConfig,
        solver: impl ConstrainedMax + 'a,
    ) -> Result<Self, OracleError> {
        config.validate()?;
        let (curve, repetitions) = match config.kind {
            OracleKind::Exact | OracleKind::PointWise => (Some(model.exact_quantiles()?), 0),
            OracleKind::Neighbor => (None, config.repetitions_for(model.n())?),
        };
        Ok(Self {
            model,
            config,
            solver: Box::new(solver),
            repetitions,
            curve,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn model(&self) -> &WeightedModel {
        self.model
    }

    /// Repetition count in use (0 for kinds that do not sample).
    pub fn repetitions(&self) -> usize {
        self.repetitions
    }
}

impl QuantileOracle for ModelOracle<'_> {
    fn n(&self) -> usize {
        self.model.n()
    }

    fn base_index(&self, role: QueryRole, i: usize) -> usize {
        match self.config.kind {
            OracleKind::Neighbor => neighbor_index(role, i, self.config.c, self.n()),
            _ => i,
        }
    }

    fn raw_query(&self, j: usize) -> Result<QueryOutcome, OracleError> {
        let n = self.n();
        if j > n {
            return Err(OracleError::IndexOutOfRange { index: j, n });
        }
        match self.config.kind {
            OracleKind::Exact => Ok(QueryOutcome::exact(self.curve.as_ref().expect("exact curve").get(j))),
            OracleKind::PointWise => {
                let b = self.curve.as_ref().expect("exact curve").get(j);
                Ok(QueryOutcome::exact(point_value(b, self.config.master_seed, j, self.config.gamma)))
            }
            OracleKind::Neighbor => {
                xor_sample_median(self.model, j, self.repetitions, self.config.master_seed, self.solver.as_ref())
            }
        }
    }

    fn adjust(&self, role: QueryRole, value: f64) -> f64 {
        match self.config.kind {
            OracleKind::PointWise => point_adjust(role, value, self.config.gamma),
            _ => value,
        }
    }

    fn profile(&self) -> OracleProfile {
        match self.config.kind {
            OracleKind::Exact => OracleProfile::Exact,
            OracleKind::PointWise => OracleProfile::PointWise {
                gamma: self.config.gamma,
            },
            OracleKind::Neighbor => OracleProfile::Neighbor {
                c: self.config.c,
                repetitions: self.repetitions,
                required_repetitions: self.config.required_repetitions(self.n()),
                delta: self.config.delta,
            },
        }
    }
}
