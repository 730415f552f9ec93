//! Maximization of `w(x)` subject to `A x = d (mod 2)`.

use std::time::{Duration, Instant};

use crate::gf2::{BitVec, Gf2System, ReducedSystem};
use crate::model::{WeightedModel, MAX_ENUMERABLE_VARS};

use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MapStatus {
    /// Proven maximum over the constraint set.
    Optimal,
    /// Best value found before a node or time limit; a lower bound only.
    Incumbent,
    /// The parity system has no solution.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOutcome {
    pub log_value: f64,
    pub assignment: Option<Vec<bool>>,
    pub status: MapStatus,
}

impl MapOutcome {
    fn infeasible() -> Self {
        Self {
            log_value: f64::NEG_INFINITY,
            assignment: None,
            status: MapStatus::Infeasible,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.status != MapStatus::Incumbent
    }
}

/// Seam for constrained maximization backends.
pub trait ConstrainedMax: Send + Sync {
    fn solve(&self, model: &WeightedModel, hash: &Gf2System) -> Result<MapOutcome, OracleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolverStrategy {
    Enumerate,
    BranchAndBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSolver {
    pub strategy: SolverStrategy,
    pub node_limit: Option<u64>,
    pub timeout: Option<Duration>,
}

impl MapSolver {
    pub fn enumerate() -> Self {
        Self {
            strategy: SolverStrategy::Enumerate,
            node_limit: None,
            timeout: None,
        }
    }

    pub fn branch_and_bound() -> Self {
        Self {
            strategy: SolverStrategy::BranchAndBound,
            node_limit: None,
            timeout: None,
        }
    }

    pub fn with_node_limit(mut self, limit: u64) -> Self {
        self.node_limit = Some(limit);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

impl Default for MapSolver {
    fn default() -> Self {
        Self::branch_and_bound()
    }
}

impl ConstrainedMax for MapSolver {
    fn solve(&self, model: &WeightedModel, hash: &Gf2System) -> Result<MapOutcome, OracleError> {
        if hash.cols() != model.n() {
            return Err(OracleError::DimensionMismatch {
                expected: model.n(),
                found: hash.cols(),
            });
        }
        match self.strategy {
            SolverStrategy::Enumerate => enumerate(model, &hash.reduce()),
            SolverStrategy::BranchAndBound => BranchAndBound::new(model, hash, self).map(|s| s.run()),
        }
    }
}

fn enumerate(model: &WeightedModel, reduced: &ReducedSystem) -> Result<MapOutcome, OracleError> {
    if !reduced.is_consistent() {
        return Ok(MapOutcome::infeasible());
    }
    let free = reduced.free_columns();
    if free.len() > MAX_ENUMERABLE_VARS {
        return Err(OracleError::TooLarge {
            free: free.len(),
            limit: MAX_ENUMERABLE_VARS,
        });
    }
    let n = model.n();
    let mut best = f64::NEG_INFINITY;
    let mut best_x = None;
    if n <= 64 {
        let sys = reduced.system();
        let rows: Vec<(u64, u64, bool)> = reduced
            .pivot_columns()
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                let bits = sys.row(r).words().first().copied().unwrap_or(0);
                (bits & !(1u64 << c), 1u64 << c, sys.rhs(r))
            })
            .collect();
        for k in 0..1u64 << free.len() {
            let mut x = 0u64;
            for (b, &c) in free.iter().enumerate() {
                x |= ((k >> b) & 1) << c;
            }
            let free_part = x;
            for &(row, pivot, d) in &rows {
                if d ^ ((row & free_part).count_ones() & 1 == 1) {
                    x |= pivot;
                }
            }
            let v = model.log_weight_mask(x);
            if best_x.is_none() || v > best {
                best = v;
                best_x = Some(x);
            }
        }
        let x = best_x.expect("at least one solution");
        return Ok(MapOutcome {
            log_value: best,
            assignment: Some((0..n).map(|i| (x >> i) & 1 == 1).collect()),
            status: MapStatus::Optimal,
        });
    }
    let mut best_bits: Option<Vec<bool>> = None;
    for k in 0..1u64 << free.len() {
        let mut x = BitVec::zeros(n);
        for (b, &c) in free.iter().enumerate() {
            x.set(c, (k >> b) & 1 == 1);
        }
        let bits = reduced.complete(&x)?.to_bools();
        let v = model.log_weight_unchecked(&bits);
        if best_bits.is_none() || v > best {
            best = v;
            best_bits = Some(bits);
        }
    }
    Ok(MapOutcome {
        log_value: best,
        assignment: best_bits,
        status: MapStatus::Optimal,
    })
}

/// Depth-first search over the free columns of the reduced parity system.
/// Pivot variables are never branched on: each is fixed as soon as every
/// free variable of its row is assigned. The bound is the sum over factors of
/// the largest table entry consistent with the partial assignment.
struct BranchAndBound<'a> {
    model: &'a WeightedModel,
    factors_of: Vec<Vec<usize>>,
    factor_max: Vec<f64>,
    assign: Vec<Option<bool>>,
    branch_order: Vec<usize>,
    rows_of: Vec<Vec<usize>>,
    remaining: Vec<usize>,
    parity: Vec<bool>,
    row_pivot: Vec<usize>,
    row_rhs: Vec<bool>,
    bound: f64,
    trail: Vec<(usize, f64)>,
    incumbent: f64,
    best: Vec<bool>,
    nodes: u64,
    node_limit: Option<u64>,
    deadline: Option<Instant>,
    aborted: bool,
    infeasible: bool,
}

impl<'a> BranchAndBound<'a> {
    fn new(model: &'a WeightedModel, hash: &Gf2System, solver: &MapSolver) -> Result<Self, OracleError> {
        let n = model.n();
        let mut factors_of = vec![Vec::new(); n];
        for (fi, f) in model.factors().iter().enumerate() {
            for &v in f.scope() {
                factors_of[v].push(fi);
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (factors_of[v].len(), v));
        let reduced = hash.reduce_with_column_order(&order)?;
        let mut search = Self {
            model,
            factor_max: vec![f64::NEG_INFINITY; model.factors().len()],
            factors_of,
            assign: vec![None; n],
            branch_order: Vec::new(),
            rows_of: vec![Vec::new(); n],
            remaining: Vec::new(),
            parity: Vec::new(),
            row_pivot: reduced.pivot_columns().to_vec(),
            row_rhs: Vec::new(),
            bound: 0.0,
            trail: Vec::new(),
            incumbent: f64::NEG_INFINITY,
            best: Vec::new(),
            nodes: 0,
            node_limit: solver.node_limit,
            deadline: solver.timeout.map(|t| Instant::now() + t),
            aborted: false,
            infeasible: !reduced.is_consistent(),
        };
        if search.infeasible {
            return Ok(search);
        }
        let sys = reduced.system();
        for (r, &p) in reduced.pivot_columns().iter().enumerate() {
            let row = sys.row(r);
            let mut count = 0;
            for c in row.iter_ones().filter(|&c| c != p) {
                search.rows_of[c].push(r);
                count += 1;
            }
            search.remaining.push(count);
            search.parity.push(false);
            search.row_rhs.push(sys.rhs(r));
        }
        let mut free = reduced.free_columns();
        free.sort_by_key(|&v| (std::cmp::Reverse(search.factors_of[v].len()), v));
        search.branch_order = free;

        for r in 0..search.row_pivot.len() {
            if search.remaining[r] == 0 {
                search.assign[search.row_pivot[r]] = Some(search.row_rhs[r]);
            }
        }
        for fi in 0..model.factors().len() {
            search.factor_max[fi] = search.consistent_max(fi);
        }
        search.bound = search.factor_max.iter().sum();

        let zero = reduced.complete(&BitVec::zeros(n))?.to_bools();
        search.incumbent = model.log_weight_unchecked(&zero);
        search.best = zero;
        Ok(search)
    }

    fn consistent_max(&self, fi: usize) -> f64 {
        let f = &self.model.factors()[fi];
        let k = f.scope().len();
        let (mut mask, mut val) = (0usize, 0usize);
        for (p, &v) in f.scope().iter().enumerate() {
            if let Some(b) = self.assign[v] {
                let bit = 1 << (k - 1 - p);
                mask |= bit;
                if b {
                    val |= bit;
                }
            }
        }
        f.table()
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask == val)
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn set_var(&mut self, v: usize, b: bool) {
        self.assign[v] = Some(b);
        for k in 0..self.factors_of[v].len() {
            let fi = self.factors_of[v][k];
            let old = self.factor_max[fi];
            let new = self.consistent_max(fi);
            if new != old {
                self.trail.push((fi, old));
                self.factor_max[fi] = new;
                if new == f64::NEG_INFINITY {
                    self.bound = f64::NEG_INFINITY;
                } else if self.bound != f64::NEG_INFINITY {
                    self.bound += new - old;
                }
            }
        }
    }

    fn apply(&mut self, v: usize, b: bool) -> (usize, f64) {
        let saved = (self.trail.len(), self.bound);
        self.nodes += 1;
        if self.node_limit.is_some_and(|l| self.nodes > l)
            || (self.nodes.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d))
        {
            self.aborted = true;
        }
        self.set_var(v, b);
        for k in 0..self.rows_of[v].len() {
            let r = self.rows_of[v][k];
            self.remaining[r] -= 1;
            self.parity[r] ^= b;
            if self.remaining[r] == 0 {
                let value = self.row_rhs[r] ^ self.parity[r];
                self.set_var(self.row_pivot[r], value);
            }
        }
        saved
    }

    fn undo(&mut self, v: usize, b: bool, saved: (usize, f64)) {
        for k in 0..self.rows_of[v].len() {
            let r = self.rows_of[v][k];
            if self.remaining[r] == 0 {
                self.assign[self.row_pivot[r]] = None;
            }
            self.remaining[r] += 1;
            self.parity[r] ^= b;
        }
        self.assign[v] = None;
        while self.trail.len() > saved.0 {
            let (fi, old) = self.trail.pop().expect("trail entry");
            self.factor_max[fi] = old;
        }
        self.bound = saved.1;
    }

    fn prunable(&self, bound: f64) -> bool {
        bound == f64::NEG_INFINITY || bound < self.incumbent - 1e-9 * self.incumbent.abs().max(1.0)
    }

    fn dfs(&mut self, depth: usize) {
        if self.aborted {
            return;
        }
        if depth == self.branch_order.len() {
            let x: Vec<bool> = self.assign.iter().map(|b| b.expect("leaf fully assigned")).collect();
            let value = self.model.log_weight_unchecked(&x);
            if value > self.incumbent {
                self.incumbent = value;
                self.best = x;
            }
            return;
        }
        let v = self.branch_order[depth];
        let mut children = [(false, 0.0), (true, 0.0)];
        for child in children.iter_mut() {
            let saved = self.apply(v, child.0);
            child.1 = self.bound;
            self.undo(v, child.0, saved);
        }
        if children[1].1 > children[0].1 {
            children.swap(0, 1);
        }
        for (b, bound) in children {
            if self.aborted || self.prunable(bound) {
                continue;
            }
            let saved = self.apply(v, b);
            self.dfs(depth + 1);
            self.undo(v, b, saved);
        }
    }

    fn run(mut self) -> MapOutcome {
        if self.infeasible {
            return MapOutcome::infeasible();
        }
        if !self.prunable(self.bound) {
            self.dfs(0);
        }
        MapOutcome {
            log_value: self.incumbent,
            assignment: Some(self.best),
            status: if self.aborted {
                MapStatus::Incumbent
            } else {
                MapStatus::Optimal
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_clique_ising, gen_grid_ising, gen_random_factors};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_max(model: &WeightedModel, hash: &Gf2System) -> Option<f64> {
        let n = model.n();
        (0..1u64 << n)
            .filter(|&m| hash.is_satisfied(&BitVec::from_mask(m, n)).unwrap())
            .map(|m| model.log_weight_mask(m))
            .reduce(f64::max)
    }

    #[test]
    fn unconstrained_constant_model() {
        let m = WeightedModel::uniform(6);
        let h = Gf2System::unconstrained(6);
        for solver in [MapSolver::enumerate(), MapSolver::branch_and_bound()] {
            let out = solver.solve(&m, &h).unwrap();
            assert_eq!(out.log_value, 0.0);
            assert_eq!(out.status, MapStatus::Optimal);
        }
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let m = gen_grid_ising(2, 2, 1.0, 0).unwrap();
        let h = Gf2System::from_dense(4, &[&[0, 0, 0, 0]], &[1]).unwrap();
        for solver in [MapSolver::enumerate(), MapSolver::branch_and_bound()] {
            let out = solver.solve(&m, &h).unwrap();
            assert_eq!(out.status, MapStatus::Infeasible);
            assert_eq!(out.log_value, f64::NEG_INFINITY);
            assert!(out.assignment.is_none());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = WeightedModel::uniform(3);
        assert!(matches!(
            MapSolver::enumerate().solve(&m, &Gf2System::unconstrained(4)),
            Err(OracleError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grid_branch_and_bound_matches_enumeration() {
        let m = gen_grid_ising(2, 5, 1.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let h = Gf2System::random(4, 10, &mut rng);
            let e = MapSolver::enumerate().solve(&m, &h).unwrap();
            let b = MapSolver::branch_and_bound().solve(&m, &h).unwrap();
            assert_eq!(e.log_value, b.log_value);
            assert_eq!(e.status, b.status);
            assert_eq!(brute_max(&m, &h).unwrap_or(f64::NEG_INFINITY), e.log_value);
        }
    }

    #[test]
    fn returned_assignment_is_feasible_and_attains_value() {
        let m = gen_random_factors(9, 12, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let h = Gf2System::random(3, 9, &mut rng);
            for solver in [MapSolver::enumerate(), MapSolver::branch_and_bound()] {
                let out = solver.solve(&m, &h).unwrap();
                if let Some(x) = out.assignment {
                    assert!(h.is_satisfied(&BitVec::from_bools(&x)).unwrap());
                    assert_eq!(m.log_weight(&x).unwrap(), out.log_value);
                }
            }
        }
    }

    #[test]
    fn node_limit_yields_incumbent() {
        let m = gen_clique_ising(14, 0.1, 1).unwrap();
        let h = Gf2System::unconstrained(14);
        let out = MapSolver::branch_and_bound().with_node_limit(3).solve(&m, &h).unwrap();
        assert_eq!(out.status, MapStatus::Incumbent);
        assert!(!out.is_exact());
        let exact = MapSolver::enumerate().solve(&m, &h).unwrap();
        assert!(out.log_value <= exact.log_value);
    }

    #[test]
    fn zero_weights_everywhere_feasible() {
        let m = WeightedModel::new(
            "z",
            2,
            vec![crate::model::Factor::pairwise(0, 1, [f64::NEG_INFINITY; 4])],
        )
        .unwrap();
        let h = Gf2System::from_dense(2, &[&[1, 1]], &[1]).unwrap();
        for solver in [MapSolver::enumerate(), MapSolver::branch_and_bound()] {
            let out = solver.solve(&m, &h).unwrap();
            assert_eq!(out.log_value, f64::NEG_INFINITY);
            assert_eq!(out.status, MapStatus::Optimal);
        }
    }
}
