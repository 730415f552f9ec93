//! Seeded instance generators.
//!
//! Placement conventions (not dictated by the models themselves):
//! - clique chains: each chain draws `floor(0.3 n)` distinct vertices from a
//!   seeded shuffle and closes them into a cycle; chain strengths are added to
//!   the base couplings of the pairs they touch.
//! - grid rectangle: `ceil(rows/2) x ceil(cols/2)` cells at a seeded offset;
//!   an edge is amplified when both endpoints lie inside.
//! - grid spins: stored bit 0 is spin -1, stored bit 1 is spin +1.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Factor, ModelError, WeightedModel};

pub const DEFAULT_CLIQUE_COUPLING: f64 = 0.1;
pub const DEFAULT_GRID_COUPLING: f64 = 1.0;

const CHAIN_FRACTION: f64 = 0.3;
const CHAIN_AMPLIFICATION: f64 = 100.0;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Couplings of a clique Ising instance, split by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueCouplings {
    pub n: usize,
    /// `(i, j, w_ij)` for every `i < j`.
    pub base: Vec<(usize, usize, f64)>,
    /// Two closed chains, each a list of `(i, j, strength)` with `i < j`.
    pub chains: [Vec<(usize, usize, f64)>; 2],
}

impl CliqueCouplings {
    /// Total coupling per pair after overlaying the chains.
    pub fn combined(&self) -> BTreeMap<(usize, usize), f64> {
        let mut total: BTreeMap<(usize, usize), f64> =
            self.base.iter().map(|&(i, j, w)| ((i, j), w)).collect();
        for chain in &self.chains {
            for &(i, j, s) in chain {
                *total.entry((i, j)).or_insert(0.0) += s;
            }
        }
        total
    }
}

pub fn clique_ising_couplings(n: usize, coupling: f64, seed: u64) -> Result<CliqueCouplings, ModelError> {
    if n < 4 {
        return Err(ModelError::InvalidSize(format!("clique needs n >= 4, got {n}")));
    }
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(ModelError::InvalidSize(format!("clique coupling must be finite and >= 0, got {coupling}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let hi = coupling * ((j - i) as f64).sqrt();
            base.push((i, j, uniform(&mut rng, 0.0, hi)));
        }
    }
    let len = (CHAIN_FRACTION * n as f64).floor() as usize;
    let mut chain = || {
        let mut vertices: Vec<usize> = (0..n).collect();
        vertices.shuffle(&mut rng);
        vertices.truncate(len);
        let edges = match len {
            0 | 1 => 0,
            2 => 1,
            _ => len,
        };
        (0..edges)
            .map(|k| {
                let (a, b) = (vertices[k], vertices[(k + 1) % len]);
                let s = uniform(&mut rng, 0.0, CHAIN_AMPLIFICATION * coupling);
                (a.min(b), a.max(b), s)
            })
            .collect::<Vec<_>>()
    };
    let first = chain();
    let second = chain();
    Ok(CliqueCouplings {
        n,
        base,
        chains: [first, second],
    })
}

/// Fully connected repulsive model `w(x) = exp(-sum_{i<j} w_ij x_i x_j)`.
pub fn gen_clique_ising(n: usize, coupling: f64, seed: u64) -> Result<WeightedModel, ModelError> {
    let couplings = clique_ising_couplings(n, coupling, seed)?;
    let factors = couplings
        .combined()
        .into_iter()
        .map(|((i, j), w)| Factor::pairwise(i, j, [0.0, 0.0, 0.0, -w]))
        .collect();
    WeightedModel::new(format!("clique-n{n}-w{coupling}-s{seed}"), n, factors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridIsingParams {
    pub rows: usize,
    pub cols: usize,
    pub coupling: f64,
    /// Unary fields are drawn from `[-field_range, field_range]`.
    pub field_range: f64,
    pub amplification: f64,
    pub seed: u64,
}

impl GridIsingParams {
    pub fn new(rows: usize, cols: usize, coupling: f64, seed: u64) -> Self {
        Self {
            rows,
            cols,
            coupling,
            field_range: 0.1,
            amplification: 10.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCouplings {
    pub rows: usize,
    pub cols: usize,
    pub fields: Vec<f64>,
    /// `(i, j, w_ij, inside_rectangle)` over right and down neighbours.
    pub edges: Vec<(usize, usize, f64, bool)>,
    /// `(row0, col0, height, width)` of the amplified rectangle.
    pub rectangle: (usize, usize, usize, usize),
}

pub fn grid_ising_couplings(params: &GridIsingParams) -> Result<GridCouplings, ModelError> {
    let GridIsingParams {
        rows,
        cols,
        coupling,
        field_range,
        amplification,
        seed,
    } = *params;
    if rows < 2 || cols < 2 {
        return Err(ModelError::InvalidSize(format!("grid needs rows, cols >= 2, got {rows}x{cols}")));
    }
    if rows * cols > 64 {
        return Err(ModelError::InvalidSize(format!("grid {rows}x{cols} exceeds 64 variables")));
    }
    for (name, x) in [("coupling", coupling), ("field range", field_range), ("amplification", amplification)] {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(ModelError::InvalidSize(format!("grid {name} must be finite and >= 0, got {x}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rows.div_ceil(2), cols.div_ceil(2));
    let r0 = rng.gen_range(0..=rows - h);
    let c0 = rng.gen_range(0..=cols - w);
    let inside = |v: usize| {
        let (r, c) = (v / cols, v % cols);
        (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c)
    };
    let fields = (0..rows * cols)
        .map(|_| uniform(&mut rng, -field_range, field_range))
        .collect();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            let mut neighbours = Vec::with_capacity(2);
            if c + 1 < cols {
                neighbours.push(v + 1);
            }
            if r + 1 < rows {
                neighbours.push(v + cols);
            }
            for u in neighbours {
                let amplified = inside(v) && inside(u);
                let scale = if amplified { amplification } else { 1.0 };
                edges.push((v, u, scale * uniform(&mut rng, -coupling, coupling), amplified));
            }
        }
    }
    Ok(GridCouplings {
        rows,
        cols,
        fields,
        edges,
        rectangle: (r0, c0, h, w),
    })
}

impl GridCouplings {
    /// `w(s) = exp(sum_i f_i s_i + sum_(i,j) w_ij s_i s_j)` with spins `s = 2x - 1`.
    pub fn to_model(&self, name: impl Into<String>) -> Result<WeightedModel, ModelError> {
        let mut factors: Vec<Factor> = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, &f)| Factor::unary(i, -f, f))
            .collect();
        factors.extend(
            self.edges
                .iter()
                .map(|&(i, j, w, _)| Factor::pairwise(i, j, [w, -w, -w, w])),
        );
        WeightedModel::new(name, self.rows * self.cols, factors)
    }
}

pub fn gen_grid_ising(rows: usize, cols: usize, coupling: f64, seed: u64) -> Result<WeightedModel, ModelError> {
    let params = GridIsingParams::new(rows, cols, coupling, seed);
    grid_ising_couplings(&params)?.to_model(format!("grid-{rows}x{cols}-w{coupling}-s{seed}"))
}

/// Random factor graph: each factor picks `1..=max_arity` distinct variables,
/// log-entries are uniform in `[-2, 2]` and one entry in ten is a hard zero.
pub fn gen_random_factors(
    n: usize,
    num_factors: usize,
    max_arity: usize,
    seed: u64,
) -> Result<WeightedModel, ModelError> {
    if n == 0 || max_arity == 0 || max_arity > n.min(16) {
        return Err(ModelError::InvalidSize(format!(
            "random model needs n >= 1 and 1 <= arity <= min(n, 16), got n={n} arity={max_arity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vars: Vec<usize> = (0..n).collect();
    let factors = (0..num_factors)
        .map(|_| {
            let k = rng.gen_range(1..=max_arity);
            let (scope, _) = vars.partial_shuffle(&mut rng, k);
            let scope = scope.to_vec();
            let table = (0..1usize << k)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        f64::NEG_INFINITY
                    } else {
                        uniform(&mut rng, -2.0, 2.0)
                    }
                })
                .collect();
            Factor::new(scope, table)
        })
        .collect();
    WeightedModel::new(format!("random-n{n}-f{num_factors}-k{max_arity}-s{seed}"), n, factors)
}
