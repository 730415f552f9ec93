//! Self-checks run by `adawish verify`.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::estimator::{adawish_estimate, adawish_estimate_recursive, implied_weight_range, slice_bounds, wish_estimate};
use crate::gf2::{BitVec, Gf2System};
use crate::model::{gen_clique_ising, gen_grid_ising, gen_random_factors, parse_uai, serialize_uai, WeightedModel};
use crate::optbench::{compute_opt, gen_mixed_curve, regret_bound, OptMethod};
use crate::oracle::{
    adversarial_neighbor_stub, xor_sample_median, ConstrainedMax, CurveBehavior, CurveOracle, MapSolver, ModelOracle,
    OracleConfig, StubPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    /// Models up to 12 variables, no sampling experiments.
    Fast,
    /// Models up to 16 variables plus the sampling coverage check.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckReport {
    CheckReport { name, passed, detail }
}

fn models(max_n: usize, count: u64) -> Vec<WeightedModel> {
    (0..count)
        .map(|k| {
            let n = 4 + (k as usize % (max_n - 3));
            match k % 3 {
                0 => gen_clique_ising(n, 0.1, k).expect("clique"),
                1 => gen_grid_ising(2, (n / 2).max(2), 1.0, k).expect("grid"),
                _ => gen_random_factors(n, n + 3, 3, k).expect("random"),
            }
        })
        .collect()
}

fn gf2_counts() -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(0..=n + 2);
        let sys = Gf2System::random(m, n, &mut rng);
        let brute = (0..1u64 << n)
            .filter(|&x| sys.is_satisfied(&BitVec::from_mask(x, n)).unwrap_or(false))
            .count();
        let counted = sys.reduce().log2_solution_count().map_or(0, |k| 1usize << k);
        bad += usize::from(brute != counted);
    }
    check("gf2 solution counts", bad == 0, format!("100 random systems, {bad} mismatches"))
}

fn sandwich(models: &[WeightedModel]) -> CheckReport {
    let worst = models
        .par_iter()
        .map(|m| {
            let w = m.exact_partition().expect("enumerable");
            let (lb, ub) = slice_bounds(&m.exact_quantiles().expect("enumerable"));
            (lb - w).max(w - ub).max(ub - lb - LN_2)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    check(
        "slice bounds sandwich W",
        worst <= 1e-9,
        format!("{} models, worst violation {worst:.2e}", models.len()),
    )
}

fn schedules(models: &[WeightedModel]) -> CheckReport {
    let worst = models
        .par_iter()
        .map(|m| {
            let w = m.exact_partition().expect("enumerable");
            let exact = ModelOracle::new(m, OracleConfig::exact(), MapSolver::default()).expect("oracle");
            let mut worst = (wish_estimate(&exact).expect("wish").log_w_estimate - w).abs() - LN_2;
            for beta in [1.1, 2.0, 10.0] {
                let r = adawish_estimate(&exact, beta).expect("adaptive");
                worst = worst.max((r.log_w_estimate - w).abs() - (2.0 * beta).ln());
                for gamma in [1.5, 2.0] {
                    let o = ModelOracle::new(m, OracleConfig::point_wise(gamma, 7), MapSolver::default())
                        .expect("oracle");
                    let r = adawish_estimate(&o, beta).expect("adaptive");
                    worst = worst.max((r.log_w_estimate - w).abs() - (2.0 * beta * gamma * gamma).ln());
                }
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    check(
        "exact and point-wise schedules within kappa",
        worst <= 1e-9,
        format!("{} models, worst excess {worst:.2e}", models.len()),
    )
}

fn stubs() -> CheckReport {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..30u64 {
        let curve = gen_mixed_curve(8 + k as usize, k);
        let (lo, hi) = implied_weight_range(&curve);
        for c in [2usize, 3] {
            let ln_kappa = (2 * c) as f64 * LN_2 + 2f64.ln();
            for policy in [StubPolicy::AlwaysUpper, StubPolicy::AlwaysLower, StubPolicy::SeededChoice(k)] {
                let r = adawish_estimate(&adversarial_neighbor_stub(curve.clone(), c, policy), 2.0).expect("stub");
                worst = worst.max(r.log_w_estimate - lo - ln_kappa).max(hi - r.log_w_estimate - ln_kappa);
            }
        }
    }
    check("neighbour stub within 2^(2c) beta", worst <= 1e-9, format!("180 runs, worst excess {worst:.2e}"))
}

fn solvers(max_n: usize) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ms = models(max_n, 60);
    let mut bad = 0;
    for m in &ms {
        let rows = rng.gen_range(0..=6.min(m.n()));
        let h = Gf2System::random(rows, m.n(), &mut rng);
        let e = MapSolver::enumerate().solve(m, &h).expect("enumerate");
        let b = MapSolver::branch_and_bound().solve(m, &h).expect("branch and bound");
        bad += usize::from(e.log_value.to_bits() != b.log_value.to_bits());
    }
    check("branch and bound equals enumeration", bad == 0, format!("60 pairs, {bad} mismatches"))
}

fn uai(models: &[WeightedModel]) -> CheckReport {
    let mut worst = 0.0f64;
    for m in models.iter().take(20) {
        let back = parse_uai(&serialize_uai(m)).expect("round trip parses");
        for mask in 0..1u64 << m.n() {
            let (a, b) = (m.log_weight_mask(mask), back.log_weight_mask(mask));
            if a != b {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    check("UAI round trip", worst <= 1e-9, format!("worst relative error {worst:.2e}"))
}

fn regret_and_routes() -> CheckReport {
    let mut violations = 0;
    let mut route_mismatch = 0;
    for k in 0..40u64 {
        let n = if k % 2 == 0 { 64 } else { 128 };
        let beta = [2.0, 10.0, 100.0][k as usize % 3];
        let curve = gen_mixed_curve(n, 700 + k);
        let opt = compute_opt(&curve, 2.0 * beta, OptMethod::GreedySegment).expect("opt");
        let o = CurveOracle::new(curve, CurveBehavior::Exact).expect("oracle");
        let a = adawish_estimate(&o, beta).expect("adaptive");
        let b = adawish_estimate_recursive(&o, beta).expect("adaptive");
        violations += usize::from(a.distinct_queries() > regret_bound(opt.opt_size, n));
        route_mismatch += usize::from(a.quantile_estimates != b.quantile_estimates);
    }
    check(
        "regret bound and schedule routes",
        violations == 0 && route_mismatch == 0,
        format!("40 curves, {violations} regret violations, {route_mismatch} route mismatches"),
    )
}

fn coverage() -> CheckReport {
    let model = gen_grid_ising(3, 4, 1.0, 0).expect("grid");
    let curve = model.exact_quantiles().expect("enumerable");
    let n = model.n();
    let solver = MapSolver::branch_and_bound();
    let hits: Vec<Vec<bool>> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            (0..=n)
                .map(|i| {
                    let m = xor_sample_median(&model, i, 30, seed, &solver as &dyn ConstrainedMax)
                        .expect("xor query")
                        .log_value;
                    m >= curve.get((i + 2).min(n)) && m <= curve.get(i.saturating_sub(2))
                })
                .collect()
        })
        .collect();
    let worst = (0..=n)
        .map(|i| hits.iter().filter(|h| h[i]).count() as f64 / 200.0)
        .fold(1.0, f64::min);
    check(
        "neighbour sandwich coverage",
        worst >= 0.9,
        format!("grid 3x4, c=2, T=30, 200 seeds, lowest frequency {worst:.3}"),
    )
}

pub fn run_checks(level: VerifyLevel) -> Vec<CheckReport> {
    let max_n = match level {
        VerifyLevel::Fast => 12,
        VerifyLevel::Full => 16,
    };
    let ms = models(max_n, 30);
    let mut out = vec![
        gf2_counts(),
        sandwich(&ms),
        schedules(&ms),
        stubs(),
        solvers(max_n.min(14)),
        uai(&ms),
        regret_and_routes(),
    ];
    if level == VerifyLevel::Full {
        out.push(coverage());
    }
    out
}
