use std::path::Path;
use std::process::{Command, Output};

use adawish::model::gen_grid_ising;

fn adawish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adawish"))
        .args(args)
        .env_remove("ADAWISH_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let h = r.headers().unwrap().clone();
    (h, r.records().map(Result::unwrap).collect())
}

fn field<'a>(h: &csv::StringRecord, row: &'a csv::StringRecord, name: &str) -> &'a str {
    &row[h.iter().position(|x| x == name).unwrap_or_else(|| panic!("no column {name}"))]
}

#[test]
fn estimate_exact_grid_within_factor() {
    let o = adawish(&[
        "estimate", "--gen", "grid:3x3:w=0.5:seed=2", "--schedule", "adawish", "--oracle", "exact", "--beta", "2",
        "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&stdout(&o));
    let row = &rows[0];
    let est: f64 = field(&h, row, "log10_w_estimate").parse().unwrap();
    let err: f64 = field(&h, row, "log10_error").parse().unwrap();
    // Independent enumeration of the same generated model.
    let m = gen_grid_ising(3, 3, 0.5, 2).unwrap();
    let w: f64 = (0..1u64 << 9).map(|x| m.log_weight_mask(x).exp()).sum();
    assert!((err - (est - w.log10()).abs()).abs() < 1e-9);
    assert!(err <= 4f64.log10() + 1e-12);
    assert_eq!(field(&h, row, "guarantee"), "proven");
}

#[test]
fn neighbor_repetitions_default_from_delta_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.uai");
    let g = adawish(&["gen", "clique:6:seed=4", "--out", path.to_str().unwrap()]);
    assert!(g.status.success());
    let o = adawish(&[
        "estimate", "--model", path.to_str().unwrap(), "--schedule", "wish", "--oracle", "neighbor", "--c", "5",
        "--delta", "0.01", "--alpha", "0.078", "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv_rows(&stdout(&o));
    let expected = ((100f64).ln() / 0.078 * 6f64.ln()).ceil() as usize;
    assert_eq!(field(&h, &rows[0], "repetitions"), expected.to_string());
    assert_eq!(field(&h, &rows[0], "instance"), "fixture");
}

#[test]
fn missing_file_exits_one() {
    let o = adawish(&["estimate", "--model", "/definitely/not/here.uai"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("here.uai"));
}

#[test]
fn malformed_uai_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.uai");
    std::fs::write(&path, "MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 x 4\n").unwrap();
    let o = adawish(&["estimate", "--model", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.uai") && err.contains("line 7"), "{err}");
}

#[test]
fn incumbent_only_solves_exit_two() {
    let o = adawish(&[
        "estimate", "--gen", "grid:4x4", "--oracle", "neighbor", "--c", "2", "-t", "3", "--node-limit", "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("heuristic"));
}

#[test]
fn seed_env_overrides_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_adawish"))
        .args(["estimate", "--gen", "grid:2x2", "--seed", "3", "--format", "csv"])
        .env("ADAWISH_SEED", "41")
        .output()
        .unwrap();
    let (h, rows) = csv_rows(&stdout(&o));
    assert_eq!(field(&h, &rows[0], "seed"), "41");
}

#[test]
fn opt_on_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat_n16.csv");
    let body: String = (0..=16).map(|i| format!("{i},0\n")).collect();
    std::fs::write(&path, format!("index,log_b\n{body}")).unwrap();
    let o = adawish(&["opt", "--curve", path.to_str().unwrap(), "--kappa", "2"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        assert_eq!(l["opt_size"], 2);
        assert_eq!(l["query_indices"], serde_json::json!([0, 16]));
    }
}

#[test]
fn quantiles_feed_opt() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let q = adawish(&["quantiles", "--gen", "grid:3x3:seed=1", "--out", curve.to_str().unwrap()]);
    assert!(q.status.success());
    let (h, rows) = csv_rows(&std::fs::read_to_string(&curve).unwrap());
    assert_eq!(rows.len(), 10);
    let m = gen_grid_ising(3, 3, 1.0, 1).unwrap();
    let top = (0..1u64 << 9).map(|x| m.log_weight_mask(x)).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(field(&h, &rows[0], "log_b").parse::<f64>().unwrap(), top);
    let o = adawish(&["opt", "--curve", curve.to_str().unwrap(), "--kappa", "4", "--method", "greedy"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(v["feasible"], true);
}

#[test]
fn bench_counts_never_exceed_wish() {
    let o = adawish(&["bench", "--suite", "grid:4x4:seeds=0..9", "--beta", "100", "--oracle", "exact"]);
    assert!(o.status.success());
    let (h, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let wish: u64 = field(&h, r, "wish_queries").parse().unwrap();
        let ada: u64 = field(&h, r, "adawish_queries").parse().unwrap();
        assert_eq!(wish, 17);
        assert!(ada <= wish);
    }
}

#[test]
fn gen_round_trips_through_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.uai");
    assert!(adawish(&["gen", "grid:2x3:w=0.7:seed=5", "-o", path.to_str().unwrap()]).status.success());
    assert!(Path::new(&path).exists());
    let a = adawish(&["estimate", "--model", path.to_str().unwrap(), "--format", "csv"]);
    let b = adawish(&["estimate", "--gen", "grid:2x3:w=0.7:seed=5", "--format", "csv"]);
    let (h, ra) = csv_rows(&stdout(&a));
    let (_, rb) = csv_rows(&stdout(&b));
    let ea: f64 = field(&h, &ra[0], "log10_w_exact").parse().unwrap();
    let eb: f64 = field(&h, &rb[0], "log10_w_exact").parse().unwrap();
    assert!((ea - eb).abs() < 1e-12);
}

#[test]
fn bad_generator_spec_exits_one() {
    let o = adawish(&["estimate", "--gen", "torus:3x3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_fast_passes() {
    let o = adawish(&["verify", "--level", "fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("[FAIL]"));
}
