//! Run reports and their CSV form.

use std::io::Write;

use adawish::estimator::Guarantee;
use anyhow::Result;

/// Float format used in every CSV: 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_int<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub instance: String,
    pub n: usize,
    pub schedule: &'static str,
    pub oracle: &'static str,
    pub beta: Option<f64>,
    pub c: Option<usize>,
    pub repetitions: Option<usize>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub log10_w_estimate: f64,
    pub log10_w_exact: Option<f64>,
    pub distinct_queries: u64,
    pub map_calls: u64,
    pub wall_time_s: f64,
    pub guarantee: Guarantee,
}

impl RunReport {
    pub const HEADER: [&'static str; 19] = [
        "instance",
        "n",
        "schedule",
        "oracle",
        "beta",
        "c",
        "repetitions",
        "delta",
        "gamma",
        "seed",
        "log10_w_estimate",
        "log10_w_exact",
        "log10_error",
        "distinct_queries",
        "map_calls",
        "wall_time_s",
        "guarantee",
        "kappa",
        "failure_prob",
    ];

    pub fn log10_error(&self) -> Option<f64> {
        self.log10_w_exact.map(|e| (self.log10_w_estimate - e).abs())
    }

    fn guarantee_fields(&self) -> (&'static str, Option<f64>, Option<f64>) {
        match self.guarantee {
            Guarantee::Proven { kappa, delta } => ("proven", Some(kappa), Some(delta)),
            Guarantee::Heuristic => ("heuristic", None, None),
        }
    }

    pub fn record(&self) -> Vec<String> {
        let (tag, kappa, fail) = self.guarantee_fields();
        vec![
            self.instance.clone(),
            self.n.to_string(),
            self.schedule.into(),
            self.oracle.into(),
            opt_f64(self.beta),
            opt_int(self.c),
            opt_int(self.repetitions),
            opt_f64(self.delta),
            opt_f64(self.gamma),
            self.seed.to_string(),
            fmt_f64(self.log10_w_estimate),
            opt_f64(self.log10_w_exact),
            opt_f64(self.log10_error()),
            self.distinct_queries.to_string(),
            self.map_calls.to_string(),
            fmt_f64(self.wall_time_s),
            tag.into(),
            opt_f64(kappa),
            opt_f64(fail),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        w.write_record(self.record())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in Self::HEADER.iter().zip(self.record()) {
            if !v.is_empty() {
                writeln!(out, "{k:<17} {v}")?;
            }
        }
        Ok(())
    }
}
