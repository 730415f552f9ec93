//! UAI `MARKOV`/`BAYES` reader and writer restricted to binary variables.

use std::fmt::Write as _;

use super::{Factor, ModelError, WeightedModel};

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut last_line = 1;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            last_line = idx + 1;
            items.extend(line.split_whitespace().map(|t| (idx + 1, t)));
        }
        Self {
            items,
            pos: 0,
            last_line,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ModelError> {
        let tok = self.items.get(self.pos).copied().ok_or_else(|| ModelError::Parse {
            line: self.last_line,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn usize(&mut self, what: &str) -> Result<(usize, usize), ModelError> {
        let (line, tok) = self.next(what)?;
        tok.parse::<usize>()
            .map(|v| (line, v))
            .map_err(|_| ModelError::Parse {
                line,
                message: format!("expected {what}, found {tok:?}"),
            })
    }

    fn weight(&mut self) -> Result<f64, ModelError> {
        let (line, tok) = self.next("table entry")?;
        let v: f64 = tok.parse().map_err(|_| ModelError::Parse {
            line,
            message: format!("expected table entry, found {tok:?}"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(ModelError::Parse {
                line,
                message: format!("table entry {tok} is not a finite non-negative number"),
            });
        }
        Ok(v.ln())
    }
}

/// Parses UAI text. Entries are stored as natural logs, zero as `-inf`.
pub fn parse_uai(text: &str) -> Result<WeightedModel, ModelError> {
    let mut tokens = Tokens::new(text);
    let (line, header) = tokens.next("MARKOV or BAYES header")?;
    if header != "MARKOV" && header != "BAYES" {
        return Err(ModelError::Parse {
            line,
            message: format!("expected MARKOV or BAYES header, found {header:?}"),
        });
    }
    let (_, n) = tokens.usize("variable count")?;
    for variable in 0..n {
        let (line, tok) = tokens.next("cardinality")?;
        let cardinality: u64 = tok.parse().map_err(|_| ModelError::Parse {
            line,
            message: format!("expected cardinality, found {tok:?}"),
        })?;
        if cardinality != 2 {
            return Err(ModelError::UnsupportedCardinality {
                line,
                variable,
                cardinality,
            });
        }
    }
    let (_, num_factors) = tokens.usize("factor count")?;
    let mut scopes = Vec::with_capacity(num_factors);
    for _ in 0..num_factors {
        let (line, size) = tokens.usize("scope size")?;
        if size > 30 {
            return Err(ModelError::Parse {
                line,
                message: format!("scope size {size} is too large"),
            });
        }
        let mut scope = Vec::with_capacity(size);
        for _ in 0..size {
            let (line, v) = tokens.usize("scope variable")?;
            if v >= n {
                return Err(ModelError::Parse {
                    line,
                    message: format!("scope variable {v} out of range for {n} variables"),
                });
            }
            if scope.contains(&v) {
                return Err(ModelError::Parse {
                    line,
                    message: format!("scope variable {v} repeated"),
                });
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(num_factors);
    for scope in scopes {
        let (line, size) = tokens.usize("table size")?;
        let expected = 1usize << scope.len();
        if size != expected {
            return Err(ModelError::Parse {
                line,
                message: format!("table size {size} does not match scope of {} binary variables", scope.len()),
            });
        }
        let table = (0..size).map(|_| tokens.weight()).collect::<Result<Vec<_>, _>>()?;
        factors.push(Factor::new(scope, table));
    }
    if let Some(&(line, tok)) = tokens.items.get(tokens.pos) {
        return Err(ModelError::Parse {
            line,
            message: format!("trailing token {tok:?}"),
        });
    }
    WeightedModel::new("uai", n, factors)
}

/// Writes a model as UAI `MARKOV` text with linear-domain entries.
pub fn serialize_uai(model: &WeightedModel) -> String {
    let mut out = String::new();
    let n = model.n();
    let _ = writeln!(out, "MARKOV");
    let _ = writeln!(out, "{n}");
    let _ = writeln!(out, "{}", vec!["2"; n].join(" "));
    let _ = writeln!(out, "{}", model.factors().len());
    for f in model.factors() {
        let mut line = f.scope().len().to_string();
        for v in f.scope() {
            let _ = write!(line, " {v}");
        }
        let _ = writeln!(out, "{line}");
    }
    for f in model.factors() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", f.table().len());
        let entries: Vec<String> = f.table().iter().map(|x| format!("{:?}", x.exp())).collect();
        let _ = writeln!(out, "{}", entries.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_clique_ising, gen_grid_ising};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FIXTURE: &str = "MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 3 4\n";

    #[test]
    fn golden_fixture() {
        let m = parse_uai(FIXTURE).unwrap();
        // mask bit 0 is variable 0; the last scope variable varies fastest
        let w = |x0: bool, x1: bool| m.log_weight(&[x0, x1]).unwrap().exp();
        assert!((w(false, false) - 1.0).abs() < 1e-12);
        assert!((w(false, true) - 2.0).abs() < 1e-12);
        assert!((w(true, false) - 3.0).abs() < 1e-12);
        assert!((w(true, true) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn comments_and_bayes_header() {
        let text = "# a comment\nBAYES # trailing\n1\n2\n1\n1 0\n2\n0.25 0\n";
        let m = parse_uai(text).unwrap();
        assert_eq!(m.log_weight(&[true]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn non_binary_cardinality() {
        let err = parse_uai("MARKOV\n2\n2 3\n0\n").unwrap_err();
        assert_eq!(
            err,
            ModelError::UnsupportedCardinality {
                line: 3,
                variable: 1,
                cardinality: 3
            }
        );
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let cases = [
            ("MARKOW\n1\n2\n0\n", 1),
            ("MARKOV\nx\n", 2),
            ("MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 -3 4\n", 7),
            ("MARKOV\n2\n2 2\n1\n2 0 5\n4\n1 2 3 4\n", 5),
            ("MARKOV\n2\n2 2\n1\n2 0 1\n3\n1 2 3\n", 6),
            ("MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 3\n", 7),
            ("MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 3 4\n9\n", 8),
        ];
        for (text, expected) in cases {
            match parse_uai(text) {
                Err(ModelError::Parse { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn grid_round_trip() {
        let m = gen_grid_ising(4, 4, 1.0, 3).unwrap();
        let back = parse_uai(&serialize_uai(&m)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let mask = rng.gen::<u64>() & 0xffff;
            let (a, b) = (m.log_weight_mask(mask), back.log_weight_mask(mask));
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn clique_round_trip_is_exact_on_tables() {
        let m = gen_clique_ising(6, 0.1, 1).unwrap();
        let back = parse_uai(&serialize_uai(&m)).unwrap();
        for (f, g) in m.factors().iter().zip(back.factors()) {
            assert_eq!(f.scope(), g.scope());
            for (x, y) in f.table().iter().zip(g.table()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
