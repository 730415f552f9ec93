//! Colon-delimited generator specs such as `grid:3x3:w=0.5:seed=2`.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use adawish::model::{
    gen_clique_ising, gen_grid_ising, gen_random_factors, WeightedModel, DEFAULT_CLIQUE_COUPLING,
    DEFAULT_GRID_COUPLING,
};
use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Grid { rows: usize, cols: usize },
    Clique { n: usize },
    Random { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub family: Family,
    pub params: BTreeMap<String, String>,
}

impl GenSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let kind = parts.next().unwrap_or_default();
        let size = parts
            .next()
            .with_context(|| format!("generator spec `{text}` is missing its size field"))?;
        let family = match kind {
            "grid" => {
                let (r, c) = size
                    .split_once('x')
                    .with_context(|| format!("grid size must look like RxC, got `{size}`"))?;
                Family::Grid {
                    rows: parse_num(r, "grid rows")?,
                    cols: parse_num(c, "grid columns")?,
                }
            }
            "clique" => Family::Clique {
                n: parse_num(size, "clique size")?,
            },
            "random" => Family::Random {
                n: parse_num(size, "variable count")?,
            },
            other => bail!("unknown generator `{other}` (expected grid, clique or random)"),
        };
        let mut params = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .with_context(|| format!("spec field `{p}` must be key=value"))?;
            let allowed: &[&str] = match family {
                Family::Random { .. } => &["factors", "arity", "seed", "seeds"],
                _ => &["w", "seed", "seeds"],
            };
            if !allowed.contains(&k) {
                bail!("unknown field `{k}` for {kind} (allowed: {})", allowed.join(", "));
            }
            params.insert(k.to_string(), v.to_string());
        }
        Ok(Self { family, params })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.params.get(key) {
            Some(v) => v.parse().ok().with_context(|| format!("bad value `{v}` for `{key}`")),
            None => Ok(default),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed", 0)
    }

    /// Inclusive seed range from `seeds=a..b`, or the single `seed`.
    pub fn seeds(&self) -> Result<RangeInclusive<u64>> {
        match self.params.get("seeds") {
            Some(v) => {
                let (a, b) = v
                    .split_once("..")
                    .with_context(|| format!("seeds must look like a..b, got `{v}`"))?;
                let (a, b) = (parse_num(a, "seed")?, parse_num(b, "seed")?);
                if a > b {
                    bail!("empty seed range {a}..{b}");
                }
                Ok(a..=b)
            }
            None => {
                let s = self.seed()?;
                Ok(s..=s)
            }
        }
    }

    /// The same spec pinned to one seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.params.remove("seeds");
        out.params.insert("seed".into(), seed.to_string());
        out
    }

    /// Canonical text with every parameter spelled out.
    pub fn canonical(&self) -> Result<String> {
        Ok(match self.family {
            Family::Grid { rows, cols } => format!(
                "grid:{rows}x{cols}:w={}:seed={}",
                self.get("w", DEFAULT_GRID_COUPLING)?,
                self.seed()?
            ),
            Family::Clique { n } => format!(
                "clique:{n}:w={}:seed={}",
                self.get("w", DEFAULT_CLIQUE_COUPLING)?,
                self.seed()?
            ),
            Family::Random { n } => format!(
                "random:{n}:factors={}:arity={}:seed={}",
                self.get("factors", 2 * n)?,
                self.get("arity", 3usize)?,
                self.seed()?
            ),
        })
    }

    pub fn build(&self) -> Result<WeightedModel> {
        let seed = self.seed()?;
        let model = match self.family {
            Family::Grid { rows, cols } => gen_grid_ising(rows, cols, self.get("w", DEFAULT_GRID_COUPLING)?, seed)?,
            Family::Clique { n } => gen_clique_ising(n, self.get("w", DEFAULT_CLIQUE_COUPLING)?, seed)?,
            Family::Random { n } => gen_random_factors(n, self.get("factors", 2 * n)?, self.get("arity", 3)?, seed)?,
        };
        Ok(model.with_name(self.canonical()?))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().ok().with_context(|| format!("bad {what} `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid() {
        let s = GenSpec::parse("grid:3x4:w=0.5:seed=2").unwrap();
        assert_eq!(s.family, Family::Grid { rows: 3, cols: 4 });
        assert_eq!(s.seed().unwrap(), 2);
        assert_eq!(s.build().unwrap().n(), 12);
        assert_eq!(s.canonical().unwrap(), "grid:3x4:w=0.5:seed=2");
    }

    #[test]
    fn defaults_fill_in() {
        let s = GenSpec::parse("clique:6").unwrap();
        assert_eq!(s.canonical().unwrap(), "clique:6:w=0.1:seed=0");
        let r = GenSpec::parse("random:5").unwrap();
        assert_eq!(r.canonical().unwrap(), "random:5:factors=10:arity=3:seed=0");
    }

    #[test]
    fn seed_ranges_are_inclusive() {
        let s = GenSpec::parse("grid:4x4:seeds=0..9").unwrap();
        assert_eq!(s.seeds().unwrap().count(), 10);
        assert_eq!(s.with_seed(3).canonical().unwrap(), "grid:4x4:w=1:seed=3");
        assert!(GenSpec::parse("grid:4x4:seeds=5..1").unwrap().seeds().is_err());
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["grid", "grid:3", "torus:3x3", "grid:3x3:q=1", "clique:x", "grid:3x3:w"] {
            assert!(GenSpec::parse(bad).is_err(), "{bad}");
        }
        assert!(GenSpec::parse("grid:3x3:w=abc").unwrap().build().is_err());
    }
}
