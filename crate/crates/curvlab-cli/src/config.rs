//! TOML run configuration and its merge with command-line flags.
//!
//! A config file has optional top-level keys `pipeline`, `out`, `data`,
//! `seed`, `grid` and `tol`, and one table per subcommand holding the same
//! keys as that subcommand's flags (with `_` for `-`):
//!
//! ```toml
//! pipeline = "compare"
//! seed = 7
//!
//! [compare]
//! k = "piecewise(1; 1; 0)"
//! horizon = 50
//! ```
//!
//! Flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use curvlab::genfun::Grid;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const PIPELINES: [&str; 9] = ["metric", "curvature", "volume", "compare", "three_circle", "dims", "planar", "zoo", "sweep"];
const TOP_LEVEL: [&str; 6] = ["pipeline", "out", "data", "seed", "grid", "tol"];

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    pub pipeline: Option<String>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub tol: Option<f64>,
    sections: toml::Table,
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("config key `{key}`: {msg}")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut cfg = ConfigFile::default();
        for (k, v) in table {
            match k.as_str() {
                "pipeline" => {
                    let p = v.as_str().ok_or_else(|| key_err(&k, "expected a string"))?;
                    if !PIPELINES.contains(&p) {
                        return Err(key_err(&k, format!("unknown pipeline `{p}`; expected one of {}", PIPELINES.join(", "))));
                    }
                    cfg.pipeline = Some(p.to_string());
                }
                "out" | "data" => {
                    let p = PathBuf::from(v.as_str().ok_or_else(|| key_err(&k, "expected a path string"))?);
                    if k == "out" {
                        cfg.out = Some(p);
                    } else {
                        cfg.data = Some(p);
                    }
                }
                "seed" => {
                    let s = v.as_integer().filter(|s| *s >= 0).ok_or_else(|| key_err(&k, "expected a nonnegative integer"))?;
                    cfg.seed = Some(s as u64);
                }
                "grid" => cfg.grid = Some(v.as_str().ok_or_else(|| key_err(&k, "expected \"lo:hi:n\""))?.to_string()),
                "tol" => {
                    let t = v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
                    cfg.tol = Some(t.ok_or_else(|| key_err(&k, "expected a number"))?);
                }
                name if PIPELINES.contains(&name) => {
                    if !v.is_table() {
                        return Err(key_err(&k, "expected a table"));
                    }
                    cfg.sections.insert(k, v);
                }
                _ => {
                    return Err(key_err(
                        &k,
                        format!("unknown key; expected one of {} or a pipeline table", TOP_LEVEL.join(", ")),
                    ))
                }
            }
        }
        Ok(cfg)
    }

    pub fn section(&self, name: &str) -> Option<&toml::Table> {
        self.sections.get(name).and_then(|v| v.as_table())
    }
}

/// Fill the unset fields of `cli` from the `[section]` table. Each config key
/// is checked on its own so an error names the offending key.
pub fn merge<T: Serialize + DeserializeOwned + Default>(cli: &T, section: Option<&toml::Table>, name: &str) -> Result<T> {
    let mut merged = serde_json::to_value(cli)?;
    let Some(table) = section else { return Ok(serde_json::from_value(merged)?) };
    let template = serde_json::to_value(T::default())?;
    let known: Vec<&String> = template.as_object().map(|o| o.keys().collect()).unwrap_or_default();
    let obj = merged.as_object_mut().expect("argument structs serialize to objects");
    for (k, v) in table {
        let path = format!("{name}.{k}");
        if !known.contains(&k) {
            let list: Vec<&str> = known.iter().map(|s| s.as_str()).collect();
            return Err(key_err(&path, format!("unknown key; expected one of {}", list.join(", "))));
        }
        let jv = serde_json::to_value(v).map_err(|e| key_err(&path, e))?;
        let mut probe = template.clone();
        probe.as_object_mut().expect("object").insert(k.clone(), jv.clone());
        serde_json::from_value::<T>(probe).map_err(|e| key_err(&path, e))?;
        if obj.get(k).map_or(true, Value::is_null) {
            obj.insert(k.clone(), jv);
        }
    }
    Ok(serde_json::from_value(merged)?)
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Globals {
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub grid: Option<Grid>,
    pub tol: Option<f64>,
}

impl Globals {
    pub fn grid_str(&self) -> Option<String> {
        self.grid.map(|g| format!("{:?}:{:?}:{}", g.lo, g.hi, g.n))
    }

    /// Worker pool capped by `CURVLAB_THREADS`.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Ok(v) = std::env::var("CURVLAB_THREADS") {
            let n: usize = v.trim().parse().map_err(|_| anyhow!("CURVLAB_THREADS must be a positive integer, got `{v}`"))?;
            if n == 0 {
                bail!("CURVLAB_THREADS must be a positive integer, got `{v}`");
            }
            b = b.num_threads(n);
        }
        Ok(b.build()?)
    }
}

pub fn parse_grid(s: &str, key: &str) -> Result<Grid> {
    s.parse::<Grid>().map_err(|e| anyhow!("{key}: {e}"))
}

pub fn check_tol(t: f64, key: &str) -> Result<f64> {
    if !(t > 0.0 && t < 1e-2) {
        bail!("{key}: tolerance must lie in (0, 1e-2), got {t}");
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Default, Debug, PartialEq)]
    struct A {
        k: Option<String>,
        horizon: Option<f64>,
    }

    #[test]
    fn cli_wins_and_config_fills() {
        let cfg = ConfigFile::parse("seed = 3\n[compare]\nk = \"1\"\nhorizon = 5.0\n").unwrap();
        let cli = A { k: Some("2".into()), horizon: None };
        let m = merge(&cli, cfg.section("compare"), "compare").unwrap();
        assert_eq!(m, A { k: Some("2".into()), horizon: Some(5.0) });
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn errors_name_the_key() {
        let cfg = ConfigFile::parse("[compare]\nhorizon = \"far\"\n").unwrap();
        let e = merge(&A::default(), cfg.section("compare"), "compare").unwrap_err().to_string();
        assert!(e.contains("compare.horizon"), "{e}");
        let cfg = ConfigFile::parse("[compare]\nhorizn = 1.0\n").unwrap();
        let e = merge(&A::default(), cfg.section("compare"), "compare").unwrap_err().to_string();
        assert!(e.contains("compare.horizn"), "{e}");
        let e = ConfigFile::parse("colour = 1\n").unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
        let e = ConfigFile::parse("pipeline = \"nope\"\n").unwrap_err().to_string();
        assert!(e.contains("pipeline"), "{e}");
    }
}
