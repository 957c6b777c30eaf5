//! Run settings shared by the subcommands.

use anyhow::{bail, Context, Result};
use coop_pliable::{FoldSpec, Method, PrepareOptions, RhoGrid, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::io::IngestOptions;

pub const WORKERS_ENV: &str = "COOPLIABLE_WORKERS";

/// Everything that determines a fit, recorded next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub solver: SolverConfig,
    pub rho_grid: Vec<f64>,
    pub folds: FoldSpec,
    pub prepare: PrepareOptions,
    pub ingest: IngestOptions,
    pub seed: u64,
}

/// `a..b` (inclusive integers), a comma list, or a single value.
pub fn parse_rho_grid(text: &str) -> Result<RhoGrid> {
    let text = text.trim();
    let values: Vec<f64> = if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().with_context(|| format!("bad range start in '{text}'"))?;
        let b: u32 = b.trim().parse().with_context(|| format!("bad range end in '{text}'"))?;
        if b < a {
            bail!("empty range '{text}'");
        }
        (a..=b).map(f64::from).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad rho value '{s}'")))
            .collect::<Result<_>>()?
    };
    Ok(RhoGrid::new(values)?)
}

/// Comma-separated method names, or `all`.
pub fn parse_methods(text: &str) -> Result<Vec<Method>> {
    if text.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in text.split(',') {
        let m: Method = name.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no methods given");
    }
    Ok(out)
}

/// Worker count from the environment; `None` leaves the pool default.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}='{v}' is not a count"))?;
            if n == 0 {
                bail!("{WORKERS_ENV} must be at least 1");
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{WORKERS_ENV}: {e}"),
    }
}

/// Runs `f` inside a pool sized by the environment.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers_from_env()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker pool")?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_rho_grid("0..9").unwrap().values().len(), 10);
        assert_eq!(parse_rho_grid("0").unwrap().values(), &[0.0]);
        assert_eq!(parse_rho_grid("0, 0.5,2").unwrap().values(), &[0.0, 0.5, 2.0]);
        assert!(parse_rho_grid("3..1").is_err());
        assert!(parse_rho_grid("1,0").is_err());
        assert!(parse_rho_grid("a..b").is_err());
    }

    #[test]
    fn methods() {
        assert_eq!(parse_methods("all").unwrap().len(), 6);
        assert_eq!(parse_methods("coop,early,coop").unwrap(), vec![Method::Coop, Method::Early]);
        assert!(parse_methods("ridge").is_err());
    }
}
