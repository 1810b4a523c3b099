//! Service configuration: a JSON file, then environment overrides.
//!
//! | variable              | field            |
//! |-----------------------|------------------|
//! | `HMST_LISTEN`         | `listen`         |
//! | `HMST_DATA_DIR`       | `data_dir`       |
//! | `HMST_STALENESS_SECS` | `staleness_secs` |
//! | `HMST_QUAD_ORDER`     | `quadrature_order` |

use std::path::{Path, PathBuf};

use hybrid_mst::quadrature::{DEFAULT_ORDER, MAX_ORDER};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const DEFAULT_STALENESS_SECS: u64 = 60;

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_staleness() -> u64 {
    DEFAULT_STALENESS_SECS
}
fn default_order() -> usize {
    DEFAULT_ORDER
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Socket address to bind (default `127.0.0.1:8080`).
    #[serde(default = "default_listen")]
    pub listen: String,
    /// One sub-directory per experiment is kept here (default `data`).
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// In spanning-tree mode, refit once the current batch is this old even
    /// if some of its pairs are still unvoted (default 60).
    #[serde(default = "default_staleness")]
    pub staleness_secs: u64,
    /// Default Gauss-Hermite order for new experiments (default 30).
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    /// Accept votes on pairs that were never handed out (default false).
    #[serde(default)]
    pub free_voting: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            data_dir: default_data_dir(),
            staleness_secs: default_staleness(),
            quadrature_order: default_order(),
            free_voting: false,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (defaults when `None`), then applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| ServiceError::invalid(format!("config {}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        base.with_env(std::env::vars())
    }

    /// Applies `HMST_*` overrides from `vars` and validates the result.
    pub fn with_env(mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        for (key, value) in vars {
            let parse_err = |e: std::num::ParseIntError| ServiceError::invalid(format!("{key}={value:?}: {e}"));
            match key.as_str() {
                "HMST_LISTEN" => self.listen = value.clone(),
                "HMST_DATA_DIR" => self.data_dir = PathBuf::from(&value),
                "HMST_STALENESS_SECS" => self.staleness_secs = value.parse().map_err(parse_err)?,
                "HMST_QUAD_ORDER" => self.quadrature_order = value.parse().map_err(parse_err)?,
                _ => {}
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.quadrature_order) {
            return Err(ServiceError::invalid(format!(
                "quadrature_order must be in 1..={MAX_ORDER}, got {}",
                self.quadrature_order
            )));
        }
        if self.listen.is_empty() {
            return Err(ServiceError::invalid("listen address is empty"));
        }
        Ok(())
    }
}
