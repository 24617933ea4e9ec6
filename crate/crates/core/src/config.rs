//! Pipeline configuration as flat `key=value` text.
//!
//! ```text
//! # comments start with '#'
//! codebook_k = 100
//! nmf_rank = 30
//! sigma_mode = auto        # or fixed:0.25
//! ```
//!
//! Unknown keys are rejected. Missing keys keep their defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::context::SigmaMode;
use crate::error::{Error, Result};

/// Which coefficient vectors represent the database images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatabaseCoefficients {
    /// Each training histogram projected onto the learned basis exactly
    /// like a query, so queries and database share one representation.
    #[default]
    Projected,
    /// Columns of `H` from the factorization itself.
    Trained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub codebook_k: usize,
    pub kmeans_max_iters: usize,
    pub nmf_rank: usize,
    pub nmf_max_iters: usize,
    pub nmf_tol: f64,
    pub database_coefficients: DatabaseCoefficients,
    pub graph_k: usize,
    pub transduce_iters: usize,
    pub sigma_mode: SigmaMode,
    pub folds: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            stride: 4,
            codebook_k: 200,
            kmeans_max_iters: 100,
            nmf_rank: 50,
            nmf_max_iters: 200,
            nmf_tol: 1e-6,
            database_coefficients: DatabaseCoefficients::Projected,
            graph_k: 10,
            transduce_iters: 20,
            sigma_mode: SigmaMode::Auto,
            folds: 10,
            seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::BadConfig(format!("cannot parse {key} = {value:?}")))
}

fn parse_sigma(value: &str) -> Result<SigmaMode> {
    if value == "auto" {
        return Ok(SigmaMode::Auto);
    }
    value
        .strip_prefix("fixed:")
        .and_then(|s| s.trim().parse::<f64>().ok())
        .map(SigmaMode::Fixed)
        .ok_or_else(|| {
            Error::BadConfig(format!("sigma_mode must be auto or fixed:<sigma>, got {value:?}"))
        })
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::BadConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "patch_size" => cfg.patch_size = parse_value(key, value)?,
                "stride" => cfg.stride = parse_value(key, value)?,
                "codebook_k" => cfg.codebook_k = parse_value(key, value)?,
                "kmeans_max_iters" => cfg.kmeans_max_iters = parse_value(key, value)?,
                "nmf_rank" => cfg.nmf_rank = parse_value(key, value)?,
                "nmf_max_iters" => cfg.nmf_max_iters = parse_value(key, value)?,
                "nmf_tol" => cfg.nmf_tol = parse_value(key, value)?,
                "database_coefficients" => {
                    cfg.database_coefficients = match value {
                        "projected" => DatabaseCoefficients::Projected,
                        "trained" => DatabaseCoefficients::Trained,
                        _ => {
                            return Err(Error::BadConfig(format!(
                                "database_coefficients must be projected or trained, got {value:?}"
                            )))
                        }
                    }
                }
                "graph_k" => cfg.graph_k = parse_value(key, value)?,
                "transduce_iters" => cfg.transduce_iters = parse_value(key, value)?,
                "sigma_mode" => cfg.sigma_mode = parse_sigma(value)?,
                "folds" => cfg.folds = parse_value(key, value)?,
                "seed" => cfg.seed = parse_value(key, value)?,
                _ => return Err(Error::BadConfig(format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("patch_size", self.patch_size),
            ("stride", self.stride),
            ("codebook_k", self.codebook_k),
            ("kmeans_max_iters", self.kmeans_max_iters),
            ("nmf_rank", self.nmf_rank),
            ("nmf_max_iters", self.nmf_max_iters),
            ("graph_k", self.graph_k),
            ("transduce_iters", self.transduce_iters),
            ("folds", self.folds),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::BadConfig(format!("{name} must be positive")));
        }
        if self.nmf_rank > self.codebook_k {
            return Err(Error::BadConfig(format!(
                "nmf_rank {} exceeds codebook_k {}",
                self.nmf_rank, self.codebook_k
            )));
        }
        if self.folds < 2 {
            return Err(Error::BadConfig("folds must be at least 2".into()));
        }
        if !(self.nmf_tol.is_finite() && self.nmf_tol > 0.0) {
            return Err(Error::BadConfig("nmf_tol must be a positive number".into()));
        }
        if let SigmaMode::Fixed(s) = self.sigma_mode {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::BadConfig("fixed sigma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Writes every key, in a form [`PipelineConfig::parse`] reads back
/// exactly.
impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patch_size={}", self.patch_size)?;
        writeln!(f, "stride={}", self.stride)?;
        writeln!(f, "codebook_k={}", self.codebook_k)?;
        writeln!(f, "kmeans_max_iters={}", self.kmeans_max_iters)?;
        writeln!(f, "nmf_rank={}", self.nmf_rank)?;
        writeln!(f, "nmf_max_iters={}", self.nmf_max_iters)?;
        writeln!(f, "nmf_tol={:e}", self.nmf_tol)?;
        let db = match self.database_coefficients {
            DatabaseCoefficients::Projected => "projected",
            DatabaseCoefficients::Trained => "trained",
        };
        writeln!(f, "database_coefficients={db}")?;
        writeln!(f, "graph_k={}", self.graph_k)?;
        writeln!(f, "transduce_iters={}", self.transduce_iters)?;
        match self.sigma_mode {
            SigmaMode::Auto => writeln!(f, "sigma_mode=auto")?,
            SigmaMode::Fixed(s) => writeln!(f, "sigma_mode=fixed:{s:e}")?,
        }
        writeln!(f, "folds={}", self.folds)?;
        writeln!(f, "seed={}", self.seed)
    }
}
