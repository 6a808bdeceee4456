//! Flat-key JSON config loading with flag-over-file precedence and
//! unknown-key rejection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub enum AppError {
    /// Bad flags, bad config file, invalid parameter combinations: exit 2.
    Config(String),
    /// Verification or runtime failure: exit 1.
    Failure(String),
}

pub struct Resolver {
    values: BTreeMap<String, serde_json::Value>,
    used: std::collections::BTreeSet<String>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, AppError> {
        let values = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    AppError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                    AppError::Config(format!("config {} is not valid JSON: {e}", p.display()))
                })?;
                match parsed {
                    serde_json::Value::Object(map) => map.into_iter().collect(),
                    _ => {
                        return Err(AppError::Config(format!(
                            "config {} must be a flat JSON object",
                            p.display()
                        )))
                    }
                }
            }
        };
        Ok(Self {
            values,
            used: Default::default(),
        })
    }

    fn take(&mut self, key: &str) -> Option<&serde_json::Value> {
        self.used.insert(key.to_string());
        self.values.get(key)
    }

    pub fn string(&mut self, key: &str, flag: Option<String>) -> Result<Option<String>, AppError> {
        if flag.is_some() {
            self.used.insert(key.to_string());
            return Ok(flag);
        }
        match self.take(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Ok(Some(other.to_string())),
        }
    }

    pub fn usize(&mut self, key: &str, flag: Option<usize>) -> Result<Option<usize>, AppError> {
        if flag.is_some() {
            self.used.insert(key.to_string());
            return Ok(flag);
        }
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|u| Some(u as usize))
                .ok_or_else(|| AppError::Config(format!("`{key}` must be a nonnegative integer"))),
        }
    }

    pub fn u64(&mut self, key: &str, flag: Option<u64>) -> Result<Option<u64>, AppError> {
        if flag.is_some() {
            self.used.insert(key.to_string());
            return Ok(flag);
        }
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| AppError::Config(format!("`{key}` must be a nonnegative integer"))),
        }
    }

    pub fn f64(&mut self, key: &str, flag: Option<f64>) -> Result<Option<f64>, AppError> {
        if flag.is_some() {
            self.used.insert(key.to_string());
            return Ok(flag);
        }
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| AppError::Config(format!("`{key}` must be a number"))),
        }
    }

    pub fn flag(&mut self, key: &str) -> Result<bool, AppError> {
        match self.take(key) {
            None => Ok(false),
            Some(v) => v
                .as_bool()
                .ok_or_else(|| AppError::Config(format!("`{key}` must be a boolean"))),
        }
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, AppError> {
        Ok(self
            .string(key, flag.map(|p| p.display().to_string()))?
            .map(PathBuf::from))
    }

    /// The seed resolution chain: flag, config, env SEQBALANCE_SEED, 0.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64, AppError> {
        if let Some(s) = self.u64("seed", flag)? {
            return Ok(s);
        }
        match std::env::var("SEQBALANCE_SEED") {
            Ok(s) => s
                .parse()
                .map_err(|_| AppError::Config(format!("SEQBALANCE_SEED=`{s}` is not a number"))),
            Err(_) => Ok(0),
        }
    }

    /// Rejects config keys that no parameter consumed.
    pub fn finish(&mut self) -> Result<(), AppError> {
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(AppError::Config(format!(
                "unknown config keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

impl super::DesignKind {
    pub fn key(self) -> &'static str {
        match self {
            super::DesignKind::Crd => "crd",
            super::DesignKind::Pigeonhole => "pigeonhole",
            super::DesignKind::Single => "single",
            super::DesignKind::Matchedpair => "matchedpair",
        }
    }
}

impl super::PartitionKind {
    pub fn key(self) -> &'static str {
        match self {
            super::PartitionKind::Uniform1d => "uniform1d",
            super::PartitionKind::Grid => "grid",
            super::PartitionKind::Natural => "natural",
            super::PartitionKind::Mixed => "mixed",
            super::PartitionKind::Clustered => "clustered",
            super::PartitionKind::Single => "single",
            super::PartitionKind::Cells => "cells",
        }
    }
}

impl super::InstanceKind {
    pub fn key(self) -> &'static str {
        match self {
            super::InstanceKind::Halfzero => "halfzero",
            super::InstanceKind::Grid => "grid",
            super::InstanceKind::Alternating => "alternating",
            super::InstanceKind::Uniform => "uniform",
            super::InstanceKind::DiscreteUniform => "discrete-uniform",
            super::InstanceKind::Clustered => "clustered",
        }
    }
}
