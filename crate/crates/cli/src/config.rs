//! `key = value` run configuration.
//!
//! Resolution order is defaults, then the config file, then command-line
//! flags. Relative paths in a file are resolved against the file's directory.
//! The resolved configuration renders back to the same format, and every
//! command that writes an output directory stores it there as `config.txt`.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use treeconv::training::{SweepGrid, TrainConfig};
use treeconv::DEFAULT_WINDOW;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// The tree-structured network.
    Tsc,
    Knn,
    Dt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tsc => "tsc",
            Method::Knn => "knn",
            Method::Dt => "dt",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsc" => Ok(Method::Tsc),
            "knn" => Ok(Method::Knn),
            "dt" => Ok(Method::Dt),
            other => Err(format!("unknown method {other:?} (expected tsc, knn or dt)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub k: usize,
    /// Batch size.
    pub alpha: usize,
    /// L2 weight.
    pub beta: f64,
    /// Learning rate.
    pub gamma: f64,
    pub epochs: usize,
    pub method: Method,
    pub split_ratio: f64,
    /// Sensor value kept as an event.
    pub value: String,
    pub neighbors: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub cv: Option<usize>,
    pub probes: usize,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data: None,
            out: None,
            checkpoint: None,
            seed: train.seed,
            k: DEFAULT_WINDOW,
            alpha: train.batch_size,
            beta: train.l2_weight,
            gamma: train.learning_rate,
            epochs: train.epochs,
            method: Method::Tsc,
            split_ratio: 0.7,
            value: "ON".into(),
            neighbors: treeconv::baselines::DEFAULT_NEIGHBORS,
            max_depth: None,
            min_leaf: 1,
            cv: None,
            probes: 100,
            sweep: SweepGrid::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>, String> = value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err(format!("{key} needs at least one value")),
        Err(e) => Err(e),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "data",
        "out",
        "checkpoint",
        "seed",
        "k",
        "alpha",
        "beta",
        "gamma",
        "epochs",
        "method",
        "split_ratio",
        "value",
        "neighbors",
        "max_depth",
        "min_leaf",
        "cv",
        "probes",
        "sweep_alpha",
        "sweep_beta",
        "sweep_gamma",
        "sweep_epochs",
    ];

    /// Sets one key; relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let value = value.trim();
        let path = || {
            let p = PathBuf::from(value);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        match key {
            "data" => self.data = Some(path()),
            "out" => self.out = Some(path()),
            "checkpoint" => self.checkpoint = Some(path()),
            "seed" => self.seed = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "method" => self.method = parse(key, value)?,
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "value" => self.value = value.to_string(),
            "neighbors" => self.neighbors = parse(key, value)?,
            "max_depth" => self.max_depth = optional(key, value)?,
            "min_leaf" => self.min_leaf = parse(key, value)?,
            "cv" => self.cv = optional(key, value)?,
            "probes" => self.probes = parse(key, value)?,
            "sweep_alpha" => self.sweep.batch_sizes = parse_list(key, value)?,
            "sweep_beta" => self.sweep.l2_weights = parse_list(key, value)?,
            "sweep_gamma" => self.sweep.learning_rates = parse_list(key, value)?,
            "sweep_epochs" => self.sweep.tuning_epochs = parse(key, value)?,
            other => {
                return Err(format!(
                    "unknown key {other:?}; known keys: {}",
                    Self::KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Applies a config file's lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, base: &Path, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{origin}:{}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value, base)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_text(&text, base, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(msg.to_string()))
            }
        };
        check(self.k >= 2, "k must be at least 2")?;
        check(self.alpha >= 1, "alpha (batch size) must be at least 1")?;
        check(self.beta >= 0.0 && self.beta.is_finite(), "beta must be a finite non-negative number")?;
        check(self.gamma > 0.0 && self.gamma.is_finite(), "gamma must be a finite positive number")?;
        check(
            self.split_ratio > 0.0 && self.split_ratio < 1.0,
            "split_ratio must lie strictly between 0 and 1",
        )?;
        check(self.neighbors >= 1, "neighbors must be at least 1")?;
        check(self.min_leaf >= 1, "min_leaf must be at least 1")?;
        check(self.cv.is_none_or(|n| n >= 2), "cv needs at least 2 folds")?;
        check(self.probes >= 1, "probes must be at least 1")?;
        check(!self.value.is_empty(), "value must not be empty")?;
        check(
            self.sweep.batch_sizes.iter().all(|&a| a >= 1),
            "sweep_alpha entries must be at least 1",
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.alpha,
            l2_weight: self.beta,
            learning_rate: self.gamma,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// Renders every key so the output parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        for (key, p) in [("data", &self.data), ("out", &self.out), ("checkpoint", &self.checkpoint)] {
            if let Some(p) = p {
                line(key, p.display().to_string());
            }
        }
        line("seed", self.seed.to_string());
        line("k", self.k.to_string());
        line("alpha", self.alpha.to_string());
        line("beta", self.beta.to_string());
        line("gamma", self.gamma.to_string());
        line("epochs", self.epochs.to_string());
        line("method", self.method.name().into());
        line("split_ratio", self.split_ratio.to_string());
        line("value", self.value.clone());
        line("neighbors", self.neighbors.to_string());
        line("max_depth", self.max_depth.map_or("none".into(), |d| d.to_string()));
        line("min_leaf", self.min_leaf.to_string());
        line("cv", self.cv.map_or("none".into(), |n| n.to_string()));
        line("probes", self.probes.to_string());
        line("sweep_alpha", join(&self.sweep.batch_sizes));
        line("sweep_beta", join(&self.sweep.l2_weights));
        line("sweep_gamma", join(&self.sweep.learning_rates));
        line("sweep_epochs", self.sweep.tuning_epochs.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!((c.k, c.alpha, c.epochs), (8, 128, 25));
        assert_eq!((c.beta, c.gamma, c.split_ratio), (0.0004, 0.0002, 0.7));
        assert_eq!(c.sweep.points().len(), 75);
    }

    #[test]
    fn text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# tuned\nseed = 9\nk=5\nbeta = 0.001 # note\nmethod = dt\nmax_depth = 12\n\
             sweep_alpha = 32, 64\ndata = /abs/corpus\ncv = 10\n",
            Path::new("/cfg"),
            "run.cfg",
        )
        .unwrap();
        assert_eq!((c.seed, c.k, c.beta), (9, 5, 0.001));
        assert_eq!(c.method, Method::Dt);
        assert_eq!(c.max_depth, Some(12));
        assert_eq!(c.cv, Some(10));
        assert_eq!(c.sweep.batch_sizes, vec![32, 64]);
        let mut again = RunConfig::default();
        again.apply_text(&c.to_text(), Path::new("/elsewhere"), "echo").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let mut c = RunConfig::default();
        c.apply_text("data = corpus\n", Path::new("/runs/a"), "x").unwrap();
        assert_eq!(c.data, Some(PathBuf::from("/runs/a/corpus")));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        for text in ["batch = 3", "k = eight", "no equals sign", "method = svm", "sweep_beta = "] {
            let err = RunConfig::default()
                .apply_text(text, Path::new("."), "c.cfg")
                .unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
            assert!(err.to_string().starts_with("c.cfg:1: "), "{err}");
        }
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(RunConfig::default().validate().is_ok());
        assert!(bad(|c| c.k = 1));
        assert!(bad(|c| c.alpha = 0));
        assert!(bad(|c| c.split_ratio = 1.0));
        assert!(bad(|c| c.cv = Some(1)));
        assert!(bad(|c| c.gamma = 0.0));
    }
}
