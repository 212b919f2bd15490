//! Run configuration: a TOML file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::exit::Failure;

/// Base flow source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Flow {
    Abc {
        params: [f64; 3],
    },
    File {
        path: PathBuf,
    },
    Random {
        seed: u64,
        #[serde(default = "default_decay")]
        decay: f64,
    },
}

fn default_decay() -> f64 {
    4.0
}

impl Flow {
    /// `abc:A,B,C`, `file:PATH`, `random:SEED` or `random:SEED,DECAY`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("flow '{s}' lacks a 'kind:' prefix"))?;
        let nums = |r: &str| -> Result<Vec<f64>, String> {
            r.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad number '{x}': {e}"))
                })
                .collect()
        };
        match kind {
            "abc" => {
                let v = nums(rest)?;
                let params: [f64; 3] = v
                    .try_into()
                    .map_err(|_| "abc takes three amplitudes".to_string())?;
                Ok(Flow::Abc { params })
            }
            "file" => Ok(Flow::File {
                path: PathBuf::from(rest),
            }),
            "random" => {
                let mut it = rest.split(',');
                let seed = it
                    .next()
                    .unwrap_or("")
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| format!("bad seed: {e}"))?;
                let decay = match it.next() {
                    Some(d) => d
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad decay: {e}"))?,
                    None => default_decay(),
                };
                Ok(Flow::Random { seed, decay })
            }
            other => Err(format!("unknown flow kind '{other}'")),
        }
    }
}

/// Keys accepted in the TOML file; every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub flow: Option<Flow>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub epsilon_max: Option<f64>,
    pub steps: Option<usize>,
    pub denominator_bound: Option<u64>,
    pub seed: Option<u64>,
    pub direction_samples: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub output_dir: Option<PathBuf>,
    pub mode_epsilons: Option<Vec<f64>>,
    pub mode: Option<PathBuf>,
    pub alpha_matrix: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
    pub init: Option<String>,
    pub deltas: Option<Vec<f64>>,
    pub threshold_frac: Option<f64>,
    pub sobolev_index: Option<f64>,
    pub threads: Option<usize>,
}

/// Flags shared by every command; each overrides the matching file key.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ALPHA_DYNAMO_THREADS")]
    pub threads: Option<usize>,
    /// `abc:A,B,C`, `file:PATH`, `random:SEED[,DECAY]`.
    #[arg(long, global = true)]
    pub flow: Option<String>,
    /// Truncation order of the flow and of the cell fields.
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon_max: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub denominator_bound: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub direction_samples: Option<usize>,
    /// `name=value`, repeatable.
    #[arg(long = "tolerance", global = true, value_parser = parse_kv)]
    pub tolerances: Vec<(String, f64)>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Epsilons at which `branch` packages modes.
    #[arg(long, global = true, value_delimiter = ',')]
    pub mode_epsilons: Option<Vec<f64>>,
    /// Mode manifest used by `validate-dns` and `nonlinear`.
    #[arg(long, global = true)]
    pub mode: Option<PathBuf>,
    /// JSON alpha matrix replacing the one computed from the flow.
    #[arg(long, global = true)]
    pub alpha_matrix: Option<PathBuf>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub record_every: Option<usize>,
    /// `mode` or `random` initial data for `validate-dns`.
    #[arg(long, global = true)]
    pub init: Option<String>,
    /// Comma-separated perturbation sizes for `nonlinear`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 0..)]
    pub deltas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub threshold_frac: Option<f64>,
    #[arg(long, global = true)]
    pub sobolev_index: Option<f64>,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let v = v.parse::<f64>().map_err(|e| e.to_string())?;
    Ok((k.to_string(), v))
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub flow: Flow,
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon_max: f64,
    pub steps: usize,
    pub denominator_bound: u64,
    pub seed: u64,
    pub direction_samples: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
    pub mode_epsilons: Vec<f64>,
    pub mode: PathBuf,
    pub alpha_matrix: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: usize,
    pub init: String,
    pub deltas: Vec<f64>,
    pub threshold_frac: f64,
    pub sobolev_index: f64,
    pub threads: Option<usize>,
}

pub const DEFAULT_TOLERANCES: [(&str, f64); 3] = [
    ("validate", 0.02),
    ("affinity", 0.1),
    ("mode_residual", 1e-8),
];

impl RunConfig {
    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn resolve(flags: &Flags) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let flow = match &flags.flow {
            Some(s) => Flow::parse(s).map_err(Failure::config)?,
            None => file.flow.clone().unwrap_or(Flow::Abc {
                params: [1.0, 1.0, 1.0],
            }),
        };
        let mut tolerances: BTreeMap<String, f64> = DEFAULT_TOLERANCES
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        tolerances.extend(file.tolerances.clone());
        tolerances.extend(flags.tolerances.iter().cloned());
        let output_dir = flags
            .output_dir
            .clone()
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("."));
        let epsilon_max = flags.epsilon_max.or(file.epsilon_max).unwrap_or(0.2);
        let cfg = Self {
            flow,
            n: flags.n.or(file.n).unwrap_or(8),
            epsilon_max,
            steps: flags.steps.or(file.steps).unwrap_or(20),
            denominator_bound: flags
                .denominator_bound
                .or(file.denominator_bound)
                .unwrap_or(100),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            direction_samples: flags
                .direction_samples
                .or(file.direction_samples)
                .unwrap_or(200),
            tolerances,
            mode: flags
                .mode
                .clone()
                .or(file.mode)
                .unwrap_or_else(|| output_dir.join("mode_0.json")),
            output_dir,
            mode_epsilons: flags
                .mode_epsilons
                .clone()
                .or(file.mode_epsilons)
                .unwrap_or(vec![epsilon_max]),
            alpha_matrix: flags.alpha_matrix.clone().or(file.alpha_matrix),
            horizon: flags.horizon.or(file.horizon),
            dt: flags.dt.or(file.dt),
            record_every: flags.record_every.or(file.record_every).unwrap_or(10),
            init: flags
                .init
                .clone()
                .or(file.init)
                .unwrap_or_else(|| "mode".into()),
            deltas: flags
                .deltas
                .clone()
                .or(file.deltas)
                .unwrap_or(vec![1e-2, 1e-3, 1e-4]),
            threshold_frac: flags.threshold_frac.or(file.threshold_frac).unwrap_or(0.1),
            sobolev_index: flags.sobolev_index.or(file.sobolev_index).unwrap_or(3.0),
            threads: flags.threads.or(file.threads),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let bad = |m: String| Err(Failure::config(m));
        if self.n < 1 {
            return bad("N must be at least 1".into());
        }
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0)) {
            return bad(format!("tolerance '{k}' = {v} is not positive"));
        }
        if !(self.epsilon_max >= 0.0) || !self.epsilon_max.is_finite() {
            return bad(format!(
                "epsilon_max = {} must be finite and non-negative",
                self.epsilon_max
            ));
        }
        if self.direction_samples < 1 {
            return bad("direction_samples must be at least 1".into());
        }
        if self.init != "mode" && self.init != "random" {
            return bad(format!(
                "init must be 'mode' or 'random', got '{}'",
                self.init
            ));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return bad(format!("horizon = {h} must be positive"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt = {dt} must be positive"));
            }
        }
        if !(self.threshold_frac > 0.0) {
            return bad("threshold_frac must be positive".into());
        }
        if !(self.sobolev_index > 2.5) {
            return bad(format!(
                "sobolev_index = {} must exceed 5/2",
                self.sobolev_index
            ));
        }
        Ok(())
    }
}

fn load_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {}", path.display(), e.message())))
}
