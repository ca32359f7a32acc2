//! `key = value` configuration shared by all subcommands.
//!
//! Settings are layered: built-in defaults, then the config file, then
//! command-line flags. Blank lines and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use laconic::objective::{Phase, TrainConfig};
use laconic::ApproxParams;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Exact,
    Approx,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub vocab: Option<u32>,
    pub kind: IndexKind,
    pub approx: ApproxParams,
    pub train: TrainConfig,
    pub k: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub warmup_iters: usize,
    pub label: String,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub params_out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            vocab: None,
            kind: IndexKind::Exact,
            approx: ApproxParams::default(),
            train: TrainConfig::default(),
            k: 10,
            seed: 0,
            threads: None,
            warmup_iters: 1,
            label: "laconic".to_string(),
            corpus: None,
            queries: None,
            qrels: None,
            index: None,
            run: None,
            params: None,
            input: None,
            output: None,
            triplets: None,
            params_out: None,
            metrics_out: None,
            report: None,
            csv: None,
        }
    }
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid config field `{key}`: {reason}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, format!("`{value}`: {e}")))
}

fn path(key: &str, value: &str) -> CliResult<Option<PathBuf>> {
    if value.is_empty() {
        return Err(bad(key, "path must be nonempty"));
    }
    Ok(Some(PathBuf::from(value)))
}

fn boolean(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, format!("`{value}` is not a boolean"))),
    }
}

impl EngineConfig {
    /// Sets one key; unknown keys and unparsable values are usage errors
    /// naming the key.
    pub fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "vocab" => {
                let v: u32 = num(key, value)?;
                if v == 0 {
                    return Err(bad(key, "must be >= 1"));
                }
                self.vocab = Some(v);
            }
            "kind" => {
                self.kind = match value {
                    "exact" => IndexKind::Exact,
                    "approx" => IndexKind::Approx,
                    _ => return Err(bad(key, format!("`{value}` is neither `exact` nor `approx`"))),
                }
            }
            "alpha" => self.approx.alpha = num(key, value)?,
            "block_size" => {
                self.approx.block_size = match value {
                    "unbounded" => usize::MAX,
                    _ => num(key, value)?,
                }
            }
            "summary_levels" => self.approx.summary_levels = num(key, value)?,
            "heap_factor" => self.approx.heap_factor = num(key, value)?,
            "k" => {
                self.k = num(key, value)?;
                if self.k == 0 {
                    return Err(bad(key, "must be >= 1"));
                }
            }
            "seed" => self.seed = num(key, value)?,
            "threads" => {
                let t: usize = num(key, value)?;
                if t == 0 {
                    return Err(bad(key, "must be >= 1"));
                }
                self.threads = Some(t);
            }
            "warmup_iters" => self.warmup_iters = num(key, value)?,
            "label" => {
                if value.is_empty() || value.contains(',') {
                    return Err(bad(key, "must be nonempty and comma-free"));
                }
                self.label = value.to_string();
            }
            "corpus" => self.corpus = path(key, value)?,
            "queries" => self.queries = path(key, value)?,
            "qrels" => self.qrels = path(key, value)?,
            "index" => self.index = path(key, value)?,
            "run" => self.run = path(key, value)?,
            "params" => self.params = path(key, value)?,
            "input" => self.input = path(key, value)?,
            "output" => self.output = path(key, value)?,
            "triplets" => self.triplets = path(key, value)?,
            "params_out" => self.params_out = path(key, value)?,
            "metrics_out" => self.metrics_out = path(key, value)?,
            "report" => self.report = path(key, value)?,
            "csv" => self.csv = path(key, value)?,
            "lambda" => {
                let l = num(key, value)?;
                self.train.lambda_q = l;
                self.train.lambda_d = l;
            }
            "lambda_q" => self.train.lambda_q = num(key, value)?,
            "lambda_d" => self.train.lambda_d = num(key, value)?,
            "warmup_steps" => self.train.warmup_steps = num(key, value)?,
            "warmup_exponent" => self.train.warmup_exponent = num(key, value)?,
            "phase" => self.train.phase = value.parse::<Phase>()?,
            "hard_negatives_per_query" => self.train.hard_negatives_per_query = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "cosine_decay" => self.train.cosine_decay = boolean(key, value)?,
            "temperature" => self.train.temperature = num(key, value)?,
            "dim" => self.train.dim = num(key, value)?,
            "token_vocab" => self.train.token_vocab = Some(num(key, value)?),
            "init_scale" => self.train.init_scale = num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`", idx + 1)))?;
            self.apply(key.trim(), value)
                .map_err(|e| CliError::Usage(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, file: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(file).map_err(|e| crate::error::io_err(file, e))?;
        self.apply_text(&text).map_err(|e| e.in_file(file))
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> CliResult<()> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{pair}` is not `key=value`")))?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> CliResult<&'a Path> {
        value.as_deref().ok_or_else(|| {
            CliError::Usage(format!(
                "missing `{key}`: pass --{} or set `{key}` in the config file",
                key.replace('_', "-")
            ))
        })
    }

    /// Approximate parameters after validation.
    pub fn approx_params(&self) -> CliResult<ApproxParams> {
        self.approx
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid approximate index parameters: {e}")))?;
        Ok(self.approx)
    }

    /// Training config with the shared `vocab` key as output vocabulary.
    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let mut t = self.train.clone();
        if let Some(v) = self.vocab {
            t.vocab = v as usize;
        }
        t.validate()?;
        Ok(t)
    }

    /// Worker count: the `threads` setting (default: available cores),
    /// capped by `LACONIC_THREADS` when set.
    pub fn worker_threads(&self) -> CliResult<usize> {
        let base = self
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        match std::env::var("LACONIC_THREADS") {
            Ok(cap) => {
                let cap: usize = cap
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&c| c > 0)
                    .ok_or_else(|| CliError::Usage(format!("LACONIC_THREADS=`{cap}` is not a positive integer")))?;
                Ok(base.min(cap))
            }
            Err(_) => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = EngineConfig::default();
        c.apply_text("# comment\n\nkind = approx\nalpha=0.25\nk = 5\nlambda = 0.01\nphase = finetune\n")
            .unwrap();
        assert_eq!(c.kind, IndexKind::Approx);
        assert_eq!(c.approx.alpha, 0.25);
        assert_eq!(c.train.lambda_q, 0.01);
        assert_eq!(c.train.lambda_d, 0.01);
        assert_eq!(c.train.phase, Phase::Finetune);
        c.apply_overrides(&["k=20".into(), "alpha = 1".into()]).unwrap();
        assert_eq!(c.k, 20);
        assert_eq!(c.approx.alpha, 1.0);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = EngineConfig::default();
        let e = c.apply_text("k = 3\nepochs = many\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("`epochs`"), "{e}");
        let e = c.apply("nope", "1").unwrap_err().to_string();
        assert!(e.contains("`nope`"));
        assert!(c.apply_text("no equals sign").is_err());
        assert!(c.apply("k", "0").is_err());
        assert!(c.apply("corpus", "").is_err());
    }

    #[test]
    fn train_config_validation_is_usage() {
        let mut c = EngineConfig::default();
        c.apply("learning_rate", "-1").unwrap();
        let e = c.train_config().unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("learning_rate"));
    }

    #[test]
    fn approx_validation_is_usage() {
        let mut c = EngineConfig::default();
        c.apply("alpha", "1.5").unwrap();
        assert_eq!(c.approx_params().unwrap_err().exit_code(), 1);
        c.apply("alpha", "1").unwrap();
        c.apply("block_size", "unbounded").unwrap();
        assert_eq!(c.approx_params().unwrap().block_size, usize::MAX);
    }

    #[test]
    fn missing_path_message() {
        let c = EngineConfig::default();
        let e = c.require("params_out", &c.params_out).unwrap_err().to_string();
        assert!(e.contains("--params-out"));
    }
}
