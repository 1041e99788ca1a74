//! `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored and a
//! repeated key overrides the earlier value. Unknown keys and out-of-range
//! values are rejected with their line number.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use metsk_core::data::SynthSpec;
use metsk_core::domsim::{DEFAULT_BINS, DEFAULT_GAMMA};
use metsk_core::meta::{MetaConfig, SourceTask, Strategy};
use metsk_core::probe::{Classifier, MlpConfig, ProbeSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub meta: MetaConfig,
    pub strategy: Option<Strategy>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub probe: ProbeSpec,
    pub svm_c: f64,
    pub svm_iters: usize,
    pub mlp: MlpConfig,
    pub bins: usize,
    pub gamma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            meta: MetaConfig::default(),
            strategy: None,
            source: None,
            target: None,
            out: None,
            probe: ProbeSpec::default(),
            svm_c: 1.0,
            svm_iters: 2000,
            mlp: MlpConfig::default(),
            bins: DEFAULT_BINS,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl RunConfig {
    /// Probe spec with the configured classifier settings.
    pub fn probe_spec(&self) -> ProbeSpec {
        let classifier = match self.probe.classifier {
            Classifier::Svm { .. } => Classifier::Svm { c: self.svm_c, iters: self.svm_iters },
            Classifier::Mlp(_) => Classifier::Mlp(self.mlp.clone()),
        };
        ProbeSpec { classifier, seed: self.meta.seed, ..self.probe.clone() }
    }
}

/// `(line, key, value)` for every setting in `text`.
fn entries<'a>(text: &'a str, path: &Path) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(path, i + 1, format!("expected `key = value`, got `{line}`")))?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

struct Field<'a> {
    path: &'a Path,
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn err(&self, detail: impl std::fmt::Display) -> Error {
        Error::parse(self.path, self.line, format!("{}: {detail}", self.key))
    }

    fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| self.err(format!("cannot parse `{}`", self.value)))
    }

    fn positive(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v > 0.0 && v.is_finite() { Ok(v) } else { Err(self.err(format!("{v} must be > 0"))) }
    }

    fn non_negative(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v >= 0.0 && v.is_finite() { Ok(v) } else { Err(self.err(format!("{v} must be >= 0"))) }
    }

    fn fraction(&self, open_low: bool) -> Result<f64> {
        let v: f64 = self.parse()?;
        let ok = if open_low { v > 0.0 && v < 1.0 } else { (0.0..1.0).contains(&v) };
        if ok { Ok(v) } else { Err(self.err(format!("{v} out of range"))) }
    }

    fn count(&self, min: usize) -> Result<usize> {
        let v: usize = self.parse()?;
        if v >= min { Ok(v) } else { Err(self.err(format!("{v} must be >= {min}"))) }
    }

    fn flag(&self) -> Result<bool> {
        match self.value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(self.err(format!("`{v}` is not a boolean"))),
        }
    }

    fn list(&self) -> Result<Vec<usize>> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| self.err(format!("`{s}` is not a count"))))
            .collect()
    }
}

fn apply(cfg: &mut RunConfig, f: &Field) -> Result<()> {
    let m = &mut cfg.meta;
    match f.key {
        "alpha" => m.alpha = f.positive()?,
        "beta" => m.beta = f.positive()?,
        "inner_steps" => m.inner_steps = f.count(1)?,
        "lambda" => m.lambda = f.non_negative()?,
        "tau" => m.tau = f.positive()?,
        "outer_iters" => m.outer_iters = f.count(1)?,
        "batch_size" => m.batch_size = f.count(2)?,
        "warmup_fraction" => m.warmup_fraction = f.fraction(false)?,
        "meta_val_fraction" => m.meta_val_fraction = f.fraction(true)?,
        "meta_val_count" => m.meta_val_count = Some(f.count(2)?),
        "window" => m.window = f.count(1)?,
        "windows_per_subject" => m.windows_per_subject = f.count(1)?,
        "channels" => {
            let c = f.list()?;
            if c.len() != 3 || c.contains(&0) {
                return Err(f.err("expected three positive widths, e.g. `16,16,16`"));
            }
            m.model.channels = [1, c[0], c[1], c[2]];
        }
        "temporal_kernel" => {
            let k = f.count(1)?;
            if k % 2 == 0 {
                return Err(f.err(format!("{k} must be odd")));
            }
            m.model.temporal_kernel = k;
        }
        "embedding_dim" => m.model.source_out = f.count(1)?,
        "source_task" => {
            m.source_task = match f.value {
                "contrastive" => SourceTask::Contrastive,
                "supervised" => SourceTask::Supervised,
                v => return Err(f.err(format!("`{v}` is not contrastive or supervised"))),
            }
        }
        "ssl_include_target" => m.ssl_include_target = f.flag()?,
        "ft_freeze_extractor" => m.ft_freeze_extractor = f.flag()?,
        "final_adapt_steps" => m.final_adapt_steps = Some(f.count(1)?),
        "seed" => m.seed = f.parse()?,
        "strategy" => cfg.strategy = Some(Strategy::parse(f.value).ok_or_else(|| f.err(format!("unknown strategy `{}`", f.value)))?),
        "source" => cfg.source = Some(PathBuf::from(f.value)),
        "target" => cfg.target = Some(PathBuf::from(f.value)),
        "out" => cfg.out = Some(PathBuf::from(f.value)),
        "pca_components" => cfg.probe.pca_components = Some(f.parse()?),
        "classifier" => {
            cfg.probe.classifier = match f.value {
                "svm" => Classifier::svm(),
                "mlp" => Classifier::Mlp(MlpConfig::default()),
                v => return Err(f.err(format!("`{v}` is not svm or mlp"))),
            }
        }
        "svm_c" => cfg.svm_c = f.positive()?,
        "svm_iters" => cfg.svm_iters = f.count(1)?,
        "mlp_hidden" => cfg.mlp.hidden = f.list()?,
        "mlp_iters" => cfg.mlp.iters = f.count(1)?,
        "mlp_learning_rate" => cfg.mlp.learning_rate = f.positive()?,
        "standardize" => cfg.probe.standardize = f.flag()?,
        "folds" => cfg.probe.folds = f.count(2)?,
        "repeats" => cfg.probe.repeats = f.count(1)?,
        "bins" => cfg.bins = f.count(1)?,
        "gamma" => cfg.gamma = f.positive()?,
        _ => return Err(f.err("unknown key")),
    }
    Ok(())
}

/// Parses configuration text; `path` only labels errors.
pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (line, key, value) in entries(text, path)? {
        apply(&mut cfg, &Field { path, line, key, value })?;
    }
    if cfg.meta.source_task == SourceTask::Supervised {
        cfg.meta.model.source_out = 2;
    }
    cfg.meta.validate().map_err(|e| Error::invalid(path, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_config_str(&text, path)
}

/// Synthetic-cohort settings in the same `key = value` format.
pub fn parse_synth_spec_str(text: &str, path: &Path) -> Result<SynthSpec> {
    let mut spec = SynthSpec::default();
    for (line, key, value) in entries(text, path)? {
        let f = Field { path, line, key, value };
        match key {
            "parcels" => spec.parcels = f.count(2)?,
            "time_points" => spec.time_points = f.count(8)?,
            "n_source" => spec.n_source = f.count(1)?,
            "n_target_per_class" => spec.n_target_per_class = f.count(1)?,
            "effect_size" => spec.effect_size = f.non_negative()?,
            "noise_sd" => spec.noise_sd = f.positive()?,
            "modules" => spec.modules = f.count(1)?,
            "source_spread" => spec.source_spread = f.non_negative()?,
            "source_label_effect" => spec.source_label_effect = Some(f.non_negative()?),
            _ => return Err(f.err("unknown key")),
        }
    }
    spec.validate().map_err(|e| Error::invalid(path, e.to_string()))?;
    Ok(spec)
}

pub fn parse_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_synth_spec_str(&text, path)
}
