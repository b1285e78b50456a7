//! Scenario configuration files.
//!
//! Grammar: `key = value` lines grouped under `[section]` headers; `#`
//! starts a comment; blank lines are ignored; lists are comma separated.
//! Omitted keys take the documented defaults. See the README for the full
//! key reference.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{Normalization, SyntheticSpec};
use crate::episodes::EpisodeSpec;
use crate::meta::{ClipBound, Learner, MetaConfig, NoiseConvention};
use crate::metrics::CiMethod;
use crate::nn::ModelConfig;
use crate::privacy::{LogBase, PrivacyBudget};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Syntax,
    UnknownSection,
    UnknownKey,
    TypeMismatch,
    Range,
    MissingFile,
}

impl std::fmt::Display for ConfigErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConfigErrorKind::Syntax => "syntax error",
            ConfigErrorKind::UnknownSection => "unknown section",
            ConfigErrorKind::UnknownKey => "unknown key",
            ConfigErrorKind::TypeMismatch => "type mismatch",
            ConfigErrorKind::Range => "range violation",
            ConfigErrorKind::MissingFile => "missing file",
        })
    }
}

fn err(line: usize, kind: ConfigErrorKind, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        kind,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Centralized,
    Federated,
    PrivacySweep,
    MultiModal,
    MultiDisease,
    Unbalanced,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Centralized,
        ScenarioKind::Federated,
        ScenarioKind::PrivacySweep,
        ScenarioKind::MultiModal,
        ScenarioKind::MultiDisease,
        ScenarioKind::Unbalanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Centralized => "centralized",
            ScenarioKind::Federated => "federated",
            ScenarioKind::PrivacySweep => "privacy-sweep",
            ScenarioKind::MultiModal => "multi-modal",
            ScenarioKind::MultiDisease => "multi-disease",
            ScenarioKind::Unbalanced => "unbalanced",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioKind> {
        ScenarioKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Manifest(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub learner: Learner,
    pub seed: u64,
    pub rounds: u64,
    /// Evaluate every this many rounds (0 disables intermediate evaluation).
    pub eval_every: u64,
    pub eval_tasks: usize,

    pub model: ModelConfig,
    /// Square image side; `model.input_dim = resolution^2`.
    pub resolution: usize,

    pub episodes: EpisodeSpec,
    pub split_ratio: f64,

    pub meta: MetaConfig,
    pub batches_per_round: usize,

    pub budget: PrivacyBudget,
    pub c2: f64,
    pub log_base: LogBase,
    /// Fixed noise multiplier instead of calibration.
    pub sigma_override: Option<f64>,
    pub sweep_epsilons: Vec<f64>,

    pub ratios: Vec<f64>,

    pub data: DataSource,
    /// Seed of the synthetic generator; the global seed when unset.
    pub data_seed: Option<u64>,
    pub normalization: Normalization,

    pub out_dir: PathBuf,
    pub ci: CiMethod,
}

impl ScenarioConfig {
    /// Defaults for a scenario kind.
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut synthetic = SyntheticSpec::default();
        let mut ratios = vec![1.0; 4];
        match kind {
            ScenarioKind::Centralized => ratios = vec![1.0],
            ScenarioKind::MultiModal => {
                synthetic.modalities = vec!["xray".into(), "ct".into()];
                ratios = vec![1.0; 2];
            }
            ScenarioKind::MultiDisease => {
                synthetic.class_names = ["normal", "covid", "sars", "mers"].map(String::from).to_vec();
                ratios = vec![1.0; 3];
            }
            ScenarioKind::Unbalanced => ratios = vec![1.0, 2.0, 3.0, 4.0],
            ScenarioKind::Federated | ScenarioKind::PrivacySweep => {}
        }
        let resolution = synthetic.resolution;
        ScenarioConfig {
            kind,
            learner: Learner::MetaDpsgd,
            seed: 0,
            rounds: 100,
            eval_every: 10,
            eval_tasks: 100,
            model: ModelConfig {
                input_dim: resolution * resolution,
                ..ModelConfig::default()
            },
            resolution,
            episodes: EpisodeSpec::default(),
            split_ratio: 0.8,
            meta: MetaConfig::default(),
            batches_per_round: 10,
            budget: PrivacyBudget::default(),
            c2: 1.0,
            log_base: LogBase::Natural,
            sigma_override: None,
            sweep_epsilons: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            ratios,
            data: DataSource::Synthetic(synthetic),
            data_seed: None,
            normalization: Normalization::PerImage,
            out_dir: PathBuf::from("runs").join(kind.name()),
            ci: CiMethod::default(),
        }
    }

    pub fn clients(&self) -> usize {
        self.ratios.len()
    }

    /// Synthetic spec with its seed resolved.
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match &self.data {
            DataSource::Synthetic(s) => Some(SyntheticSpec {
                seed: self.data_seed.unwrap_or(self.seed),
                ..s.clone()
            }),
            DataSource::Manifest(_) => None,
        }
    }

    /// Serializes every key; parsing the result yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "kind = {}", self.kind.name());
        let _ = writeln!(s, "learner = {}", self.learner.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "eval_tasks = {}", self.eval_tasks);
        let _ = writeln!(s, "\n[model]");
        let hidden: Vec<String> = self.model.hidden_dims.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "hidden = {}", hidden.join(", "));
        let _ = writeln!(s, "batchnorm = {}", self.model.batchnorm);
        let _ = writeln!(s, "\n[episodes]");
        let _ = writeln!(s, "n_way = {}", self.episodes.n_way);
        let _ = writeln!(s, "k_shot = {}", self.episodes.k_shot);
        let _ = writeln!(s, "q_query = {}", self.episodes.q_query);
        let _ = writeln!(s, "split_ratio = {:?}", self.split_ratio);
        let _ = writeln!(s, "\n[meta]");
        let _ = writeln!(s, "beta = {:?}", self.meta.beta);
        let _ = writeln!(s, "inner_steps = {}", self.meta.inner_steps);
        let _ = writeln!(s, "tasks_per_batch = {}", self.meta.tasks_per_batch);
        let _ = writeln!(s, "batches_per_round = {}", self.batches_per_round);
        match self.meta.clip_bound {
            ClipBound::Finite(c) => writeln!(s, "clip = {c:?}"),
            ClipBound::Unbounded => writeln!(s, "clip = none"),
        }
        .ok();
        let conv = match self.meta.noise_convention {
            NoiseConvention::StandardDpsgd => "standard",
            NoiseConvention::NoiseAfterMean => "literal",
        };
        let _ = writeln!(s, "noise_convention = {conv}");
        let _ = writeln!(s, "maml_inner_lr = {:?}", self.meta.maml_inner_lr);
        let _ = writeln!(s, "alpha_min = {:?}", self.meta.alpha_init.0);
        let _ = writeln!(s, "alpha_max = {:?}", self.meta.alpha_init.1);
        let _ = writeln!(s, "\n[privacy]");
        let _ = writeln!(s, "epsilon = {:?}", self.budget.epsilon);
        let _ = writeln!(s, "delta = {:?}", self.budget.delta);
        let _ = writeln!(s, "c2 = {:?}", self.c2);
        match self.log_base {
            LogBase::Natural => writeln!(s, "log_base = e"),
            LogBase::Base(b) => writeln!(s, "log_base = {b:?}"),
        }
        .ok();
        match self.sigma_override {
            Some(v) => writeln!(s, "sigma = {v:?}"),
            None => writeln!(s, "sigma = auto"),
        }
        .ok();
        let _ = writeln!(s, "epsilons = {}", list(&self.sweep_epsilons));
        let _ = writeln!(s, "\n[federation]");
        let _ = writeln!(s, "clients = {}", self.clients());
        let _ = writeln!(s, "ratios = {}", list(&self.ratios));
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "normalization = {}", self.normalization.name());
        match &self.data {
            DataSource::Manifest(p) => {
                let _ = writeln!(s, "source = manifest");
                let _ = writeln!(s, "manifest = {}", p.display());
            }
            DataSource::Synthetic(spec) => {
                let _ = writeln!(s, "source = synthetic");
                let _ = writeln!(s, "classes = {}", spec.class_names.join(", "));
                let _ = writeln!(s, "examples_per_class = {}", spec.examples_per_class);
                let _ = writeln!(s, "noise = {:?}", spec.noise_level);
                let _ = writeln!(s, "amplitude = {:?}", spec.amplitude);
                let _ = writeln!(s, "modalities = {}", spec.modalities.join(", "));
            }
        }
        if let Some(ds) = self.data_seed {
            let _ = writeln!(s, "seed = {ds}");
        }
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir.display());
        let _ = writeln!(s, "\n[metrics]");
        match self.ci {
            CiMethod::Normal { z } => {
                let _ = writeln!(s, "ci = normal");
                let _ = writeln!(s, "z = {z:?}");
            }
            CiMethod::Bootstrap { resamples, seed } => {
                let _ = writeln!(s, "ci = bootstrap");
                let _ = writeln!(s, "bootstrap_resamples = {resamples}");
                let _ = writeln!(s, "bootstrap_seed = {seed}");
            }
        }
        s
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::from("scenario");
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, ConfigErrorKind::Syntax, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, ConfigErrorKind::UnknownSection, format!("[{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, ConfigErrorKind::Syntax, format!("expected 'key = value', found '{content}'")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(err(line, ConfigErrorKind::Syntax, "empty key"));
        }
        if !seen.insert((section.clone(), key.clone())) {
            return Err(err(line, ConfigErrorKind::Syntax, format!("duplicate key {section}.{key}")));
        }
        entries.push(Entry {
            line,
            section: section.clone(),
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

const SECTIONS: [&str; 9] = [
    "scenario",
    "model",
    "episodes",
    "meta",
    "privacy",
    "federation",
    "data",
    "output",
    "metrics",
];

impl Entry {
    fn mismatch(&self, expected: &str) -> ConfigError {
        err(
            self.line,
            ConfigErrorKind::TypeMismatch,
            format!("{}.{} expects {expected}, found '{}'", self.section, self.key, self.value),
        )
    }

    fn range(&self, rule: &str) -> ConfigError {
        err(
            self.line,
            ConfigErrorKind::Range,
            format!("{}.{} = {} violates {rule}", self.section, self.key, self.value),
        )
    }

    fn real(&self) -> Result<f64, ConfigError> {
        self.value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.mismatch("a finite real number"))
    }

    fn real_where(&self, rule: &str, ok: impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
        let v = self.real()?;
        if ok(v) {
            Ok(v)
        } else {
            Err(self.range(rule))
        }
    }

    fn integer(&self) -> Result<u64, ConfigError> {
        self.value.parse::<u64>().map_err(|_| self.mismatch("a non-negative integer"))
    }

    fn positive(&self) -> Result<usize, ConfigError> {
        let v = self.value.parse::<i64>().map_err(|_| self.mismatch("an integer"))?;
        if v >= 1 {
            Ok(v as usize)
        } else {
            Err(self.range("> 0"))
        }
    }

    fn boolean(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.mismatch("a boolean")),
        }
    }

    fn items(&self) -> Vec<&str> {
        self.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }

    fn reals(&self, rule: &str, ok: impl Fn(f64) -> bool) -> Result<Vec<f64>, ConfigError> {
        let items = self.items();
        if items.is_empty() {
            return Err(self.range("a non-empty list"));
        }
        items
            .iter()
            .map(|s| {
                let v = s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.mismatch("a list of reals"))?;
                if ok(v) {
                    Ok(v)
                } else {
                    Err(self.range(rule))
                }
            })
            .collect()
    }

    fn names(&self) -> Result<Vec<String>, ConfigError> {
        let items = self.items();
        if items.is_empty() {
            return Err(self.range("a non-empty list"));
        }
        Ok(items.into_iter().map(String::from).collect())
    }
}

/// Parses configuration text. Relative paths are resolved against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
    let entries = tokenize(text)?;
    let kind = match entries.iter().find(|e| e.section == "scenario" && e.key == "kind") {
        Some(e) => ScenarioKind::parse(&e.value).ok_or_else(|| {
            let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
            e.mismatch(&format!("one of {}", names.join(", ")))
        })?,
        None => ScenarioKind::Federated,
    };
    let mut c = ScenarioConfig::defaults(kind);
    let mut synthetic = match &c.data {
        DataSource::Synthetic(s) => s.clone(),
        DataSource::Manifest(_) => unreachable!("defaults are synthetic"),
    };
    let mut source: Option<(usize, String)> = None;
    let mut manifest: Option<(usize, PathBuf)> = None;
    let mut clients: Option<(usize, usize)> = None;
    let mut ratios_line = None;
    let (mut alpha_min, mut alpha_max) = (None, None);
    let mut ci_kind: Option<(usize, String)> = None;
    let (mut z, mut resamples, mut boot_seed) = (1.96, 1000usize, 0u64);

    for e in &entries {
        match (e.section.as_str(), e.key.as_str()) {
            ("scenario", "kind") => {}
            ("scenario", "learner") => {
                c.learner = Learner::parse(&e.value).ok_or_else(|| e.mismatch("one of maml, metasgd, metadpsgd"))?
            }
            ("scenario", "seed") => c.seed = e.integer()?,
            ("scenario", "rounds") => c.rounds = e.integer()?,
            ("scenario", "eval_every") => c.eval_every = e.integer()?,
            ("scenario", "eval_tasks") => {
                c.eval_tasks = e.positive()?;
                if c.eval_tasks < 2 {
                    return Err(e.range(">= 2 (confidence intervals need two tasks)"));
                }
            }
            ("model", "hidden") => {
                c.model.hidden_dims = e
                    .items()
                    .iter()
                    .map(|s| s.parse::<usize>().map_err(|_| e.mismatch("a list of positive integers")))
                    .collect::<Result<_, _>>()?;
                if c.model.hidden_dims.is_empty() || c.model.hidden_dims.contains(&0) {
                    return Err(e.range("a non-empty list of positive widths"));
                }
            }
            ("model", "batchnorm") => c.model.batchnorm = e.boolean()?,
            ("episodes", "n_way") => {
                c.episodes.n_way = e.positive()?;
                if c.episodes.n_way < 2 {
                    return Err(e.range(">= 2"));
                }
            }
            ("episodes", "k_shot") => c.episodes.k_shot = e.positive()?,
            ("episodes", "q_query") => c.episodes.q_query = e.positive()?,
            ("episodes", "split_ratio") => c.split_ratio = e.real_where("0 < ratio < 1", |v| v > 0.0 && v < 1.0)?,
            ("meta", "beta") => c.meta.beta = e.real_where("> 0", |v| v > 0.0)?,
            ("meta", "inner_steps") => c.meta.inner_steps = e.positive()?,
            ("meta", "tasks_per_batch") => c.meta.tasks_per_batch = e.positive()?,
            ("meta", "batches_per_round") => c.batches_per_round = e.positive()?,
            ("meta", "clip") => {
                c.meta.clip_bound = if matches!(e.value.as_str(), "none" | "inf" | "unbounded") {
                    ClipBound::Unbounded
                } else {
                    ClipBound::Finite(e.real_where("> 0", |v| v > 0.0)?)
                }
            }
            ("meta", "noise_convention") => {
                c.meta.noise_convention = match e.value.as_str() {
                    "standard" => NoiseConvention::StandardDpsgd,
                    "literal" => NoiseConvention::NoiseAfterMean,
                    _ => return Err(e.mismatch("standard or literal")),
                }
            }
            ("meta", "maml_inner_lr") => c.meta.maml_inner_lr = e.real_where(">= 0", |v| v >= 0.0)?,
            ("meta", "alpha_min") => alpha_min = Some((e.line, e.real_where("> 0", |v| v > 0.0)?)),
            ("meta", "alpha_max") => alpha_max = Some((e.line, e.real_where("> 0", |v| v > 0.0)?)),
            ("privacy", "epsilon") => c.budget.epsilon = e.real_where("> 0", |v| v > 0.0)?,
            ("privacy", "delta") => c.budget.delta = e.real_where("0 < delta < 1", |v| v > 0.0 && v < 1.0)?,
            ("privacy", "c2") => c.c2 = e.real_where("> 0", |v| v > 0.0)?,
            ("privacy", "log_base") => {
                c.log_base = if e.value == "e" {
                    LogBase::Natural
                } else {
                    LogBase::Base(e.real_where("> 0 and != 1", |v| v > 0.0 && v != 1.0)?)
                }
            }
            ("privacy", "sigma") => {
                c.sigma_override = if e.value == "auto" {
                    None
                } else {
                    Some(e.real_where(">= 0", |v| v >= 0.0)?)
                }
            }
            ("privacy", "epsilons") => c.sweep_epsilons = e.reals("> 0", |v| v > 0.0)?,
            ("federation", "clients") => clients = Some((e.line, e.positive()?)),
            ("federation", "ratios") => {
                c.ratios = e.reals("> 0", |v| v > 0.0)?;
                ratios_line = Some(e.line);
            }
            ("data", "source") => source = Some((e.line, e.value.clone())),
            ("data", "manifest") => manifest = Some((e.line, base_dir.join(&e.value))),
            ("data", "resolution") => {
                c.resolution = e.positive()?;
                if c.resolution < 4 {
                    return Err(e.range(">= 4"));
                }
            }
            ("data", "classes") => {
                synthetic.class_names = e.names()?;
                if synthetic.class_names.len() < 2 {
                    return Err(e.range("at least two classes"));
                }
            }
            ("data", "examples_per_class") => synthetic.examples_per_class = e.positive()?,
            ("data", "noise") => synthetic.noise_level = e.real_where(">= 0", |v| v >= 0.0)?,
            ("data", "amplitude") => synthetic.amplitude = e.real_where("0 < amplitude <= 127", |v| v > 0.0 && v <= 127.0)?,
            ("data", "normalization") => {
                c.normalization = Normalization::parse(&e.value).ok_or_else(|| e.mismatch("per-image or per-dataset"))?
            }
            ("data", "modalities") => synthetic.modalities = e.names()?,
            ("data", "seed") => c.data_seed = Some(e.integer()?),
            ("output", "dir") => c.out_dir = base_dir.join(&e.value),
            ("metrics", "ci") => ci_kind = Some((e.line, e.value.clone())),
            ("metrics", "z") => z = e.real_where("> 0", |v| v > 0.0)?,
            ("metrics", "bootstrap_resamples") => resamples = e.positive()?,
            ("metrics", "bootstrap_seed") => boot_seed = e.integer()?,
            (section, key) => {
                return Err(err(e.line, ConfigErrorKind::UnknownKey, format!("{section}.{key}")));
            }
        }
    }

    if let Some((line, n)) = clients {
        match ratios_line {
            Some(_) if c.ratios.len() != n => {
                return Err(err(
                    line,
                    ConfigErrorKind::Range,
                    format!("clients = {n} but {} ratios are given", c.ratios.len()),
                ))
            }
            Some(_) => {}
            None => c.ratios = vec![1.0; n],
        }
    }
    if c.kind == ScenarioKind::Centralized && c.ratios.len() != 1 {
        let line = clients.map(|(l, _)| l).or(ratios_line).unwrap_or(0);
        return Err(err(line, ConfigErrorKind::Range, "the centralized scenario has exactly one client"));
    }
    if let Some((_, lo)) = alpha_min {
        c.meta.alpha_init.0 = lo;
    }
    if let Some((_, hi)) = alpha_max {
        c.meta.alpha_init.1 = hi;
    }
    if c.meta.alpha_init.1 < c.meta.alpha_init.0 {
        let line = alpha_max.or(alpha_min).map(|(l, _)| l).unwrap_or(0);
        return Err(err(line, ConfigErrorKind::Range, "alpha_max must be >= alpha_min"));
    }
    c.data = match source {
        None => match manifest.clone() {
            Some((_, p)) => DataSource::Manifest(p),
            None => DataSource::Synthetic(synthetic),
        },
        Some((_, s)) if s == "synthetic" => DataSource::Synthetic(synthetic),
        Some((line, s)) if s == "manifest" => {
            let (_, p) = manifest.clone().ok_or_else(|| err(line, ConfigErrorKind::Range, "source = manifest requires data.manifest"))?;
            DataSource::Manifest(p)
        }
        Some((line, s)) => {
            return Err(err(line, ConfigErrorKind::TypeMismatch, format!("data.source expects synthetic or manifest, found '{s}'")))
        }
    };
    if let (DataSource::Manifest(p), Some((line, _))) = (&c.data, &manifest) {
        if !p.is_file() {
            return Err(err(*line, ConfigErrorKind::MissingFile, p.display().to_string()));
        }
    }
    if let DataSource::Synthetic(s) = &mut c.data {
        s.resolution = c.resolution;
    }
    c.ci = match ci_kind {
        None => CiMethod::Normal { z },
        Some((_, k)) if k == "normal" => CiMethod::Normal { z },
        Some((_, k)) if k == "bootstrap" => CiMethod::Bootstrap {
            resamples,
            seed: boot_seed,
        },
        Some((line, k)) => return Err(err(line, ConfigErrorKind::TypeMismatch, format!("metrics.ci expects normal or bootstrap, found '{k}'"))),
    };
    c.model.input_dim = c.resolution * c.resolution;
    Ok(c)
}

pub fn parse_config(path: &Path) -> crate::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(parse_config_str(&text, base)?)
}
