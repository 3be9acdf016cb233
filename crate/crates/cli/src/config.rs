//! Experiment configuration.
//!
//! ```text
//! [experiment]
//! seed = 0
//! output = out
//! steps = 100
//! test_problems = 100
//!
//! [family]
//! kind = quadratic
//! dim = 10
//!
//! [roster]
//! sgd = sgd tune
//! adam = adam 0.1
//! lstm = learned
//! ```
//!
//! Roster values are `<baseline kind> <rate | tune>`, `learned` for the
//! optimizer produced by `meta-train`, or `learned <path>` for a saved one.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use metaopt_core::baselines::BaselineKind;
use metaopt_core::lstm::GroupLayout;
use metaopt_core::meta::{MetaTrainConfig, UnrollConfig};
use metaopt_core::optimizee::{
    synthetic_dataset, Activation, MlpArchitecture, MlpFamily, ProblemFamily, QuadraticFamily, QuadraticWeights,
};
use metaopt_core::preprocess::InputEncoding;
use metaopt_core::RngStream;

use crate::format::Variant;
use crate::idx;
use crate::ini::{ConfigError, Ini};

/// Substream of the master seed that generates synthetic datasets.
const DATA_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic { examples: usize, features: usize, classes: usize },
    Idx { images: PathBuf, labels: PathBuf, limit: Option<usize>, classes: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Quadratic { dim: usize, weights: QuadraticWeights, init_std: f64 },
    Mlp { dataset: DatasetSpec, hidden: Vec<usize>, activation: Activation, minibatch: usize, init_std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub n_hidden: usize,
    pub encoding: InputEncoding,
    pub output_scale: f64,
    pub init_std: f64,
    pub forget_bias: f64,
    pub layout: GroupLayout,
    /// Averaged cells per layer for the GAC and NTM variants.
    pub gac_cells: usize,
    pub memory_scale: f64,
    pub history_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Fixed(f64),
    Tune,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RosterEntry {
    Baseline {
        kind: BaselineKind,
        rate: RateSpec,
    },
    /// The optimizer written by `meta-train` into the output directory.
    Trained,
    Learned(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningSpec {
    pub grid: Vec<f64>,
    pub budget: usize,
    pub steps: usize,
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub trials: usize,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub optimizer: String,
    pub coords: Vec<usize>,
    pub steps: usize,
    pub problem: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub optimizer: String,
    pub coord: usize,
    pub step: usize,
    pub problem: usize,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        (0..self.points).map(|i| self.min + span * i as f64 / (self.points - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub steps: usize,
    pub test_problems: usize,
    pub exclude_diverged: bool,
    pub family: FamilySpec,
    pub architecture: ArchitectureSpec,
    pub unroll: UnrollConfig,
    pub meta: MetaTrainConfig,
    pub search: Option<SearchSpec>,
    pub tuning: TuningSpec,
    pub roster: Vec<(String, RosterEntry)>,
    pub trace: Option<TraceSpec>,
    pub sweep: Option<SweepSpec>,
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn existing_file(ini: &Ini, base: &Path, key: &str) -> Result<PathBuf, ConfigError> {
    let (value, line) = ini.require_string(key)?;
    let path = resolve(base, &value);
    if !path.is_file() {
        return Err(ConfigError::at(line, Some(key), format!("`{key}`: file {} does not exist", path.display())));
    }
    Ok(path)
}

fn positive(ini: &Ini, key: &str, default: usize) -> Result<usize, ConfigError> {
    let v = ini.parse_or(key, default)?;
    if v == 0 {
        let line = ini.raw(key).map_or(0, |e| e.line);
        return Err(ConfigError::at(line, Some(key), format!("`{key}` must be at least 1")));
    }
    Ok(v)
}

fn bad(ini: &Ini, key: &str, message: String) -> ConfigError {
    match ini.raw(key) {
        Some(e) => ConfigError::at(e.line, Some(key), message),
        None => ConfigError::general(message),
    }
}

fn parse_family(ini: &Ini, base: &Path) -> Result<FamilySpec, ConfigError> {
    let (kind, line) = ini.require_string("family.kind")?;
    match kind.as_str() {
        "quadratic" => {
            let weights = match ini.string("family.weights").as_deref() {
                None | Some("gaussian") => QuadraticWeights::Gaussian,
                Some("identity") => QuadraticWeights::Identity,
                Some(other) => return Err(bad(ini, "family.weights", format!("unknown quadratic weights `{other}`"))),
            };
            Ok(FamilySpec::Quadratic {
                dim: positive(ini, "family.dim", 10)?,
                weights,
                init_std: ini.parse_or("family.init_std", 1.0)?,
            })
        }
        "mlp" => {
            let (source, _) = ini.require_string("family.dataset")?;
            let dataset = match source.as_str() {
                "synthetic" => DatasetSpec::Synthetic {
                    examples: positive(ini, "family.examples", 1000)?,
                    features: positive(ini, "family.features", 8)?,
                    classes: positive(ini, "family.classes", 2)?,
                },
                "idx" => DatasetSpec::Idx {
                    images: existing_file(ini, base, "family.images")?,
                    labels: existing_file(ini, base, "family.labels")?,
                    limit: ini.parse_opt("family.limit")?,
                    classes: ini.parse_opt("family.classes")?,
                },
                other => return Err(bad(ini, "family.dataset", format!("unknown dataset source `{other}`"))),
            };
            let activation = match ini.string("family.activation").as_deref() {
                None | Some("sigmoid") => Activation::Sigmoid,
                Some("relu") => Activation::Relu,
                Some(other) => return Err(bad(ini, "family.activation", format!("unknown activation `{other}`"))),
            };
            Ok(FamilySpec::Mlp {
                dataset,
                hidden: ini.list_or("family.hidden", vec![20])?,
                activation,
                minibatch: positive(ini, "family.minibatch", 128)?,
                init_std: ini.parse_or("family.init_std", 0.1)?,
            })
        }
        other => Err(ConfigError::at(line, Some("family.kind"), format!("unknown family `{other}`"))),
    }
}

fn parse_architecture(ini: &Ini, family: &FamilySpec) -> Result<ArchitectureSpec, ConfigError> {
    let variant = match ini.string("optimizer.variant") {
        None => Variant::Plain,
        Some(v) => Variant::parse(&v).ok_or_else(|| bad(ini, "optimizer.variant", format!("unknown variant `{v}`")))?,
    };
    let is_quadratic = matches!(family, FamilySpec::Quadratic { .. });
    let default_input = if is_quadratic { "raw" } else { "log-sign" };
    let encoding = match ini.string("optimizer.input").as_deref().unwrap_or(default_input) {
        "raw" => InputEncoding::Raw { scale: ini.parse_or("optimizer.input_scale", 1.0)? },
        "log-sign" => InputEncoding::LogSign { p: ini.parse_or("optimizer.threshold", 10.0)? },
        other => return Err(bad(ini, "optimizer.input", format!("unknown input encoding `{other}`"))),
    };
    let layout = match ini.string("optimizer.groups").as_deref() {
        None | Some("shared") => GroupLayout::Shared,
        Some("tensor-kind") if !is_quadratic => GroupLayout::TensorKind,
        Some("tensor-kind") => {
            return Err(bad(ini, "optimizer.groups", "tensor-kind groups need an mlp family".into()))
        }
        Some(other) => return Err(bad(ini, "optimizer.groups", format!("unknown group layout `{other}`"))),
    };
    if layout != GroupLayout::Shared && variant != Variant::Plain {
        return Err(bad(ini, "optimizer.groups", "parameter groups are only supported by the plain variant".into()));
    }
    let n_hidden = positive(ini, "optimizer.n_hidden", 20)?;
    let gac_default = usize::from(variant != Variant::Plain);
    let gac_cells = ini.parse_or("optimizer.gac_cells", gac_default)?;
    if gac_cells > n_hidden {
        return Err(bad(ini, "optimizer.gac_cells", "more averaged cells than hidden units".into()));
    }
    Ok(ArchitectureSpec {
        variant,
        n_hidden,
        encoding,
        output_scale: ini.parse_or("optimizer.output_scale", if is_quadratic { 1.0 } else { 0.1 })?,
        init_std: ini.parse_or("optimizer.init_std", 0.1)?,
        forget_bias: ini.parse_or("optimizer.forget_bias", 1.0)?,
        layout,
        gac_cells,
        memory_scale: ini.parse_or("optimizer.memory_scale", 0.0)?,
        history_len: positive(ini, "optimizer.history", 10)?,
    })
}

fn parse_roster(ini: &Ini, base: &Path) -> Result<Vec<(String, RosterEntry)>, ConfigError> {
    let mut roster = Vec::new();
    for e in ini.section("roster") {
        let key = format!("roster.{}", e.key);
        if !e.key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(ConfigError::at(e.line, Some(&key), format!("roster name `{}` must be alphanumeric", e.key)));
        }
        let words: Vec<&str> = e.value.split_whitespace().collect();
        let entry = match words.as_slice() {
            ["learned"] => RosterEntry::Trained,
            ["learned", path] => {
                let p = resolve(base, path);
                if !p.is_file() {
                    return Err(ConfigError::at(
                        e.line,
                        Some(&key),
                        format!("`{key}`: file {} does not exist", p.display()),
                    ));
                }
                RosterEntry::Learned(p)
            }
            [kind, rate] => {
                let kind = BaselineKind::parse(kind)
                    .ok_or_else(|| ConfigError::at(e.line, Some(&key), format!("unknown optimizer kind `{kind}`")))?;
                let rate = if *rate == "tune" {
                    RateSpec::Tune
                } else {
                    match rate.parse::<f64>() {
                        Ok(r) if r > 0.0 && r.is_finite() => RateSpec::Fixed(r),
                        _ => {
                            return Err(ConfigError::at(e.line, Some(&key), format!("invalid learning rate `{rate}`")))
                        }
                    }
                };
                RosterEntry::Baseline { kind, rate }
            }
            _ => {
                return Err(ConfigError::at(
                    e.line,
                    Some(&key),
                    "roster entries are `<kind> <rate|tune>`, `learned` or `learned <path>`",
                ))
            }
        };
        roster.push((e.key, entry));
    }
    Ok(roster)
}

fn roster_learned(ini: &Ini, key: &str, roster: &[(String, RosterEntry)]) -> Result<String, ConfigError> {
    let name = match ini.string(key) {
        Some(n) => n,
        None => {
            roster.iter().find(|(_, e)| !matches!(e, RosterEntry::Baseline { .. })).map(|(n, _)| n.clone()).ok_or_else(
                || ConfigError::general(format!("`{key}` is unset and the roster has no learned optimizer")),
            )?
        }
    };
    match roster.iter().find(|(n, _)| *n == name) {
        Some((_, RosterEntry::Baseline { .. })) => Err(bad(ini, key, format!("`{name}` is not a learned optimizer"))),
        Some(_) => Ok(name),
        None => Err(bad(ini, key, format!("`{name}` is not in the roster"))),
    }
}

impl ExperimentConfig {
    /// Parses and validates; `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let ini = Ini::parse(text)?;
        let family = parse_family(&ini, base)?;
        let architecture = parse_architecture(&ini, &family)?;
        let steps = positive(&ini, "experiment.steps", 100)?;

        let unroll =
            UnrollConfig::new(positive(&ini, "unroll.horizon", 100)?, positive(&ini, "unroll.truncation", 20)?);
        let defaults = MetaTrainConfig::default();
        let seed = ini.parse_or("experiment.seed", 0u64)?;
        let meta = MetaTrainConfig {
            meta_learning_rate: ini.parse_or("meta.learning_rate", defaults.meta_learning_rate)?,
            epochs: positive(&ini, "meta.epochs", defaults.epochs)?,
            episodes_per_epoch: positive(&ini, "meta.episodes", defaults.episodes_per_epoch)?,
            validation_problems: positive(&ini, "meta.validation_problems", defaults.validation_problems)?,
            patience: positive(&ini, "meta.patience", defaults.patience)?,
            seed,
            clip_norm: ini.parse_opt("meta.clip_norm")?,
        };
        meta.validate().map_err(|e| ConfigError::general(e.to_string()))?;
        let search_trials = ini.parse_or("meta.search_trials", 0usize)?;
        let search = (search_trials > 0)
            .then(|| -> Result<SearchSpec, ConfigError> {
                let range = (ini.parse_or("meta.search_min", 1e-4)?, ini.parse_or("meta.search_max", 1e-1)?);
                if !(range.0 > 0.0 && range.0 <= range.1) {
                    return Err(bad(&ini, "meta.search_min", "search range must be positive and ordered".into()));
                }
                Ok(SearchSpec { trials: search_trials, range })
            })
            .transpose()?;

        let grid = ini.list_or("tuning.grid", (-4..=1).map(|k| 10f64.powi(k)).collect())?;
        if grid.is_empty() || grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(bad(&ini, "tuning.grid", "tuning grid needs positive finite rates".into()));
        }
        let tuning = TuningSpec {
            grid,
            budget: positive(&ini, "tuning.budget", 20)?,
            steps: positive(&ini, "tuning.steps", steps)?,
            refine: ini.parse_or("tuning.refine", true)?,
        };

        let roster = parse_roster(&ini, base)?;
        let has_section = |s: &str| {
            let prefix = format!("{s}.");
            ini.keys().iter().any(|k| k.starts_with(&prefix))
        };
        let trace = if has_section("trace") {
            Some(TraceSpec {
                optimizer: roster_learned(&ini, "trace.optimizer", &roster)?,
                coords: ini.list_or("trace.coords", vec![0])?,
                steps: positive(&ini, "trace.steps", 32)?,
                problem: ini.parse_or("trace.problem", 0)?,
            })
        } else {
            None
        };
        let sweep = if has_section("sweep") {
            let s = SweepSpec {
                optimizer: roster_learned(&ini, "sweep.optimizer", &roster)?,
                coord: ini.parse_or("sweep.coord", 0)?,
                step: ini.parse_or("sweep.step", 0)?,
                problem: ini.parse_or("sweep.problem", 0)?,
                min: ini.parse_or("sweep.min", -1.0)?,
                max: ini.parse_or("sweep.max", 1.0)?,
                points: positive(&ini, "sweep.points", 101)?,
            };
            if !(s.min.is_finite() && s.max.is_finite() && s.min <= s.max) {
                return Err(bad(&ini, "sweep.min", "sweep range must be finite and ordered".into()));
            }
            Some(s)
        } else {
            None
        };

        let cfg = Self {
            seed,
            output: resolve(base, &ini.string("experiment.output").unwrap_or_else(|| "out".into())),
            steps,
            test_problems: positive(&ini, "experiment.test_problems", 100)?,
            exclude_diverged: ini.parse_or("experiment.exclude_diverged", false)?,
            family,
            architecture,
            unroll,
            meta,
            search,
            tuning,
            roster,
            trace,
            sweep,
        };
        ini.reject_unused()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|mut e| {
            e.file = Some(path.display().to_string());
            e.into()
        })
    }

    /// Replaces the master seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.meta.seed = seed;
        self
    }

    /// Builds the problem family, loading or generating its dataset.
    pub fn problem_family(&self) -> Result<ProblemFamily, crate::CliError> {
        Ok(match &self.family {
            FamilySpec::Quadratic { dim, weights, init_std } => {
                ProblemFamily::Quadratic(QuadraticFamily { dim: *dim, weights: *weights, init_std: *init_std })
            }
            FamilySpec::Mlp { dataset, hidden, activation, minibatch, init_std } => {
                let data = match dataset {
                    DatasetSpec::Synthetic { examples, features, classes } => {
                        if examples < classes {
                            return Err(ConfigError::general("need at least one example per class").into());
                        }
                        let mut rng = RngStream::new(self.seed).substream(DATA_STREAM);
                        synthetic_dataset(*examples, *features, *classes, &mut rng)
                    }
                    DatasetSpec::Idx { images, labels, limit, classes } => {
                        idx::load_idx(images, labels, *limit, *classes)?
                    }
                };
                let arch = MlpArchitecture {
                    input_dim: data.n_features(),
                    hidden: hidden.clone(),
                    n_classes: data.n_classes(),
                    activation: *activation,
                };
                if *minibatch > data.len() {
                    return Err(ConfigError::general(format!(
                        "minibatch {minibatch} exceeds the {} available examples",
                        data.len()
                    ))
                    .into());
                }
                ProblemFamily::Mlp(MlpFamily {
                    arch,
                    dataset: Arc::new(data),
                    minibatch_size: *minibatch,
                    init_std: *init_std,
                })
            }
        })
    }

    pub fn optimizer_path(&self) -> PathBuf {
        self.output.join("optimizer.txt")
    }
}
