//! Run configuration: TOML file, optional dataset preset underneath it,
//! environment and flag overrides on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tsmeta::eval::{MetaTestConfig, PretrainConfig, FINETUNE_LR_GRID, WEIGHT_DECAY_GRID};
use tsmeta::hash::config_hash;
use tsmeta::maml::MamlConfig;
use tsmeta::mmaml::MmamlConfig;
use tsmeta::net::{Activation, TaskNetConfig};
use tsmeta::series::{CsvOptions, Imputation, Split, WindowSpec};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "TSMETA_OUTPUT_DIR";

pub const PRESETS: [(&str, &str); 3] = [
    ("pollution", include_str!("../presets/pollution.toml")),
    ("hr", include_str!("../presets/hr.toml")),
    ("battery", include_str!("../presets/battery.toml")),
];

/// A configuration problem (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Maml,
    Mmaml,
    LstmFinetune,
    TargetMean,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Maml => "maml",
            ModelKind::Mmaml => "mmaml",
            ModelKind::LstmFinetune => "lstm-finetune",
            ModelKind::TargetMean => "target-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of CSV files, one long series per file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Explicit CSV files, used instead of `dir`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
    /// Policy for channels without an entry in `column_imputation`.
    #[serde(default)]
    pub imputation: Imputation,
    #[serde(default)]
    pub column_imputation: BTreeMap<String, Imputation>,
    /// Two-column `series_id,split` CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Inline manifest; takes precedence over `manifest`.
    #[serde(default)]
    pub splits: BTreeMap<String, Split>,
}

impl DataConfig {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            target: self.target.clone(),
            drop: self.drop.clone(),
            channels: self.channels.clone(),
        }
    }

    pub fn imputation_for(&self, names: &[String]) -> Vec<Imputation> {
        names
            .iter()
            .map(|n| self.column_imputation.get(n).copied().unwrap_or(self.imputation))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub size: usize,
    #[serde(default = "one")]
    pub step: usize,
    #[serde(default = "fifty")]
    pub meta_window_len: usize,
}

fn one() -> usize {
    1
}

fn fifty() -> usize {
    50
}

impl WindowConfig {
    pub fn spec(&self) -> Result<WindowSpec> {
        Ok(WindowSpec::new(self.size, self.step)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    /// Width of the dense projection; 0 feeds the last hidden state to the
    /// head directly.
    pub feature_dim: usize,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: vec![120, 120],
            feature_dim: 128,
            activation: Activation::Identity,
        }
    }
}

impl NetConfig {
    pub fn task_net(&self, channels: usize, window_size: usize) -> TaskNetConfig {
        TaskNetConfig {
            channels,
            window_size,
            hidden: self.hidden.clone(),
            feature_dim: (self.feature_dim > 0).then_some(self.feature_dim),
            activation: self.activation,
        }
    }
}

/// MMAML settings beyond the shared `[maml]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmamlExtras {
    pub vrae_weight: f64,
    pub latent_dim: usize,
    pub hidden_size: usize,
    pub stochastic_encode: bool,
    pub freeze_modulation: bool,
}

impl Default for MmamlExtras {
    fn default() -> Self {
        let d = MmamlConfig::default();
        MmamlExtras {
            vrae_weight: d.vrae_weight,
            latent_dim: d.latent_dim,
            hidden_size: d.hidden_size,
            stochastic_encode: d.stochastic_encode,
            freeze_modulation: d.freeze_modulation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneGrid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

impl Default for FinetuneGrid {
    fn default() -> Self {
        FinetuneGrid {
            lr: FINETUNE_LR_GRID.to_vec(),
            weight_decay: WEIGHT_DECAY_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub horizon: usize,
    /// Fixed stride between adaptation points; 0 uses `⌊M/100⌋` per series.
    pub meta_test_step: usize,
    pub gradient_steps: usize,
    /// Independently trained models evaluated, each from its own seed.
    pub runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let d = MetaTestConfig::default();
        EvalConfig {
            horizon: d.horizon,
            meta_test_step: 0,
            gradient_steps: d.gradient_steps,
            runs: d.runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Resumable state is written every this many meta-epochs.
    pub checkpoint_every: usize,
    /// Stride between meta-validation virtual tasks.
    pub validation_step: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            checkpoint_every: 100,
            validation_step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Dataset label in result tables.
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelKind,
    pub data: DataConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub maml: MamlConfig,
    #[serde(default)]
    pub mmaml: MmamlExtras,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub finetune: FinetuneGrid,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Directory of the config file; relative data paths resolve from here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "dataset".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Command-line overrides, applied after the file and the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub gradient_steps: Option<usize>,
    pub runs: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| ConfigError(format!("config: {e}")))?;
        let mut table = match user.get("preset") {
            Some(toml::Value::String(p)) => {
                let (_, snippet) = PRESETS
                    .iter()
                    .find(|(n, _)| n == p)
                    .ok_or_else(|| ConfigError(format!("unknown preset '{p}'")))?;
                snippet.parse::<toml::Table>().expect("bundled presets parse")
            }
            Some(_) => bail!(ConfigError("preset must be a string".into())),
            None => toml::Table::new(),
        };
        merge(&mut table, user);
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Loads a config file and applies the environment and `overrides`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_toml(&text, &base)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(k) = o.gradient_steps {
            self.eval.gradient_steps = k;
        }
        if let Some(r) = o.runs {
            self.eval.runs = r;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError(m).into());
        if self.data.dir.is_none() && self.data.files.is_empty() {
            return bad("data: set either `dir` or `files`".into());
        }
        if self.window.size == 0 || self.window.step == 0 || self.window.meta_window_len == 0 {
            return bad("window: size, step and meta_window_len must be positive".into());
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return bad("net: hidden sizes must be a nonempty list of positive integers".into());
        }
        if self.finetune.lr.is_empty() || self.finetune.weight_decay.is_empty() {
            return bad("finetune: grids must be nonempty".into());
        }
        if self.train.checkpoint_every == 0 || self.train.validation_step == 0 {
            return bad("train: checkpoint_every and validation_step must be positive".into());
        }
        if self.pretrain.batch_size == 0 || self.pretrain.lr.is_nan() || self.pretrain.lr <= 0.0 {
            return bad("pretrain: batch_size and lr must be positive".into());
        }
        self.mmaml_config()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.meta_test_config()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn mmaml_config(&self) -> MmamlConfig {
        let m = &self.mmaml;
        MmamlConfig {
            maml: self.maml.clone(),
            vrae_weight: m.vrae_weight,
            latent_dim: m.latent_dim,
            hidden_size: m.hidden_size,
            stochastic_encode: m.stochastic_encode,
            freeze_modulation: m.freeze_modulation,
        }
    }

    pub fn meta_test_config(&self) -> MetaTestConfig {
        MetaTestConfig {
            horizon: self.eval.horizon,
            meta_test_step: (self.eval.meta_test_step > 0).then_some(self.eval.meta_test_step),
            gradient_steps: self.eval.gradient_steps,
            runs: self.eval.runs,
            seed: self.seed,
        }
    }

    /// Hash of everything that determines the preprocessed artifacts.
    pub fn data_hash(&self) -> String {
        config_hash(&(&self.data, &self.window))
    }

    /// Hash of everything that determines one trained model per run seed.
    pub fn train_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            data: String,
            seed: u64,
            model: ModelKind,
            net: Option<&'a NetConfig>,
            maml: Option<&'a MamlConfig>,
            mmaml: Option<&'a MmamlExtras>,
            pretrain: Option<&'a PretrainConfig>,
        }
        let m = self.model;
        let meta = matches!(m, ModelKind::Maml | ModelKind::Mmaml);
        config_hash(&Key {
            data: self.data_hash(),
            seed: self.seed,
            model: m,
            net: (m != ModelKind::TargetMean).then_some(&self.net),
            maml: meta.then_some(&self.maml),
            mmaml: (m == ModelKind::Mmaml).then_some(&self.mmaml),
            pretrain: (m == ModelKind::LstmFinetune).then_some(&self.pretrain),
        })
    }

    /// Hash of everything that determines the evaluation results.
    pub fn eval_hash(&self) -> String {
        let grid = (self.model == ModelKind::LstmFinetune).then_some(&self.finetune);
        config_hash(&(self.train_hash(), &self.eval, grid))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn run_dir(&self, run: usize) -> PathBuf {
        self.output_dir.join("train").join(self.model.tag()).join(format!("run-{run}"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.output_dir.join("eval").join(self.model.tag())
    }

    /// Writes the effective configuration next to the outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = toml::to_string(self).context("serializing the effective config")?;
        let path = dir.join("config.effective.toml");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
