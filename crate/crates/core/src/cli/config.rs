//! Experiment configuration: one TOML file with a section per module,
//! optionally patched by `section.key=value` overrides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{DEFAULT_GLOBAL_TOL, DEFAULT_GRID_COUNT};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Circle,
    DoubleCircle,
    BiasedCircle,
    Highfreq,
    InverseSin,
    InsuranceSynthetic,
    Csv,
}

impl Generator {
    pub fn is_synthetic(self) -> bool {
        !matches!(self, Generator::InsuranceSynthetic | Generator::Csv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Implicit,
    L2,
    Huber,
    Kde,
    Mdn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Implicit => "implicit",
            Method::L2 => "l2",
            Method::Huber => "huber",
            Method::Kde => "kde",
            Method::Mdn => "mdn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub generator: Generator,
    /// Training rows (synthetic) or raw instances (insurance stand-in).
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sd: f64,
    pub test_noise_sd: f64,
    /// Encode the scalar input with the 4×32 tile coder.
    pub tile_coding: bool,
    pub csv_path: Option<String>,
    pub target_column: String,
    pub categorical: Vec<String>,
    pub standardize: Vec<String>,
    pub log_target: bool,
    pub scale_target: bool,
    pub test_fraction: f64,
    /// Binary column flipped to build a two-target dataset.
    pub flip_column: Option<String>,
    /// Hidden sizes and steps of the regressor generating flipped targets.
    pub flip_hidden: Vec<usize>,
    pub flip_steps: usize,
    pub flip_learning_rate: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            generator: Generator::Circle,
            n_train: 4000,
            n_test: 1000,
            noise_sd: 0.1,
            test_noise_sd: 0.0,
            tile_coding: false,
            csv_path: None,
            target_column: "y".into(),
            categorical: Vec::new(),
            standardize: Vec::new(),
            log_target: false,
            scale_target: false,
            test_fraction: 0.2,
            flip_column: None,
            flip_hidden: vec![64, 64],
            flip_steps: 5000,
            flip_learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    pub name: Method,
    pub components: usize,
    pub huber_delta: f64,
    pub kde_lambda: Option<f64>,
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            name: Method::Implicit,
            components: 3,
            huber_delta: 1.0,
            kde_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: vec![16, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Defaults to 200 for synthetic generators and 10000 otherwise.
    pub eval_every: Option<usize>,
    pub eta: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 128,
            steps: 20_000,
            eval_every: None,
            eta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub count: usize,
    /// Fraction of the training-target range added on each side.
    pub pad: f64,
    pub global_tol: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            count: DEFAULT_GRID_COUNT,
            pad: 0.0,
            global_tol: DEFAULT_GLOBAL_TOL,
        }
    }
}

pub const METRIC_NAMES: &[&str] = &[
    "rmse",
    "mae",
    "hausdorff_rmse",
    "hausdorff_mae",
    "worst_rmse",
    "worst_mae",
    "dominant_rmse",
    "dominant_within",
    "local_empty_count",
    "local_singleton_count",
    "region_rmse",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub metrics: Vec<String>,
    /// `[lo, hi)` interval of the scalar input for `region_rmse`.
    pub region: Option<[f64; 2]>,
    /// Radius for `dominant_within` (fraction of picks this close to the
    /// dominant mode).
    pub dominant_radius: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            metrics: vec!["rmse".into()],
            region: None,
            dominant_radius: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub x_min: f64,
    pub x_max: f64,
    pub x_step: f64,
    /// Input at which to export the `y` profile and the exclusion report.
    pub profile_x: Option<f64>,
    pub histogram_bins: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            x_min: -1.0,
            x_max: 1.0,
            x_step: 0.01,
            profile_x: None,
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub method: MethodSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub grid: GridSection,
    pub eval: EvalSection,
    pub run: RunSection,
    pub predict: PredictSection,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{ov}` is not key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| config_err(format!("override key `{key}` is not section.key")))?;
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(sec) = entry else {
                return Err(config_err(format!("`{section}` is not a section")));
            };
            sec.insert(field.to_string(), parse_value(value.trim()));
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(config_err("run.seeds must be nonempty"));
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return Err(config_err("run.seeds contains duplicates"));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(config_err("network.hidden must list positive widths"));
        }
        if self.method.name == Method::Mdn && self.method.components == 0 {
            return Err(config_err("method.components must be >= 1 for mdn"));
        }
        if self.method.name == Method::Huber && !(self.method.huber_delta > 0.0) {
            return Err(config_err("method.huber_delta must be > 0"));
        }
        if self.grid.count < 3 {
            return Err(config_err("grid.count must be >= 3"));
        }
        if self.dataset.generator == Generator::Csv && self.dataset.csv_path.is_none() {
            return Err(config_err("dataset.csv_path is required for generator = \"csv\""));
        }
        if self.dataset.tile_coding && !self.dataset.generator.is_synthetic() {
            return Err(config_err("tile coding applies to scalar synthetic inputs only"));
        }
        if self.dataset.n_train == 0 {
            return Err(config_err("dataset.n_train must be >= 1"));
        }
        for m in &self.eval.metrics {
            if !METRIC_NAMES.contains(&m.as_str()) {
                return Err(config_err(format!(
                    "unknown metric `{m}`; expected one of {}",
                    METRIC_NAMES.join(", ")
                )));
            }
        }
        if self.eval.metrics.iter().any(|m| m == "region_rmse") && self.eval.region.is_none() {
            return Err(config_err("metric region_rmse needs eval.region"));
        }
        if !(self.predict.x_step > 0.0) || self.predict.x_max < self.predict.x_min {
            return Err(config_err("predict needs x_min <= x_max and x_step > 0"));
        }
        self.train_config(0).validate()
    }

    pub fn eval_every(&self) -> usize {
        self.train.eval_every.unwrap_or(if self.dataset.generator.is_synthetic() {
            200
        } else {
            10_000
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            steps: self.train.steps,
            eval_every: self.eval_every(),
            seed,
            eta: self.train.eta,
        }
    }

    /// Sorted `section.key = value` lines of the fully defaulted config.
    pub fn canonical(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut lines = Vec::new();
        if let toml::Value::Table(sections) = value {
            for (section, body) in sections {
                if let toml::Value::Table(fields) = body {
                    for (key, v) in fields {
                        lines.push(format!("{section}.{key} = {v}"));
                    }
                }
            }
        }
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::parse("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.eval_every(), 200);
        let cfg = ExperimentConfig::parse(
            "[train]\nsteps = 10\n[method]\nname = \"mdn\"\n",
            &["train.steps=400".into(), "run.seeds=[1,2,3]".into(), "run.output_dir=res".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.steps, 400);
        assert_eq!(cfg.run.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.run.output_dir, "res");
        assert_eq!(cfg.method.name, Method::Mdn);
    }

    #[test]
    fn invalid_configs() {
        for (text, ov) in [
            ("[train]\nstepz = 1\n", vec![]),
            ("", vec!["run.seeds=[]".to_string()]),
            ("", vec!["eval.metrics=[\"nope\"]".to_string()]),
            ("", vec!["train.learning_rate=0".to_string()]),
            ("", vec!["badkey".to_string()]),
            ("[dataset]\ngenerator = \"csv\"\n", vec![]),
        ] {
            assert!(matches!(ExperimentConfig::parse(text, &ov), Err(Error::Config(_))), "{text} {ov:?}");
        }
    }

    #[test]
    fn hash_ignores_formatting_and_tracks_content() {
        let a = ExperimentConfig::parse("[train]\nsteps = 100\n", &[]).unwrap();
        let b = ExperimentConfig::parse("# comment\n[train]\nsteps=100\n\n", &[]).unwrap();
        let c = ExperimentConfig::parse("", &["train.steps=100".into()]).unwrap();
        let d = ExperimentConfig::parse("[train]\nsteps = 101\n", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        assert_ne!(a.hash(), d.hash());
        assert_eq!(a.hash_hex().len(), 16);
    }
}
