use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Generator, Method};
use crate::baselines::kde::{kde_fit_with, KdeModel, KdeOptions};
use crate::baselines::mdn::{mdn_net_config, mdn_train};
use crate::baselines::regression::{huber_train, l2_train};
use crate::datasets::{
    format_f64, gen_biased_circle, gen_circle, gen_double_circle, gen_highfreq, gen_insurance_synthetic,
    gen_inverse_sin, insurance_build, load_csv, write_dataset_csv, Dataset, InsuranceFitConfig, LabeledSet,
    Manifest, ModeOracle, Split, Standardizer, TargetScaler, TileCoder, TrueModes,
};
use crate::diagnostics::{
    exclusion_radius_check, residual_histogram, ProfileScan, DEFAULT_EPS_D, DEFAULT_EPS_F,
};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_modal, EvalRecord, ImplicitPredictor, MdnPredictor, ModalEvaluation, ModalPredictor,
    RegressorPredictor,
};
use crate::network::{MlpParams, ModelFile, NetConfig};
use crate::prediction::{ModeGrid, ModeSet};
use crate::training::{self, stream_rng, TrainConfig, EVAL_STREAM};

/// Added to the run seed when drawing synthetic test sets.
pub const TEST_SEED_OFFSET: u64 = 0x7E57_0000;

/// Training data, labeled test data and the factor mapping errors on the
/// model's target scale back to the reporting scale.
#[derive(Debug, Clone)]
pub struct Task {
    pub train: Dataset,
    pub test: Option<LabeledSet>,
    pub error_scale: f64,
    pub coder: Option<TileCoder>,
    pub manifest: Manifest,
}

type Generate = fn(usize, f64, u64) -> Result<(Dataset, ModeOracle)>;

fn insurance_fit(cfg: &ExperimentConfig, seed: u64, standardize: Vec<String>, log_target: bool) -> InsuranceFitConfig {
    let d = &cfg.dataset;
    InsuranceFitConfig {
        hidden_sizes: d.flip_hidden.clone(),
        train: TrainConfig {
            learning_rate: d.flip_learning_rate,
            batch_size: cfg.train.batch_size,
            steps: d.flip_steps,
            eval_every: d.flip_steps.max(1),
            seed,
            eta: 0.0,
        },
        standardize,
        log_target,
    }
}

pub fn build_task(cfg: &ExperimentConfig, seed: u64) -> Result<Task> {
    let d = &cfg.dataset;
    let synthetic: Option<Generate> = match d.generator {
        Generator::Circle => Some(gen_circle),
        Generator::DoubleCircle => Some(gen_double_circle),
        Generator::BiasedCircle => Some(gen_biased_circle),
        Generator::Highfreq => Some(gen_highfreq),
        _ => None,
    };
    let (train, test, error_scale, coder) = if let Some(generate) = synthetic {
        let (mut train, _) = generate(d.n_train, d.noise_sd, seed)?;
        let (test_raw, oracle) = generate(d.n_test, d.test_noise_sd, seed.wrapping_add(TEST_SEED_OFFSET))?;
        let mut test = LabeledSet::from_oracle(test_raw, oracle)?;
        let coder = d.tile_coding.then(TileCoder::default);
        if let Some(c) = &coder {
            train = c.encode_dataset(&train)?;
            test = test.tiled(c)?;
        }
        (train, Some(test), 1.0, coder)
    } else {
        match d.generator {
            Generator::InverseSin => (gen_inverse_sin(d.n_train, d.noise_sd, seed)?, None, 1.0, None),
            Generator::InsuranceSynthetic => {
                let raw = gen_insurance_synthetic(d.n_train, seed)?;
                let flip = d.flip_column.as_deref().unwrap_or("smoker");
                let fit = insurance_fit(cfg, seed, vec!["age".into(), "bmi".into()], true);
                let built = insurance_build(&raw, flip, &fit)?;
                let (train, test) = built.split(d.test_fraction, seed)?;
                (train, Some(test), built.error_scale(), None)
            }
            Generator::Csv => csv_task(cfg, seed)?,
            _ => unreachable!("synthetic generators handled above"),
        }
    };
    let manifest = Manifest {
        generator: serde_json::to_value(d.generator)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
        seed,
        params: serde_json::to_value(d)?,
        n_train: train.len(),
        n_test: test.as_ref().map_or(0, |t| t.data.len()),
        split: None,
    };
    Ok(Task {
        train,
        test,
        error_scale,
        coder,
        manifest,
    })
}

fn csv_task(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<LabeledSet>, f64, Option<TileCoder>)> {
    let d = &cfg.dataset;
    let path = d.csv_path.as_deref().expect("validated");
    let categorical: Vec<&str> = d.categorical.iter().map(String::as_str).collect();
    let raw = load_csv(path, &d.target_column, &categorical)?;
    if let Some(flip) = &d.flip_column {
        let fit = insurance_fit(cfg, seed, d.standardize.clone(), d.log_target);
        let built = insurance_build(&raw, flip, &fit)?;
        let (train, test) = built.split(d.test_fraction, seed)?;
        return Ok((train, Some(test), built.error_scale(), None));
    }

    let split = Split::random(raw.len(), d.test_fraction, seed)?;
    let mut train = raw.subset(&split.train);
    let mut test = raw.subset(&split.test);
    if d.log_target {
        for data in [&mut train, &mut test] {
            if let Some(bad) = data.targets().iter().find(|&&y| y <= 0.0) {
                return Err(Error::OutOfDomain { value: *bad, lo: 0.0, hi: f64::INFINITY });
            }
            data.targets_mut().iter_mut().for_each(|y| *y = y.ln());
        }
    }
    let names: Vec<&str> = d.standardize.iter().map(String::as_str).collect();
    let standardizer = Standardizer::fit(&train, &names)?;
    standardizer.apply(&mut train);
    standardizer.apply(&mut test);
    let mut error_scale = 1.0;
    if d.scale_target {
        let scaler = TargetScaler::fit(&train)?;
        scaler.apply(&mut train);
        scaler.apply(&mut test);
        error_scale = scaler.max - scaler.min;
    }
    let truth = test
        .targets()
        .iter()
        .map(|&y| TrueModes {
            all: vec![y],
            dominant: Some(y),
        })
        .collect();
    Ok((
        train,
        Some(LabeledSet {
            data: test,
            truth,
            raw_x: Vec::new(),
        }),
        error_scale,
        None,
    ))
}

/// A trained model of any method.
#[derive(Debug, Clone)]
pub enum Fitted {
    Implicit { params: MlpParams, eta: f64, global_tol: f64 },
    Regressor(MlpParams),
    Mdn(MlpParams),
    Kde(KdeModel),
}

impl Fitted {
    pub fn predictor(&self) -> Box<dyn ModalPredictor + '_> {
        match self {
            Fitted::Implicit { params, eta, global_tol } => Box::new(ImplicitPredictor {
                params,
                eta: *eta,
                global_tol: *global_tol,
            }),
            Fitted::Regressor(p) => Box::new(RegressorPredictor(p)),
            Fitted::Mdn(p) => Box::new(MdnPredictor(p)),
            Fitted::Kde(k) => Box::new(k),
        }
    }
}

impl ModalPredictor for &KdeModel {
    fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        KdeModel::mode_sets(self, x, grid)
    }
}

/// On-disk model: method tag, prediction grid and the fitted state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub method: Method,
    pub eta: f64,
    pub global_tol: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<ModelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde: Option<KdeModel>,
}

impl SavedModel {
    pub fn new(method: Method, fitted: &Fitted, grid: &ModeGrid) -> Self {
        let (eta, global_tol) = match fitted {
            Fitted::Implicit { eta, global_tol, .. } => (*eta, *global_tol),
            _ => (0.0, crate::prediction::DEFAULT_GLOBAL_TOL),
        };
        let network = match fitted {
            Fitted::Implicit { params, .. } | Fitted::Regressor(params) | Fitted::Mdn(params) => {
                Some(params.to_model_file())
            }
            Fitted::Kde(_) => None,
        };
        let kde = match fitted {
            Fitted::Kde(k) => Some(k.clone()),
            _ => None,
        };
        Self {
            method,
            eta,
            global_tol,
            grid_min: grid.y_min(),
            grid_max: grid.y_max(),
            grid_count: grid.count(),
            network,
            kde,
        }
    }

    pub fn restore(&self) -> Result<(Fitted, ModeGrid)> {
        let grid = ModeGrid::new(self.grid_min, self.grid_max, self.grid_count)?;
        let net = || -> Result<MlpParams> {
            let file = self
                .network
                .as_ref()
                .ok_or_else(|| Error::Format("model file lacks network".into()))?;
            MlpParams::from_model_file(file)
        };
        let fitted = match self.method {
            Method::Implicit => Fitted::Implicit {
                params: net()?,
                eta: self.eta,
                global_tol: self.global_tol,
            },
            Method::L2 | Method::Huber => Fitted::Regressor(net()?),
            Method::Mdn => Fitted::Mdn(net()?),
            Method::Kde => Fitted::Kde(
                self.kde
                    .clone()
                    .ok_or_else(|| Error::Format("model file lacks KDE state".into()))?,
            ),
        };
        Ok((fitted, grid))
    }
}

/// Evaluates a predictor with a fresh evaluation stream for `seed`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    predictor: &dyn ModalPredictor,
    test: &LabeledSet,
    grid: &ModeGrid,
    error_scale: f64,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let mut rng = stream_rng(seed, EVAL_STREAM);
    let e = evaluate_modal(predictor, test, grid, &mut rng)?;
    select_metrics(cfg, &e, test, error_scale)
}

fn select_metrics(
    cfg: &ExperimentConfig,
    e: &ModalEvaluation,
    test: &LabeledSet,
    scale: f64,
) -> Result<Vec<(String, f64)>> {
    let nan = f64::NAN;
    let mut out = Vec::with_capacity(cfg.eval.metrics.len());
    for name in &cfg.eval.metrics {
        let value = match name.as_str() {
            "rmse" => e.rmse() * scale,
            "mae" => e.mae() * scale,
            "hausdorff_rmse" => e.hausdorff_rmse().map_or(nan, |v| v * scale),
            "hausdorff_mae" => e.hausdorff_mae().map_or(nan, |v| v * scale),
            "worst_rmse" => e.worst_rmse() * scale,
            "worst_mae" => e.worst_mae() * scale,
            "dominant_rmse" => e.dominant_rmse().map_or(nan, |v| v * scale),
            "dominant_within" => e.dominant_within(cfg.eval.dominant_radius).unwrap_or(nan),
            "local_empty_count" => e.local_failures() as f64,
            "local_singleton_count" => e.local_singletons() as f64,
            "region_rmse" => {
                let [lo, hi] = cfg.eval.region.expect("validated");
                if test.raw_x.len() != test.data.len() {
                    return Err(Error::Config("region_rmse needs a scalar-input dataset".into()));
                }
                e.rmse_where(|i| (lo..hi).contains(&test.raw_x[i]))
                    .map_or(nan, |v| v * scale)
            }
            other => return Err(Error::Config(format!("unknown metric `{other}`"))),
        };
        out.push((name.clone(), value));
    }
    Ok(out)
}

/// Trains one seed, recording the configured metrics every `eval_every`
/// steps when a test set exists. KDE has no training loop and is evaluated
/// once at step 0.
pub fn fit_seed(cfg: &ExperimentConfig, task: &Task, seed: u64) -> Result<(Fitted, ModeGrid, Vec<EvalRecord>)> {
    let grid = ModeGrid::from_targets(task.train.targets(), cfg.grid.count, cfg.grid.pad)?;
    let train_cfg = cfg.train_config(seed);
    let hidden = &cfg.network.hidden;
    let dim = task.train.dim();
    let method = cfg.method.name;
    let (eta, tol) = (cfg.train.eta, cfg.grid.global_tol);

    if method == Method::Kde {
        let kde = kde_fit_with(
            &task.train,
            &KdeOptions {
                categorical_lambda: cfg.method.kde_lambda,
            },
        )?;
        let mut curve = Vec::new();
        if let Some(test) = &task.test {
            for (metric, value) in evaluate(cfg, &&kde, test, &grid, task.error_scale, seed)? {
                curve.push(EvalRecord {
                    step: 0,
                    metric,
                    value,
                    seed,
                });
            }
        }
        return Ok((Fitted::Kde(kde), grid, curve));
    }

    let mut evaluator = |_step: usize, params: &MlpParams| -> Result<Vec<(String, f64)>> {
        let Some(test) = &task.test else {
            return Ok(Vec::new());
        };
        let predictor: Box<dyn ModalPredictor + '_> = match method {
            Method::Implicit => Box::new(ImplicitPredictor {
                params,
                eta,
                global_tol: tol,
            }),
            Method::Mdn => Box::new(MdnPredictor(params)),
            _ => Box::new(RegressorPredictor(params)),
        };
        evaluate(cfg, predictor.as_ref(), test, &grid, task.error_scale, seed)
    };
    let outcome = match method {
        Method::Implicit => training::train(&task.train, &NetConfig::implicit(dim, hidden), &train_cfg, &mut evaluator)?,
        Method::L2 => l2_train(&task.train, &NetConfig::regressor(dim, hidden), &train_cfg, &mut evaluator)?,
        Method::Huber => huber_train(
            &task.train,
            &NetConfig::regressor(dim, hidden),
            &train_cfg,
            cfg.method.huber_delta,
            &mut evaluator,
        )?,
        Method::Mdn => {
            let k = cfg.method.components;
            mdn_train(&task.train, &mdn_net_config(dim, hidden, k), k, &train_cfg, &mut evaluator)?
        }
        Method::Kde => unreachable!("handled above"),
    };
    let fitted = match method {
        Method::Implicit => Fitted::Implicit {
            params: outcome.params,
            eta,
            global_tol: tol,
        },
        Method::Mdn => Fitted::Mdn(outcome.params),
        _ => Fitted::Regressor(outcome.params),
    };
    Ok((fitted, grid, outcome.curve))
}

/// Output artifacts: every file starts with `#` comment lines carrying the
/// config hash and seeds.
pub struct Outputs {
    pub dir: PathBuf,
    header: String,
}

impl Outputs {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = PathBuf::from(&cfg.run.output_dir);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let seeds: Vec<String> = cfg.run.seeds.iter().map(u64::to_string).collect();
        Ok(Self {
            dir,
            header: format!(
                "# config_hash={} seeds={} method={}\n",
                cfg.hash_hex(),
                seeds.join(","),
                cfg.method.name.as_str()
            ),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn header_lines(&self) -> Vec<String> {
        vec![self.header.trim_start_matches("# ").trim_end().to_string()]
    }

    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = self.header.clone();
        text.push_str(body);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

/// Reads a file written by [`Outputs::write`], dropping `#` lines.
pub fn read_artifact(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn model_name(seed: u64) -> String {
    format!("model_s{seed}.json")
}

pub fn curves_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("step,seed,metric,value\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.seed, r.metric, format_f64(r.value)));
    }
    out
}

/// Mean and standard error across seeds per `(step, metric)`, in first-seen
/// order of steps and metrics.
pub fn summary_csv(records: &[EvalRecord]) -> String {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for r in records {
        let k = (r.step, r.metric.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by_key(|k| k.0);
    let mut out = String::from("step,metric,mean,stderr,n\n");
    for (step, metric) in keys {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.step == step && r.metric == metric)
            .map(|r| r.value)
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let stderr = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        out.push_str(&format!(
            "{step},{metric},{},{},{}\n",
            format_f64(mean),
            format_f64(stderr),
            vals.len()
        ));
    }
    out
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = Outputs::new(cfg)?;
    let mut written = Vec::new();
    for &seed in &cfg.run.seeds {
        let task = build_task(cfg, seed)?;
        let header = out.header_lines();
        let train_path = out.path(&format!("data_s{seed}_train.csv"));
        write_dataset_csv(&train_path, &task.train, &header)?;
        written.push(train_path);
        if let Some(test) = &task.test {
            let test_path = out.path(&format!("data_s{seed}_test.csv"));
            write_dataset_csv(&test_path, &test.data, &header)?;
            written.push(test_path);
            let mut modes = String::from("row,mode,dominant\n");
            for (i, t) in test.truth.iter().enumerate() {
                for &m in &t.all {
                    let dom = t.dominant == Some(m);
                    modes.push_str(&format!("{i},{},{}\n", format_f64(m), u8::from(dom)));
                }
            }
            written.push(out.write(&format!("data_s{seed}_modes.csv"), &modes)?);
        }
        let manifest = serde_json::json!({
            "config_hash": cfg.hash_hex(),
            "manifest": task.manifest,
        });
        let path = out.path(&format!("manifest_s{seed}.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn write_model(out: &Outputs, cfg: &ExperimentConfig, seed: u64, fitted: &Fitted, grid: &ModeGrid) -> Result<PathBuf> {
    let saved = SavedModel::new(cfg.method.name, fitted, grid);
    out.write(&model_name(seed), &(serde_json::to_string(&saved)? + "\n"))
}

/// Trains every seed; writes one model file per seed and `curves.csv`.
/// With `summary`, also writes the across-seed `summary.csv`.
fn train_all(cfg: &ExperimentConfig, summary: bool) -> Result<Vec<PathBuf>> {
    let out = Outputs::new(cfg)?;
    let mut records = Vec::new();
    let mut written = Vec::new();
    for &seed in &cfg.run.seeds {
        log::info!("seed {seed}: {} on {:?}", cfg.method.name.as_str(), cfg.dataset.generator);
        let task = build_task(cfg, seed)?;
        let (fitted, grid, curve) = fit_seed(cfg, &task, seed)?;
        records.extend(curve);
        written.push(write_model(&out, cfg, seed, &fitted, &grid)?);
    }
    written.push(out.write("curves.csv", &curves_csv(&records))?);
    if summary {
        written.push(out.write("summary.csv", &summary_csv(&records))?);
    }
    Ok(written)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    train_all(cfg, false)
}

pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    train_all(cfg, true)
}

pub fn load_model(out: &Outputs, seed: u64) -> Result<(Fitted, ModeGrid)> {
    let text = read_artifact(&out.path(&model_name(seed)))?;
    let saved: SavedModel = serde_json::from_str(&text)?;
    saved.restore()
}

/// Scores saved models on their seed's test set; implicit models also get a
/// residual histogram over the training data.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = Outputs::new(cfg)?;
    let mut body = String::from("seed,metric,value\n");
    let mut written = Vec::new();
    for &seed in &cfg.run.seeds {
        let task = build_task(cfg, seed)?;
        let test = task
            .test
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no mode oracle to evaluate against".into()))?;
        let (fitted, grid) = load_model(&out, seed)?;
        for (metric, value) in evaluate(cfg, fitted.predictor().as_ref(), test, &grid, task.error_scale, seed)? {
            body.push_str(&format!("{seed},{metric},{}\n", format_f64(value)));
        }
        if let Fitted::Implicit { params, .. } = &fitted {
            let hist = residual_histogram(params, &task.train, cfg.predict.histogram_bins)?;
            written.push(out.write(&format!("residuals_s{seed}.csv"), &hist.to_csv())?);
        }
    }
    written.push(out.write("metrics.csv", &body)?);
    Ok(written)
}

/// Mode sets over an `x` grid for the first seed's model, plus an optional
/// profile scan and exclusion report for implicit models.
pub fn cmd_predict(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = Outputs::new(cfg)?;
    let seed = cfg.run.seeds[0];
    let (fitted, grid) = load_model(&out, seed)?;
    let coder = cfg.dataset.tile_coding.then(TileCoder::default);
    let encode = |x: f64| -> Result<Vec<f64>> {
        match &coder {
            Some(c) => c.encode(x),
            None => Ok(vec![x]),
        }
    };
    let p = &cfg.predict;
    let count = ((p.x_max - p.x_min) / p.x_step + 1e-9).floor() as usize + 1;
    let predictor = fitted.predictor();
    let mut body = String::from("x,kind,mode\n");
    for i in 0..count {
        let x = p.x_min + p.x_step * i as f64;
        let (global, local) = predictor.mode_sets(&encode(x)?, &grid)?;
        for set in [&global, &local] {
            for &m in &set.modes {
                body.push_str(&format!("{},{},{}\n", format_f64(x), set.kind.as_str(), format_f64(m)));
            }
        }
    }
    let mut written = vec![out.write("predictions.csv", &body)?];

    if let (Some(x), Fitted::Implicit { params, eta, .. }) = (p.profile_x, &fitted) {
        let scan = ProfileScan::from_params(params, &encode(x)?, grid.values())?;
        written.push(out.write("profile.csv", &scan.to_csv(*eta))?);
        let report = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D)?;
        let json = serde_json::json!({ "config_hash": cfg.hash_hex(), "x": x, "report": report });
        let path = out.path("exclusion.json");
        fs::write(&path, serde_json::to_string_pretty(&json)? + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
