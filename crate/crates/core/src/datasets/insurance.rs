//! Two-mode regression data built from a single-target table: fit an L2
//! regressor, flip a binary column, query the regressor for a second target,
//! then drop the column so each input carries two plausible targets.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::io::{Standardizer, TargetScaler};
use super::{Dataset, LabeledSet, Split, TrueModes};
use crate::baselines::regression::{l2_train, regress};
use crate::error::{Error, Result};
use crate::network::{MlpParams, NetConfig};
use crate::training::{no_eval, stream_rng, TrainConfig};

/// Stand-in for the medical-cost table: `age`, `bmi`, `children`, `smoker`
/// and a log-normal `charges` target whose log jumps by 1.5 for smokers.
pub fn gen_insurance_synthetic(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let mut rng = stream_rng(seed, 0);
    let bmi = Normal::new(30.0, 6.0).expect("valid normal");
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let mut features = Vec::with_capacity(4 * n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let age: f64 = rng.random_range(18.0..64.0);
        let b: f64 = bmi.sample(&mut rng);
        let children = rng.random_range(0..5u32) as f64;
        let smoker = if rng.random_bool(0.2) { 1.0 } else { 0.0 };
        let log_charge =
            7.5 + 0.035 * age + 0.01 * (b - 30.0) + 0.08 * children + 1.5 * smoker + noise.sample(&mut rng);
        features.extend_from_slice(&[age, b, children, smoker]);
        targets.push(log_charge.exp());
    }
    Dataset::new(
        "insurance_synthetic",
        ["age", "bmi", "children", "smoker"].map(String::from).to_vec(),
        features,
        targets,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsuranceFitConfig {
    /// Hidden sizes of the L2 regressor that generates the flipped targets.
    pub hidden_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub standardize: Vec<String>,
    pub log_target: bool,
}

impl Default for InsuranceFitConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 128,
                steps: 5000,
                eval_every: 5000,
                seed: 0,
                eta: 0.0,
            },
            standardize: vec!["age".into(), "bmi".into()],
            log_target: true,
        }
    }
}

/// Result of [`insurance_build`].
#[derive(Debug, Clone)]
pub struct InsuranceData {
    /// `2n` rows: the originals followed by their flipped-target copies, with
    /// the flip column removed and targets scaled to `[0, 1]`.
    pub dataset: Dataset,
    /// `[observed, generated]` targets per original instance (scaled).
    pub modes: Vec<[f64; 2]>,
    /// Original instance of every row of `dataset`.
    pub instance: Vec<usize>,
    pub standardizer: Standardizer,
    pub scaler: TargetScaler,
    pub regressor: MlpParams,
}

/// Indices of the column(s) encoding a binary variable, either a single 0/1
/// column or two one-hot `name=level` columns.
fn flip_columns(data: &Dataset, name: &str) -> Result<Vec<usize>> {
    let binary = |j: usize| data.column(j).iter().all(|&v| v == 0.0 || v == 1.0);
    if let Ok(j) = data.column_index(name) {
        return if binary(j) { Ok(vec![j]) } else { Err(Error::NotBinary(name.into())) };
    }
    let prefix = format!("{name}=");
    let cols: Vec<usize> = (0..data.dim())
        .filter(|&j| data.feature_names[j].starts_with(&prefix))
        .collect();
    match cols.as_slice() {
        [] => Err(Error::MissingColumn(name.into())),
        [a, b] if binary(*a) && binary(*b) && data.rows().all(|(x, _)| x[*a] + x[*b] == 1.0) => Ok(cols),
        _ => Err(Error::NotBinary(name.into())),
    }
}

pub fn insurance_build(raw: &Dataset, flip_column: &str, cfg: &InsuranceFitConfig) -> Result<InsuranceData> {
    if raw.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let flip = flip_columns(raw, flip_column)?;

    let mut data = raw.clone();
    if cfg.log_target {
        if let Some(bad) = data.targets().iter().find(|&&y| y <= 0.0) {
            return Err(Error::OutOfDomain { value: *bad, lo: 0.0, hi: f64::INFINITY });
        }
        for y in data.targets_mut() {
            *y = y.ln();
        }
    }
    let names: Vec<&str> = cfg.standardize.iter().map(String::as_str).collect();
    let standardizer = Standardizer::fit(&data, &names)?;
    standardizer.apply(&mut data);
    let scaler = TargetScaler::fit(&data)?;
    scaler.apply(&mut data);

    let net = NetConfig::regressor(data.dim(), &cfg.hidden_sizes);
    let regressor = l2_train(&data, &net, &cfg.train, &mut no_eval)?.params;

    let n = data.len();
    let mut flipped = vec![0.0; data.dim()];
    let mut modes = Vec::with_capacity(n);
    let mut generated = Vec::with_capacity(n);
    for (x, y) in data.rows() {
        flipped.copy_from_slice(x);
        for &j in &flip {
            flipped[j] = 1.0 - flipped[j];
        }
        let y2 = regress(&regressor, &flipped)?;
        modes.push([y, y2]);
        generated.push(y2);
    }

    let kept = data.without_columns(&flip)?;
    let mut features = kept.features().to_vec();
    features.extend_from_slice(kept.features());
    let mut targets = kept.targets().to_vec();
    targets.extend(generated);
    let dataset = Dataset::new(format!("{}_modal", raw.name), kept.feature_names.clone(), features, targets)?;
    let instance = (0..n).chain(0..n).collect();

    Ok(InsuranceData {
        dataset,
        modes,
        instance,
        standardizer,
        scaler,
        regressor,
    })
}

impl InsuranceData {
    pub fn instances(&self) -> usize {
        self.modes.len()
    }

    /// Factor converting errors on the scaled targets back to the
    /// (log-)target scale.
    pub fn error_scale(&self) -> f64 {
        self.scaler.max - self.scaler.min
    }

    /// Splits by instance so both copies of an input land on the same side.
    /// The test set holds one row per instance, labeled with both targets.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, LabeledSet)> {
        let n = self.instances();
        let s = Split::random(n, test_fraction, seed)?;
        let train_rows: Vec<usize> = s.train.iter().flat_map(|&i| [i, i + n]).collect();
        let train = self.dataset.subset(&train_rows);
        let data = self.dataset.subset(&s.test);
        let truth = s
            .test
            .iter()
            .map(|&i| {
                let [a, b] = self.modes[i];
                let mut all = vec![a.min(b), a.max(b)];
                all.dedup();
                TrueModes { all, dominant: None }
            })
            .collect();
        Ok((
            train,
            LabeledSet {
                data,
                truth,
                raw_x: Vec::new(),
            },
        ))
    }
}
