//! Datasets, ground-truth mode oracles, synthetic generators and
//! preprocessing.

mod insurance;
mod io;
mod synthetic;
mod tiles;

pub use insurance::{gen_insurance_synthetic, insurance_build, InsuranceData, InsuranceFitConfig};
pub use io::{format_f64, load_csv, read_dataset_csv, write_dataset_csv, Manifest, Standardizer, TargetScaler};
pub use synthetic::{
    gen_biased_circle, gen_circle, gen_double_circle, gen_highfreq, gen_inverse_sin, highfreq_target,
};
pub use tiles::TileCoder;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::stream_rng;

/// Row-major feature matrix with one scalar target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::Empty("feature list"));
        }
        if features.len() != dim * targets.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                targets.len()
            )));
        }
        if let Some(bad) = features.iter().chain(&targets).find(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite entry {bad}")));
        }
        Ok(Self {
            name: name.into(),
            feature_names,
            features,
            targets,
        })
    }

    /// Single-feature dataset named `x`.
    pub fn scalar(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Self::new(name, vec!["x".to_string()], xs, ys)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.target(i)))
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[j]).collect()
    }

    pub(crate) fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub(crate) fn targets_mut(&mut self) -> &mut [f64] {
        &mut self.targets
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.dim();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.target(i));
        }
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features,
            targets,
        }
    }

    /// `(min, max)` of the targets.
    pub fn target_range(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        Some(self.targets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        }))
    }

    /// Drops the named feature columns.
    pub fn without_columns(&self, drop: &[usize]) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.dim()).filter(|j| !drop.contains(j)).collect();
        let names = keep.iter().map(|&j| self.feature_names[j].clone()).collect();
        let mut features = Vec::with_capacity(self.len() * keep.len());
        for i in 0..self.len() {
            let row = self.row(i);
            features.extend(keep.iter().map(|&j| row[j]));
        }
        Dataset::new(self.name.clone(), names, features, self.targets.clone())
    }
}

/// Disjoint train/test index split covering every row exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded random permutation; the first `round(n * test_fraction)` rows go to test.
    pub fn random(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!("test_fraction {test_fraction} not in [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, 7));
        let n_test = (n as f64 * test_fraction).round() as usize;
        let test = idx[..n_test].to_vec();
        let train = idx[n_test..].to_vec();
        Ok(Split { train, test })
    }
}

/// All conditional modes at one input and, when one mode has the highest
/// likelihood, that mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModes {
    pub all: Vec<f64>,
    pub dominant: Option<f64>,
}

/// Closed-form mode maps of the synthetic generators, over the scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeOracle {
    Circle,
    DoubleCircle,
    BiasedCircle,
    HighFreq,
}

impl ModeOracle {
    pub fn modes(&self, x: f64) -> TrueModes {
        let half = |r2: f64| (r2 - x * x).max(0.0).sqrt();
        match self {
            ModeOracle::Circle => {
                let r = half(1.0);
                TrueModes {
                    all: dedup_sorted(vec![-r, r]),
                    dominant: None,
                }
            }
            ModeOracle::DoubleCircle => {
                let outer = half(4.0);
                let all = if x.abs() < 1.0 {
                    let inner = half(1.0);
                    vec![-outer, -inner, inner, outer]
                } else {
                    vec![-outer, outer]
                };
                TrueModes {
                    all: dedup_sorted(all),
                    dominant: None,
                }
            }
            ModeOracle::BiasedCircle => {
                let r = half(1.0);
                let dominant = if x < 0.0 { r } else { -r };
                TrueModes {
                    all: dedup_sorted(vec![-r, r]),
                    dominant: Some(dominant),
                }
            }
            ModeOracle::HighFreq => {
                let y = highfreq_target(x);
                TrueModes {
                    all: vec![y],
                    dominant: Some(y),
                }
            }
        }
    }
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Test rows paired with their ground-truth modes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub data: Dataset,
    pub truth: Vec<TrueModes>,
    /// Scalar input each row was generated from, when one exists (used for
    /// region-restricted metrics and for plotting tiled inputs).
    pub raw_x: Vec<f64>,
}

impl LabeledSet {
    pub fn from_oracle(data: Dataset, oracle: ModeOracle) -> Result<Self> {
        if data.dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: data.dim(),
            });
        }
        let raw_x = data.column(0);
        let truth = raw_x.iter().map(|&x| oracle.modes(x)).collect();
        Ok(Self { data, truth, raw_x })
    }

    /// Re-encodes the scalar inputs through a tile coder, keeping the truth.
    pub fn tiled(&self, coder: &TileCoder) -> Result<Self> {
        Ok(Self {
            data: coder.encode_dataset(&self.data)?,
            truth: self.truth.clone(),
            raw_x: self.raw_x.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_covering() {
        let s = Split::random(101, 0.2, 4).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(s.test.len(), 20);
        assert_eq!(s, Split::random(101, 0.2, 4).unwrap());
    }

    #[test]
    fn dataset_shape_checks() {
        assert!(Dataset::new("d", vec!["a".into()], vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(Dataset::new("d", vec!["a".into()], vec![f64::NAN], vec![0.0]).is_err());
        let d = Dataset::new("d", vec!["a".into(), "b".into()], vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(d.row(1), &[3.0, 4.0]);
        let dropped = d.without_columns(&[0]).unwrap();
        assert_eq!(dropped.feature_names, vec!["b".to_string()]);
        assert_eq!(dropped.features(), &[2.0, 4.0]);
    }

    #[test]
    fn oracle_closed_forms() {
        assert_eq!(ModeOracle::Circle.modes(0.0).all, vec![-1.0, 1.0]);
        assert_eq!(ModeOracle::DoubleCircle.modes(0.0).all, vec![-2.0, -1.0, 1.0, 2.0]);
        let m = ModeOracle::DoubleCircle.modes(1.5).all;
        assert_eq!(m, vec![-(1.75f64.sqrt()), 1.75f64.sqrt()]);
        let b = ModeOracle::BiasedCircle.modes(0.5);
        assert!((b.dominant.unwrap() + 0.75f64.sqrt()).abs() < 1e-15);
        assert!((b.dominant.unwrap() + 0.87).abs() < 0.01);
        assert_eq!(ModeOracle::BiasedCircle.modes(0.0).all, vec![-1.0, 1.0]);
        assert!(ModeOracle::HighFreq.modes(-0.25).all[0].abs() < 1e-12);
        assert!((ModeOracle::HighFreq.modes(1.0).all[0] - 1.0).abs() < 1e-15);
    }
}
