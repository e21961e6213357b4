//! Product-kernel density estimate over `(x, y)` with grid-search modes.
//!
//! Continuous dimensions use a Gaussian kernel with the normal-reference
//! bandwidth `1.06 · sd · n^(-1/5)`. Binary feature columns are treated as
//! unordered categories with the Aitchison–Aitken kernel.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::prediction::{s_local, ModeGrid, ModeKind, ModeSet};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian { bandwidth: f64 },
    /// Two-level Aitchison–Aitken kernel: weight `1 − λ` on a match, `λ` otherwise.
    Categorical { lambda: f64 },
}

impl KernelKind {
    #[inline]
    fn ln_k(&self, a: f64, b: f64) -> f64 {
        match *self {
            KernelKind::Gaussian { bandwidth } => {
                let u = (a - b) / bandwidth;
                -0.5 * u * u - LN_SQRT_2PI - bandwidth.ln()
            }
            KernelKind::Categorical { lambda } => {
                if a == b {
                    (1.0 - lambda).ln()
                } else {
                    lambda.ln()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KdeOptions {
    /// Smoothing for binary columns; `None` applies the normal-reference rule
    /// to the column and clips it into `(0, 0.5]`.
    pub categorical_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub dim: usize,
    /// Stored `(x..., y)` rows.
    pub points: Vec<f64>,
    /// One kernel per feature column, then the target kernel.
    pub kernels: Vec<KernelKind>,
}

pub fn normal_reference_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

pub fn kde_fit(dataset: &Dataset) -> Result<KdeModel> {
    kde_fit_with(dataset, &KdeOptions::default())
}

pub fn kde_fit_with(dataset: &Dataset, options: &KdeOptions) -> Result<KdeModel> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let dim = dataset.dim();
    let mut kernels = Vec::with_capacity(dim + 1);
    let mut columns: Vec<Vec<f64>> = (0..dim).map(|j| dataset.column(j)).collect();
    columns.push(dataset.targets().to_vec());
    for (j, col) in columns.iter().enumerate() {
        let h = normal_reference_bandwidth(col);
        let kernel = if j < dim && is_binary(col) {
            let lambda = options.categorical_lambda.unwrap_or(h).clamp(1e-6, 0.5);
            KernelKind::Categorical { lambda }
        } else if h > 0.0 {
            KernelKind::Gaussian { bandwidth: h }
        } else {
            log::warn!("column {j} is constant; using unit bandwidth");
            KernelKind::Gaussian { bandwidth: 1.0 }
        };
        kernels.push(kernel);
    }
    let mut points = Vec::with_capacity(dataset.len() * (dim + 1));
    for (x, y) in dataset.rows() {
        points.extend_from_slice(x);
        points.push(y);
    }
    Ok(KdeModel { dim, points, kernels })
}

impl KdeModel {
    pub fn len(&self) -> usize {
        self.points.len() / (self.dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("KDE model"));
        }
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Log kernel weight of every stored point at feature vector `x`.
    fn ln_feature_weights(&self, x: &[f64]) -> Vec<f64> {
        self.points
            .chunks_exact(self.dim + 1)
            .map(|p| {
                x.iter()
                    .zip(p)
                    .zip(&self.kernels)
                    .map(|((a, b), k)| k.ln_k(*a, *b))
                    .sum()
            })
            .collect()
    }

    /// `ln p̂(x, y)` for each `y` in `ys`.
    pub fn ln_joint_profile(&self, x: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let lw = self.ln_feature_weights(x);
        let ky = self.kernels[self.dim];
        let ln_n = (self.len() as f64).ln();
        let mut terms = vec![0.0; lw.len()];
        Ok(ys
            .iter()
            .map(|&y| {
                for ((t, w), p) in terms.iter_mut().zip(&lw).zip(self.points.chunks_exact(self.dim + 1)) {
                    *t = w + ky.ln_k(y, p[self.dim]);
                }
                log_sum_exp(&terms) - ln_n
            })
            .collect())
    }

    pub fn kde_joint(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.ln_joint_profile(x, &[y])?[0].exp())
    }

    /// Grid argmax of the joint density at `x` (equivalently of `p̂(y | x)`).
    pub fn kde_mode(&self, x: &[f64], grid: &ModeGrid) -> Result<f64> {
        let profile = self.ln_joint_profile(x, grid.values())?;
        Ok(argmax_or_midpoint(&profile, grid))
    }

    /// Singleton global set and the strict interior density maxima.
    pub fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        let profile = self.ln_joint_profile(x, grid.values())?;
        density_mode_sets(&profile, grid)
    }
}

/// Mode sets from a log-density profile over the grid.
pub(crate) fn density_mode_sets(ln_density: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
    let global = ModeSet {
        modes: vec![argmax_or_midpoint(ln_density, grid)],
        kind: ModeKind::Global,
    };
    let neg: Vec<f64> = ln_density.iter().map(|v| -v).collect();
    let local = s_local(&neg, grid)?;
    Ok((global, local))
}

pub(crate) fn argmax_or_midpoint(profile: &[f64], grid: &ModeGrid) -> f64 {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in profile.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    match best {
        Some((j, _)) => grid.values()[j],
        None => {
            log::warn!("density is zero on the whole grid; returning the grid midpoint");
            0.5 * (grid.y_min() + grid.y_max())
        }
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
