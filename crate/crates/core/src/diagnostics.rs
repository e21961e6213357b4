//! Numeric checks on a trained implicit model: the spacing of mode-like
//! points along `y` against the bound implied by `|f_yy| ≤ u`, and the
//! distribution of `f(x_i, y_i)` over the training data.

use serde::{Deserialize, Serialize};

use crate::datasets::{format_f64, Dataset};
use crate::error::{Error, Result};
use crate::jets::Jet2;
use crate::network::{ForwardTrace, MlpParams};
use crate::objective::local_loss;

pub const DEFAULT_EPS_F: f64 = 1e-2;
pub const DEFAULT_EPS_D: f64 = 1e-1;

/// `f`, `f_y`, `f_yy` sampled along a uniform `y` grid at fixed `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileScan {
    pub x: Vec<f64>,
    pub ys: Vec<f64>,
    pub f: Vec<f64>,
    pub f_y: Vec<f64>,
    pub f_yy: Vec<f64>,
}

impl ProfileScan {
    pub fn from_params(params: &MlpParams, x: &[f64], ys: &[f64]) -> Result<Self> {
        let mut trace = ForwardTrace::default();
        let mut jets = Vec::with_capacity(ys.len());
        for &y in ys {
            jets.push(params.forward_jet_into(x, y, &mut trace)?);
        }
        Ok(Self::from_jets(x.to_vec(), ys, jets))
    }

    /// Scan of an analytic function given as a jet map of the seeded `y`.
    pub fn from_fn(ys: &[f64], f: impl Fn(Jet2) -> Jet2) -> Self {
        let jets = ys.iter().map(|&y| f(Jet2::seed(y))).collect();
        Self::from_jets(Vec::new(), ys, jets)
    }

    fn from_jets(x: Vec<f64>, ys: &[f64], jets: Vec<Jet2>) -> Self {
        Self {
            x,
            ys: ys.to_vec(),
            f: jets.iter().map(|j| j.v).collect(),
            f_y: jets.iter().map(|j| j.d1).collect(),
            f_yy: jets.iter().map(|j| j.d2).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn loss(&self, eta: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| local_loss(Jet2::new(self.f[i], self.f_y[i], self.f_yy[i]), eta))
            .collect()
    }

    /// Columns `y,f,f_y,f_yy,loss`.
    pub fn to_csv(&self, eta: f64) -> String {
        let loss = self.loss(eta);
        let mut out = String::from("y,f,f_y,f_yy,loss\n");
        for (i, l) in loss.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                format_f64(self.ys[i]),
                format_f64(self.f[i]),
                format_f64(self.f_y[i]),
                format_f64(self.f_yy[i]),
                format_f64(*l)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    /// `max |f_yy|` over the scan.
    pub u: f64,
    /// `2/u`; `None` when `u = 0` (no second root anywhere).
    pub radius: Option<f64>,
    /// One representative `y` per contiguous run of mode-like grid points.
    pub mode_like: Vec<f64>,
    /// Representative pairs closer than the radius.
    pub violations: Vec<(f64, f64)>,
}

/// Mode-like points satisfy `|f| < eps_f` and `|f_y + 1| < eps_d`. Adjacent
/// mode-like grid points are taken as the same root, represented by the one
/// with the smallest `|f|`.
pub fn exclusion_radius_check(scan: &ProfileScan, eps_f: f64, eps_d: f64) -> Result<ExclusionReport> {
    if scan.is_empty() {
        return Err(Error::Empty("profile scan"));
    }
    let n = scan.len();
    if [scan.f.len(), scan.f_y.len(), scan.f_yy.len()].iter().any(|&l| l != n) {
        return Err(Error::Shape("profile scan arrays differ in length".into()));
    }
    let u = scan.f_yy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = (u > 0.0).then(|| 2.0 / u);

    let hit = |i: usize| scan.f[i].abs() < eps_f && (scan.f_y[i] + 1.0).abs() < eps_d;
    let mut mode_like = Vec::new();
    let mut i = 0;
    while i < n {
        if !hit(i) {
            i += 1;
            continue;
        }
        let mut best = i;
        while i < n && hit(i) {
            if scan.f[i].abs() < scan.f[best].abs() {
                best = i;
            }
            i += 1;
        }
        mode_like.push(scan.ys[best]);
    }

    let mut violations = Vec::new();
    if let Some(r) = radius {
        for (a, &p) in mode_like.iter().enumerate() {
            for &q in &mode_like[a + 1..] {
                if (q - p).abs() < r {
                    violations.push((p, q));
                }
            }
        }
    }
    Ok(ExclusionReport {
        u,
        radius,
        mode_like,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualHistogram {
    /// `bins + 1` edges; a degenerate sample gives one zero-width bin.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
}

impl ResidualHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Columns `bin_left,bin_right,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{c}\n",
                format_f64(self.edges[k]),
                format_f64(self.edges[k + 1])
            ));
        }
        out
    }
}

pub fn histogram(values: &[f64], bins: usize) -> Result<ResidualHistogram> {
    if values.is_empty() {
        return Err(Error::Empty("residuals"));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi == lo {
        return Ok(ResidualHistogram {
            edges: vec![lo, hi],
            counts: vec![values.len()],
            mean,
            sd,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    edges[bins] = hi;
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(ResidualHistogram { edges, counts, mean, sd })
}

/// Histogram of `f(x_i, y_i)` over the dataset.
pub fn residual_histogram(params: &MlpParams, dataset: &Dataset, bins: usize) -> Result<ResidualHistogram> {
    let mut input = Vec::with_capacity(dataset.dim() + 1);
    let mut residuals = Vec::with_capacity(dataset.len());
    for (x, y) in dataset.rows() {
        input.clear();
        input.extend_from_slice(x);
        input.push(y);
        residuals.push(params.forward(&input)?[0]);
    }
    histogram(&residuals, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetConfig;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_profile_has_unbounded_radius() {
        let scan = ProfileScan::from_fn(&grid(-1.0, 1.0, 2001), |y| -y);
        let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.radius, None);
        assert_eq!(r.mode_like.len(), 1);
        assert!(r.mode_like[0].abs() < 1e-12);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn negative_sine_matches_dense_enumeration() {
        // f = −sin y: roots with slope −1 at 0 and 2π, slope +1 at π
        let ys = grid(-1.0, 7.0, 4001);
        let scan = ProfileScan::from_fn(&ys, |y| -sin_jet(y));
        let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
        let u = ys.iter().map(|y| y.sin().abs()).fold(0.0, f64::max);
        assert!((r.u - u).abs() < 1e-12);
        // oracle: nearest grid point to each true slope −1 root
        let expected: Vec<f64> = [0.0, 2.0 * std::f64::consts::PI]
            .iter()
            .map(|&t| *ys.iter().min_by(|a, b| (*a - t).abs().total_cmp(&(*b - t).abs())).unwrap())
            .collect();
        assert_eq!(r.mode_like, expected);
        assert!(r.violations.is_empty());
        assert!(r.mode_like[1] - r.mode_like[0] >= r.radius.unwrap());
    }

    fn sin_jet(y: Jet2) -> Jet2 {
        y.compose(y.v.sin(), y.v.cos(), -y.v.sin())
    }

    #[test]
    fn close_roots_are_violations() {
        // f = −sin(k y)/k: slope −1 roots every 2π/k, u = k, radius 2/k
        let k = 20.0;
        let ys = grid(-0.1, 0.4, 20001);
        let mut scan = ProfileScan::from_fn(&ys, |y| sin_jet(y * k) * (-1.0 / k));
        let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
        assert!((r.u - k).abs() < 1e-3);
        assert_eq!(r.mode_like.len(), 2);
        assert!(r.violations.is_empty());
        // an underestimated curvature bound widens the radius past the spacing
        scan.f_yy.iter_mut().for_each(|v| *v *= 0.1);
        let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn no_mode_like_points() {
        let scan = ProfileScan::from_fn(&grid(-1.0, 1.0, 101), |y| y + Jet2::constant(3.0));
        let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
        assert!(r.mode_like.is_empty() && r.violations.is_empty());
        assert!(exclusion_radius_check(&ProfileScan::from_fn(&[], |y| y), 0.1, 0.1).is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"violations\":[]"));
    }

    #[test]
    fn zero_net_gives_single_bin() {
        let net = NetConfig::implicit(1, &[4]);
        let p = MlpParams::zeros(&net).unwrap();
        let d = Dataset::scalar("d", vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.5]).unwrap();
        let h = residual_histogram(&p, &d, 10).unwrap();
        assert_eq!(h.counts, vec![3]);
        assert_eq!((h.mean, h.sd), (0.0, 0.0));
        assert_eq!(h.to_csv(), "bin_left,bin_right,count\n0.0,0.0,3\n");
    }

    #[test]
    fn scan_from_params_matches_jets() {
        let net = NetConfig::implicit(1, &[5]);
        let p = MlpParams::init_xavier(&net, 2).unwrap();
        let ys = grid(-1.0, 1.0, 7);
        let scan = ProfileScan::from_params(&p, &[0.3], &ys).unwrap();
        for (i, &y) in ys.iter().enumerate() {
            let (j, _) = p.forward_jet(&[0.3], y).unwrap();
            assert_eq!((scan.f[i], scan.f_y[i], scan.f_yy[i]), (j.v, j.d1, j.d2));
        }
    }

    proptest! {
        #[test]
        fn histogram_counts_sum_to_n(values in proptest::collection::vec(-10.0..10.0f64, 1..300), bins in 1usize..40) {
            let h = histogram(&values, bins).unwrap();
            prop_assert_eq!(h.total(), values.len());
            prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
        }

        #[test]
        fn reported_pairs_are_inside_radius(scale in 0.05..3.0f64, k in 1.0..30.0f64) {
            let ys = grid(-2.0, 2.0, 2001);
            let mut scan = ProfileScan::from_fn(&ys, |y| sin_jet(y * k) * (-1.0 / k));
            scan.f_yy.iter_mut().for_each(|v| *v *= scale);
            let r = exclusion_radius_check(&scan, DEFAULT_EPS_F, DEFAULT_EPS_D).unwrap();
            if let Some(rad) = r.radius {
                for (p, q) in r.violations {
                    prop_assert!((q - p).abs() < rad);
                }
            }
        }
    }
}
