//! Mode extraction by grid search over the target range.
//!
//! At a query `x` the local loss `l(x, y)` is evaluated on evenly spaced
//! targets. The global set keeps every grid value whose loss is within a
//! tolerance of the minimum; the local set keeps strict interior minima.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, MlpParams};
use crate::objective::local_loss;

pub const DEFAULT_GRID_COUNT: usize = 200;
pub const DEFAULT_GLOBAL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    y_min: f64,
    y_max: f64,
    values: Vec<f64>,
}

impl ModeGrid {
    pub fn new(y_min: f64, y_max: f64, count: usize) -> Result<Self> {
        if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::Config(format!("grid needs y_min < y_max, got [{y_min}, {y_max}]")));
        }
        if count < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points, got {count}")));
        }
        let step = (y_max - y_min) / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|j| y_min + step * j as f64).collect();
        values[count - 1] = y_max;
        Ok(Self { y_min, y_max, values })
    }

    /// Grid spanning the training targets, widened on each side by
    /// `pad_fraction` of the range.
    pub fn from_targets(targets: &[f64], count: usize, pad_fraction: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Empty("target list"));
        }
        let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = (hi - lo) * pad_fraction;
        Self::new(lo - pad, hi + pad, count)
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        (self.y_max - self.y_min) / (self.values.len() - 1) as f64
    }

    /// Index of the grid value nearest `y`.
    pub fn nearest_index(&self, y: f64) -> usize {
        let j = ((y - self.y_min) / self.spacing()).round();
        j.clamp(0.0, (self.values.len() - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Global,
    Local,
}

impl ModeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeKind::Global => "global",
            ModeKind::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<f64>,
    pub kind: ModeKind,
}

impl ModeSet {
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }
}

/// `l(x, y_j)` for every grid value.
pub fn loss_profile(params: &MlpParams, x: &[f64], grid: &ModeGrid, eta: f64) -> Result<Vec<f64>> {
    let mut trace = ForwardTrace::default();
    let mut out = Vec::with_capacity(grid.count());
    loss_profile_into(params, x, grid, eta, &mut trace, &mut out)?;
    Ok(out)
}

pub fn loss_profile_into(
    params: &MlpParams,
    x: &[f64],
    grid: &ModeGrid,
    eta: f64,
    trace: &mut ForwardTrace,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    for &y in grid.values() {
        let jet = params.forward_jet_into(x, y, trace)?;
        out.push(local_loss(jet, eta));
    }
    Ok(())
}

fn check_profile(profile: &[f64], grid: &ModeGrid) -> Result<()> {
    if profile.len() != grid.count() {
        return Err(Error::Dimension {
            expected: grid.count(),
            got: profile.len(),
        });
    }
    Ok(())
}

/// Grid values whose loss lies within `tol` of the profile minimum.
pub fn s_global(profile: &[f64], grid: &ModeGrid, tol: f64) -> Result<ModeSet> {
    check_profile(profile, grid)?;
    let min = profile.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Shape("profile has no finite value".into()));
    }
    let modes = profile
        .iter()
        .zip(grid.values())
        .filter(|(l, _)| (**l - min).abs() < tol)
        .map(|(_, &y)| y)
        .collect();
    Ok(ModeSet {
        modes,
        kind: ModeKind::Global,
    })
}

/// Interior grid values whose loss is strictly below both neighbours.
pub fn s_local(profile: &[f64], grid: &ModeGrid) -> Result<ModeSet> {
    check_profile(profile, grid)?;
    let modes = profile
        .windows(3)
        .zip(&grid.values()[1..])
        .filter(|(w, _)| w[1] < w[0] && w[1] < w[2])
        .map(|(_, &y)| y)
        .collect();
    Ok(ModeSet {
        modes,
        kind: ModeKind::Local,
    })
}

/// Uniform draw from a nonempty set.
pub fn pick_random_mode<R: Rng + ?Sized>(set: &ModeSet, rng: &mut R) -> Result<f64> {
    if set.modes.is_empty() {
        return Err(Error::Empty("mode set"));
    }
    Ok(set.modes[rng.random_range(0..set.modes.len())])
}

/// Both mode sets of the implicit model at `x`.
pub fn implicit_mode_sets(
    params: &MlpParams,
    x: &[f64],
    grid: &ModeGrid,
    eta: f64,
) -> Result<(ModeSet, ModeSet)> {
    let profile = loss_profile(params, x, grid, eta)?;
    Ok((s_global(&profile, grid, DEFAULT_GLOBAL_TOL)?, s_local(&profile, grid)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetConfig};
    use crate::objective::local_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> ModeGrid {
        ModeGrid::new(-1.0, 1.0, 200).unwrap()
    }

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = ModeGrid::new(-2.0, 3.0, 200).unwrap();
        assert_eq!(g.values()[0], -2.0);
        assert_eq!(g.values()[199], 3.0);
        for w in g.values().windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-12);
        }
        assert!(ModeGrid::new(1.0, 1.0, 10).is_err());
        assert!(ModeGrid::new(0.0, 1.0, 2).is_err());
    }

    fn y_net() -> MlpParams {
        let config = NetConfig {
            input_dim: 2,
            hidden_sizes: vec![1],
            activation: Activation::Identity,
            output_activation: Activation::Identity,
            output_dim: 1,
        };
        let mut p = MlpParams::zeros(&config).unwrap();
        p.weights_mut(0).copy_from_slice(&[0.0, 1.0]);
        p.weights_mut(1).copy_from_slice(&[1.0]);
        p
    }

    #[test]
    fn profile_of_identity_net() {
        let g = grid();
        let profile = loss_profile(&y_net(), &[0.3], &g, 0.0).unwrap();
        for (l, y) in profile.iter().zip(g.values()) {
            assert!((l - (y * y + 4.0)).abs() < 1e-12);
            assert!(*l >= 0.0);
        }
        // y² + 4 on an even grid over [-1, 1]: the two values nearest zero are
        // ±spacing/2 and have identical loss, so both qualify.
        let by_enumeration: Vec<f64> = g
            .values()
            .iter()
            .zip(&profile)
            .filter(|(_, l)| (**l - profile.iter().copied().fold(f64::INFINITY, f64::min)).abs() < 1e-5)
            .map(|(y, _)| *y)
            .collect();
        let global = s_global(&profile, &g, 1e-5).unwrap();
        assert_eq!(global.modes, by_enumeration);
        assert_eq!(global.modes.len(), 2);
        assert!(global.modes.iter().all(|m| (m.abs() - g.spacing() / 2.0).abs() < 1e-12));
    }

    #[test]
    fn profile_matches_pointwise_recomputation() {
        let p = MlpParams::init_xavier(&NetConfig::implicit(1, &[8, 8]), 4).unwrap();
        let g = grid();
        let profile = loss_profile(&p, &[0.25], &g, 0.3).unwrap();
        for (j, &y) in g.values().iter().enumerate() {
            let (jet, _) = p.forward_jet(&[0.25], y).unwrap();
            assert_eq!(profile[j], local_loss(jet, 0.3));
        }
    }

    #[test]
    fn global_set_examples() {
        let g = grid();
        let mut profile: Vec<f64> = (0..200).map(|j| 1.0 + (j as f64 - 37.0).abs()).collect();
        profile[37] = 0.5;
        assert_eq!(s_global(&profile, &g, 1e-5).unwrap().modes, vec![g.values()[37]]);
        let flat = vec![3.0; 200];
        assert_eq!(s_global(&flat, &g, 1e-5).unwrap().modes, g.values());
        assert!(s_global(&flat[..10], &g, 1e-5).is_err());
    }

    #[test]
    fn local_set_examples() {
        let g = grid();
        let inc: Vec<f64> = (0..200).map(|j| j as f64).collect();
        assert!(s_local(&inc, &g).unwrap().is_empty());
        // W shape: dips at 50 and 150.
        let w: Vec<f64> = (0..200)
            .map(|j| ((j as f64 - 50.0).abs()).min((j as f64 - 150.0).abs()))
            .collect();
        let local = s_local(&w, &g).unwrap();
        assert_eq!(local.modes, vec![g.values()[50], g.values()[150]]);
        // boundary minima are never local modes
        let dec: Vec<f64> = (0..200).map(|j| -(j as f64)).collect();
        assert!(s_local(&dec, &g).unwrap().is_empty());
    }

    #[test]
    fn random_pick() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = ModeSet {
            modes: vec![0.5],
            kind: ModeKind::Global,
        };
        assert_eq!(pick_random_mode(&single, &mut rng).unwrap(), 0.5);
        let pair = ModeSet {
            modes: vec![-1.0, 1.0],
            kind: ModeKind::Global,
        };
        let ups = (0..1000)
            .filter(|_| pick_random_mode(&pair, &mut rng).unwrap() > 0.0)
            .count();
        assert!((ups as f64 / 1000.0 - 0.5).abs() < 0.05);
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..5).map(|_| pick_random_mode(&pair, &mut r).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..5).map(|_| pick_random_mode(&pair, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
        let empty = ModeSet {
            modes: vec![],
            kind: ModeKind::Global,
        };
        assert!(pick_random_mode(&empty, &mut rng).is_err());
    }

    proptest::proptest! {
        #[test]
        fn strict_interior_global_members_are_local(values in proptest::collection::vec(0.0..1.0f64, 200)) {
            let g = grid();
            let global = s_global(&values, &g, 1e-5).unwrap();
            let local = s_local(&values, &g).unwrap();
            proptest::prop_assert!(!global.is_empty());
            for m in &global.modes {
                let j = g.nearest_index(*m);
                proptest::prop_assert_eq!(g.values()[j], *m);
                if j > 0 && j < 199 && values[j] < values[j - 1] && values[j] < values[j + 1] {
                    proptest::prop_assert!(local.modes.contains(m));
                }
            }
            for m in &local.modes {
                proptest::prop_assert!(g.values().contains(m));
            }
        }
    }
}
