use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, ModeOracle};
use crate::error::Result;
use crate::training::stream_rng;

const GENERATOR_STREAM: u64 = 0;

fn gaussian(rng: &mut impl Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * rng.sample::<f64, _>(StandardNormal)
    }
}

/// `x ~ U(-1, 1)`, `y = ±sqrt(1 - x²)` with equal probability, plus noise.
pub fn gen_circle(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, ModeOracle)> {
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let r = (1.0 - x * x).sqrt();
        let branch = if rng.random_bool(0.5) { r } else { -r };
        xs.push(x);
        ys.push(branch + gaussian(&mut rng, noise_sd));
    }
    Ok((Dataset::scalar("circle", xs, ys)?, ModeOracle::Circle))
}

/// Angle `α ~ U(0, 2π)`, radius 1 or 2 with equal probability; noise on `y` only.
pub fn gen_double_circle(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, ModeOracle)> {
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let alpha: f64 = rng.random_range(0.0..2.0 * PI);
        let r = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
        xs.push(r * alpha.cos());
        ys.push(r * alpha.sin() + gaussian(&mut rng, noise_sd));
    }
    Ok((Dataset::scalar("double_circle", xs, ys)?, ModeOracle::DoubleCircle))
}

/// Circle whose upper branch carries weight 0.8 for `x < 0` and 0.2 for
/// `x >= 0`; noise sd 0.1. Pass `noise_sd = 0` for noiseless test sets.
pub fn gen_biased_circle(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, ModeOracle)> {
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let r = (1.0 - x * x).sqrt();
        let p_upper = if x < 0.0 { 0.8 } else { 0.2 };
        let branch = if rng.random_bool(p_upper) { r } else { -r };
        xs.push(x);
        ys.push(branch + gaussian(&mut rng, noise_sd));
    }
    Ok((Dataset::scalar("biased_circle", xs, ys)?, ModeOracle::BiasedCircle))
}

/// `sin(8πx)` on `[-2.5, 0)`, `sin(0.5πx)` on `[0, 2.5]`.
pub fn highfreq_target(x: f64) -> f64 {
    if x < 0.0 {
        (8.0 * PI * x).sin()
    } else {
        (0.5 * PI * x).sin()
    }
}

pub fn gen_highfreq(n: usize, noise_sd: f64, seed: u64) -> Result<(Dataset, ModeOracle)> {
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-2.5..=2.5);
        xs.push(x);
        ys.push(highfreq_target(x) + gaussian(&mut rng, noise_sd));
    }
    Ok((Dataset::scalar("highfreq", xs, ys)?, ModeOracle::HighFreq))
}

/// `x = y + 0.3 sin(2πy) + ξ`, `y ~ U(0, 1)`, `ξ ~ U(-noise, noise)`.
/// The classic setting uses `noise = 0.1` and 80k rows.
pub fn gen_inverse_sin(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let y: f64 = rng.random_range(0.0..=1.0);
        let xi = if noise == 0.0 {
            0.0
        } else {
            rng.random_range(-noise..noise)
        };
        xs.push(y + 0.3 * (2.0 * PI * y).sin() + xi);
        ys.push(y);
    }
    Dataset::scalar("inverse_sin", xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_circle_lies_on_circle() {
        let (d, _) = gen_circle(500, 0.0, 1).unwrap();
        for (x, y) in d.rows() {
            assert!((x[0] * x[0] + y * y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_is_symmetric_and_deterministic() {
        let (d, _) = gen_circle(10_000, 0.1, 2).unwrap();
        let mean = d.targets().iter().sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        let (again, _) = gen_circle(10_000, 0.1, 2).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn noiseless_double_circle_lies_on_a_circle() {
        let (d, _) = gen_double_circle(500, 0.0, 3).unwrap();
        for (x, y) in d.rows() {
            let r2 = x[0] * x[0] + y * y;
            assert!((r2 - 1.0).abs() < 1e-12 || (r2 - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_circle_mixture_weights() {
        let (d, _) = gen_biased_circle(10_000, 0.1, 4).unwrap();
        let neg: Vec<f64> = d.rows().filter(|(x, _)| x[0] < 0.0).map(|(_, y)| y).collect();
        let frac = neg.iter().filter(|&&y| y > 0.0).count() as f64 / neg.len() as f64;
        assert!((frac - 0.8).abs() < 0.03, "fraction {frac}");
    }

    #[test]
    fn highfreq_noiseless_targets_equal_oracle() {
        let (d, oracle) = gen_highfreq(1000, 0.0, 5).unwrap();
        for (x, y) in d.rows() {
            assert_eq!(y, oracle.modes(x[0]).all[0]);
            assert!((-2.5..=2.5).contains(&x[0]));
        }
    }

    #[test]
    fn inverse_sin_examples_and_range() {
        let d0 = gen_inverse_sin(200, 0.0, 6).unwrap();
        for (x, y) in d0.rows() {
            assert!((x[0] - (y + 0.3 * (2.0 * PI * y).sin())).abs() < 1e-15);
        }
        assert_eq!(0.0 + 0.3 * (2.0 * PI * 0.0f64).sin(), 0.0);
        assert!((0.5 + 0.3 * (PI).sin() - 0.5f64).abs() < 1e-15);
        let d = gen_inverse_sin(80_000, 0.1, 6).unwrap();
        assert_eq!(d.len(), 80_000);
        for (x, y) in d.rows() {
            assert!((-0.1..=1.1).contains(&x[0]), "x {}", x[0]);
            assert!((0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn oracle_modes_lie_in_target_range() {
        // noiseless target ranges: [-1, 1] for the circles, [-2, 2] for the
        // double circle, [-1, 1] for the high-frequency curve
        let cases = [
            (gen_circle(500, 0.0, 9).unwrap(), 1.0),
            (gen_biased_circle(500, 0.0, 9).unwrap(), 1.0),
            (gen_double_circle(500, 0.0, 9).unwrap(), 2.0),
            (gen_highfreq(500, 0.0, 9).unwrap(), 1.0),
        ];
        for ((d, o), bound) in cases {
            for (x, _) in d.rows() {
                for m in o.modes(x[0]).all {
                    assert!(m.abs() <= bound, "{o:?} mode {m} at {}", x[0]);
                }
            }
        }
    }
}
