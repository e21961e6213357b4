//! Modal-regression evaluation: closest-mode error, Hausdorff set distance
//! and worst-case set error, aggregated as RMSE (root of the mean squared
//! term) and MAE (mean absolute term).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::kde::KdeModel;
use crate::baselines::mdn::mdn_mode_sets;
use crate::datasets::{LabeledSet, TrueModes};
use crate::error::{Error, Result};
use crate::network::MlpParams;
use crate::prediction::{loss_profile, pick_random_mode, s_global, s_local, ModeGrid, ModeKind, ModeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Abs,
    Squared,
}

impl Distance {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            Distance::Abs => (a - b).abs(),
            Distance::Squared => (a - b) * (a - b),
        }
    }
}

/// `min_m d(prediction, m)` over the true modes.
pub fn closest_mode_error(prediction: f64, true_modes: &[f64], d: Distance) -> Result<f64> {
    if true_modes.is_empty() {
        return Err(Error::Empty("true mode set"));
    }
    Ok(true_modes
        .iter()
        .map(|&m| d.eval(prediction, m))
        .fold(f64::INFINITY, f64::min))
}

/// `max_{a∈A} min_{b∈B} d(a, b)`.
pub fn directed_hausdorff(a: &[f64], b: &[f64], d: Distance) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("set"));
    }
    let mut worst = 0.0f64;
    for &p in a {
        worst = worst.max(closest_mode_error(p, b, d)?);
    }
    Ok(worst)
}

pub fn hausdorff(a: &[f64], b: &[f64], d: Distance) -> Result<f64> {
    Ok(directed_hausdorff(a, b, d)?.max(directed_hausdorff(b, a, d)?))
}

/// Anything that yields a global and a local mode set at a query point.
pub trait ModalPredictor {
    fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)>;
}

/// Implicit network scored by its local loss.
pub struct ImplicitPredictor<'a> {
    pub params: &'a MlpParams,
    pub eta: f64,
    pub global_tol: f64,
}

impl<'a> ImplicitPredictor<'a> {
    pub fn new(params: &'a MlpParams, eta: f64) -> Self {
        Self {
            params,
            eta,
            global_tol: crate::prediction::DEFAULT_GLOBAL_TOL,
        }
    }
}

impl ModalPredictor for ImplicitPredictor<'_> {
    fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        let profile = loss_profile(self.params, x, grid, self.eta)?;
        Ok((s_global(&profile, grid, self.global_tol)?, s_local(&profile, grid)?))
    }
}

impl ModalPredictor for KdeModel {
    fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        KdeModel::mode_sets(self, x, grid)
    }
}

pub struct MdnPredictor<'a>(pub &'a MlpParams);

impl ModalPredictor for MdnPredictor<'_> {
    fn mode_sets(&self, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        mdn_mode_sets(self.0, x, grid)
    }
}

/// Single-valued regressor; both sets are the prediction itself.
pub struct RegressorPredictor<'a>(pub &'a MlpParams);

impl ModalPredictor for RegressorPredictor<'_> {
    fn mode_sets(&self, x: &[f64], _grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
        let y = self.0.forward(x)?[0];
        Ok((
            ModeSet {
                modes: vec![y],
                kind: ModeKind::Global,
            },
            ModeSet {
                modes: vec![y],
                kind: ModeKind::Local,
            },
        ))
    }
}

/// Per-point evaluation terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    /// Random member of the global set.
    pub pick: f64,
    /// `|pick − closest true mode|`.
    pub closest_abs: f64,
    /// Worst closest-mode distance over the global set.
    pub worst_abs: f64,
    /// `|pick − dominant mode|`, when the truth names one.
    pub dominant_abs: Option<f64>,
    /// Hausdorff terms between the local set and the true set (absent when
    /// the local set is empty).
    pub hausdorff_abs: Option<f64>,
    pub hausdorff_sq: Option<f64>,
    pub n_global: usize,
    pub n_local: usize,
}

impl PointEval {
    pub fn new(global: &ModeSet, local: &ModeSet, truth: &TrueModes, pick: f64) -> Result<Self> {
        let closest_abs = closest_mode_error(pick, &truth.all, Distance::Abs)?;
        let worst_abs = directed_hausdorff(&global.modes, &truth.all, Distance::Abs)?;
        let (hausdorff_abs, hausdorff_sq) = if local.is_empty() {
            (None, None)
        } else {
            (
                Some(hausdorff(&local.modes, &truth.all, Distance::Abs)?),
                Some(hausdorff(&local.modes, &truth.all, Distance::Squared)?),
            )
        };
        Ok(Self {
            pick,
            closest_abs,
            worst_abs,
            dominant_abs: truth.dominant.map(|m| (pick - m).abs()),
            hausdorff_abs,
            hausdorff_sq,
            n_global: global.len(),
            n_local: local.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalEvaluation {
    pub points: Vec<PointEval>,
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    mean(values.map(|v| v * v)).map(f64::sqrt)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ModalEvaluation {
    pub fn rmse(&self) -> f64 {
        rms(self.points.iter().map(|p| p.closest_abs)).unwrap_or(f64::NAN)
    }

    pub fn mae(&self) -> f64 {
        mean(self.points.iter().map(|p| p.closest_abs)).unwrap_or(f64::NAN)
    }

    /// RMSE over the points whose index satisfies `keep`.
    pub fn rmse_where(&self, mut keep: impl FnMut(usize) -> bool) -> Option<f64> {
        rms(self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| p.closest_abs))
    }

    pub fn hausdorff_rmse(&self) -> Option<f64> {
        mean(self.points.iter().filter_map(|p| p.hausdorff_sq)).map(f64::sqrt)
    }

    pub fn hausdorff_mae(&self) -> Option<f64> {
        mean(self.points.iter().filter_map(|p| p.hausdorff_abs))
    }

    pub fn worst_rmse(&self) -> f64 {
        rms(self.points.iter().map(|p| p.worst_abs)).unwrap_or(f64::NAN)
    }

    pub fn worst_mae(&self) -> f64 {
        mean(self.points.iter().map(|p| p.worst_abs)).unwrap_or(f64::NAN)
    }

    pub fn dominant_rmse(&self) -> Option<f64> {
        rms(self.points.iter().filter_map(|p| p.dominant_abs))
    }

    /// Fraction of points whose pick lies within `radius` of the dominant mode.
    pub fn dominant_within(&self, radius: f64) -> Option<f64> {
        mean(self
            .points
            .iter()
            .filter_map(|p| p.dominant_abs)
            .map(|d| if d <= radius { 1.0 } else { 0.0 }))
    }

    /// Points with an empty local set (Hausdorff terms unavailable).
    pub fn local_failures(&self) -> usize {
        self.points.iter().filter(|p| p.n_local == 0).count()
    }

    /// Points whose local set is a single value; their Hausdorff term only
    /// measures distance to the farthest true mode.
    pub fn local_singletons(&self) -> usize {
        self.points.iter().filter(|p| p.n_local == 1).count()
    }

    /// Named metric values; Hausdorff entries are omitted when no point had a
    /// nonempty local set.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("rmse".to_string(), self.rmse()),
            ("mae".to_string(), self.mae()),
        ];
        if let (Some(r), Some(m)) = (self.hausdorff_rmse(), self.hausdorff_mae()) {
            out.push(("hausdorff_rmse".into(), r));
            out.push(("hausdorff_mae".into(), m));
        }
        out.push(("worst_rmse".into(), self.worst_rmse()));
        out.push(("worst_mae".into(), self.worst_mae()));
        if let Some(d) = self.dominant_rmse() {
            out.push(("dominant_rmse".into(), d));
        }
        out.push(("local_empty_count".into(), self.local_failures() as f64));
        out.push(("local_singleton_count".into(), self.local_singletons() as f64));
        out
    }

    pub fn records(&self, step: usize, seed: u64) -> Vec<EvalRecord> {
        self.named()
            .into_iter()
            .map(|(metric, value)| EvalRecord {
                step,
                metric,
                value,
                seed,
            })
            .collect()
    }
}

/// Scores `predictor` on every test row against its true modes.
pub fn evaluate_modal<P: ModalPredictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    test: &LabeledSet,
    grid: &ModeGrid,
    rng: &mut R,
) -> Result<ModalEvaluation> {
    if test.truth.len() != test.data.len() {
        return Err(Error::Shape("truth count differs from test rows".into()));
    }
    let mut points = Vec::with_capacity(test.data.len());
    for (i, truth) in test.truth.iter().enumerate() {
        let (global, local) = predictor.mode_sets(test.data.row(i), grid)?;
        let pick = pick_random_mode(&global, rng)?;
        points.push(PointEval::new(&global, &local, truth, pick)?);
    }
    Ok(ModalEvaluation { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Dataset;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closest_mode_examples() {
        assert!((closest_mode_error(0.9, &[-1.0, 1.0], Distance::Abs).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(closest_mode_error(1.0, &[-1.0, 1.0], Distance::Abs).unwrap(), 0.0);
        assert_eq!(closest_mode_error(0.0, &[-1.0, 1.0], Distance::Abs).unwrap(), 1.0);
        assert!(closest_mode_error(0.0, &[], Distance::Abs).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(&[1.0], &[1.0], Distance::Abs).unwrap(), 0.0);
        assert_eq!(hausdorff(&[0.0, 2.0], &[1.0], Distance::Abs).unwrap(), 1.0);
        assert_eq!(hausdorff(&[0.0], &[0.0, 3.0], Distance::Abs).unwrap(), 3.0);
        assert_eq!(hausdorff(&[0.0], &[0.0, 3.0], Distance::Squared).unwrap(), 9.0);
        assert!(hausdorff(&[], &[1.0], Distance::Abs).is_err());
    }

    struct Fixed(Vec<(Vec<f64>, Vec<f64>)>);

    impl ModalPredictor for Fixed {
        fn mode_sets(&self, x: &[f64], _: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
            let (g, l) = &self.0[x[0] as usize];
            Ok((
                ModeSet { modes: g.clone(), kind: ModeKind::Global },
                ModeSet { modes: l.clone(), kind: ModeKind::Local },
            ))
        }
    }

    fn labeled(truth: Vec<TrueModes>) -> LabeledSet {
        let n = truth.len();
        let data = Dataset::scalar("t", (0..n).map(|i| i as f64).collect(), vec![0.0; n]).unwrap();
        LabeledSet { data, raw_x: (0..n).map(|i| i as f64).collect(), truth }
    }

    #[test]
    fn single_mode_exact_prediction_scores_zero() {
        let test = labeled(vec![TrueModes { all: vec![0.3], dominant: Some(0.3) }]);
        let pred = Fixed(vec![(vec![0.3], vec![0.3])]);
        let grid = ModeGrid::new(-1.0, 1.0, 200).unwrap();
        let e = evaluate_modal(&pred, &test, &grid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (name, v) in e.named() {
            if name != "local_singleton_count" {
                assert_eq!(v, 0.0, "{name}");
            }
        }
        assert_eq!(e.local_singletons(), 1);
    }

    #[test]
    fn three_point_case_matches_brute_force() {
        let truth = vec![
            TrueModes { all: vec![-1.0, 1.0], dominant: None },
            TrueModes { all: vec![-2.0, -1.0, 1.0, 2.0], dominant: None },
            TrueModes { all: vec![0.5], dominant: Some(0.5) },
        ];
        let sets = vec![
            (vec![0.9], vec![-1.2, 0.9]),
            (vec![1.5], vec![-2.0, 1.5]),
            (vec![0.0], vec![]),
        ];
        let test = labeled(truth.clone());
        let grid = ModeGrid::new(-3.0, 3.0, 200).unwrap();
        let e = evaluate_modal(&Fixed(sets.clone()), &test, &grid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

        // hand enumeration
        let closest = [0.1f64, 0.5, 0.5];
        let rmse = ((closest.iter().map(|c| c * c).sum::<f64>()) / 3.0).sqrt();
        let mae = closest.iter().sum::<f64>() / 3.0;
        // point 0: local {-1.2, 0.9} vs {-1, 1}: directed terms 0.2 and 0.2 → 0.2
        // point 1: local {-2, 1.5} vs {-2,-1,1,2}: A→B max(0, 0.5)=0.5; B→A: -1→-2 is 1, 1→1.5 is 0.5, 2→1.5 is 0.5 → 1
        let h_abs = [0.2f64, 1.0];
        let h_sq = [0.04f64, 1.0];
        assert!((e.rmse() - rmse).abs() < 1e-12);
        assert!((e.mae() - mae).abs() < 1e-12);
        assert!((e.hausdorff_mae().unwrap() - (h_abs[0] + h_abs[1]) / 2.0).abs() < 1e-12);
        assert!((e.hausdorff_rmse().unwrap() - ((h_sq[0] + h_sq[1]) / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(e.local_failures(), 1);
        assert!((e.dominant_rmse().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_on_grid_predictor() {
        let grid = ModeGrid::new(-2.0, 2.0, 200).unwrap();
        let snap = |v: f64| grid.values()[grid.nearest_index(v)];
        let truth: Vec<TrueModes> = [0.0, 0.5, 1.5]
            .iter()
            .map(|&x| crate::datasets::ModeOracle::DoubleCircle.modes(x))
            .collect();
        let sets = truth
            .iter()
            .map(|t| {
                let s: Vec<f64> = t.all.iter().map(|&m| snap(m)).collect();
                (s.clone(), s)
            })
            .collect();
        let e = evaluate_modal(&Fixed(sets), &labeled(truth), &grid, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (name, v) in e.named() {
            if !name.ends_with("_count") {
                assert!(v <= grid.spacing(), "{name} = {v}");
            }
        }
    }

    fn small_set() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0f64, 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn hausdorff_properties(a in small_set(), b in small_set(), y in -5.0..5.0f64) {
            for d in [Distance::Abs, Distance::Squared] {
                let h = hausdorff(&a, &b, d).unwrap();
                prop_assert_eq!(h, hausdorff(&b, &a, d).unwrap());
                prop_assert_eq!(hausdorff(&a, &a, d).unwrap(), 0.0);
                prop_assert!(h >= directed_hausdorff(&a, &b, d).unwrap());
                let worst = a.iter().map(|&p| d.eval(p, y)).fold(0.0f64, f64::max);
                prop_assert_eq!(hausdorff(&a, &[y], d).unwrap(), worst);
            }
        }

        #[test]
        fn closest_mode_monotone(p in -5.0..5.0f64, modes in small_set(), extra in -5.0..5.0f64) {
            let before = closest_mode_error(p, &modes, Distance::Abs).unwrap();
            let mut more = modes.clone();
            more.push(extra);
            prop_assert!(closest_mode_error(p, &more, Distance::Abs).unwrap() <= before);
        }
    }
}
