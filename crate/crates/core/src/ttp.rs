//! Transferability ranking from Ω trajectories.
//!
//! A polynomial is least-squares fitted to Ω against layer position
//! normalized to `[0, 1]`; its slope θ at the midpoint 0.5 is the score.
//! Steeper decay (more negative θ) is expected to go with higher fine-tuned
//! accuracy. LEEP is provided as a baseline score over source-model
//! predictions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::format::fmt_f64;
use crate::metrics::{csv_field, OmegaTrajectory};

pub const DEFAULT_DEGREE: usize = 3;
pub const MIDPOINT: f64 = 0.5;
/// Allowed deviation of a softmax row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("polynomial degree must be at least 1")]
    ZeroDegree,
    #[error("degree {degree} fit needs at least {} layers, got {layers}", degree + 1)]
    InsufficientLayers { layers: usize, degree: usize },
    #[error("all layer positions coincide; cannot fit")]
    DegenerateFit,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in correlation input")]
    ZeroVariance,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("softmax row {row} sums to {sum}, not 1")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("softmax matrix is empty")]
    EmptySoftmax,
    #[error("softmax row {row} has {found} columns, expected {expected}")]
    RaggedSoftmax { row: usize, expected: usize, found: usize },
    #[error("ranking needs at least 3 models with accuracies, got {0}")]
    InsufficientModels(usize),
    #[error("model '{0}' appears more than once")]
    DuplicateModel(String),
}

/// A polynomial on the normalized depth axis, coefficients in ascending power.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPolynomial {
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

impl FittedPolynomial {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative_at(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * t + k as f64 * c)
    }

    /// Euclidean norm of the residuals at the given points.
    pub fn residual_norm(&self, ts: &[f64], ys: &[f64]) -> f64 {
        ts.iter()
            .zip(ys)
            .map(|(&t, &y)| (self.eval(t) - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Least-squares polynomial through `(ts, ys)`, solved by QR of the
/// Vandermonde matrix.
pub fn fit_points(ts: &[f64], ys: &[f64], degree: usize) -> Result<FittedPolynomial, RankingError> {
    if degree == 0 {
        return Err(RankingError::ZeroDegree);
    }
    if ts.len() != ys.len() {
        return Err(RankingError::LengthMismatch(ts.len(), ys.len()));
    }
    if ts.len() < degree + 1 {
        return Err(RankingError::InsufficientLayers {
            layers: ts.len(),
            degree,
        });
    }
    if ts.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(RankingError::NonFinite);
    }
    let cols = degree + 1;
    let a = DMatrix::from_fn(ts.len(), cols, |i, j| ts[i].powi(j as i32));
    let y = DVector::from_column_slice(ys);
    let qr = a.qr();
    let qty = qr.q().transpose() * y;
    let coefficients = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(RankingError::DegenerateFit)?;
    Ok(FittedPolynomial {
        degree,
        coefficients: coefficients.iter().copied().collect(),
    })
}

/// Layer indices mapped affinely onto `[0, 1]`.
pub fn normalized_positions(trajectory: &OmegaTrajectory) -> Result<Vec<f64>, RankingError> {
    let idx: Vec<f64> = trajectory.records.iter().map(|r| r.layer_index as f64).collect();
    let (lo, hi) = idx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if idx.len() < 2 || hi <= lo {
        return Err(RankingError::DegenerateFit);
    }
    Ok(idx.iter().map(|&v| (v - lo) / (hi - lo)).collect())
}

pub fn fit_polynomial(trajectory: &OmegaTrajectory, degree: usize) -> Result<FittedPolynomial, RankingError> {
    if degree == 0 {
        return Err(RankingError::ZeroDegree);
    }
    let layers = trajectory.records.len();
    if layers < degree + 1 {
        return Err(RankingError::InsufficientLayers { layers, degree });
    }
    let ts = normalized_positions(trajectory)?;
    fit_points(&ts, &trajectory.omegas(), degree)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtpResult {
    pub model_id: String,
    pub theta: f64,
    pub polynomial: FittedPolynomial,
    pub midpoint: f64,
}

/// θ: slope of the fitted polynomial at the middle of the depth axis.
pub fn ttp(trajectory: &OmegaTrajectory, degree: usize) -> Result<TtpResult, RankingError> {
    let polynomial = fit_polynomial(trajectory, degree)?;
    Ok(TtpResult {
        model_id: trajectory.model_id.clone(),
        theta: polynomial.derivative_at(MIDPOINT),
        polynomial,
        midpoint: MIDPOINT,
    })
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, RankingError> {
    if x.len() != y.len() {
        return Err(RankingError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RankingError::TooFewPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RankingError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RankingError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Log expected empirical prediction of target `labels` given the source
/// model's softmax rows. Source classes with zero total mass are skipped.
pub fn leep(softmax: &[Vec<f64>], labels: &[usize]) -> Result<f64, RankingError> {
    let n = softmax.len();
    if n == 0 {
        return Err(RankingError::EmptySoftmax);
    }
    if labels.len() != n {
        return Err(RankingError::LengthMismatch(n, labels.len()));
    }
    let z = softmax[0].len();
    for (row, probs) in softmax.iter().enumerate() {
        if probs.len() != z {
            return Err(RankingError::RaggedSoftmax {
                row,
                expected: z,
                found: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(RankingError::RowNotNormalized { row, sum });
        }
    }

    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0; z]; classes];
    for (probs, &y) in softmax.iter().zip(labels) {
        for (cell, &p) in joint[y].iter_mut().zip(probs) {
            *cell += p / n as f64;
        }
    }
    let marginal: Vec<f64> = (0..z).map(|k| joint.iter().map(|row| row[k]).sum()).collect();

    let mut total = 0.0;
    for (probs, &y) in softmax.iter().zip(labels) {
        let expected: f64 = (0..z)
            .filter(|&k| marginal[k] > 0.0)
            .map(|k| joint[y][k] / marginal[k] * probs[k])
            .sum();
        total += expected.ln();
    }
    // each inner sum is at most the row sum, so only rounding can push above 0
    Ok((total / n as f64).min(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingEntry {
    pub model_id: String,
    pub theta: f64,
    pub accuracy: Option<f64>,
    pub leep: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    /// Sorted by ascending θ, then model id.
    pub entries: Vec<RankingEntry>,
    pub pearson_theta: f64,
    pub pearson_leep: Option<f64>,
    /// Models ranked but left out of the correlations for lack of an accuracy.
    pub excluded: Vec<String>,
}

impl RankingReport {
    /// CSV `model_id,theta,accuracy,leep` followed by footer lines
    /// `pearson_ttp=<v>` and `pearson_leep=<v|NA>`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = String::from("model_id,theta,accuracy,leep\n");
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{}",
                csv_field(&e.model_id),
                fmt_f64(e.theta),
                opt(e.accuracy),
                opt(e.leep)
            )
            .unwrap();
        }
        writeln!(out, "pearson_ttp={}", fmt_f64(self.pearson_theta)).unwrap();
        writeln!(
            out,
            "pearson_leep={}",
            self.pearson_leep.map(fmt_f64).unwrap_or_else(|| "NA".into())
        )
        .unwrap();
        if !self.excluded.is_empty() {
            writeln!(out, "excluded_no_accuracy={}", self.excluded.join(";")).unwrap();
        }
        out
    }
}

/// Ranks models from precomputed θ values.
pub fn rank_thetas(
    thetas: &[(String, f64)],
    accuracies: &BTreeMap<String, f64>,
    leep_scores: Option<&BTreeMap<String, f64>>,
) -> Result<RankingReport, RankingError> {
    let mut seen = BTreeSet::new();
    for (id, _) in thetas {
        if !seen.insert(id.as_str()) {
            return Err(RankingError::DuplicateModel(id.clone()));
        }
    }
    let mut entries: Vec<RankingEntry> = thetas
        .iter()
        .map(|(id, theta)| RankingEntry {
            model_id: id.clone(),
            theta: *theta,
            accuracy: accuracies.get(id).copied(),
            leep: leep_scores.and_then(|m| m.get(id).copied()),
        })
        .collect();
    entries.sort_by(|a, b| a.theta.total_cmp(&b.theta).then_with(|| a.model_id.cmp(&b.model_id)));

    let with_acc: Vec<&RankingEntry> = entries.iter().filter(|e| e.accuracy.is_some()).collect();
    if with_acc.len() < 3 {
        return Err(RankingError::InsufficientModels(with_acc.len()));
    }
    let acc: Vec<f64> = with_acc.iter().filter_map(|e| e.accuracy).collect();
    let theta: Vec<f64> = with_acc.iter().map(|e| e.theta).collect();
    let pearson_theta = pearson(&theta, &acc)?;

    let leep_pairs: Vec<(f64, f64)> = with_acc
        .iter()
        .filter_map(|e| Some((e.leep?, e.accuracy?)))
        .collect();
    let pearson_leep = if leep_pairs.len() >= 3 {
        let (l, a): (Vec<f64>, Vec<f64>) = leep_pairs.into_iter().unzip();
        Some(pearson(&l, &a)?)
    } else {
        None
    };

    let excluded = entries
        .iter()
        .filter(|e| e.accuracy.is_none())
        .map(|e| e.model_id.clone())
        .collect();
    Ok(RankingReport {
        entries,
        pearson_theta,
        pearson_leep,
        excluded,
    })
}

/// Computes θ for every trajectory and ranks the models.
pub fn rank_models(
    trajectories: &[OmegaTrajectory],
    accuracies: &BTreeMap<String, f64>,
    leep_scores: Option<&BTreeMap<String, f64>>,
    degree: usize,
) -> Result<RankingReport, RankingError> {
    let thetas = trajectories
        .iter()
        .map(|t| ttp(t, degree).map(|r| (r.model_id, r.theta)))
        .collect::<Result<Vec<_>, _>>()?;
    rank_thetas(&thetas, accuracies, leep_scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ComplexityRecord;
    use proptest::prelude::*;

    fn trajectory(id: &str, omegas: &[f64]) -> OmegaTrajectory {
        OmegaTrajectory {
            model_id: id.into(),
            dataset_id: "d".into(),
            records: omegas
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let mut r = ComplexityRecord::new(i as i64, format!("l{i}"), 0.0, vec![]);
                    r.omega_mean = w;
                    r
                })
                .collect(),
        }
    }

    fn cubic(t: f64) -> f64 {
        2.0 - 3.0 * t + t.powi(3)
    }

    #[test]
    fn exact_line() {
        let t = trajectory("m", &[1.0, 0.75, 0.5, 0.25, 0.0]);
        let p = fit_polynomial(&t, 1).unwrap();
        assert!((p.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((p.coefficients[1] + 1.0).abs() < 1e-12);
        assert!((ttp(&t, 1).unwrap().theta + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_cubic() {
        let omegas: Vec<f64> = (0..7).map(|i| cubic(i as f64 / 6.0)).collect();
        let t = trajectory("m", &omegas);
        let p = fit_polynomial(&t, 3).unwrap();
        for (got, want) in p.coefficients.iter().zip([2.0, -3.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        // P'(t) = -3 + 3t^2, so P'(0.5) = -2.25
        let r = ttp(&t, 3).unwrap();
        assert!((r.theta + 2.25).abs() < 1e-9);
        assert_eq!(r.midpoint, 0.5);
    }

    #[test]
    fn constant_has_zero_slope() {
        let r = ttp(&trajectory("m", &[4.0; 6]), 3).unwrap();
        assert!(r.theta.abs() < 1e-12);
    }

    #[test]
    fn too_few_layers() {
        assert_eq!(
            fit_polynomial(&trajectory("m", &[1.0, 2.0, 3.0]), 3),
            Err(RankingError::InsufficientLayers { layers: 3, degree: 3 })
        );
        assert_eq!(fit_polynomial(&trajectory("m", &[1.0, 2.0]), 0), Err(RankingError::ZeroDegree));
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        // cov = 4, var = 5 each
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(RankingError::ZeroVariance));
        assert_eq!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(RankingError::TooFewPoints(2)));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0]), Err(RankingError::LengthMismatch(3, 1)));
    }

    #[test]
    fn leep_examples() {
        let one_hot = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(leep(&one_hot, &[1, 0, 2, 1]).unwrap(), 0.0);

        let uniform = vec![vec![0.5, 0.5]; 4];
        assert!((leep(&uniform, &[0, 1, 0, 1]).unwrap() - 0.5f64.ln()).abs() < 1e-12);

        // joint = [[.4,.1],[.1,.4]], conditional = [[.8,.2],[.2,.8]]
        // each image: .8*.8 + .2*.2 = .68
        let soft = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        assert!((leep(&soft, &[0, 1]).unwrap() - 0.68f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn leep_skips_empty_source_class() {
        let rows = vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0]];
        assert!((leep(&rows, &[0, 1]).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn leep_errors() {
        assert_eq!(leep(&[], &[]), Err(RankingError::EmptySoftmax));
        assert!(matches!(
            leep(&[vec![0.5, 0.4]], &[0]),
            Err(RankingError::RowNotNormalized { row: 0, .. })
        ));
        assert!(matches!(
            leep(&[vec![1.0], vec![0.5, 0.5]], &[0, 0]),
            Err(RankingError::RaggedSoftmax { row: 1, .. })
        ));
    }

    fn accs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn perfect_inverse_ranking() {
        let thetas = vec![("c".to_string(), 0.0), ("a".to_string(), -2.0), ("b".to_string(), -1.0)];
        let report = rank_thetas(&thetas, &accs(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]), None).unwrap();
        assert_eq!(report.pearson_theta, -1.0);
        assert_eq!(
            report.entries.iter().map(|e| e.model_id.as_str()).collect::<Vec<_>>(),
            vec!["a", "b", "c"]
        );
        assert_eq!(
            report.to_csv(),
            "model_id,theta,accuracy,leep\na,-2,0.9,\nb,-1,0.8,\nc,0,0.7,\npearson_ttp=-1\npearson_leep=NA\n"
        );
    }

    #[test]
    fn identical_thetas_have_no_correlation() {
        let thetas: Vec<(String, f64)> = ["a", "b", "c"].iter().map(|s| (s.to_string(), -1.0)).collect();
        assert_eq!(
            rank_thetas(&thetas, &accs(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]), None),
            Err(RankingError::ZeroVariance)
        );
    }

    #[test]
    fn missing_accuracy_is_ranked_but_excluded() {
        let thetas: Vec<(String, f64)> = [("a", -3.0), ("b", -2.0), ("c", -1.0), ("d", 0.0)]
            .iter()
            .map(|(s, t)| (s.to_string(), *t))
            .collect();
        let leeps = accs(&[("a", -0.1), ("b", -0.5), ("c", -0.3), ("d", -0.9)]);
        let report = rank_thetas(&thetas, &accs(&[("a", 0.9), ("c", 0.6), ("d", 0.5)]), Some(&leeps)).unwrap();
        assert_eq!(report.entries.len(), 4);
        assert_eq!(report.excluded, vec!["b".to_string()]);
        let expected = pearson(&[-3.0, -1.0, 0.0], &[0.9, 0.6, 0.5]).unwrap();
        assert_eq!(report.pearson_theta, expected);
        assert!(report.pearson_leep.is_some());
        assert!(report.to_csv().ends_with("excluded_no_accuracy=b\n"));

        let two = rank_thetas(&thetas, &accs(&[("a", 0.9), ("c", 0.6)]), None);
        assert_eq!(two, Err(RankingError::InsufficientModels(2)));
    }

    #[test]
    fn rank_models_from_trajectories() {
        let ts = vec![
            trajectory("flat", &[1.0, 1.0, 1.0]),
            trajectory("steep", &[3.0, 2.0, 1.0]),
            trajectory("mild", &[2.0, 1.5, 1.0]),
        ];
        let report = rank_models(&ts, &accs(&[("flat", 0.5), ("steep", 0.9), ("mild", 0.7)]), None, 1).unwrap();
        assert_eq!(report.entries[0].model_id, "steep");
        assert!((report.entries[0].theta + 2.0).abs() < 1e-12);
        assert!(report.pearson_theta < -0.99);
    }

    proptest! {
        #[test]
        fn theta_shift_and_scale(
            omegas in prop::collection::vec(0.0f64..50.0, 5..12),
            shift in -20.0f64..20.0,
            scale in 0.1f64..10.0,
        ) {
            let base = ttp(&trajectory("m", &omegas), 3).unwrap().theta;
            let shifted: Vec<f64> = omegas.iter().map(|w| w + shift).collect();
            let scaled: Vec<f64> = omegas.iter().map(|w| w * scale).collect();
            let ts = ttp(&trajectory("m", &shifted), 3).unwrap().theta;
            let tc = ttp(&trajectory("m", &scaled), 3).unwrap().theta;
            let tol = 1e-8 * (1.0 + base.abs() + shift.abs());
            prop_assert!((ts - base).abs() < tol, "{} vs {}", ts, base);
            prop_assert!((tc - scale * base).abs() < 1e-8 * (1.0 + (scale * base).abs()));
        }

        #[test]
        fn nested_fits_do_not_lose(ys in prop::collection::vec(-10.0f64..10.0, 6..10)) {
            let ts: Vec<f64> = (0..ys.len()).map(|i| i as f64 / (ys.len() - 1) as f64).collect();
            let mut previous = f64::INFINITY;
            for degree in 1..=4 {
                let r = fit_points(&ts, &ys, degree).unwrap().residual_norm(&ts, &ys);
                prop_assert!(r <= previous + 1e-9);
                previous = r;
            }
        }

        #[test]
        fn pearson_affine_invariant_and_symmetric(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..20),
            a in 0.1f64..10.0, b in -50.0f64..50.0, c in 0.1f64..10.0, d in -50.0f64..50.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let Ok(r) = pearson(&x, &y) else { return Ok(()) };
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let yt: Vec<f64> = y.iter().map(|v| c * v + d).collect();
            prop_assert!((pearson(&xt, &yt).unwrap() - r).abs() < 1e-9);
            prop_assert_eq!(pearson(&y, &x).unwrap(), r);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn leep_is_never_positive(
            rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..15),
            seed in any::<u64>(),
        ) {
            let softmax: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() })
                .collect();
            let labels: Vec<usize> = (0..softmax.len()).map(|i| ((seed >> (i % 60)) & 1) as usize).collect();
            let v = leep(&softmax, &labels).unwrap();
            prop_assert!(v <= 0.0);
        }

        #[test]
        fn ranking_ignores_input_order(
            thetas in prop::collection::vec(-5.0f64..5.0, 3..8),
            rotate in 0usize..8,
        ) {
            let named: Vec<(String, f64)> = thetas.iter().enumerate().map(|(i, t)| (format!("m{i}"), *t)).collect();
            let acc: BTreeMap<String, f64> = named.iter().enumerate().map(|(i, (id, _))| (id.clone(), i as f64 / 10.0)).collect();
            let mut rotated = named.clone();
            rotated.rotate_left(rotate % named.len());
            let a = rank_thetas(&named, &acc, None);
            let b = rank_thetas(&rotated, &acc, None);
            prop_assert_eq!(a, b);
        }
    }
}
