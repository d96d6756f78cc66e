//! Pointing-error statistics, strategy efficacy, and 1-D k-means for the
//! elbow method.
//!
//! Pointing errors are handled in degrees on the circle: signed errors are
//! wrapped into `(-180, 180]` and means are resultant (vector) means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Strategy, TrialTrace};
use crate::geometry::normalize_angle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty data")]
    EmptyData,
    #[error("circular mean undefined: resultant length {0:e}")]
    UndefinedMean(f64),
    #[error("no occlusion observed; resolved fraction undefined")]
    NoOcclusionObserved,
    #[error("k = {k} exceeds the {distinct} distinct values")]
    InfeasibleK { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// Resultant length below which a circular mean is undefined.
pub const MIN_RESULTANT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointingSample {
    pub pointed: f64,
    pub truth: f64,
}

impl PointingSample {
    pub fn new(pointed: f64, truth: f64) -> Self {
        PointingSample {
            pointed: normalize_angle(pointed),
            truth: normalize_angle(truth),
        }
    }

    /// Signed error in degrees, `(-180, 180]`.
    pub fn signed_error(&self) -> f64 {
        wrap_degrees(normalize_angle(self.pointed - self.truth).to_degrees())
    }
}

/// Wraps degrees into `(-180, 180]`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn signed_errors(samples: &[PointingSample]) -> Result<Vec<f64>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    Ok(samples.iter().map(PointingSample::signed_error).collect())
}

fn circular_mean_degrees(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    let n = values.len() as f64;
    let (s, c) = values.iter().fold((0.0, 0.0), |(s, c), v| {
        let (vs, vc) = v.to_radians().sin_cos();
        (s + vs, c + vc)
    });
    let (s, c) = (s / n, c / n);
    let r = s.hypot(c);
    if r < MIN_RESULTANT {
        return Err(MetricsError::UndefinedMean(r));
    }
    Ok(wrap_degrees(s.atan2(c).to_degrees()))
}

/// Circular mean of signed errors, `(-180, 180]`.
pub fn signed_error_mean(errors: &[f64]) -> Result<f64, MetricsError> {
    circular_mean_degrees(errors)
}

pub fn absolute_error_mean(errors: &[f64]) -> Result<f64, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Mean absolute deviation of the signed errors from their circular mean.
pub fn configuration_error(errors: &[f64]) -> Result<f64, MetricsError> {
    let mean = signed_error_mean(errors)?;
    Ok(errors.iter().map(|e| wrap_degrees(e - mean).abs()).sum::<f64>() / errors.len() as f64)
}

/// Circular mean of the absolute errors, `[0, 180]`.
pub fn ego_orientation_error(errors: &[f64]) -> Result<f64, MetricsError> {
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    // Angles in [0, 180] have a non-negative resultant sine, which keeps
    // the mean in [0, 180].
    circular_mean_degrees(&abs)
}

/// Drops pointing samples whose absolute error exceeds `threshold`
/// degrees (participants who guessed instead of pointing).
pub fn filter_skips(errors: &[f64], threshold: Option<f64>) -> Vec<f64> {
    match threshold {
        Some(t) => errors.iter().copied().filter(|e| e.abs() <= t).collect(),
        None => errors.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationReport {
    pub signed_error: f64,
    pub absolute_error: f64,
    pub configuration_error: f64,
    pub ego_orientation_error: f64,
    pub n: usize,
}

pub fn orientation_report(errors: &[f64]) -> Result<OrientationReport, MetricsError> {
    Ok(OrientationReport {
        signed_error: signed_error_mean(errors)?,
        absolute_error: absolute_error_mean(errors)?,
        configuration_error: configuration_error(errors)?,
        ego_orientation_error: ego_orientation_error(errors)?,
        n: errors.len(),
    })
}

/// The occlusion flags of one trial that efficacy is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Desk occluded by the final teleport's unadjusted placement.
    pub occluded_at_travel_end: bool,
    /// Desk occluded once the final teleport was committed.
    pub occluded_after_commit: bool,
    /// Desk occluded on the last survey frame.
    pub occluded_at_survey_end: bool,
}

impl TrialOutcome {
    pub fn resolved(&self, strategy: Strategy) -> bool {
        match strategy {
            Strategy::Atr => !self.occluded_after_commit,
            Strategy::Rdw | Strategy::None => !self.occluded_at_survey_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub occlusion_incidence: f64,
    pub resolved_fraction: f64,
    pub n_trials: usize,
}

/// Share of trials whose final teleport left the desk occluded.
pub fn occlusion_incidence(outcomes: &[TrialOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    let hits = outcomes.iter().filter(|o| o.occluded_at_travel_end).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

pub fn efficacy_from_outcomes(outcomes: &[TrialOutcome], strategy: Strategy) -> Result<EfficacyReport, MetricsError> {
    let occlusion_incidence = occlusion_incidence(outcomes)?;
    let occluded: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.occluded_at_travel_end).collect();
    if occluded.is_empty() {
        return Err(MetricsError::NoOcclusionObserved);
    }
    let resolved = occluded.iter().filter(|o| o.resolved(strategy)).count();
    Ok(EfficacyReport {
        occlusion_incidence,
        resolved_fraction: resolved as f64 / occluded.len() as f64,
        n_trials: outcomes.len(),
    })
}

pub fn efficacy(traces: &[TrialTrace], strategy: Strategy) -> Result<EfficacyReport, MetricsError> {
    let outcomes: Vec<TrialOutcome> = traces.iter().map(TrialTrace::outcome).collect();
    efficacy_from_outcomes(&outcomes, strategy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<f64>,
    pub wcss: f64,
    /// WCSS after each Lloyd update, in order.
    pub history: Vec<f64>,
}

const MAX_LLOYD_ITERATIONS: usize = 10_000;

fn distinct_count(values: &[f64]) -> usize {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = (v - c) * (v - c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn wcss_of(values: &[f64], centers: &[f64], assignments: &[usize]) -> f64 {
    values
        .iter()
        .zip(assignments)
        .map(|(v, &a)| (v - centers[a]) * (v - centers[a]))
        .sum()
}

/// k-means++ seeding on the line.
fn seed_centers(values: &[f64], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| centers.iter().map(|&c| (v - c) * (v - c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            // Rounding can walk past the last positive weight.
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            idx
        } else {
            unreachable!("fewer distinct values than k")
        };
        centers.push(values[pick]);
    }
    centers
}

/// Lloyd iterations from the given centers until assignments stop changing.
pub fn lloyd_from(values: &[f64], init: Vec<f64>) -> KMeansResult {
    let mut centers = init;
    let mut assignments: Vec<usize> = values.iter().map(|&v| nearest(&centers, v)).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let k = centers.len();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &a) in values.iter().zip(&assignments) {
            sums[a] += v;
            counts[a] += 1;
        }
        for i in 0..k {
            if counts[i] > 0 {
                centers[i] = sums[i] / counts[i] as f64;
            }
        }
        history.push(wcss_of(values, &centers, &assignments));
        let next: Vec<usize> = values.iter().map(|&v| nearest(&centers, v)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let wcss = wcss_of(values, &centers, &assignments);
    KMeansResult {
        assignments,
        centers,
        wcss,
        history,
    }
}

fn check_k(values: &[f64], k: usize) -> Result<(), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let distinct = distinct_count(values);
    if k > distinct {
        return Err(MetricsError::InfeasibleK { k, distinct });
    }
    Ok(())
}

pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Result<KMeansResult, MetricsError> {
    check_k(values, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = seed_centers(values, k, &mut rng);
    Ok(lloyd_from(values, init))
}

pub const ELBOW_RESTARTS: u64 = 10;

/// Best-of-restarts WCSS for k = 1..=k_max, cut off at the largest
/// feasible k. Each k also restarts from the previous k's best centers
/// plus the value farthest from them, so the curve never rises.
pub fn elbow_curve(values: &[f64], k_max: usize, seed: u64) -> Result<Vec<(usize, f64)>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    if k_max == 0 {
        return Err(MetricsError::ZeroK);
    }
    let k_top = k_max.min(distinct_count(values));
    let mut curve = Vec::with_capacity(k_top);
    let mut prev_best: Option<KMeansResult> = None;
    for k in 1..=k_top {
        let mut best: Option<KMeansResult> = None;
        let mut consider = |r: KMeansResult| {
            if best.as_ref().is_none_or(|b| r.wcss < b.wcss) {
                best = Some(r);
            }
        };
        for restart in 0..ELBOW_RESTARTS {
            let s = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((k as u64) << 32 | restart);
            consider(kmeans_1d(values, k, s)?);
        }
        if let Some(prev) = &prev_best {
            let far = values
                .iter()
                .copied()
                .filter(|v| !prev.centers.contains(v))
                .max_by(|a, b| {
                    let da = prev.centers.iter().map(|c| (a - c).abs()).fold(f64::INFINITY, f64::min);
                    let db = prev.centers.iter().map(|c| (b - c).abs()).fold(f64::INFINITY, f64::min);
                    da.total_cmp(&db)
                });
            if let Some(far) = far {
                let mut init = prev.centers.clone();
                init.push(far);
                consider(lloyd_from(values, init));
            }
        }
        let best = best.expect("at least one restart");
        curve.push((k, best.wcss));
        prev_best = Some(best);
    }
    Ok(curve)
}

/// k with the largest second difference of the WCSS curve.
pub fn elbow_knee(curve: &[(usize, f64)]) -> Option<usize> {
    curve
        .windows(3)
        .map(|w| (w[1].0, w[0].1 - 2.0 * w[1].1 + w[2].1))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_error_wraps() {
        let t = 0.4;
        let s = [
            PointingSample::new(t, t),
            PointingSample::new(t + 170f64.to_radians(), t),
            PointingSample::new(t + 200f64.to_radians(), t),
        ];
        let e = signed_errors(&s).unwrap();
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 170.0).abs() < 1e-9);
        assert!((e[2] + 160.0).abs() < 1e-9);
        assert_eq!(signed_errors(&[]), Err(MetricsError::EmptyData));
    }

    #[test]
    fn circular_mean_examples() {
        assert!(signed_error_mean(&[10.0, -10.0]).unwrap().abs() < 1e-12);
        assert_eq!(signed_error_mean(&[170.0, -170.0]).unwrap(), 180.0);
        assert!((signed_error_mean(&[90.0, 90.0, 90.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!(matches!(
            signed_error_mean(&[0.0, 180.0]),
            Err(MetricsError::UndefinedMean(_))
        ));
    }

    #[test]
    fn absolute_and_configuration_examples() {
        assert_eq!(absolute_error_mean(&[10.0, -10.0]).unwrap(), 10.0);
        assert_eq!(absolute_error_mean(&[0.0]).unwrap(), 0.0);
        assert!((configuration_error(&[10.0, -10.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(configuration_error(&[20.0, 20.0]).unwrap().abs() < 1e-12);
        assert!((configuration_error(&[170.0, -170.0]).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ego_examples() {
        assert!((ego_orientation_error(&[10.0, -10.0]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(ego_orientation_error(&[0.0, 0.0]).unwrap(), 0.0);
        // Two unit vectors at 90° and 170°: resultant bisects them at 130°.
        assert!((ego_orientation_error(&[90.0, 170.0]).unwrap() - 130.0).abs() < 1e-9);
        assert_eq!(ego_orientation_error(&[180.0]).unwrap(), 180.0);
    }

    #[test]
    fn skip_filter() {
        assert_eq!(filter_skips(&[5.0, -120.0, 30.0], Some(90.0)), vec![5.0, 30.0]);
        assert_eq!(filter_skips(&[5.0, -120.0], None).len(), 2);
    }

    fn o(t: bool, c: bool, s: bool) -> TrialOutcome {
        TrialOutcome {
            occluded_at_travel_end: t,
            occluded_after_commit: c,
            occluded_at_survey_end: s,
        }
    }

    #[test]
    fn efficacy_flag_table() {
        // (occluded, resolved) = (T,T), (T,F), (T,T), (F,–)
        let rdw = [
            o(true, true, false),
            o(true, true, true),
            o(true, true, false),
            o(false, false, false),
        ];
        let r = efficacy_from_outcomes(&rdw, Strategy::Rdw).unwrap();
        assert_eq!(r.occlusion_incidence, 0.75);
        assert!((r.resolved_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.n_trials, 4);

        let atr = [
            o(true, false, false),
            o(true, true, true),
            o(true, false, true),
            o(false, false, false),
        ];
        let r = efficacy_from_outcomes(&atr, Strategy::Atr).unwrap();
        assert!((r.resolved_fraction - 2.0 / 3.0).abs() < 1e-15);

        let mut shuffled = rdw;
        shuffled.reverse();
        assert_eq!(
            efficacy_from_outcomes(&shuffled, Strategy::Rdw).unwrap(),
            efficacy_from_outcomes(&rdw, Strategy::Rdw).unwrap()
        );
    }

    #[test]
    fn efficacy_without_occlusion_errors() {
        let none = [o(false, false, false); 3];
        assert_eq!(
            efficacy_from_outcomes(&none, Strategy::Rdw),
            Err(MetricsError::NoOcclusionObserved)
        );
    }

    #[test]
    fn kmeans_examples() {
        let r = kmeans_1d(&[4.0, 4.0, 4.0], 1, 1).unwrap();
        assert_eq!(r.wcss, 0.0);
        let r = kmeans_1d(&[0.0, 0.0, 10.0, 10.0], 2, 1).unwrap();
        let mut c = r.centers.clone();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
        assert_eq!(r.wcss, 0.0);
        assert_eq!(
            kmeans_1d(&[1.0, 1.0], 2, 0),
            Err(MetricsError::InfeasibleK { k: 2, distinct: 1 })
        );
    }

    #[test]
    fn elbow_single_point() {
        assert_eq!(elbow_curve(&[3.0], 5, 0).unwrap(), vec![(1, 0.0)]);
    }
}
