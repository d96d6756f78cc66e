use avocc_core::agent::Strategy as Arm;
use avocc_core::metrics::{
    absolute_error_mean, configuration_error, efficacy_from_outcomes, elbow_curve, elbow_knee, kmeans_1d, lloyd_from,
    signed_error_mean, wrap_degrees, TrialOutcome,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Double-double accumulator (Knuth two-sum), roughly 106 bits of
/// mantissa for running sums.
#[derive(Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn add(self, x: f64) -> Dd {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        Dd { hi, lo: lo - (hi - s) }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn dd_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(Dd::default(), Dd::add).value()
}

fn oracle_circular_mean(errors: &[f64]) -> f64 {
    let s = dd_sum(errors.iter().map(|e| e.to_radians().sin()));
    let c = dd_sum(errors.iter().map(|e| e.to_radians().cos()));
    let m = s.atan2(c).to_degrees();
    if m <= -180.0 {
        m + 360.0
    } else {
        m
    }
}

fn oracle_abs_mean(errors: &[f64]) -> f64 {
    dd_sum(errors.iter().map(|e| e.abs())) / errors.len() as f64
}

/// Minimal angular distance found by trying `x + 360k` for small k.
fn oracle_min_angle(x: f64) -> f64 {
    (-4..=4)
        .map(|k| x + 360.0 * k as f64)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)))
        .unwrap()
}

fn oracle_configuration(errors: &[f64]) -> f64 {
    let m = oracle_circular_mean(errors);
    dd_sum(errors.iter().map(|e| oracle_min_angle(e - m).abs())) / errors.len() as f64
}

fn angle_diff(a: f64, b: f64) -> f64 {
    oracle_min_angle(a - b).abs()
}

/// Error sets clustered enough that the circular mean is well conditioned.
fn random_errors(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..60);
    let center = rng.random_range(-180.0..180.0);
    let spread = rng.random_range(0.0..90.0);
    (0..n)
        .map(|_| wrap_degrees(center + rng.random_range(-spread..=spread)))
        .collect()
}

#[test]
fn analytic_examples() {
    assert_eq!(signed_error_mean(&[170.0, -170.0]).unwrap(), 180.0);
    assert_eq!(configuration_error(&[10.0, -10.0]).unwrap(), 10.0);
    assert_eq!(absolute_error_mean(&[10.0, -10.0]).unwrap(), 10.0);
}

#[test]
fn five_hundred_random_sets_match_extended_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let e = random_errors(&mut rng);
        let mean = signed_error_mean(&e).unwrap();
        assert!(angle_diff(mean, oracle_circular_mean(&e)) < 1e-9, "{e:?}");
        assert!((absolute_error_mean(&e).unwrap() - oracle_abs_mean(&e)).abs() < 1e-9);
        assert!((configuration_error(&e).unwrap() - oracle_configuration(&e)).abs() < 1e-9);
    }
}

#[test]
fn wrap_matches_minimal_angle_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let x = rng.random_range(-1000.0..1000.0);
        let w = wrap_degrees(x);
        assert!(w > -180.0 && w <= 180.0);
        assert!((w - oracle_min_angle(x)).abs() < 1e-9 || (w.abs() - 180.0).abs() < 1e-9);
    }
}

#[test]
fn three_separated_clusters_have_knee_at_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sd = 1.0;
    let noise = Normal::new(0.0, sd).unwrap();
    // Gap 40 sd. Equal, evenly spaced clusters put the largest second
    // difference at k = 2 (W2 never exceeds W1/3 on a line); a heavier
    // middle cluster makes k = 3 the unique knee.
    let values: Vec<f64> = [(0.0, 10), (40.0, 40), (80.0, 10)]
        .iter()
        .flat_map(|&(c, n)| (0..n).map(move |_| c).collect::<Vec<_>>())
        .map(|c| c + noise.sample(&mut rng))
        .collect();
    let curve = elbow_curve(&values, 6, 17).unwrap();
    assert_eq!(curve.len(), 6);
    assert_eq!(elbow_knee(&curve), Some(3));
}

fn outcome() -> impl Strategy<Value = TrialOutcome> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(a, b, c)| TrialOutcome {
        occluded_at_travel_end: a,
        occluded_after_commit: b,
        occluded_at_survey_end: c,
    })
}

proptest! {
    #[test]
    fn mean_is_rotation_equivariant(seed in any::<u64>(), delta in -720.0..720.0f64) {
        let e = random_errors(&mut ChaCha8Rng::seed_from_u64(seed));
        let shifted: Vec<f64> = e.iter().map(|x| wrap_degrees(x + delta)).collect();
        let a = signed_error_mean(&e).unwrap();
        let b = signed_error_mean(&shifted).unwrap();
        prop_assert!(angle_diff(b, a + delta) < 1e-6);
    }

    #[test]
    fn absolute_mean_bounds_arithmetic_mean(e in prop::collection::vec(-180.0..=180.0f64, 1..50)) {
        let arith = e.iter().sum::<f64>() / e.len() as f64;
        prop_assert!(absolute_error_mean(&e).unwrap() >= arith.abs() - 1e-12);
    }

    #[test]
    fn outputs_in_range(seed in any::<u64>()) {
        let e = random_errors(&mut ChaCha8Rng::seed_from_u64(seed));
        let m = signed_error_mean(&e).unwrap();
        prop_assert!(m > -180.0 && m <= 180.0);
        prop_assert!(absolute_error_mean(&e).unwrap() >= 0.0);
        prop_assert!(configuration_error(&e).unwrap() >= 0.0);
        let rewrapped: Vec<f64> = e.iter().map(|x| wrap_degrees(*x)).collect();
        prop_assert_eq!(rewrapped, e);
    }

    #[test]
    fn efficacy_ignores_trial_order(mut outcomes in prop::collection::vec(outcome(), 1..30), seed in any::<u64>()) {
        prop_assume!(outcomes.iter().any(|o| o.occluded_at_travel_end));
        for s in [Arm::Rdw, Arm::Atr] {
            let a = efficacy_from_outcomes(&outcomes, s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..outcomes.len()).rev() {
                outcomes.swap(i, rng.random_range(0..=i));
            }
            let b = efficacy_from_outcomes(&outcomes, s).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a.resolved_fraction));
            prop_assert!((0.0..=1.0).contains(&a.occlusion_incidence));
        }
    }

    #[test]
    fn lloyd_never_increases_wcss(values in prop::collection::vec(-100.0..100.0f64, 2..60), k in 1usize..5, seed in any::<u64>()) {
        let distinct = {
            let mut v = values.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        prop_assume!(k <= distinct);
        let r = kmeans_1d(&values, k, seed).unwrap();
        for w in r.history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let again = lloyd_from(&values, r.centers.clone());
        prop_assert!(again.wcss <= r.wcss);
    }

    #[test]
    fn elbow_curve_never_increases(values in prop::collection::vec(-50.0..50.0f64, 1..40), seed in any::<u64>()) {
        let curve = elbow_curve(&values, 6, seed).unwrap();
        prop_assert_eq!(curve[0].0, 1);
        for w in curve.windows(2) {
            prop_assert_eq!(w[1].0, w[0].0 + 1);
            prop_assert!(w[1].1 <= w[0].1);
        }
    }
}
