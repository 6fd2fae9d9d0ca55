use cleanfield::correction::{retained_window, CorrectionParams};
use cleanfield::{correct_density, DensityProfile};
use proptest::prelude::*;

mod common;
use common::literal_correction;

fn profile(sigma: Vec<f64>) -> DensityProfile {
    DensityProfile::from_depths((0..sigma.len()).map(|k| 0.1 * k as f64).collect(), sigma).unwrap()
}

/// Mostly zeros with a few spikes, so both empty and multi-peak profiles appear.
fn sparse_sigma() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => 0.0f64..10.0], 1..40)
}

proptest! {
    #[test]
    fn matches_literal_transcription(sigma in sparse_sigma(), thres in 0.5f64..8.0, m in 0usize..6) {
        let p = CorrectionParams::absolute(thres, m);
        let got = correct_density(&profile(sigma.clone()), &p);
        prop_assert_eq!(got.sigma, literal_correction(&sigma, thres, m));
    }

    #[test]
    fn idempotent(sigma in sparse_sigma(), thres in 0.5f64..8.0, m in 0usize..6) {
        let p = CorrectionParams::absolute(thres, m);
        let once = correct_density(&profile(sigma), &p);
        let twice = correct_density(&once, &p);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn only_zeroes_outside_a_window_that_covers_every_peak(sigma in sparse_sigma(), thres in 0.5f64..8.0, m in 0usize..6) {
        let p = CorrectionParams::absolute(thres, m);
        let out = correct_density(&profile(sigma.clone()), &p);
        let window = retained_window(&sigma, &p);
        for (k, (&a, &b)) in sigma.iter().zip(&out.sigma).enumerate() {
            prop_assert!(b == a || b == 0.0);
            if a > thres {
                prop_assert_eq!(b, a);
            }
            if let Some((lo, hi)) = window {
                prop_assert_eq!(b == a, (lo..=hi).contains(&k) || a == 0.0);
            }
        }
    }

    #[test]
    fn relative_threshold_scales(sigma in sparse_sigma(), scale in 0.5f64..50.0) {
        // With a negligible floor, scaling densities scales the threshold too.
        let p = CorrectionParams { threshold: 0.3, margin: 1, relative: true, floor: 1e-12 };
        let a = correct_density(&profile(sigma.clone()), &p);
        let b = correct_density(&profile(sigma.iter().map(|s| s * scale).collect()), &p);
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            prop_assert_eq!(*x == 0.0, *y == 0.0);
        }
    }
}

#[test]
fn depths_and_steps_untouched() {
    let p = profile(vec![0.5, 0.0, 0.0, 4.0, 1.0, 3.0, 0.0, 0.0, 0.5]);
    let out = correct_density(&p, &CorrectionParams::absolute(2.0, 1));
    assert_eq!(out.t, p.t);
    assert_eq!(out.delta, p.delta);
    assert_eq!(out.sigma, vec![0.0, 0.0, 0.0, 4.0, 1.0, 3.0, 0.0, 0.0, 0.0]);
}
