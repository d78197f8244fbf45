mod common;

use proptest::prelude::*;

use common::{monthly_fixture, reference_theta};
use nbeats::baselines::{naive, naive2, seasonal_naive, ses, theta, SesAlpha};
use nbeats::metrics::{mase, owa, smape, smape_m3};

#[test]
fn theta_agrees_with_the_drift_reference() {
    let (h, m) = (18, 12);
    let (mut ours, mut reference) = (0.0, 0.0);
    let fixture = monthly_fixture(50, 21);
    for y in &fixture {
        let (hist, test) = y.split_at(y.len() - h);
        ours += smape_m3(test, &theta(hist, h, m).unwrap()).unwrap();
        reference += smape_m3(test, &reference_theta(hist, h, m)).unwrap();
    }
    let (ours, reference) = (ours / 50.0, reference / 50.0);
    assert!((ours - reference).abs() <= 2.0, "theta {ours:.3} vs reference {reference:.3}");
}

#[test]
fn naive2_is_its_own_owa_reference() {
    for y in monthly_fixture(30, 2) {
        let (hist, test) = y.split_at(y.len() - 18);
        let f = naive2(hist, 18, 12).unwrap();
        let s = smape(test, &f).unwrap();
        let q = mase(test, &f, hist, 12).unwrap();
        assert_eq!(owa(s, q, s, q).unwrap(), 1.0);
    }
}

fn positive_series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1000.0, 30..80)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn baselines_are_positively_homogeneous(y in positive_series(), c in prop::sample::select(vec![1e-3, 0.5, 7.0, 1e3])) {
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let close = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).all(|(p, q)| (p * c - q).abs() <= 1e-9 * q.abs().max(1e-12));
        prop_assert!(close(naive(&y, 6).unwrap(), naive(&scaled, 6).unwrap()));
        prop_assert!(close(seasonal_naive(&y, 6, 4).unwrap(), seasonal_naive(&scaled, 6, 4).unwrap()));
        prop_assert!(close(naive2(&y, 6, 4).unwrap(), naive2(&scaled, 6, 4).unwrap()));
        prop_assert!(close(ses(&y, 6, SesAlpha::Fit).unwrap(), ses(&scaled, 6, SesAlpha::Fit).unwrap()));
        prop_assert!(close(theta(&y, 6, 4).unwrap(), theta(&scaled, 6, 4).unwrap()));
    }

    #[test]
    fn unit_period_reduces_to_naive(y in positive_series()) {
        prop_assert_eq!(naive2(&y, 5, 1).unwrap(), naive(&y, 5).unwrap());
        prop_assert_eq!(seasonal_naive(&y, 5, 1).unwrap(), naive(&y, 5).unwrap());
        let last = *y.last().unwrap();
        prop_assert!(ses(&y, 5, SesAlpha::Fixed(1.0)).unwrap().iter().all(|v| (v - last).abs() <= 1e-12 * last));
    }
}
