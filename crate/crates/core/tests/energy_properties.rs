use ballastplan::energy_model::{fit_curves, transport_energy, CalibrationAnchors, EnergyModel};
use proptest::prelude::*;

fn anchors() -> impl Strategy<Value = CalibrationAnchors> {
    (300.0..600.0f64, 25.0..120.0f64, 20.0..100.0f64, 1.0..4.0f64).prop_map(|(b0, b08, hover, ratio)| {
        CalibrationAnchors { p_loaded_b0: b0, p_loaded_b08: b08, p_hover: hover, p_unloaded_b1: hover * ratio }
    })
}

proptest! {
    #[test]
    fn fitted_curves_are_convex_and_hit_anchors(a in anchors()) {
        let m = fit_curves(&a).unwrap();
        prop_assert!(m.loaded.a2() >= 0.0 && m.unloaded.a2() >= 0.0);
        prop_assert!((m.loaded.eval_unchecked(0.0) - a.p_loaded_b0).abs() < 1e-9);
        prop_assert!((m.loaded.eval_unchecked(0.8) - a.p_loaded_b08).abs() < 1e-9);
        prop_assert!((m.unloaded.eval_unchecked(0.0) - a.p_hover).abs() < 1e-9);
        prop_assert!((m.unloaded.eval_unchecked(1.0) - a.p_unloaded_b1).abs() < 1e-9);
    }

    #[test]
    fn loaded_falls_and_unloaded_rises(a in anchors(), b in 0.0..1.0f64, step in 0.001..0.2f64) {
        let m = fit_curves(&a).unwrap();
        let hi = (b + step).min(1.0);
        prop_assert!(m.loaded.eval_unchecked(hi) <= m.loaded.eval_unchecked(b) + 1e-9);
        prop_assert!(m.unloaded.eval_unchecked(hi) >= m.unloaded.eval_unchecked(b) - 1e-9);
    }

    #[test]
    fn transport_energy_is_linear_in_distance(b in 0.0..=1.0f64, d in 0.0..500.0f64, k in 0.0..10.0f64) {
        let m = EnergyModel::default();
        let one = transport_energy(&m.loaded, b, d, m.velocity_mps()).unwrap();
        let scaled = transport_energy(&m.loaded, b, k * d, m.velocity_mps()).unwrap();
        prop_assert!((scaled - k * one).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }
}

#[test]
fn anchors_forcing_negative_power_are_rejected() {
    // With a flat end at b = 1, f+(1) = p0 - (p0 - p08) / 0.96 < 0 here.
    let a = CalibrationAnchors { p_loaded_b0: 600.0, p_loaded_b08: 20.0, ..CalibrationAnchors::default() };
    assert!(fit_curves(&a).is_err());
}

#[test]
fn default_model_round_trips_through_json() {
    let m = EnergyModel::default();
    let back = EnergyModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
}
