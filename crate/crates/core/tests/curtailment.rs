use proptest::prelude::*;
use wtgfm::aero::{wind_power_pu, CpSurface};
use wtgfm::curtailment::*;
use wtgfm::params::TurbineParams;

fn setup() -> (TurbineParams, Curtailer) {
    let t = TurbineParams::default();
    let c = Curtailer::new(&t, &CpSurface::calibrated_default()).unwrap();
    (t, c)
}

/// Cp at the set-point relative to its target, on the same reference as the solver.
fn cp_residual(t: &TurbineParams, c: &Curtailer, p: &DeloadPoint) -> f64 {
    let target = p.eta * c.available_power(p.v_w);
    let got = wind_power_pu(t, &c.surface, p.v_w, p.omega_del, p.beta_del).unwrap();
    // convert the power residual back to Cp
    (got - target) * c.cp_max / (c.cp_max * wtgfm::aero::mpp_power(t, 1.0, p.v_w) / t.power_base())
}

#[test]
fn operating_points_near_reference() {
    let (_, c) = setup();
    let p8 = c.point(8.0, 0.9).unwrap();
    assert_eq!(p8.beta_del, 0.0);
    assert!((p8.omega_del - 1.16).abs() <= 0.05 * 1.16, "{}", p8.omega_del);
    let p10 = c.point(10.0, 0.9).unwrap();
    assert_eq!(p10.omega_del, 1.2);
    assert!((p10.beta_del - 3.0).abs() <= 1.5, "{}", p10.beta_del);
    let p12 = c.point(12.0, 0.9).unwrap();
    assert_eq!(p12.omega_del, 1.2);
    assert!((p12.beta_del - 5.4).abs() <= 1.5, "{}", p12.beta_del);
}

#[test]
fn residuals_on_grid() {
    let (t, c) = setup();
    for &eta in &[0.7, 0.8, 0.9, 0.95, 1.0] {
        for &v in &[5.0, 7.0, 8.0, 9.0, 10.0, 12.0, 14.0] {
            let p = c.point(v, eta).unwrap();
            let r = cp_residual(&t, &c, &p);
            assert!(r.abs() < 1e-9, "v {v} eta {eta}: {r:e}");
        }
    }
}

#[test]
fn lambda_del_non_increasing_in_eta() {
    let s = CpSurface::calibrated_default();
    let mut prev = f64::INFINITY;
    for k in 0..=30 {
        let eta = 0.7 + 0.01 * k as f64;
        let l = solve_speed_deload(&s, eta.min(1.0)).unwrap();
        assert!(l <= prev + 1e-12);
        prev = l;
    }
}

#[test]
fn eta_one_is_mppt() {
    let (t, c) = setup();
    let p = c.point(8.0, 1.0).unwrap();
    assert!((p.omega_del - c.omega_mpp(8.0)).abs() < 1e-12);
    assert!((p.lambda_op(&t) - c.lambda_mpp).abs() < 1e-9);
}

#[test]
fn above_rated_uses_pitch_at_speed_cap() {
    let (_, c) = setup();
    let p = c.point(14.0, 0.7).unwrap();
    assert_eq!(p.omega_del, 1.2);
    assert!(p.beta_del > 0.0);
    assert!(p.lambda_del.is_nan());
}

#[test]
fn invalid_inputs() {
    let (_, c) = setup();
    assert!(c.point(2.0, 0.9).is_err());
    assert!(c.point(8.0, 0.0).is_err());
    assert!(c.point(8.0, 1.1).is_err());
    let s = CpSurface::calibrated_default();
    assert!(solve_pitch_deload(&s, 9.0, 0.9, 10.0).unwrap() == 0.0);
}

#[test]
fn table_is_deterministic_and_interpolates_nodes() {
    let t = TurbineParams::default();
    let s = CpSurface::calibrated_default();
    let a = build_table(&t, &s, &default_v_grid(), &default_eta_grid()).unwrap();
    let b = build_table(&t, &s, &default_v_grid(), &default_eta_grid()).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let node = a.cell(3, 2);
    let q = lookup(&a, node.v_w, node.eta).unwrap();
    assert!((q.omega_del - node.omega_del).abs() < 1e-12);
    assert!(lookup(&a, 30.0, 0.9).is_err());
    assert!(build_table(&t, &s, &[8.0, 7.0], &[0.9]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deloaded_power_is_eta_times_available(v in 4.0f64..14.0, eta in 0.7f64..1.0) {
        let (t, c) = setup();
        let p = c.point(v, eta).unwrap();
        prop_assert!((p.p_wt_del - eta * c.available_power(v)).abs() < 1e-8);
        prop_assert!(p.omega_del <= t.omega_max + 1e-12);
        prop_assert!(p.beta_del >= 0.0);
        prop_assert!(p.omega_del >= c.omega_mpp(v).min(t.omega_max) - 1e-9);
    }
}
