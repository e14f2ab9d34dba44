use hierpoly_web::{hermite_rows, rf1d_rows, stein_rows};

#[test]
fn page_calls_only_exported_functions() {
    let page = include_str!("../www/index.html");
    for name in ["hermite_curves", "stein_sweep", "rf1d_curve"] {
        assert!(page.contains(name), "{name}");
    }
    assert!(page.contains("./pkg/hierpoly_web.js"));
}

#[test]
fn hermite_rows_are_orthonormal_on_a_fine_grid() {
    // trapezoid rule against the Gaussian density on [-8, 8]
    let n = 4001;
    let r = hermite_rows(4, -8.0, 8.0, n).unwrap();
    let dz = 16.0 / (n - 1) as f64;
    let w = |z: f64| (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for i in 0..=4 {
        for j in 0..=4 {
            let v: f64 = r.chunks(6).map(|row| w(row[0]) * row[1 + i] * row[1 + j] * dz).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-6, "{i} {j} {v}");
        }
    }
}

#[test]
fn stein_identity_link_is_exact() {
    let r = stein_rows(2, "0,1", "4,6").unwrap();
    assert!(r[1].abs() < 1e-12 && r[4].abs() < 1e-12);
}

#[test]
fn rf1d_rejects_bad_radius() {
    assert!(rf1d_rows("0,0,1", 0.5, 9.0, 100, 4, 0).is_err());
}
