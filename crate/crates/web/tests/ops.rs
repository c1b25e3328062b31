use longmem_web::{path_values, stable_values, z_cf_values};

#[test]
fn stable_table_is_a_cdf() {
    let v = stable_values(1.5, 0.5, -4.0, 4.0, 41).unwrap();
    assert_eq!(v.len(), 3 * 41);
    let cdf: Vec<f64> = v.chunks(3).map(|c| c[1]).collect();
    assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    assert!(cdf[0] > 0.0 && cdf[40] < 1.0);
    assert!(v.chunks(3).all(|c| c[2] >= 0.0));
}

#[test]
fn symmetric_cauchy_matches_closed_form() {
    let v = stable_values(1.0, 0.0, -3.0, 3.0, 7).unwrap();
    for c in v.chunks(3) {
        let exact = 0.5 + c[0].atan() / std::f64::consts::PI;
        assert!((c[1] - exact).abs() < 1e-6, "{c:?}");
    }
}

#[test]
fn path_is_reproducible() {
    let a = path_values(1.5, 0.9, 256, 512, 3).unwrap();
    let b = path_values(1.5, 0.9, 256, 512, 3).unwrap();
    assert_eq!(a.len(), 256);
    assert_eq!(a, b);
    assert_ne!(a, path_values(1.5, 0.9, 256, 512, 4).unwrap());
}

#[test]
fn z_forms_agree() {
    let v = z_cf_values(1.35, 0.3, 0.7, 5.0, 11).unwrap();
    for c in v.chunks(5) {
        assert!((c[1] - c[3]).abs() < 1e-5 && (c[2] - c[4]).abs() < 1e-5, "{c:?}");
    }
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(stable_values(2.5, 0.0, -1.0, 1.0, 10).is_err());
    assert!(stable_values(1.5, 0.0, 1.0, -1.0, 10).is_err());
    assert!(path_values(1.5, 0.5, 10, 10, 0).is_err());
    assert!(z_cf_values(2.5, 0.3, 0.7, 5.0, 11).is_err());
}
