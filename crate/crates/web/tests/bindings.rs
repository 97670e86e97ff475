use dlif_web::{basis_table, logan_points, region_curves};

#[test]
fn basis_rows_sum_to_total() {
    let n = 50;
    let t = basis_table("gaussian", &[1.0, 2.0], &[10.0, 40.0], &[3.0, 8.0], &[], 90.0, n).unwrap();
    assert_eq!(t.len(), 4 * n);
    for i in 0..n {
        assert!((t[n + i] - t[2 * n + i] - t[3 * n + i]).abs() < 1e-15);
    }
    assert_eq!(t[0], 0.0);
    assert_eq!(t[n - 1], 90.0);
}

#[test]
fn expsig_needs_steepness() {
    assert!(basis_table("expsig", &[1.0], &[5.0], &[0.1], &[], 90.0, 10).is_err());
    let t = basis_table("expsig", &[1.0], &[5.0], &[0.1], &[2.0], 90.0, 10).unwrap();
    assert!(t[10..20].iter().all(|v| *v >= 0.0));
}

#[test]
fn bad_inputs_rejected() {
    assert!(basis_table("cosine", &[1.0], &[5.0], &[1.0], &[], 90.0, 10).is_err());
    assert!(basis_table("gaussian", &[1.0], &[5.0, 6.0], &[1.0], &[], 90.0, 10).is_err());
    assert!(basis_table("gaussian", &[1.0], &[5.0], &[0.0], &[], 90.0, 10).is_err());
    assert!(region_curves(0, 0.1, 0.05, 1.5, 0.0).is_err());
}

#[test]
fn noiseless_logan_recovers_vt() {
    let p = logan_points(3, 0.12, 0.04, 0.0, 0.0, 30.0).unwrap();
    assert!((p.vt / p.true_vt - 1.0).abs() < 0.02, "{} vs {}", p.vt, p.true_vt);
    assert_eq!(p.x.len(), p.used.len());
    assert_eq!(p.used.iter().filter(|u| **u).count(), 10);
}

#[test]
fn same_seed_same_curves() {
    let a = region_curves(9, 0.1, 0.05, 0.05, 0.05).unwrap();
    let b = region_curves(9, 0.1, 0.05, 0.05, 0.05).unwrap();
    assert_eq!(a.tac, b.tac);
    assert_eq!(a.times.len(), 30);
}
