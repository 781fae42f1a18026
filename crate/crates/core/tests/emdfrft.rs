mod common;

use common::{max_diff, noise, norm, rng};
use fracim::eigenbasis::DftEigenbasis;
use fracim::emdfrft::{eigen_coefficients, emdfrft, row_angle, EmdfrftPlan};
use num_complex::Complex64;

/// `sum_p exp(-j k(p) alpha) v_p (v_p . x)` from the basis entries.
fn brute_force(b: &DftEigenbasis, alpha: f64, x: &[Complex64]) -> Vec<Complex64> {
    let n = b.n();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for p in 0..n {
        let proj: Complex64 = (0..n).map(|i| x[i] * b.get(i, p)).sum();
        let lam = Complex64::from_polar(1.0, -(b.eigen_index()[p] as f64) * alpha);
        for (i, o) in out.iter_mut().enumerate() {
            *o += lam * proj * b.get(i, p);
        }
    }
    out
}

#[test]
fn every_row_matches_its_single_angle_transform() {
    let mut r = rng(21);
    for n in [16, 32, 64] {
        let b = DftEigenbasis::build(n).unwrap();
        for m in [8, 16] {
            let plan = EmdfrftPlan::new(&b, m).unwrap();
            for _ in 0..50 {
                let s = noise(n, &mut r);
                let g = plan.compute(&eigen_coefficients(&b, &s).unwrap()).unwrap();
                for row in 0..m {
                    let err = max_diff(g.row(row), &brute_force(&b, row_angle(row, m), &s));
                    assert!(err < 1e-9, "N={n} M={m} row {row}: {err:e}");
                }
            }
        }
    }
}

#[test]
fn rows_at_reference_geometry_match() {
    let b = DftEigenbasis::build(896).unwrap();
    let s = noise(896, &mut rng(4));
    let g = emdfrft(&b, &eigen_coefficients(&b, &s).unwrap(), 256).unwrap();
    for row in [0, 1, 37, 64, 128, 200, 255] {
        assert!(max_diff(g.row(row), &b.dfrft(row_angle(row, 256), &s).unwrap()) < 1e-9);
    }
}

#[test]
fn every_row_keeps_the_energy() {
    let mut r = rng(8);
    let b = DftEigenbasis::build(64).unwrap();
    for _ in 0..20 {
        let s = noise(64, &mut r);
        let g = emdfrft(&b, &eigen_coefficients(&b, &s).unwrap(), 16).unwrap();
        for row in 0..16 {
            assert!((norm(g.row(row)) - norm(&s)).abs() < 1e-9);
        }
    }
}

#[test]
fn real_input_has_mirrored_magnitudes() {
    // for real s: |S(-a)[n]| = |S(a)[n]|, and a half turn reverses the
    // support, so |S(a + pi)[n]| = |S(a)[-n]|
    let (n, m) = (32, 16);
    let b = DftEigenbasis::build(n).unwrap();
    let mut r = rng(13);
    for _ in 0..10 {
        let s: Vec<Complex64> = noise(n, &mut r).iter().map(|z| Complex64::new(z.re, 0.0)).collect();
        let g = emdfrft(&b, &eigen_coefficients(&b, &s).unwrap(), m).unwrap();
        for row in 0..m {
            let neg = g.row((m - row) % m);
            let half = g.row((row + m / 2) % m);
            for k in 0..n {
                let here = g.get(row, k).norm();
                assert!((here - neg[k].norm()).abs() < 1e-8);
                assert!((here - half[(n - k) % n].norm()).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn complex_input_breaks_the_mirror() {
    let (n, m) = (32, 16);
    let b = DftEigenbasis::build(n).unwrap();
    let s = noise(n, &mut rng(14));
    let g = emdfrft(&b, &eigen_coefficients(&b, &s).unwrap(), m).unwrap();
    let worst = (0..n).map(|k| (g.get(3, k).norm() - g.get(m - 3, k).norm()).abs()).fold(0.0, f64::max);
    assert!(worst > 1e-3);
}
