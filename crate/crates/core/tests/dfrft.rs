mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use common::{complex_vec, direct_dft, max_diff, norm};
use fracim::eigenbasis::DftEigenbasis;
use fracim::mitigation::chirp_at_angle;
use proptest::prelude::*;

fn basis(n: usize) -> &'static DftEigenbasis {
    static CACHE: OnceLock<Vec<DftEigenbasis>> = OnceLock::new();
    let all = CACHE.get_or_init(|| [8, 16, 64, 128].iter().map(|&n| DftEigenbasis::build(n).unwrap()).collect());
    all.iter().find(|b| b.n() == n).unwrap()
}

fn size_and_signal() -> impl Strategy<Value = Vec<num_complex::Complex64>> {
    prop_oneof![Just(8usize), Just(16), Just(64)].prop_flat_map(complex_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transform_preserves_energy(x in size_and_signal(), alpha in -7.0f64..7.0) {
        let y = basis(x.len()).dfrft(alpha, &x).unwrap();
        prop_assert!((norm(&y) - norm(&x)).abs() <= 1e-9 * norm(&x).max(1e-300));
    }

    #[test]
    fn angles_add_and_invert(x in size_and_signal(), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let basis = basis(x.len());
        let ab = basis.dfrft(a, &basis.dfrft(b, &x).unwrap()).unwrap();
        prop_assert!(max_diff(&ab, &basis.dfrft(a + b, &x).unwrap()) < 1e-9);
        let back = basis.dfrft(-a, &basis.dfrft(a, &x).unwrap()).unwrap();
        prop_assert!(max_diff(&back, &x) < 1e-9);
    }

    #[test]
    fn quarter_turn_is_the_unitary_dft(x in size_and_signal()) {
        let y = basis(x.len()).dfrft(PI / 2.0, &x).unwrap();
        prop_assert!(max_diff(&y, &direct_dft(&x)) < 1e-9);
    }

    #[test]
    fn zero_angle_is_identity(x in size_and_signal()) {
        prop_assert!(max_diff(&basis(x.len()).dfrft(0.0, &x).unwrap(), &x) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// A chirp near the centre of the time-frequency plane compresses into
    /// a few samples at its own angle.
    #[test]
    fn chirps_compress_at_their_angle(
        n in prop_oneof![Just(64usize), Just(128)],
        deg in 20.0f64..80.0,
        negative in any::<bool>(),
        offset in -4i64..=4,
    ) {
        let alpha = if negative { -deg } else { deg }.to_radians();
        let n_hat = offset.rem_euclid(n as i64) as usize;
        let c = chirp_at_angle(alpha, n_hat, n).unwrap();
        let y = basis(n).dfrft(alpha, &c).unwrap();
        let p: Vec<f64> = y.iter().map(|z| z.norm_sqr()).collect();
        let best = (0..n).map(|s| (0..9).map(|o| p[(s + o) % n]).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(best >= 0.8, "{best:.3} of the energy in 9 samples");
    }
}

#[test]
fn impulse_goes_to_flat_spectrum() {
    for n in [8, 16, 64] {
        let mut x = vec![num_complex::Complex64::new(0.0, 0.0); n];
        x[0] = 1.0.into();
        let want = 1.0 / (n as f64).sqrt();
        for z in basis(n).dfrft(PI / 2.0, &x).unwrap() {
            assert!((z - want).norm() < 1e-9);
        }
    }
}
