use fracim::chain::{Provenance, RdMap};
use fracim::metrics::{ecdf, frame_metrics, median, CfarConfig, GroundTruthObject};
use num_complex::Complex64;
use proptest::prelude::*;

const NR: usize = 32;
const ND: usize = 16;

/// Noise-like floor with a few strong targets, plus ground truth for them.
fn scene() -> impl Strategy<Value = (RdMap, RdMap, Vec<GroundTruthObject>)> {
    let cells = prop::collection::vec((0.0f64..0.1, -3.2f64..3.2), NR * ND);
    let targets = prop::collection::vec((0..NR, 0..ND, 1.0f64..10.0), 0..4);
    (cells.clone(), cells, targets).prop_map(|(a, b, targets)| {
        let mut reference: Vec<Complex64> = a.iter().map(|&(m, p)| Complex64::from_polar(m, p)).collect();
        let mut test: Vec<Complex64> = b.iter().map(|&(m, p)| Complex64::from_polar(m, p)).collect();
        let mut gt = Vec::new();
        for &(r, d, amp) in &targets {
            reference[d * NR + r] = Complex64::new(amp, 0.0);
            test[d * NR + r] += Complex64::new(0.9 * amp, 0.1);
            gt.push(GroundTruthObject { range_bin: r, doppler_bin: d, amplitude: Complex64::new(amp, 0.0) });
        }
        let map = |data| RdMap { n_range: NR, n_doppler: ND, data, provenance: Provenance::default() };
        (map(test), map(reference), gt)
    })
}

fn rescaled(m: &RdMap, c: f64) -> RdMap {
    RdMap { data: m.data.iter().map(|z| z * c).collect(), ..m.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_ignore_a_common_scale((test, reference, gt) in scene(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let cfar = CfarConfig::default();
        let x = frame_metrics(&test, &reference, &gt, &cfar).unwrap();
        let y = frame_metrics(&rescaled(&test, a), &rescaled(&reference, b), &gt, &cfar).unwrap();
        prop_assert!((x.mse - y.mse).abs() <= 1e-9 * x.mse.max(1e-12));
        prop_assert!((x.sinr_db - y.sinr_db).abs() < 1e-9);
        prop_assert!((x.evm - y.evm).abs() <= 1e-9 * x.evm.max(1.0));
        prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fp, y.fn_));
    }

    #[test]
    fn f1_follows_from_the_counts((test, reference, gt) in scene()) {
        let m = frame_metrics(&test, &reference, &gt, &CfarConfig::default()).unwrap();
        for v in [m.tpr, m.far, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.mse.is_finite() && m.sinr_db.is_finite() && m.evm.is_finite());
        prop_assert_eq!(m.tp + m.fn_, gt.len());
        let (tp, fp, fn_) = (m.tp as f64, m.fp as f64, m.fn_ as f64);
        if m.tp > 0 {
            let (p, r) = (tp / (tp + fp), tp / (tp + fn_));
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            prop_assert_eq!(m.tpr, r);
        } else if m.fp + m.fn_ > 0 {
            prop_assert_eq!(m.f1, 0.0);
        }
    }

    #[test]
    fn ecdf_is_a_step_up_to_one(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let e = ecdf(&v).unwrap();
        prop_assert_eq!(e.len(), v.len());
        prop_assert_eq!(e.last().unwrap().1, 1.0);
        prop_assert!(e.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        let med = median(&v).unwrap();
        let below = v.iter().filter(|&&x| x <= med).count();
        prop_assert!(2 * below >= v.len());
    }
}
