//! Eigen-coefficient updates that remove zeroed fractional-domain cells
//! without leaving the eigenbasis.

use num_complex::Complex64;

use crate::detector::{masked_out, DetectionMask};
use crate::eigenbasis::DftEigenbasis;
use crate::emdfrft::row_angle;
use crate::error::{Error, Result};

/// One accepted chirp.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpDetection {
    pub m_hat: usize,
    pub n_hat: usize,
    pub alpha_hat: f64,
    pub snr_db: f64,
    pub d: DetectionMask,
}

impl ChirpDetection {
    pub fn new(m_hat: usize, n_hat: usize, m_angles: usize, d: DetectionMask) -> Self {
        Self {
            m_hat,
            n_hat,
            alpha_hat: row_angle(m_hat, m_angles),
            snr_db: d.snr_db,
            d,
        }
    }
}

/// Sparse zeroed content `gamma = (1 - d) . row`.
pub type SparseGamma = Vec<(usize, Complex64)>;

/// Detections of one outer iteration with their zeroed content, all taken
/// from the same grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeparableBatch {
    pub detections: Vec<ChirpDetection>,
    pub gammas: Vec<SparseGamma>,
}

impl SeparableBatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a detection together with the cells of `row` it zeroes.
    pub fn push(&mut self, det: ChirpDetection, row: &[Complex64]) {
        self.gammas.push(masked_out(row, &det.d));
        self.detections.push(det);
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Multiplications of the sparse projection `V^T gamma`.
pub fn sparse_projection_ops(nnz: usize, n: usize) -> usize {
    nnz * n
}

/// Multiplications of projecting the kept cells `d . row` instead.
pub fn dense_projection_ops(n: usize, guard: usize) -> usize {
    n.saturating_sub(2 * guard + 1) * n
}

/// Adds `-Lambda_{-alpha} V^T gamma` into `acc`, reading only the rows of
/// `V` where `gamma` is nonzero. Returns the multiplication count of the
/// projection.
pub fn subtract_correction(
    acc: &mut [Complex64],
    basis: &DftEigenbasis,
    gamma: &[(usize, Complex64)],
    alpha: f64,
) -> Result<usize> {
    let n = basis.n();
    if acc.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: acc.len() });
    }
    let v = basis.matrix();
    let mut proj = vec![Complex64::new(0.0, 0.0); n];
    for &(i, g) in gamma {
        if i >= n {
            return Err(Error::Config(format!("zeroed cell {i} outside length {n}")));
        }
        for (pr, &vip) in proj.iter_mut().zip(&v[i * n..(i + 1) * n]) {
            *pr += g * vip;
        }
    }
    for ((a, pr), &k) in acc.iter_mut().zip(&proj).zip(basis.eigen_index()) {
        // Lambda_{-alpha}[p] = exp(+j k(p) alpha)
        *a -= Complex64::from_polar(1.0, k as f64 * alpha) * pr;
    }
    Ok(sparse_projection_ops(gamma.len(), n))
}

/// `rho - Lambda_{-alpha} V^T ((1 - d) . s_row)`: the coefficients of the
/// signal after zeroing the masked cells of its transform at `alpha`.
pub fn update_rho(
    rho: &[Complex64],
    d: &DetectionMask,
    s_row: &[Complex64],
    basis: &DftEigenbasis,
    alpha_hat: f64,
) -> Result<Vec<Complex64>> {
    if s_row.len() != d.len() {
        return Err(Error::LengthMismatch { expected: d.len(), got: s_row.len() });
    }
    let mut out = rho.to_vec();
    subtract_correction(&mut out, basis, &masked_out(s_row, d), alpha_hat)?;
    Ok(out)
}

/// Applies every term of the batch to `rho`, summing in detection order.
pub fn simultaneous_update(
    rho: &[Complex64],
    batch: &SeparableBatch,
    basis: &DftEigenbasis,
) -> Result<Vec<Complex64>> {
    let mut out = rho.to_vec();
    for (det, gamma) in batch.detections.iter().zip(&batch.gammas) {
        subtract_correction(&mut out, basis, gamma, det.alpha_hat)?;
    }
    Ok(out)
}

/// Transform of the signal `V rho` at one angle, `V Lambda_alpha rho`.
pub fn fractional_row(basis: &DftEigenbasis, rho: &[Complex64], alpha: f64) -> Result<Vec<Complex64>> {
    let lambda = basis.fractional_eigenvalues(alpha);
    if rho.len() != basis.n() {
        return Err(Error::LengthMismatch { expected: basis.n(), got: rho.len() });
    }
    let scaled: Vec<Complex64> = rho.iter().zip(&lambda.lambda).map(|(r, l)| r * l).collect();
    basis.synthesize(&scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn pass_all_mask_leaves_rho_unchanged() {
        let b = DftEigenbasis::build(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random(16, &mut rng);
        let row = random(16, &mut rng);
        let d = DetectionMask::pass_all(16, 0, 0.0);
        assert_eq!(update_rho(&rho, &d, &row, &b, 0.7).unwrap(), rho);
    }

    #[test]
    fn matches_time_domain_zeroing() {
        let n = 32;
        let b = DftEigenbasis::build(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random(n, &mut rng);
        let alpha = 0.9;
        let row = b.dfrft(alpha, &s).unwrap();
        let d = DetectionMask::zeroing(n, 30, 3, 25.0);
        let kept: Vec<Complex64> = row
            .iter()
            .zip(&d.d)
            .map(|(&z, &k)| if k { z } else { Complex64::new(0.0, 0.0) })
            .collect();
        let want = b.analyze(&b.dfrft(-alpha, &kept).unwrap()).unwrap();
        let got = update_rho(&b.analyze(&s).unwrap(), &d, &row, &b, alpha).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-10);
        }
    }

    #[test]
    fn fractional_row_matches_dfrft() {
        let b = DftEigenbasis::build(24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random(24, &mut rng);
        let rho = b.analyze(&s).unwrap();
        let want = b.dfrft(1.3, &s).unwrap();
        for (g, w) in fractional_row(&b, &rho, 1.3).unwrap().iter().zip(&want) {
            assert!((g - w).norm() < 1e-10);
        }
    }

    #[test]
    fn operation_counts() {
        assert_eq!(sparse_projection_ops(21, 896), 21 * 896);
        assert_eq!(dense_projection_ops(896, 10), 875 * 896);
        let ratio = dense_projection_ops(896, 10) as f64 / sparse_projection_ops(21, 896) as f64;
        assert!(ratio >= 40.0);
    }

    #[test]
    fn empty_and_single_batches() {
        let n = 16;
        let b = DftEigenbasis::build(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random(n, &mut rng);
        let row = random(n, &mut rng);
        assert_eq!(simultaneous_update(&rho, &SeparableBatch::new(), &b).unwrap(), rho);
        let d = DetectionMask::zeroing(n, 4, 2, 30.0);
        let mut batch = SeparableBatch::new();
        batch.push(ChirpDetection::new(3, 4, 8, d.clone()), &row);
        let single = update_rho(&rho, &d, &row, &b, row_angle(3, 8)).unwrap();
        assert_eq!(simultaneous_update(&rho, &batch, &b).unwrap(), single);
    }
}
