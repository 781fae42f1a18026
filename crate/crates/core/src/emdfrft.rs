//! Efficient multiangle DFrFT: all `M` angles `2 pi m / M` from a single
//! change of basis, a fold over the eigen index and `M`-point FFTs.
//!
//! With `rho = V^T s`, row `m` of the grid is
//! `S[m, n] = sum_p exp(-j 2 pi m k(p) / M) V[n, p] rho[p]`. Grouping the
//! eigenvectors by `k(p) mod M` turns the sum over `p` into an `M`-point DFT
//! of the folded products. Because `M` is even, `k(p) mod M` has the parity
//! of `k(p)`, so column `N - n` of the folded matrix is column `n` with the
//! odd fold positions negated, which maps to a half-period row shift after
//! the FFT: `S[m, N - n] = S[(m + M/2) mod M, n]`. Only columns `0..=N/2`
//! are folded and transformed.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::eigenbasis::DftEigenbasis;
use crate::error::{Error, Result};

/// `M x N` horizontally concatenated `M x M` identities: `K[m, c] = 1` iff
/// `c mod M == m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldingKernel {
    pub m: usize,
    pub n: usize,
}

impl FoldingKernel {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        check_geometry(n, m)?;
        Ok(Self { m, n })
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> u8 {
        u8::from(col % self.m == row)
    }

    /// Dense row-major matrix.
    pub fn matrix(&self) -> Vec<u8> {
        (0..self.m * self.n)
            .map(|i| self.entry(i / self.n, i % self.n))
            .collect()
    }
}

/// Multiangle transform of one signal.
#[derive(Debug, Clone)]
pub struct EmdfrftGrid {
    m_angles: usize,
    n: usize,
    s: Vec<Complex64>,
}

impl EmdfrftGrid {
    pub fn zeros(m_angles: usize, n: usize) -> Self {
        Self {
            m_angles,
            n,
            s: vec![Complex64::new(0.0, 0.0); m_angles * n],
        }
    }

    pub fn from_data(m_angles: usize, n: usize, s: Vec<Complex64>) -> Result<Self> {
        if s.len() != m_angles * n {
            return Err(Error::LengthMismatch {
                expected: m_angles * n,
                got: s.len(),
            });
        }
        Ok(Self { m_angles, n, s })
    }

    pub fn m_angles(&self) -> usize {
        self.m_angles
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `alpha_m = 2 pi m / M`.
    pub fn angle_of_row(&self, m: usize) -> f64 {
        row_angle(m, self.m_angles)
    }

    /// Row holding the range spectrum (`alpha = pi / 2`).
    pub fn m_rs(&self) -> usize {
        self.m_angles / 4
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        &self.s[m * self.n..(m + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.s[m * self.n + n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.s
    }

    pub fn range_spectrum(&self) -> &[Complex64] {
        self.row(self.m_rs())
    }
}

pub fn row_angle(m: usize, m_angles: usize) -> f64 {
    2.0 * PI * m as f64 / m_angles as f64
}

fn check_angle_count(m: usize) -> Result<()> {
    if m < 4 || m % 4 != 0 {
        return Err(Error::Config(format!(
            "number of angles M={m} must be a positive multiple of 4"
        )));
    }
    Ok(())
}

/// The fold over `k(p) mod M` is exact for any `N`; only the block form of
/// the folding kernel needs `M | N`.
fn check_geometry(n: usize, m: usize) -> Result<()> {
    check_angle_count(m)?;
    if n % m != 0 {
        return Err(Error::Config(format!("N={n} is not divisible by M={m}")));
    }
    Ok(())
}

/// Eigen-coefficients `rho = V^T s`.
pub fn eigen_coefficients(basis: &DftEigenbasis, s: &[Complex64]) -> Result<Vec<Complex64>> {
    basis.analyze(s)
}

/// Reusable EMDFrFT for a fixed basis and angle count.
pub struct EmdfrftPlan<'a> {
    basis: &'a DftEigenbasis,
    m_angles: usize,
    fft: Arc<dyn Fft<f64>>,
    even_fold: Vec<usize>,
    odd_fold: Vec<usize>,
    even_cols: Vec<usize>,
    odd_cols: Vec<usize>,
    even_half: Vec<f64>,
    odd_half: Vec<f64>,
}

impl<'a> EmdfrftPlan<'a> {
    pub fn new(basis: &'a DftEigenbasis, m_angles: usize) -> Result<Self> {
        let n = basis.n();
        check_angle_count(m_angles)?;
        let rows = n / 2 + 1;
        let k = basis.eigen_index();
        let (even_cols, odd_cols): (Vec<usize>, Vec<usize>) = (0..n).partition(|&p| k[p] % 2 == 0);
        let gather = |cols: &[usize]| {
            let mut out = Vec::with_capacity(rows * cols.len());
            for row in 0..rows {
                out.extend(cols.iter().map(|&p| basis.get(row, p)));
            }
            out
        };
        Ok(Self {
            basis,
            m_angles,
            fft: FftPlanner::new().plan_fft_forward(m_angles),
            even_fold: even_cols.iter().map(|&p| k[p] % m_angles).collect(),
            odd_fold: odd_cols.iter().map(|&p| k[p] % m_angles).collect(),
            even_half: gather(&even_cols),
            odd_half: gather(&odd_cols),
            even_cols,
            odd_cols,
        })
    }

    pub fn basis(&self) -> &DftEigenbasis {
        self.basis
    }

    pub fn m_angles(&self) -> usize {
        self.m_angles
    }

    /// Grid from eigen-coefficients.
    pub fn compute(&self, rho: &[Complex64]) -> Result<EmdfrftGrid> {
        let n = self.basis.n();
        if rho.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rho.len(),
            });
        }
        let m = self.m_angles;
        let rows = n / 2 + 1;
        let rho_e: Vec<Complex64> = self.even_cols.iter().map(|&p| rho[p]).collect();
        let rho_o: Vec<Complex64> = self.odd_cols.iter().map(|&p| rho[p]).collect();
        let ne = rho_e.len();
        let no = rho_o.len();

        // Folded columns, stored column-major so each FFT input is contiguous.
        let mut folded = vec![Complex64::new(0.0, 0.0); rows * m];
        for col in 0..rows {
            let out = &mut folded[col * m..(col + 1) * m];
            let ve = &self.even_half[col * ne..(col + 1) * ne];
            for ((&w, &r), &q) in ve.iter().zip(&rho_e).zip(&self.even_fold) {
                out[q] += r * w;
            }
            let vo = &self.odd_half[col * no..(col + 1) * no];
            for ((&w, &r), &q) in vo.iter().zip(&rho_o).zip(&self.odd_fold) {
                out[q] += r * w;
            }
        }
        self.fft.process(&mut folded);
        Ok(EmdfrftGrid {
            m_angles: m,
            n,
            s: rearrange(&folded, m, n),
        })
    }
}

/// Expands the transformed half columns `0..=N/2` (column-major, `M` per
/// column) to the full row-major `M x N` grid.
fn rearrange(half: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    let rows = n / 2 + 1;
    let mut s = vec![Complex64::new(0.0, 0.0); m * n];
    for col in 0..rows {
        let src = &half[col * m..(col + 1) * m];
        for (row, &v) in src.iter().enumerate() {
            s[row * n + col] = v;
        }
        let mirror = n - col;
        if col > 0 && mirror > n / 2 {
            for row in 0..m {
                s[row * n + mirror] = src[(row + m / 2) % m];
            }
        }
    }
    s
}

/// Multiangle DFrFT of eigen-coefficients `rho` at `m_angles` angles.
pub fn emdfrft(basis: &DftEigenbasis, rho: &[Complex64], m_angles: usize) -> Result<EmdfrftGrid> {
    EmdfrftPlan::new(basis, m_angles)?.compute(rho)
}

/// Full folded matrix `K (V^T . [rho ... rho])` (row-major `M x N`), all
/// columns.
pub fn fold(basis: &DftEigenbasis, rho: &[Complex64], m_angles: usize) -> Result<Vec<Complex64>> {
    let n = basis.n();
    check_angle_count(m_angles)?;
    if rho.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rho.len(),
        });
    }
    let k = basis.eigen_index();
    let mut z = vec![Complex64::new(0.0, 0.0); m_angles * n];
    for col in 0..n {
        for p in 0..n {
            z[(k[p] % m_angles) * n + col] += rho[p] * basis.get(col, p);
        }
    }
    Ok(z)
}

/// Column FFTs of all `N` columns of a row-major `M x N` matrix.
pub fn full_column_fft(z: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for col in 0..n {
        for row in 0..m {
            buf[row] = z[row * n + col];
        }
        fft.process(&mut buf);
        for row in 0..m {
            out[row * n + col] = buf[row];
        }
    }
    out
}

/// Column FFTs of a folded matrix computed from columns `0..=N/2` only.
///
/// Requires the parity structure every fold of a DFT-eigenvector expansion
/// has: `z[q, N - n] = (-1)^q z[q, n]`.
pub fn rearrange_half_fft(z: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    let rows = n / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut half = vec![Complex64::new(0.0, 0.0); rows * m];
    for col in 0..rows {
        for row in 0..m {
            half[col * m + row] = z[row * n + col];
        }
    }
    fft.process(&mut half);
    rearrange(&half, m, n)
}

/// Number of `M`-point FFTs executed by the half-column path.
pub fn half_fft_count(n: usize) -> usize {
    n / 2 + 1
}
