//! DFT eigenvector basis and the single-angle discrete fractional Fourier
//! transform `W_a = V diag(exp(-j k a)) V^T`.
//!
//! The eigenvectors are obtained from the commuting "S matrix"
//! (tridiagonal with circular corners, diagonal `2 cos(2 pi n / N)`), which
//! commutes with both the unitary DFT and the index reversal
//! `n -> (N - n) mod N`. Diagonalising it separately on the even and odd
//! subspaces gives real eigenvectors that approximate sampled Hermite-Gauss
//! functions. Within each parity class the eigenvalues of S are sorted in
//! descending order, which is the Hermite order `k = 0, 2, 4, ...` (even)
//! and `k = 1, 3, 5, ...` (odd). For even `N` the top even order is `N`,
//! so the index set is `{0, ..., N-2, N}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Largest tolerated `|F v - lambda v|` for a basis column.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Orthonormal DFT eigenvector basis.
///
/// Column `p` of `V` is an eigenvector of the unitary DFT with eigenvalue
/// `exp(-j k(p) pi / 2)`, where `k(p) = eigen_index()[p]`. Columns are in
/// ascending Hermite order.
#[derive(Debug, Clone)]
pub struct DftEigenbasis {
    n: usize,
    v: Vec<f64>,
    eigen_index: Vec<usize>,
    half: HalfBasis,
}

/// Rows `0..=N/2` of `V`, split into even and odd columns. Every column is
/// even or odd under index reversal, so the remaining rows are redundant.
#[derive(Debug, Clone)]
struct HalfBasis {
    rows: usize,
    even_cols: Vec<usize>,
    odd_cols: Vec<usize>,
    even: Vec<f64>,
    odd: Vec<f64>,
}

/// Fractional powers of the DFT eigenvalues at one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalEigenvalues {
    pub alpha: f64,
    pub lambda: Vec<Complex64>,
}

impl FractionalEigenvalues {
    /// `lambda[p] = exp(-j k[p] alpha)`.
    pub fn new(eigen_index: &[usize], alpha: f64) -> Self {
        let lambda = eigen_index
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -(k as f64) * alpha))
            .collect();
        Self { alpha, lambda }
    }
}

impl DftEigenbasis {
    /// Constructs the basis for signals of length `n` (`n >= 4`).
    pub fn build(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooShort(n, 4));
        }
        let pairs = (n - 1) / 2;
        let even_n = n % 2 == 0;

        // Orthonormal coordinates of the even and odd subspaces.
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut even_basis: Vec<Vec<(usize, f64)>> = vec![vec![(0, 1.0)]];
        let mut odd_basis: Vec<Vec<(usize, f64)>> = Vec::with_capacity(pairs);
        for a in 1..=pairs {
            even_basis.push(vec![(a, inv_sqrt2), (n - a, inv_sqrt2)]);
            odd_basis.push(vec![(a, inv_sqrt2), (n - a, -inv_sqrt2)]);
        }
        if even_n {
            even_basis.push(vec![(n / 2, 1.0)]);
        }

        let even_vecs = sorted_subspace_eigenvectors(n, &even_basis)?;
        let odd_vecs = sorted_subspace_eigenvectors(n, &odd_basis)?;

        // Interleave by Hermite order: even i -> 2i, odd i -> 2i + 1.
        let mut columns: Vec<(usize, Vec<f64>)> = even_vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| (2 * i, v))
            .chain(odd_vecs.into_iter().enumerate().map(|(i, v)| (2 * i + 1, v)))
            .collect();
        columns.sort_by_key(|(k, _)| *k);

        let mut v = vec![0.0; n * n];
        let mut eigen_index = Vec::with_capacity(n);
        for (p, (k, mut col)) in columns.into_iter().enumerate() {
            fix_sign(&mut col);
            for (row, x) in col.into_iter().enumerate() {
                v[row * n + p] = x;
            }
            eigen_index.push(k);
        }

        let basis = Self::from_parts(n, v, eigen_index)?;
        let worst = basis.max_dft_residual();
        if !(worst < EIGEN_RESIDUAL_TOL) {
            return Err(Error::Eigen(format!(
                "DFT eigen-residual {worst:e} exceeds {EIGEN_RESIDUAL_TOL:e} at N={n}"
            )));
        }
        Ok(basis)
    }

    /// Reassembles a basis from a row-major matrix and its index map, as read
    /// back from a cache file. Only shape and index consistency are checked.
    pub fn from_parts(n: usize, v: Vec<f64>, eigen_index: Vec<usize>) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooShort(n, 4));
        }
        if v.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: v.len(),
            });
        }
        if eigen_index.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: eigen_index.len(),
            });
        }
        let half = HalfBasis::new(n, &v, &eigen_index);
        Ok(Self {
            n,
            v,
            eigen_index,
            half,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major `N x N` matrix `V`.
    pub fn matrix(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.v[row * self.n + col]
    }

    pub fn eigen_index(&self) -> &[usize] {
        &self.eigen_index
    }

    /// Column `p` as an owned vector.
    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|row| self.get(row, p)).collect()
    }

    pub fn fractional_eigenvalues(&self, alpha: f64) -> FractionalEigenvalues {
        FractionalEigenvalues::new(&self.eigen_index, alpha)
    }

    /// `V^T x`, using the parity of the columns to touch only half of `V`.
    pub fn analyze(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let n = self.n;
        let h = &self.half;
        let ne = h.even_cols.len();
        let no = h.odd_cols.len();
        let mut acc_e = vec![Complex64::new(0.0, 0.0); ne];
        let mut acc_o = vec![Complex64::new(0.0, 0.0); no];
        for row in 0..h.rows {
            let mirror = (n - row) % n;
            let (se, so) = if mirror == row {
                (x[row], Complex64::new(0.0, 0.0))
            } else {
                (x[row] + x[mirror], x[row] - x[mirror])
            };
            let er = &h.even[row * ne..(row + 1) * ne];
            for (a, &w) in acc_e.iter_mut().zip(er) {
                *a += se * w;
            }
            if mirror != row {
                let or = &h.odd[row * no..(row + 1) * no];
                for (a, &w) in acc_o.iter_mut().zip(or) {
                    *a += so * w;
                }
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, &p) in h.even_cols.iter().enumerate() {
            out[p] = acc_e[j];
        }
        for (j, &p) in h.odd_cols.iter().enumerate() {
            out[p] = acc_o[j];
        }
        Ok(out)
    }

    /// `V^T x` as a plain dense product; reference for [`Self::analyze`].
    pub fn analyze_dense(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (row, &xr) in x.iter().enumerate() {
            let vr = &self.v[row * n..(row + 1) * n];
            for (o, &w) in out.iter_mut().zip(vr) {
                *o += xr * w;
            }
        }
        Ok(out)
    }

    /// `V c`, exploiting column parity.
    pub fn synthesize(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(c.len())?;
        let n = self.n;
        let h = &self.half;
        let ne = h.even_cols.len();
        let no = h.odd_cols.len();
        let ce: Vec<Complex64> = h.even_cols.iter().map(|&p| c[p]).collect();
        let co: Vec<Complex64> = h.odd_cols.iter().map(|&p| c[p]).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for row in 0..h.rows {
            let even: Complex64 = h.even[row * ne..(row + 1) * ne]
                .iter()
                .zip(&ce)
                .map(|(&w, &z)| z * w)
                .sum();
            let odd: Complex64 = h.odd[row * no..(row + 1) * no]
                .iter()
                .zip(&co)
                .map(|(&w, &z)| z * w)
                .sum();
            let mirror = (n - row) % n;
            out[row] = even + odd;
            if mirror != row {
                out[mirror] = even - odd;
            }
        }
        Ok(out)
    }

    /// `V c` as a plain dense product.
    pub fn synthesize_dense(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(c.len())?;
        let n = self.n;
        Ok((0..n)
            .map(|row| {
                self.v[row * n..(row + 1) * n]
                    .iter()
                    .zip(c)
                    .map(|(&w, &z)| z * w)
                    .sum()
            })
            .collect())
    }

    /// Single-angle DFrFT `V (Lambda_alpha . (V^T x))`.
    pub fn dfrft(&self, alpha: f64, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut rho = self.analyze(x)?;
        let lambda = self.fractional_eigenvalues(alpha);
        for (r, l) in rho.iter_mut().zip(&lambda.lambda) {
            *r *= l;
        }
        self.synthesize(&rho)
    }

    /// Largest `|F v_p - (-j)^k(p) v_p|_2` over all columns.
    pub fn max_dft_residual(&self) -> f64 {
        let n = self.n;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let scale = 1.0 / (n as f64).sqrt();
        let mut worst: f64 = 0.0;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for p in 0..n {
            for (row, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(self.get(row, p), 0.0);
            }
            fft.process(&mut buf);
            let lambda = Complex64::from_polar(1.0, -(self.eigen_index[p] as f64) * PI / 2.0);
            let res: f64 = buf
                .iter()
                .enumerate()
                .map(|(row, &f)| (f * scale - lambda * self.get(row, p)).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res);
        }
        worst
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got,
            });
        }
        Ok(())
    }
}

impl HalfBasis {
    fn new(n: usize, v: &[f64], eigen_index: &[usize]) -> Self {
        let rows = n / 2 + 1;
        let (even_cols, odd_cols): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&p| eigen_index[p] % 2 == 0);
        let gather = |cols: &[usize]| {
            let mut out = Vec::with_capacity(rows * cols.len());
            for row in 0..rows {
                out.extend(cols.iter().map(|&p| v[row * n + p]));
            }
            out
        };
        let even = gather(&even_cols);
        let odd = gather(&odd_cols);
        Self {
            rows,
            even_cols,
            odd_cols,
            even,
            odd,
        }
    }
}

/// Entry of the commuting S matrix.
fn s_matrix(n: usize, i: usize, j: usize) -> f64 {
    if i == j {
        2.0 * (2.0 * PI * i as f64 / n as f64).cos()
    } else if (i + 1) % n == j || (j + 1) % n == i {
        1.0
    } else {
        0.0
    }
}

/// Eigenvectors of S restricted to the subspace spanned by `basis`, expanded
/// back to length `n` and sorted by descending eigenvalue.
fn sorted_subspace_eigenvectors(n: usize, basis: &[Vec<(usize, f64)>]) -> Result<Vec<Vec<f64>>> {
    let dim = basis.len();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let block = DMatrix::from_fn(dim, dim, |a, b| {
        let mut acc = 0.0;
        for &(i, ci) in &basis[a] {
            for &(j, cj) in &basis[b] {
                acc += ci * cj * s_matrix(n, i, j);
            }
        }
        acc
    });
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for w in order.windows(2) {
        let gap = eig.eigenvalues[w[0]] - eig.eigenvalues[w[1]];
        if gap <= 0.0 {
            return Err(Error::Eigen(format!("repeated S eigenvalue at N={n}")));
        }
    }
    Ok(order
        .into_iter()
        .map(|col| {
            let mut full = vec![0.0; n];
            for (a, coords) in basis.iter().enumerate() {
                let y = eig.eigenvectors[(a, col)];
                for &(i, c) in coords {
                    full[i] += c * y;
                }
            }
            full
        })
        .collect())
}

/// Makes the first clearly nonzero entry positive.
fn fix_sign(col: &mut [f64]) {
    let peak = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * peak;
    if let Some(first) = col.iter().copied().find(|x| x.abs() > tol) {
        if first < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Number of sign changes of a basis column, read circularly and skipping
/// entries below `1e-9` of the peak. Odd columns always change sign across
/// the wrap between `N/2 - 1` and `N/2 + 1`; that forced change is not
/// counted, so the count equals the Hermite order for low orders.
pub fn zero_crossings(col: &[f64], odd: bool) -> usize {
    let peak = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * peak;
    let signs: Vec<bool> = col.iter().filter(|x| x.abs() > tol).map(|&x| x > 0.0).collect();
    if signs.is_empty() {
        return 0;
    }
    let circular = (0..signs.len())
        .filter(|&i| signs[i] != signs[(i + 1) % signs.len()])
        .count();
    circular.saturating_sub(usize::from(odd))
}
