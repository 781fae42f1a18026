//! Binary `M x N` masks over the multiangle grid and the lookup tables of
//! chirp supports used to exclude already-detected chirps from the search.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::emdfrft::{row_angle, EmdfrftGrid, EmdfrftPlan};
use crate::error::{Error, Result};

/// Row-major bitset over an `M x N` grid; bit set means "admitted".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchMask {
    m: usize,
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl SearchMask {
    pub fn empty(m: usize, n: usize) -> Self {
        let words = n.div_ceil(64);
        Self { m, n, words, bits: vec![0; m * words] }
    }

    pub fn full(m: usize, n: usize) -> Self {
        let mut mask = Self::empty(m, n);
        for row in 0..m {
            mask.fill_row(row);
        }
        mask
    }

    /// Admits the rows whose angle, folded into `(-pi/2, pi/2]`, satisfies
    /// `|alpha| <= alpha_max`. Rows `m` and `m + M/2` share a chirp rate and
    /// are admitted together.
    pub fn angle_mask(m: usize, n: usize, alpha_max: f64) -> Self {
        let mut mask = Self::empty(m, n);
        for row in 0..m {
            if folded_angle(row_angle(row, m)).abs() <= alpha_max + 1e-12 {
                mask.fill_row(row);
            }
        }
        mask
    }

    fn fill_row(&mut self, row: usize) {
        let base = row * self.words;
        for w in 0..self.words {
            let lo = w * 64;
            let width = (self.n - lo).min(64);
            self.bits[base + w] = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> bool {
        self.bits[m * self.words + n / 64] >> (n % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, value: bool) {
        let w = &mut self.bits[m * self.words + n / 64];
        if value {
            *w |= 1 << (n % 64);
        } else {
            *w &= !(1 << (n % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn row_words(&self, m: usize) -> &[u64] {
        &self.bits[m * self.words..(m + 1) * self.words]
    }

    fn row_words_mut(&mut self, m: usize) -> &mut [u64] {
        &mut self.bits[m * self.words..(m + 1) * self.words]
    }

    /// `self &= other`.
    pub fn and_assign(&mut self, other: &SearchMask) {
        self.bits.iter_mut().zip(&other.bits).for_each(|(a, b)| *a &= b);
    }

    /// Bitwise complement.
    pub fn not(&self) -> SearchMask {
        let mut out = SearchMask::full(self.m, self.n);
        out.bits.iter_mut().zip(&self.bits).for_each(|(a, b)| *a &= !b);
        out
    }

    /// Indices of the set bits of one row.
    pub fn row_ones(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(m).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }
}

/// Maps an angle to `(-pi, pi]` and then folds it modulo `pi` into
/// `(-pi/2, pi/2]`.
pub fn folded_angle(alpha: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = alpha.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a > PI / 2.0 {
        a -= PI;
    } else if a <= -PI / 2.0 {
        a += PI;
    }
    a
}

/// Largest `|S|` over the admitted cells, ties going to the smallest
/// `(m, n)`.
pub fn argmax_masked(grid: &EmdfrftGrid, mask: &SearchMask) -> Result<(usize, usize)> {
    if mask.rows() != grid.m_angles() || mask.cols() != grid.n() {
        return Err(Error::Config(format!(
            "mask {}x{} does not match grid {}x{}",
            mask.rows(),
            mask.cols(),
            grid.m_angles(),
            grid.n()
        )));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for m in 0..grid.m_angles() {
        let row = grid.row(m);
        for n in mask.row_ones(m) {
            let p = row[n].norm_sqr();
            if best.is_none_or(|(_, _, b)| p > b) {
                best = Some((m, n, p));
            }
        }
    }
    best.map(|(m, n, _)| (m, n)).ok_or(Error::EmptyMask)
}

/// Per-row supports of the unit chirp compressed at `(0, n_hat)`, for
/// `n_hat = 0..=N/2`. Other positions follow by reflecting columns and the
/// chirp at `(m_hat, n_hat)` by rotating rows.
#[derive(Debug, Clone)]
pub struct SupportTemplates {
    n: usize,
    m: usize,
    threshold_db: f64,
    stored: Vec<SearchMask>,
    expanded: Vec<SearchMask>,
}

impl SupportTemplates {
    /// Thresholds the grid of each impulse `delta_{n_hat}` at
    /// `threshold_db` below its row maximum.
    pub fn build(plan: &EmdfrftPlan<'_>, threshold_db: f64) -> Result<Self> {
        let basis = plan.basis();
        let n = basis.n();
        let m = plan.m_angles();
        let ratio = 10f64.powf(threshold_db / 10.0);
        let stored = (0..=n / 2)
            .into_par_iter()
            .map(|n_hat| {
                let rho: Vec<Complex64> = (0..n)
                    .map(|p| Complex64::new(basis.get(n_hat, p), 0.0))
                    .collect();
                let grid = plan.compute(&rho)?;
                let mut mask = SearchMask::empty(m, n);
                for row in 0..m {
                    let r = grid.row(row);
                    let peak = r.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
                    for (col, z) in r.iter().enumerate() {
                        if z.norm_sqr() >= peak * ratio {
                            mask.set(row, col, true);
                        }
                    }
                }
                Ok(mask)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(n, m, threshold_db, stored)
    }

    pub fn from_parts(n: usize, m: usize, threshold_db: f64, stored: Vec<SearchMask>) -> Result<Self> {
        if stored.len() != n / 2 + 1 {
            return Err(Error::Format(format!(
                "expected {} support templates, got {}",
                n / 2 + 1,
                stored.len()
            )));
        }
        if stored.iter().any(|t| t.rows() != m || t.cols() != n) {
            return Err(Error::Format("support template has the wrong shape".into()));
        }
        let expanded = (0..n)
            .map(|n_hat| {
                if n_hat <= n / 2 {
                    stored[n_hat].clone()
                } else {
                    let src = &stored[n - n_hat];
                    let mut t = SearchMask::empty(m, n);
                    for row in 0..m {
                        for col in src.row_ones(row) {
                            t.set(row, (n - col) % n, true);
                        }
                    }
                    t
                }
            })
            .collect();
        Ok(Self { n, m, threshold_db, stored, expanded })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_angles(&self) -> usize {
        self.m
    }

    pub fn threshold_db(&self) -> f64 {
        self.threshold_db
    }

    /// Number of templates kept in the lookup table.
    pub fn stored_count(&self) -> usize {
        self.stored.len()
    }

    pub fn stored(&self) -> &[SearchMask] {
        &self.stored
    }

    /// Support of the unit chirp compressed at `(m_hat, n_hat)`.
    pub fn support(&self, m_hat: usize, n_hat: usize) -> SearchMask {
        let t = &self.expanded[n_hat % self.n];
        let mut out = SearchMask::empty(self.m, self.n);
        for row in 0..self.m {
            let src = (row + self.m - m_hat % self.m) % self.m;
            out.row_words_mut(row).copy_from_slice(t.row_words(src));
        }
        out
    }

    /// Mask that is zero on the support of the chirp at `(m_hat, n_hat)`.
    pub fn not_support_of_chirp(&self, m_hat: usize, n_hat: usize) -> SearchMask {
        self.support(m_hat, n_hat).not()
    }

    /// Clears from `mask` the supports of the chirps at `(m_hat, n)` for
    /// every `n` within `guard` of `n_hat`, which covers the mainlobe of a
    /// chirp whose compressed peak is wider than one cell.
    pub fn exclude(&self, mask: &mut SearchMask, m_hat: usize, n_hat: usize, guard: usize) {
        let n = self.n;
        let span = (2 * guard + 1).min(n);
        for row in 0..self.m {
            let src = (row + self.m - m_hat % self.m) % self.m;
            let dst = mask.row_words_mut(row);
            for off in 0..span {
                let col = (n_hat + n + off - guard % n) % n;
                let t = self.expanded[col].row_words(src);
                dst.iter_mut().zip(t).for_each(|(a, b)| *a &= !b);
            }
        }
    }

    /// Serializes the stored templates: `"CMSK"`, `N`, `M`, count as
    /// little-endian `u32`, then each `M x N` mask row-major, LSB first.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"CMSK")?;
        for v in [self.n, self.m, self.stored.len()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let mut buf = vec![0u8; (self.m * self.n).div_ceil(8)];
        for t in &self.stored {
            buf.fill(0);
            for row in 0..self.m {
                for col in t.row_ones(row) {
                    let bit = row * self.n + col;
                    buf[bit / 8] |= 1 << (bit % 8);
                }
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Inverse of [`write_to`](Self::write_to). The threshold is not part
    /// of the file and must be supplied.
    pub fn read_from<R: Read>(mut r: R, threshold_db: f64) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"CMSK" {
            return Err(Error::Format("not a support-template file".into()));
        }
        let mut word = [0u8; 4];
        let mut header = [0usize; 3];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u32::from_le_bytes(word) as usize;
        }
        let [n, m, count] = header;
        if count != n / 2 + 1 || m == 0 || n == 0 {
            return Err(Error::Format(format!("bad template header N={n} M={m} count={count}")));
        }
        let mut buf = vec![0u8; (m * n).div_ceil(8)];
        let mut stored = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let mut t = SearchMask::empty(m, n);
            for bit in 0..m * n {
                if buf[bit / 8] >> (bit % 8) & 1 == 1 {
                    t.set(bit / n, bit % n, true);
                }
            }
            stored.push(t);
        }
        Self::from_parts(n, m, threshold_db, stored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenbasis::DftEigenbasis;
    use std::f64::consts::PI;

    #[test]
    fn angle_mask_pairs_reflected_rows() {
        let (m, n) = (16, 32);
        let mask = SearchMask::angle_mask(m, n, 50f64.to_radians());
        let admitted: Vec<usize> = (0..m).filter(|&r| mask.get(r, 0)).collect();
        // rows at multiples of 22.5 degrees: 0, 22.5, 45 and their reflections
        assert_eq!(admitted, vec![0, 1, 2, 6, 7, 8, 9, 10, 14, 15]);
        for r in 0..m {
            assert_eq!(mask.get(r, 3), mask.get((r + m / 2) % m, 3));
        }
        assert_eq!(mask.count(), admitted.len() * n);
    }

    #[test]
    fn folded_angles() {
        assert!((folded_angle(0.75 * PI) + 0.25 * PI).abs() < 1e-12);
        assert!((folded_angle(-0.75 * PI) - 0.25 * PI).abs() < 1e-12);
        assert!((folded_angle(PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((folded_angle(1.5 * PI) - PI / 2.0).abs() < 1e-12);
    }

    fn grid_from(values: &[(usize, usize, f64)], m: usize, n: usize) -> EmdfrftGrid {
        let mut s = vec![Complex64::new(0.0, 0.0); m * n];
        for &(r, c, v) in values {
            s[r * n + c] = Complex64::new(0.0, v);
        }
        EmdfrftGrid::from_data(m, n, s).unwrap()
    }

    #[test]
    fn argmax_single_admitted_cell() {
        let g = grid_from(&[(1, 2, 1.0), (3, 5, 9.0)], 4, 8);
        let mut mask = SearchMask::empty(4, 8);
        mask.set(1, 2, true);
        assert_eq!(argmax_masked(&g, &mask).unwrap(), (1, 2));
    }

    #[test]
    fn argmax_skips_masked_global_max() {
        let g = grid_from(&[(1, 2, 1.0), (3, 5, 9.0), (0, 7, 4.0)], 4, 8);
        let mut mask = SearchMask::full(4, 8);
        mask.set(3, 5, false);
        assert_eq!(argmax_masked(&g, &mask).unwrap(), (0, 7));
    }

    #[test]
    fn argmax_ties_go_to_smallest_index() {
        let g = grid_from(&[(2, 1, 5.0), (1, 6, -5.0), (1, 7, 5.0)], 4, 8);
        assert_eq!(argmax_masked(&g, &SearchMask::full(4, 8)).unwrap(), (1, 6));
    }

    #[test]
    fn argmax_empty_mask_is_an_error() {
        let g = grid_from(&[], 4, 8);
        assert!(matches!(
            argmax_masked(&g, &SearchMask::empty(4, 8)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn row_ones_across_word_boundary() {
        let mut mask = SearchMask::empty(2, 130);
        for c in [0, 63, 64, 129] {
            mask.set(1, c, true);
        }
        assert_eq!(mask.row_ones(1).collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(mask.row_ones(0).count(), 0);
        assert_eq!(mask.not().count(), 2 * 130 - 4);
    }

    fn templates(n: usize, m: usize) -> SupportTemplates {
        let b = DftEigenbasis::build(n).unwrap();
        let plan = EmdfrftPlan::new(&b, m).unwrap();
        SupportTemplates::build(&plan, -40.0).unwrap()
    }

    #[test]
    fn template_count_and_peak_cell() {
        let t = templates(32, 8);
        assert_eq!(t.stored_count(), 17);
        for (m_hat, n_hat) in [(0, 0), (3, 5), (7, 20), (2, 31)] {
            assert!(!t.not_support_of_chirp(m_hat, n_hat).get(m_hat, n_hat));
            // the chirp's own angle holds a single impulse
            assert_eq!(t.support(m_hat, n_hat).row_ones(m_hat).collect::<Vec<_>>(), vec![n_hat]);
        }
    }

    #[test]
    fn reflected_templates_match_direct_computation() {
        let (n, m) = (32, 8);
        let b = DftEigenbasis::build(n).unwrap();
        let plan = EmdfrftPlan::new(&b, m).unwrap();
        let t = SupportTemplates::build(&plan, -40.0).unwrap();
        for n_hat in [17, 20, 31] {
            let rho: Vec<Complex64> = (0..n).map(|p| Complex64::new(b.get(n_hat, p), 0.0)).collect();
            let g = plan.compute(&rho).unwrap();
            let sup = t.support(0, n_hat);
            for row in 0..m {
                let peak = g.row(row).iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
                for col in 0..n {
                    let rel = g.get(row, col).norm_sqr() / peak;
                    // cells far from the threshold must agree
                    if (10.0 * rel.log10() + 40.0).abs() > 1e-6 {
                        assert_eq!(sup.get(row, col), rel >= 1e-4, "n_hat={n_hat} ({row},{col})");
                    }
                }
            }
        }
    }

    #[test]
    fn exclude_is_union_of_supports() {
        let t = templates(32, 8);
        let mut mask = SearchMask::full(8, 32);
        t.exclude(&mut mask, 3, 1, 2);
        let mut want = SearchMask::full(8, 32);
        for col in [31, 0, 1, 2, 3] {
            want.and_assign(&t.not_support_of_chirp(3, col));
        }
        assert_eq!(mask, want);
    }

    #[test]
    fn cmsk_round_trip() {
        let t = templates(16, 8);
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CMSK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 9);
        assert_eq!(bytes.len(), 16 + 9 * 16);
        let back = SupportTemplates::read_from(bytes.as_slice(), -40.0).unwrap();
        assert_eq!(back.stored(), t.stored());
        assert!(SupportTemplates::read_from(&b"XXXX"[..], -40.0).is_err());
    }
}
