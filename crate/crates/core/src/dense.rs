//! Dense 2^n × 2^n matrices: synthesis/analysis, spectra, Schatten norms and
//! functional calculus. All traces are normalized so that tr(𝟙) = 1.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pauli::{pauli_matrix, Observable, PauliIndex};

/// Largest n accepted by the dense path.
pub const DENSE_CAP: usize = 12;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const SQRT_CLIP: f64 = 1e-9;
pub const CUT_TOL: f64 = 1e-12;

type Eigen = Arc<(Vec<f64>, DMatrix<Complex64>)>;

#[derive(Clone, Debug)]
pub struct DenseOperator {
    n: usize,
    matrix: DMatrix<Complex64>,
    hermitian: bool,
    eigen: OnceLock<Eigen>,
}

/// Spectral window with explicit endpoint closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    /// [lo, hi)
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            lo_closed: true,
            hi,
            hi_closed: false,
        }
    }

    /// [lo, ∞)
    pub fn at_least(lo: f64) -> Self {
        Self::half_open(lo, f64::INFINITY)
    }

    /// (lo, ∞)
    pub fn above(lo: f64) -> Self {
        Interval {
            lo,
            lo_closed: false,
            hi: f64::INFINITY,
            hi_closed: false,
        }
    }

    pub fn everything() -> Self {
        Self::half_open(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo == f64::NEG_INFINITY {
            true
        } else if self.lo_closed {
            x >= self.lo - CUT_TOL
        } else {
            x > self.lo + CUT_TOL
        };
        let hi_ok = if self.hi == f64::INFINITY {
            true
        } else if self.hi_closed {
            x <= self.hi + CUT_TOL
        } else {
            x < self.hi - CUT_TOL
        };
        lo_ok && hi_ok
    }
}

fn max_hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..d {
        for c in r..d {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

fn check_dense_n(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        return Err(Error::DenseCap { n, cap: DENSE_CAP });
    }
    Ok(())
}

/// Applies a 4×4 map along every site axis of a length-4^n vector indexed
/// with site 0 most significant.
fn sitewise(v: &mut [Complex64], n: usize, w: &[[Complex64; 4]; 4]) {
    for k in 0..n {
        let stride = 1usize << (2 * (n - 1 - k));
        let block = stride * 4;
        for base in (0..v.len()).step_by(block) {
            for off in 0..stride {
                let i0 = base + off;
                let x = [
                    v[i0],
                    v[i0 + stride],
                    v[i0 + 2 * stride],
                    v[i0 + 3 * stride],
                ];
                for (a, row) in w.iter().enumerate() {
                    v[i0 + a * stride] = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3] * x[3];
                }
            }
        }
    }
}

/// Position index P (pairs (r_k, c_k) packed as 2r_k + c_k) to (row, col).
#[inline]
fn split_position(p: usize, n: usize) -> (usize, usize) {
    let mut r = 0usize;
    let mut c = 0usize;
    for k in 0..n {
        let pair = (p >> (2 * (n - 1 - k))) & 3;
        r = (r << 1) | (pair >> 1);
        c = (c << 1) | (pair & 1);
    }
    (r, c)
}

impl DenseOperator {
    pub fn from_matrix(n: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_dense_n(n)?;
        let dim = 1usize << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension {
                dim: matrix.nrows().max(matrix.ncols()),
                n,
            });
        }
        let hermitian = max_hermitian_defect(&matrix) <= HERMITIAN_TOL;
        Ok(DenseOperator {
            n,
            matrix,
            hermitian,
            eigen: OnceLock::new(),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        check_dense_n(n)?;
        Self::from_matrix(n, DMatrix::identity(1 << n, 1 << n))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_dense_n(n)?;
        Self::from_matrix(n, DMatrix::zeros(1 << n, 1 << n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Σ_s T̂(s) σ_{s_1} ⊗ ⋯ ⊗ σ_{s_n}.
    pub fn synthesize(t: &Observable) -> Result<Self> {
        let n = t.n();
        check_dense_n(n)?;
        let mut v = vec![Complex64::default(); 1 << (2 * n)];
        for (s, c) in t.iter() {
            v[s.code() as usize] = *c;
        }
        let mut w = [[Complex64::default(); 4]; 4];
        for a in 0..4u8 {
            let m = pauli_matrix(a);
            for r in 0..2 {
                for c in 0..2 {
                    w[2 * r + c][a as usize] = m[r][c];
                }
            }
        }
        sitewise(&mut v, n, &w);
        let dim = 1usize << n;
        let mut mat = DMatrix::zeros(dim, dim);
        for (p, x) in v.into_iter().enumerate() {
            let (r, c) = split_position(p, n);
            mat[(r, c)] = x;
        }
        Self::from_matrix(n, mat)
    }

    /// T̂(s) = tr(σ_s^* M) with the normalized trace.
    pub fn analyze(&self) -> Observable {
        let n = self.n;
        let len = 1usize << (2 * n);
        let mut v = Vec::with_capacity(len);
        for p in 0..len {
            let (r, c) = split_position(p, n);
            v.push(self.matrix[(r, c)]);
        }
        let mut w = [[Complex64::default(); 4]; 4];
        for a in 0..4u8 {
            let m = pauli_matrix(a);
            for r in 0..2 {
                for c in 0..2 {
                    w[a as usize][2 * r + c] = m[r][c].conj() * 0.5;
                }
            }
        }
        sitewise(&mut v, n, &w);
        let terms = v.into_iter().enumerate().map(|(code, c)| {
            (
                PauliIndex::from_code(n, code as u64).expect("n within cap"),
                c,
            )
        });
        Observable::from_terms(n, terms).expect("n within cap")
    }

    /// Analysis against an explicit site count, checking the dimension.
    pub fn analyze_as(&self, n: usize) -> Result<Observable> {
        if n != self.n {
            return Err(Error::Dimension { dim: self.dim(), n });
        }
        Ok(self.analyze())
    }

    fn require_hermitian(&self) -> Result<()> {
        if !self.hermitian {
            return Err(Error::NotHermitian);
        }
        Ok(())
    }

    /// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
    pub fn eigen(&self) -> Result<&(Vec<f64>, DMatrix<Complex64>)> {
        self.require_hermitian()?;
        let e = self.eigen.get_or_init(|| {
            let sym = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
            let se = sym.symmetric_eigen();
            let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
            order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
            let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
            let vecs = DMatrix::from_fn(se.eigenvectors.nrows(), order.len(), |r, c| {
                se.eigenvectors[(r, order[c])]
            });
            Arc::new((vals, vecs))
        });
        Ok(e.as_ref())
    }

    pub fn eigenvalues(&self) -> Result<&[f64]> {
        Ok(&self.eigen()?.0)
    }

    /// Singular values: |λ| on the Hermitian path, else √eig(M†M).
    pub fn singular_values(&self) -> Vec<f64> {
        if self.hermitian {
            return self
                .eigenvalues()
                .expect("hermitian")
                .iter()
                .map(|x| x.abs())
                .collect();
        }
        let g = self.matrix.adjoint() * &self.matrix;
        let g = DenseOperator::from_matrix(self.n, g).expect("same dimension");
        g.eigenvalues()
            .unwrap_or(&[])
            .iter()
            .map(|x| x.max(0.0).sqrt())
            .collect()
    }

    /// (2^{-n} Σ s_i^p)^{1/p}, or max s_i for p = ∞.
    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("Schatten p = {p} < 1")));
        }
        let sv = self.singular_values();
        if p.is_infinite() {
            return Ok(sv.iter().cloned().fold(0.0, f64::max));
        }
        let mean = sv.iter().map(|s| s.powf(p)).sum::<f64>() / sv.len() as f64;
        Ok(mean.powf(1.0 / p))
    }

    /// ‖M‖_p^p without the final root.
    pub fn schatten_pow(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || p.is_infinite() {
            return Err(Error::InvalidParameter(format!("Schatten power p = {p}")));
        }
        let sv = self.singular_values();
        Ok(sv.iter().map(|s| s.powf(p)).sum::<f64>() / sv.len() as f64)
    }

    /// Normalized trace.
    pub fn trace(&self) -> Complex64 {
        self.matrix.trace() / self.dim() as f64
    }

    /// tr(|M|²) − |tr M|².
    pub fn variance(&self) -> f64 {
        let hs: f64 = self.matrix.iter().map(|x| x.norm_sqr()).sum::<f64>() / self.dim() as f64;
        (hs - self.trace().norm_sqr()).max(0.0)
    }

    /// Orthogonal projection onto eigenvectors with eigenvalue in `iv`.
    pub fn spectral_indicator(&self, iv: Interval) -> Result<DenseOperator> {
        self.functional_calculus(|x| if iv.contains(x) { 1.0 } else { 0.0 })
    }

    /// tr[1_iv(M)], i.e. the fraction of eigenvalues in `iv`.
    pub fn indicator_trace(&self, iv: Interval) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().filter(|&&x| iv.contains(x)).count() as f64 / ev.len() as f64)
    }

    pub fn functional_calculus<F: Fn(f64) -> f64>(&self, f: F) -> Result<DenseOperator> {
        let (vals, vecs) = self.eigen()?;
        let d = self.dim();
        let mut scaled = vecs.clone();
        for (c, &l) in vals.iter().enumerate() {
            let fl = f(l);
            for r in 0..d {
                scaled[(r, c)] *= fl;
            }
        }
        let m = scaled * vecs.adjoint();
        DenseOperator::from_matrix(self.n, m)
    }

    pub fn psd_margin(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Square root of a PSD matrix; eigenvalues in [-1e-9, 0) are clipped.
    pub fn sqrt(&self) -> Result<DenseOperator> {
        let m = self.psd_margin()?;
        if m < -SQRT_CLIP {
            return Err(Error::NotPositive(m));
        }
        self.functional_calculus(|x| x.max(0.0).sqrt())
    }

    /// |M| = (M^*M)^{1/2}.
    pub fn abs(&self) -> Result<DenseOperator> {
        if self.hermitian {
            return self.functional_calculus(f64::abs);
        }
        self.adjoint().mul(self)?.sqrt()
    }

    pub fn adjoint(&self) -> DenseOperator {
        DenseOperator::from_matrix(self.n, self.matrix.adjoint()).expect("same dimension")
    }

    fn same(&self, other: &DenseOperator) -> Result<()> {
        if self.n != other.n {
            return Err(Error::SiteMismatch(self.n, other.n));
        }
        Ok(())
    }

    pub fn mul(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same(other)?;
        DenseOperator::from_matrix(self.n, &self.matrix * &other.matrix)
    }

    pub fn add(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same(other)?;
        DenseOperator::from_matrix(self.n, &self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<DenseOperator> {
        self.same(other)?;
        DenseOperator::from_matrix(self.n, &self.matrix - &other.matrix)
    }

    pub fn scale(&self, c: f64) -> DenseOperator {
        DenseOperator::from_matrix(self.n, &self.matrix * Complex64::new(c, 0.0)).expect("same dimension")
    }

    /// Largest entrywise modulus of the difference.
    pub fn max_entry_diff(&self, other: &DenseOperator) -> Result<f64> {
        self.same(other)?;
        Ok((&self.matrix - &other.matrix)
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max))
    }

    /// Normalized tr(S·T).
    pub fn trace_product(&self, other: &DenseOperator) -> Result<Complex64> {
        self.same(other)?;
        let d = self.dim();
        let mut acc = Complex64::default();
        for r in 0..d {
            for c in 0..d {
                acc += self.matrix[(r, c)] * other.matrix[(c, r)];
            }
        }
        Ok(acc / d as f64)
    }

    /// Row-major (re, im) dump for debugging.
    pub fn to_debug_json(&self) -> String {
        let rows: Vec<Vec<(f64, f64)>> = (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| (self.matrix[(r, c)].re, self.matrix[(r, c)].im)).collect())
            .collect();
        serde_json::to_string(&rows).expect("plain data serializes")
    }
}

/// ∫_a^b tr(S·1_{(t,∞)}(T)) dt for PSD T, evaluated as a finite sum over the
/// intervals between consecutive eigenvalues of T (the integrand is constant
/// on each).
pub fn layercake_trace_range(s: &DenseOperator, t: &DenseOperator, a: f64, b: f64) -> Result<Complex64> {
    s.same(t)?;
    if !(a >= 0.0) || b < a {
        return Err(Error::InvalidParameter(format!("layer-cake range [{a}, {b}]")));
    }
    let margin = t.psd_margin()?;
    if margin < -SQRT_CLIP {
        return Err(Error::NotPositive(margin));
    }
    let (vals, vecs) = t.eigen()?;
    let d = t.dim();
    // w_i = 2^{-n} v_i^* S v_i
    let sv = s.matrix() * vecs;
    let weights: Vec<Complex64> = (0..d)
        .map(|i| {
            let mut acc = Complex64::default();
            for r in 0..d {
                acc += vecs[(r, i)].conj() * sv[(r, i)];
            }
            acc / d as f64
        })
        .collect();
    let lam: Vec<f64> = vals.iter().map(|x| x.max(0.0)).collect();
    let mut cuts: Vec<f64> = lam.iter().cloned().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = Complex64::default();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        // on (lo, hi) the eigenvalues above t are exactly those > lo
        let level: Complex64 = lam
            .iter()
            .zip(&weights)
            .filter(|(l, _)| **l > lo)
            .map(|(_, w)| *w)
            .sum();
        total += level * (hi - lo);
    }
    Ok(total)
}

/// ∫_0^∞ tr(S·1_{(t,∞)}(T)) dt.
pub fn layercake_trace(s: &DenseOperator, t: &DenseOperator) -> Result<Complex64> {
    let top = t.eigenvalues()?.last().copied().unwrap_or(0.0).max(0.0);
    layercake_trace_range(s, t, 0.0, top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliIndex;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn idx(d: &[u8]) -> PauliIndex {
        PauliIndex::new(d).unwrap()
    }

    fn random_obs(n: usize, rng: &mut ChaCha8Rng, hermitian: bool) -> Observable {
        let terms = (0..(1u64 << (2 * n))).map(|code| {
            let im = if hermitian { 0.0 } else { rng.random_range(-1.0..1.0) };
            (
                PauliIndex::from_code(n, code).unwrap(),
                Complex64::new(rng.random_range(-1.0..1.0), im),
            )
        });
        Observable::from_terms(n, terms).unwrap()
    }

    fn subcube(n: usize, k: usize) -> Observable {
        let mut t = Observable::identity(n).unwrap();
        for j in 0..k {
            let mut d = vec![0u8; n];
            d[j] = 1;
            let f = Observable::identity(n)
                .unwrap()
                .add(&Observable::pauli(idx(&d)))
                .unwrap()
                .scale_real(0.5);
            t = t.multiply(&f).unwrap();
        }
        t
    }

    #[test]
    fn synthesize_single_site_matches_matrices() {
        for a in 0..4u8 {
            let m = DenseOperator::synthesize(&Observable::pauli(idx(&[a]))).unwrap();
            let p = pauli_matrix(a);
            for r in 0..2 {
                for c in 0..2 {
                    assert_eq!(m.matrix()[(r, c)], p[r][c]);
                }
            }
        }
    }

    #[test]
    fn synthesize_is_kronecker_with_site_zero_leading() {
        // σ1 ⊗ σ2: row/col bit for site 0 is the most significant
        let m = DenseOperator::synthesize(&Observable::pauli(idx(&[1, 2]))).unwrap();
        let a = pauli_matrix(1);
        let b = pauli_matrix(2);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m.matrix()[(r, c)], a[r >> 1][c >> 1] * b[r & 1][c & 1]);
            }
        }
    }

    #[test]
    fn identity_round_trip() {
        let id = DenseOperator::synthesize(&Observable::identity(3).unwrap()).unwrap();
        assert_eq!(id.max_entry_diff(&DenseOperator::identity(3).unwrap()).unwrap(), 0.0);
        assert_eq!(DenseOperator::identity(3).unwrap().analyze(), Observable::identity(3).unwrap());
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=4 {
            let t = random_obs(n, &mut rng, false);
            let back = DenseOperator::synthesize(&t).unwrap().analyze();
            assert!(back.max_deviation(&t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn schatten_examples() {
        let s = DenseOperator::synthesize(&Observable::pauli(idx(&[2, 3, 1]))).unwrap();
        for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
            assert_abs_diff_eq!(s.schatten_norm(p).unwrap(), 1.0, epsilon = 1e-12);
        }
        let h = Observable::from_real_terms(1, [(idx(&[0]), 0.5), (idx(&[1]), 0.5)]).unwrap();
        let h = DenseOperator::synthesize(&h).unwrap();
        assert_abs_diff_eq!(h.schatten_norm(1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.schatten_norm(f64::INFINITY).unwrap(), 1.0, epsilon = 1e-12);
        assert!(h.schatten_norm(0.5).is_err());

        let q = DenseOperator::synthesize(&subcube(2, 2)).unwrap();
        assert_abs_diff_eq!(q.schatten_norm(1.0).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_norm_uses_singular_values() {
        // σ1 + iσ2 has singular values {2, 0} per site pair
        let t = Observable::from_terms(
            1,
            [
                (idx(&[1]), Complex64::new(1.0, 0.0)),
                (idx(&[2]), Complex64::new(0.0, 1.0)),
            ],
        )
        .unwrap();
        let m = DenseOperator::synthesize(&t).unwrap();
        assert!(!m.is_hermitian());
        assert_abs_diff_eq!(m.schatten_norm(f64::INFINITY).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.schatten_norm(2.0).unwrap().powi(2), t.norm2_sq(), epsilon = 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert_abs_diff_eq!(DenseOperator::identity(2).unwrap().variance(), 0.0);
        let s = DenseOperator::synthesize(&Observable::pauli(idx(&[0, 3]))).unwrap();
        assert_abs_diff_eq!(s.variance(), 1.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_obs(3, &mut rng, true);
        let d = DenseOperator::synthesize(&t).unwrap();
        assert_abs_diff_eq!(d.variance(), t.variance(), epsilon = 1e-10);
        let centered = t.sub(&Observable::identity(3).unwrap().scale(t.trace())).unwrap();
        let c2 = DenseOperator::synthesize(&centered).unwrap().schatten_norm(2.0).unwrap();
        assert_abs_diff_eq!(d.variance(), c2 * c2, epsilon = 1e-10);
    }

    #[test]
    fn indicator_examples() {
        let d = DenseOperator::synthesize(
            &Observable::from_real_terms(1, [(idx(&[0]), 0.5), (idx(&[1]), -0.5)]).unwrap(),
        )
        .unwrap();
        // diag(0, 1)
        let p = d.spectral_indicator(Interval::at_least(0.5)).unwrap();
        assert_abs_diff_eq!(p.max_entry_diff(&d).unwrap(), 0.0, epsilon = 1e-12);
        let all = d.spectral_indicator(Interval::everything()).unwrap();
        assert!(all.max_entry_diff(&DenseOperator::identity(1).unwrap()).unwrap() < 1e-12);

        let q = DenseOperator::synthesize(&subcube(2, 2)).unwrap();
        let l1 = q.schatten_norm(1.0).unwrap();
        let tr = q.indicator_trace(Interval::at_least(0.5 * l1)).unwrap();
        assert_abs_diff_eq!(tr, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn indicator_endpoint_flags() {
        let q = DenseOperator::synthesize(&subcube(2, 1)).unwrap();
        assert_eq!(q.indicator_trace(Interval::at_least(1.0)).unwrap(), 0.5);
        assert_eq!(q.indicator_trace(Interval::above(1.0)).unwrap(), 0.0);
        let closed = Interval {
            lo: 0.0,
            lo_closed: true,
            hi: 1.0,
            hi_closed: true,
        };
        assert_eq!(q.indicator_trace(closed).unwrap(), 1.0);
    }

    #[test]
    fn indicator_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = DenseOperator::synthesize(&random_obs(3, &mut rng, true)).unwrap();
        let p = t.spectral_indicator(Interval::half_open(-0.3, 1.2)).unwrap();
        let p2 = p.mul(&p).unwrap();
        assert!(p2.max_entry_diff(&p).unwrap() < 1e-9);
        assert!(p.is_hermitian());
    }

    #[test]
    fn rejects_non_hermitian_spectral_calls() {
        let t = Observable::from_terms(1, [(idx(&[1]), Complex64::new(0.0, 1.0))]).unwrap();
        let m = DenseOperator::synthesize(&t).unwrap();
        assert_eq!(m.spectral_indicator(Interval::everything()).unwrap_err(), Error::NotHermitian);
        assert_eq!(m.psd_margin().unwrap_err(), Error::NotHermitian);
    }

    #[test]
    fn functional_calculus_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = DenseOperator::synthesize(&random_obs(2, &mut rng, true)).unwrap();
        let same = t.functional_calculus(|x| x).unwrap();
        assert!(same.max_entry_diff(&t).unwrap() < 1e-12);
        let p = DenseOperator::synthesize(&subcube(3, 2)).unwrap();
        assert!(p.sqrt().unwrap().max_entry_diff(&p).unwrap() < 1e-12);
        let s1 = DenseOperator::synthesize(&Observable::pauli(idx(&[1]))).unwrap();
        assert_abs_diff_eq!(s1.psd_margin().unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(s1.sqrt(), Err(Error::NotPositive(_))));
    }

    #[test]
    fn layercake_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = DenseOperator::synthesize(&random_obs(2, &mut rng, false)).unwrap();
        let id = DenseOperator::identity(2).unwrap();
        let lc = layercake_trace(&s, &id).unwrap();
        assert!((lc - s.trace()).norm() < 1e-12);
        let p = DenseOperator::synthesize(&subcube(2, 1)).unwrap();
        let lc = layercake_trace(&s, &p).unwrap();
        assert!((lc - s.trace_product(&p).unwrap()).norm() < 1e-12);
        assert!(matches!(
            layercake_trace(&s, &DenseOperator::synthesize(&Observable::pauli(idx(&[1, 0]))).unwrap()),
            Err(Error::NotPositive(_))
        ));
    }

    #[test]
    fn layercake_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=4 {
            let a = DenseOperator::synthesize(&random_obs(n, &mut rng, false)).unwrap();
            let t = a.adjoint().mul(&a).unwrap();
            let s = DenseOperator::synthesize(&random_obs(n, &mut rng, false)).unwrap();
            let lc = layercake_trace(&s, &t).unwrap();
            assert!((lc - s.trace_product(&t).unwrap()).norm() <= 1e-9);
        }
    }

    #[test]
    fn schatten_monotone_in_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let t = DenseOperator::synthesize(&random_obs(3, &mut rng, true)).unwrap();
            let ps = [1.0, 1.5, 2.0, 3.0, 6.0, f64::INFINITY];
            let norms: Vec<f64> = ps.iter().map(|&p| t.schatten_norm(p).unwrap()).collect();
            for w in norms.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }
}
