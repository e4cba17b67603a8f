//! Derivatives, conditional expectations, restrictions, the semigroup e^{-tL}
//! and its relatives, spectral weights, influences, |∇T| and the index.
//!
//! Every coefficient-diagonal operator acts on the sparse map only; dense
//! matrices are used for norms, spectra and functional calculus.

use serde::{Deserialize, Serialize};

use crate::dense::DenseOperator;
use crate::error::{Error, Result};
use crate::pauli::{spread_mask, Observable, PauliIndex};

pub const PREDICATE_TOL: f64 = 1e-9;

/// A subset J ⊆ [n] as a bit mask (bit j = site j).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetJ {
    n: usize,
    mask: u64,
}

impl SubsetJ {
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        if n > 63 {
            return Err(Error::TooManySites(n));
        }
        if mask >> n != 0 {
            return Err(Error::InvalidParameter(format!(
                "subset mask {mask:#b} has sites beyond n = {n}"
            )));
        }
        Ok(SubsetJ { n, mask })
    }

    pub fn new(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &j in members {
            if j >= n {
                return Err(Error::SiteOutOfRange { site: j, n });
            }
            mask |= 1 << j;
        }
        Self::from_mask(n, mask)
    }

    pub fn empty(n: usize) -> Self {
        SubsetJ { n, mask: 0 }
    }

    pub fn full(n: usize) -> Self {
        SubsetJ {
            n,
            mask: if n == 0 { 0 } else { u64::MAX >> (64 - n) },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.n && self.mask >> j & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.contains(j)).collect()
    }

    pub fn complement(&self) -> Self {
        SubsetJ {
            n: self.n,
            mask: !self.mask & Self::full(self.n).mask,
        }
    }

    pub fn with(&self, j: usize) -> Result<Self> {
        if j >= self.n {
            return Err(Error::SiteOutOfRange { site: j, n: self.n });
        }
        Ok(SubsetJ {
            n: self.n,
            mask: self.mask | 1 << j,
        })
    }

    /// supp(s) ⊆ J.
    pub fn covers(&self, s: &PauliIndex) -> bool {
        s.occupancy() & !spread_mask(self.n, self.mask) == 0
    }
}

fn check_site(t: &Observable, j: usize) -> Result<()> {
    if j >= t.n() {
        return Err(Error::SiteOutOfRange { site: j, n: t.n() });
    }
    Ok(())
}

fn check_subset(t: &Observable, set: &SubsetJ) -> Result<()> {
    if set.n() != t.n() {
        return Err(Error::SiteMismatch(t.n(), set.n()));
    }
    Ok(())
}

/// d_j T: the terms with s_j ≠ 0.
pub fn partial_derivative(t: &Observable, j: usize) -> Result<Observable> {
    check_site(t, j)?;
    Ok(t.filter(|s| s.digit(j) != 0))
}

/// S_j: negates the terms with s_j ≠ 0.
pub fn bit_flip_reflection(t: &Observable, j: usize) -> Result<Observable> {
    check_site(t, j)?;
    Ok(t.multiplier(|s| if s.digit(j) != 0 { -1.0 } else { 1.0 }))
}

/// E_J T: the terms with supp(s) ⊆ J.
pub fn conditional_expectation(t: &Observable, set: &SubsetJ) -> Result<Observable> {
    check_subset(t, set)?;
    Ok(t.filter(|s| set.covers(s)))
}

/// R_j^J T: zero unless j ∈ J; else the terms with s_j ≠ 0 and supp(s) ⊆ J^c ∪ {j}.
pub fn restriction(t: &Observable, j: usize, set: &SubsetJ) -> Result<Observable> {
    check_site(t, j)?;
    check_subset(t, set)?;
    if !set.contains(j) {
        return Observable::zero(t.n());
    }
    let allowed = set.complement().with(j)?;
    Ok(t.filter(|s| s.digit(j) != 0 && allowed.covers(s)))
}

/// e^{-tL}: multiplier e^{-t|supp(s)|}.
pub fn semigroup(t: &Observable, time: f64) -> Result<Observable> {
    if !(time >= 0.0) {
        return Err(Error::InvalidParameter(format!("semigroup time {time} < 0")));
    }
    Ok(t.multiplier(|s| (-time * s.support_size() as f64).exp()))
}

/// L: multiplier |supp(s)|.
pub fn generator(t: &Observable) -> Observable {
    t.multiplier(|s| s.support_size() as f64)
}

/// δ^L: multiplier δ^{|supp(s)|} (with 0^0 = 1).
pub fn delta_power(t: &Observable, delta: f64) -> Result<Observable> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside [0, 1]")));
    }
    Ok(t.multiplier(|s| delta.powi(s.support_size() as i32)))
}

/// Multiplier of H_d at support size m.
pub fn hd_multiplier(d: u64, m: usize) -> f64 {
    let d = d as f64;
    (1.0 - 1.0 / (2.0 * d)).powi(m as i32) - (1.0 - 1.0 / d).powi(m as i32)
}

/// H_d = (1 − 1/(2d))^L − (1 − 1/d)^L for d a power of two.
pub fn spectral_slice_hd(t: &Observable, d: u64) -> Result<Observable> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("H_d needs a power of two, got {d}")));
    }
    Ok(t.multiplier(|s| hd_multiplier(d, s.support_size())))
}

/// Dyadic scales 1, 2, 4, … whose band [d, 2d) meets {1, …, n}.
pub fn dyadic_scales(n: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 1u64;
    while d as usize <= n.max(1) {
        out.push(d);
        d *= 2;
    }
    out
}

/// Truncation to |supp(s)| ≤ d.
pub fn rademacher_projection(t: &Observable, d: usize) -> Observable {
    t.filter(|s| s.support_size() <= d)
}

fn weight_where<F: Fn(usize) -> bool>(t: &Observable, f: F) -> f64 {
    t.iter()
        .filter(|(s, _)| f(s.support_size()))
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

fn check_weight_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("weight band needs d >= 1".into()));
    }
    Ok(())
}

/// W_{=d}.
pub fn weight_eq(t: &Observable, d: usize) -> Result<f64> {
    check_weight_d(d)?;
    Ok(weight_where(t, |m| m == d))
}

/// W_{≥d}.
pub fn weight_geq(t: &Observable, d: usize) -> Result<f64> {
    check_weight_d(d)?;
    Ok(weight_where(t, |m| m >= d))
}

/// W_{≈d}: the band d ≤ |supp| < 2d.
pub fn weight_approx(t: &Observable, d: usize) -> Result<f64> {
    check_weight_d(d)?;
    Ok(weight_where(t, |m| m >= d && m < 2 * d))
}

/// Σ_{lo ≤ |supp| ≤ hi} |T̂(s)|².
pub fn weight_range(t: &Observable, lo: usize, hi: usize) -> f64 {
    weight_where(t, |m| m >= lo && m <= hi)
}

/// ‖T‖_p, dense except for p = 2 (Parseval).
pub fn lp_norm(t: &Observable, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("L_p norm with p = {p} < 1")));
    }
    if t.is_empty() {
        return Ok(0.0);
    }
    if p == 2.0 {
        return Ok(t.norm2_sq().sqrt());
    }
    DenseOperator::synthesize(t)?.schatten_norm(p)
}

/// Inf_j^p(T) = ‖d_j T‖_p^p.
pub fn influence(t: &Observable, j: usize, p: f64) -> Result<f64> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidParameter(format!("influence with p = {p}")));
    }
    let dj = partial_derivative(t, j)?;
    if p == 2.0 {
        return Ok(dj.norm2_sq());
    }
    Ok(lp_norm(&dj, p)?.powf(p))
}

pub fn influences(t: &Observable, p: f64) -> Result<Vec<f64>> {
    (0..t.n()).map(|j| influence(t, j, p)).collect()
}

/// Inf^p(T) = Σ_j Inf_j^p(T).
pub fn total_influence(t: &Observable, p: f64) -> Result<f64> {
    Ok(influences(t, p)?.iter().sum())
}

/// M_J(T) = Σ_{j∈J} ‖d_j T‖_1².
pub fn geometric_mass(t: &Observable, set: &SubsetJ) -> Result<f64> {
    check_subset(t, set)?;
    let mut acc = 0.0;
    for j in set.members() {
        let l1 = lp_norm(&partial_derivative(t, j)?, 1.0)?;
        acc += l1 * l1;
    }
    Ok(acc)
}

/// |∇T| = (Σ_j D_j^* D_j)^{1/2} with D_j the dense form of d_j T.
pub fn gradient_magnitude(t: &Observable) -> Result<DenseOperator> {
    let mut acc = DenseOperator::zeros(t.n())?;
    for j in 0..t.n() {
        let dj = DenseOperator::synthesize(&partial_derivative(t, j)?)?;
        acc = acc.add(&dj.adjoint().mul(&dj)?)?;
    }
    acc.sqrt()
}

pub fn gradient_lp(t: &Observable, p: f64) -> Result<f64> {
    gradient_magnitude(t)?.schatten_norm(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStatus {
    Defined,
    /// No site imposes a constraint; the infimum is 0.
    Degenerate,
    /// Some ‖d_j T‖_1 ≥ 1, where the defining predicate is not monotone in α.
    Undefined,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexValue {
    pub value: f64,
    pub status: IndexStatus,
}

/// ind(T) = inf{α ≥ 0 : ‖d_j T‖_1^α ≤ ‖d_j T‖_2² ∀j}.
pub fn index_of(t: &Observable) -> Result<IndexValue> {
    let mut best: Option<f64> = None;
    for j in 0..t.n() {
        let dj = partial_derivative(t, j)?;
        if dj.is_empty() {
            continue;
        }
        let l1 = lp_norm(&dj, 1.0)?;
        if l1 >= 1.0 {
            return Ok(IndexValue {
                value: f64::NAN,
                status: IndexStatus::Undefined,
            });
        }
        let alpha = (dj.norm2_sq().ln() / l1.ln()).max(0.0);
        best = Some(best.map_or(alpha, |b: f64| b.max(alpha)));
    }
    Ok(match best {
        Some(v) => IndexValue {
            value: v,
            status: IndexStatus::Defined,
        },
        None => IndexValue {
            value: 0.0,
            status: IndexStatus::Degenerate,
        },
    })
}

fn hermitian_within(t: &Observable, tol: f64) -> bool {
    t.iter().all(|(_, c)| c.im.abs() <= tol)
}

/// Hermitian and ‖T² − T‖_∞ ≤ 1e-9.
pub fn is_projection(t: &Observable) -> Result<bool> {
    if !hermitian_within(t, PREDICATE_TOL) {
        return Ok(false);
    }
    let m = DenseOperator::synthesize(t)?;
    let defect = m.mul(&m)?.sub(&m)?;
    Ok(defect.schatten_norm(f64::INFINITY)? <= PREDICATE_TOL)
}

/// Hermitian and ‖T² − 𝟙‖_∞ ≤ 1e-9.
pub fn is_quantum_boolean(t: &Observable) -> Result<bool> {
    if !hermitian_within(t, PREDICATE_TOL) {
        return Ok(false);
    }
    let m = DenseOperator::synthesize(t)?;
    let defect = m.mul(&m)?.sub(&DenseOperator::identity(t.n())?)?;
    Ok(defect.schatten_norm(f64::INFINITY)? <= PREDICATE_TOL)
}

/// (𝟙 + T)/2.
pub fn boolean_to_projection(t: &Observable) -> Result<Observable> {
    Ok(Observable::identity(t.n())?.add(t)?.scale_real(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn idx(d: &[u8]) -> PauliIndex {
        PauliIndex::new(d).unwrap()
    }

    fn single(n: usize, j: usize, a: u8) -> PauliIndex {
        let mut d = vec![0u8; n];
        d[j] = a;
        idx(&d)
    }

    /// Brute-force product ∏_{j<k} (𝟙 + σ_1^{(j)})/2.
    fn subcube_oracle(n: usize, k: usize) -> Observable {
        let mut t = Observable::identity(n).unwrap();
        for j in 0..k {
            let f = Observable::from_real_terms(n, [(PauliIndex::identity(n).unwrap(), 0.5), (single(n, j, 1), 0.5)])
                .unwrap();
            t = t.multiply(&f).unwrap();
        }
        t
    }

    fn remark(n: usize) -> Observable {
        let mut terms = vec![(PauliIndex::identity(n).unwrap(), 0.5)];
        for j in 0..n {
            terms.push((single(n, j, 1), 1.0 / (2.0 * n as f64)));
        }
        Observable::from_real_terms(n, terms).unwrap()
    }

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn derivative_examples() {
        let t = Observable::pauli(idx(&[1, 0]));
        assert_eq!(partial_derivative(&t, 0).unwrap(), t);
        assert!(partial_derivative(&t, 1).unwrap().is_empty());
        assert!(partial_derivative(&Observable::identity(3).unwrap(), 2).unwrap().is_empty());
        assert!(partial_derivative(&t, 2).is_err());
        for n in [2usize, 3, 5] {
            let f = remark(n);
            let d = partial_derivative(&f, 1).unwrap();
            assert_eq!(d.len(), 1);
            assert_abs_diff_eq!(d.norm2_sq(), 1.0 / (4.0 * (n * n) as f64), epsilon = 1e-15);
        }
    }

    #[test]
    fn reflection_examples() {
        let id = Observable::identity(2).unwrap();
        assert_eq!(bit_flip_reflection(&id, 0).unwrap(), id);
        let t = Observable::pauli(idx(&[2, 0]));
        assert_eq!(bit_flip_reflection(&t, 0).unwrap(), t.scale_real(-1.0));
    }

    #[test]
    fn conditional_expectation_examples() {
        let t = Observable::from_real_terms(2, [(idx(&[1, 1]), 1.0), (idx(&[1, 0]), 1.0)]).unwrap();
        assert_eq!(conditional_expectation(&t, &SubsetJ::full(2)).unwrap(), t);
        let e = conditional_expectation(&t, &SubsetJ::new(2, &[0]).unwrap()).unwrap();
        assert_eq!(e, Observable::pauli(idx(&[1, 0])));
        let t2 = t.add(&Observable::identity(2).unwrap().scale_real(0.3)).unwrap();
        let e0 = conditional_expectation(&t2, &SubsetJ::empty(2)).unwrap();
        assert_eq!(e0, Observable::identity(2).unwrap().scale(t2.trace()));
    }

    #[test]
    fn restriction_examples() {
        let t = Observable::pauli(idx(&[1, 1]));
        let j1 = SubsetJ::new(2, &[0]).unwrap();
        assert!(restriction(&t, 1, &j1).unwrap().is_empty());
        assert_eq!(restriction(&t, 0, &j1).unwrap(), t);
        assert!(restriction(&t, 0, &SubsetJ::full(2)).unwrap().is_empty());
    }

    #[test]
    fn semigroup_examples() {
        let s = idx(&[1, 0, 3]);
        let t = Observable::pauli(s);
        let e = semigroup(&t, 0.7).unwrap();
        assert_abs_diff_eq!(e.coefficient(&s).re, (-1.4f64).exp(), epsilon = 1e-15);
        let r = Observable::from_real_terms(2, [(idx(&[0, 0]), 0.2), (idx(&[1, 3]), 0.5), (idx(&[2, 0]), -0.1)])
            .unwrap();
        assert_eq!(delta_power(&r, 1.0).unwrap(), r);
        assert_eq!(delta_power(&r, 0.0).unwrap(), Observable::identity(2).unwrap().scale(r.trace()));
        assert!(generator(&Observable::identity(3).unwrap()).is_empty());
        assert!(semigroup(&r, -1.0).is_err());
        assert!(delta_power(&r, 1.5).is_err());
        assert_eq!(semigroup(&r, 0.0).unwrap(), r);
    }

    #[test]
    fn hd_examples() {
        assert!(spectral_slice_hd(&Observable::identity(2).unwrap(), 1).unwrap().is_empty());
        assert_abs_diff_eq!(hd_multiplier(1, 1), 0.5);
        assert!(spectral_slice_hd(&Observable::identity(2).unwrap(), 3).is_err());
        for d in [1u64, 2, 4, 8] {
            for m in d as usize..(2 * d as usize).min(15) {
                let h = hd_multiplier(d, m);
                assert!((0.25..=1.0).contains(&h), "d={d} m={m} h={h}");
            }
        }
    }

    #[test]
    fn hd_band_floor_fails_from_support_15() {
        // the band floor of 1/4 holds for every support size below 15 only
        assert!(hd_multiplier(8, 14) >= 0.25);
        assert!(hd_multiplier(8, 15) < 0.25);
        assert_abs_diff_eq!(hd_multiplier(8, 15), 0.244_879, epsilon = 1e-6);
        assert!(hd_multiplier(16, 16) < 0.25);
    }

    #[test]
    fn weights_of_pauli_string() {
        let t = Observable::pauli(idx(&[1, 0, 3]));
        assert_eq!(weight_eq(&t, 2).unwrap(), 1.0);
        assert_eq!(weight_eq(&t, 1).unwrap(), 0.0);
        assert_eq!(weight_eq(&t, 3).unwrap(), 0.0);
        assert!(weight_eq(&t, 0).is_err());
    }

    #[test]
    fn subcube_weights_binomial() {
        for n in 3..=5 {
            for k in 1..=n {
                let t = subcube_oracle(n, k);
                for d in 1..=k {
                    let expected = binom(k, d) * 4f64.powi(-(k as i32));
                    assert_abs_diff_eq!(weight_eq(&t, d).unwrap(), expected, epsilon = 1e-14);
                }
                assert_abs_diff_eq!(weight_geq(&t, 1).unwrap(), t.variance(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn influence_examples() {
        let t = Observable::pauli(idx(&[3, 0, 1]));
        for p in [1.0, 1.5, 2.0] {
            assert_abs_diff_eq!(influence(&t, 0, p).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(influence(&t, 1, p).unwrap(), 0.0);
        }
        assert!(influence(&t, 0, 0.5).is_err());
        for n in [2usize, 4] {
            let f = remark(n);
            assert_abs_diff_eq!(total_influence(&f, 2.0).unwrap(), 1.0 / (4.0 * n as f64), epsilon = 1e-14);
            assert_abs_diff_eq!(f.variance(), 1.0 / (4.0 * n as f64), epsilon = 1e-14);
        }
    }

    #[test]
    fn subcube_geometric_mass() {
        for k in 1..=4 {
            let t = subcube_oracle(4, k);
            // each ‖d_j T‖_1 = 2^{-k}, cross-checked against a dense eigensolve
            for j in 0..k {
                let l1 = DenseOperator::synthesize(&partial_derivative(&t, j).unwrap())
                    .unwrap()
                    .schatten_norm(1.0)
                    .unwrap();
                assert_abs_diff_eq!(l1, 2f64.powi(-(k as i32)), epsilon = 1e-12);
            }
            let m = geometric_mass(&t, &SubsetJ::full(4)).unwrap();
            assert_abs_diff_eq!(m, k as f64 * 4f64.powi(-(k as i32)), epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let t = Observable::pauli(idx(&[1, 2, 0]));
        for p in [1.0, 2.0, 3.0] {
            assert_abs_diff_eq!(gradient_lp(&t, p).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        }
        let dict = Observable::from_real_terms(3, [(idx(&[0, 0, 0]), 0.5), (idx(&[1, 0, 0]), 0.5)]).unwrap();
        let g = gradient_magnitude(&dict).unwrap();
        let half = DenseOperator::identity(3).unwrap().scale(0.5);
        assert!(g.max_entry_diff(&half).unwrap() < 1e-12);
        assert_abs_diff_eq!(gradient_lp(&dict, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        let z = gradient_magnitude(&Observable::identity(2).unwrap()).unwrap();
        assert!(z.max_entry_diff(&DenseOperator::zeros(2).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn index_examples() {
        let dict = Observable::from_real_terms(2, [(idx(&[0, 0]), 0.5), (idx(&[1, 0]), 0.5)]).unwrap();
        let v = index_of(&dict).unwrap();
        assert_eq!(v.status, IndexStatus::Defined);
        assert_abs_diff_eq!(v.value, 2.0, epsilon = 1e-12);

        let e = Observable::from_real_terms(1, [(idx(&[1]), 0.5)]).unwrap();
        // ‖d_0 e‖_1 = 1/2, ‖d_0 e‖_2² = 1/4 = ‖·‖_1^2
        assert_abs_diff_eq!(index_of(&e).unwrap().value, 2.0, epsilon = 1e-12);

        let id = index_of(&Observable::identity(3).unwrap()).unwrap();
        assert_eq!(id.status, IndexStatus::Degenerate);
        assert_eq!(id.value, 0.0);

        let big = index_of(&Observable::pauli(idx(&[1, 0]))).unwrap();
        assert_eq!(big.status, IndexStatus::Undefined);
    }

    #[test]
    fn index_equality_case_is_one() {
        // d_0 T = σ_1 ⊗ (𝟙+σ_1)/2 and d_1 T = (𝟙+σ_1)/2 ⊗ σ_1 both have
        // eigenvalues ±1 on half the spectrum, so ‖·‖_2² = ‖·‖_1 = 1/2
        let t = Observable::from_real_terms(
            2,
            [(idx(&[1, 0]), 0.5), (idx(&[1, 1]), 0.5), (idx(&[0, 1]), 0.5)],
        )
        .unwrap();
        let v = index_of(&t).unwrap();
        assert_eq!(v.status, IndexStatus::Defined);
        assert_abs_diff_eq!(v.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn predicates() {
        let s = Observable::pauli(idx(&[2, 3]));
        assert!(is_quantum_boolean(&s).unwrap());
        assert!(!is_projection(&s).unwrap());
        let p = boolean_to_projection(&s).unwrap();
        assert!(is_projection(&p).unwrap());
        let half = Observable::identity(2).unwrap().scale_real(0.5);
        assert!(!is_projection(&half).unwrap());
        assert!(!is_quantum_boolean(&half).unwrap());
        let nh = Observable::from_terms(1, [(idx(&[1]), Complex64::new(0.0, 1.0))]).unwrap();
        assert!(!is_quantum_boolean(&nh).unwrap());
    }

    fn arb_hermitian(n: usize) -> impl Strategy<Value = Observable> {
        prop::collection::vec((prop::collection::vec(0u8..4, n), -1.0f64..1.0), 1..16).prop_map(move |v| {
            Observable::from_real_terms(n, v.into_iter().map(|(d, c)| (PauliIndex::new(&d).unwrap(), c))).unwrap()
        })
    }

    fn arb_subset(n: usize) -> impl Strategy<Value = SubsetJ> {
        (0u64..(1 << n)).prop_map(move |m| SubsetJ::from_mask(n, m).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn derivatives_are_orthogonal_idempotents(t in arb_hermitian(3)) {
            let mut sum = Observable::zero(3).unwrap();
            for j in 0..3 {
                let dj = partial_derivative(&t, j).unwrap();
                prop_assert_eq!(partial_derivative(&dj, j).unwrap(), dj.clone());
                for k in 0..3 {
                    if k != j {
                        let dk = partial_derivative(&t, k).unwrap();
                        let cross = partial_derivative(&dk, j).unwrap();
                        prop_assert!(cross.inner_product(&dj).unwrap().norm() <= dj.norm2_sq() + 1e-12);
                    }
                }
                sum = sum.add(&dj).unwrap();
                let refl = bit_flip_reflection(&t, j).unwrap();
                let via = t.sub(&refl).unwrap().scale_real(0.5);
                prop_assert!(via.max_deviation(&dj).unwrap() < 1e-15);
            }
            prop_assert!(sum.max_deviation(&generator(&t)).unwrap() < 1e-14);
        }

        #[test]
        fn reflection_is_l2_isometry(t in arb_hermitian(3), j in 0usize..3) {
            let r = bit_flip_reflection(&t, j).unwrap();
            prop_assert!((r.norm2_sq() - t.norm2_sq()).abs() < 1e-14);
            prop_assert_eq!(bit_flip_reflection(&r, j).unwrap(), t);
        }

        #[test]
        fn conditional_expectation_contracts(t in arb_hermitian(3), set in arb_subset(3)) {
            let e = conditional_expectation(&t, &set).unwrap();
            prop_assert_eq!(conditional_expectation(&e, &set).unwrap(), e.clone());
            for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                prop_assert!(lp_norm(&e, p).unwrap() <= lp_norm(&t, p).unwrap() + 1e-10);
            }
        }

        #[test]
        fn semigroup_composes(t in arb_hermitian(3), a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let l = semigroup(&semigroup(&t, a).unwrap(), b).unwrap();
            let r = semigroup(&t, a + b).unwrap();
            prop_assert!(l.max_deviation(&r).unwrap() < 1e-14);
            prop_assert!((semigroup(&t, a).unwrap().trace() - t.trace()).norm() < 1e-15);
        }

        #[test]
        fn semigroup_preserves_positivity(t in arb_hermitian(2), time in 0.0f64..3.0) {
            let sq = t.multiply(&t).unwrap();
            let img = DenseOperator::synthesize(&semigroup(&sq, time).unwrap()).unwrap();
            prop_assert!(img.psd_margin().unwrap() >= -1e-9);
        }

        #[test]
        fn poincare_and_gradient_consistency(t in arb_hermitian(3)) {
            let inf = total_influence(&t, 2.0).unwrap();
            prop_assert!(t.variance() <= inf + 1e-15);
            let g = gradient_lp(&t, 2.0).unwrap();
            prop_assert!((g * g - inf).abs() < 1e-9);
        }

        #[test]
        fn weights_sum_to_variance(t in arb_hermitian(4)) {
            let total: f64 = (1..=4).map(|d| weight_eq(&t, d).unwrap()).sum();
            prop_assert!((total - t.variance()).abs() < 1e-10);
            let bands: f64 = dyadic_scales(4).iter().map(|&d| weight_approx(&t, d as usize).unwrap()).sum();
            prop_assert!((bands - t.variance()).abs() < 1e-10);
        }

        #[test]
        fn restriction_budget(t in arb_hermitian(4), set in arb_subset(4)) {
            let mut budget = 0.0;
            for j in set.members() {
                budget += restriction(&t, j, &set).unwrap().norm2_sq();
            }
            prop_assert!(budget <= t.variance() + 1e-14);
            for k in set.complement().members() {
                let mut lhs = 0.0;
                for j in set.members() {
                    lhs += partial_derivative(&restriction(&t, j, &set).unwrap(), k).unwrap().norm2_sq();
                }
                prop_assert!(lhs <= partial_derivative(&t, k).unwrap().norm2_sq() + 1e-14);
            }
        }
    }

    #[test]
    fn reflection_is_not_an_l_infinity_isometry() {
        // Bell projector (𝟙 + σ_11 + σ_22 − σ_33)/4: S_0 maps it to 𝟙/2 − P, whose
        // spectrum is {−1/2, 1/2}, so the operator norm halves.
        let p = Observable::from_real_terms(
            2,
            [(idx(&[0, 0]), 0.25), (idx(&[1, 1]), 0.25), (idx(&[2, 2]), 0.25), (idx(&[3, 3]), -0.25)],
        )
        .unwrap();
        assert!(is_projection(&p).unwrap());
        let r = bit_flip_reflection(&p, 0).unwrap();
        assert_abs_diff_eq!(lp_norm(&p, f64::INFINITY).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp_norm(&r, f64::INFINITY).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lp_norm(&r, 1.0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn derivative_can_exceed_unit_norm_off_the_positive_cone() {
        // ‖T‖_∞ = 1 yet ‖d_0 T‖_∞ > 1
        let t = Observable::from_real_terms(
            2,
            [(idx(&[0, 0]), -0.5), (idx(&[1, 1]), 0.5), (idx(&[2, 2]), 0.5), (idx(&[3, 3]), -0.5)],
        )
        .unwrap();
        assert_abs_diff_eq!(lp_norm(&t, f64::INFINITY).unwrap(), 1.0, epsilon = 1e-12);
        let d = partial_derivative(&t, 0).unwrap();
        assert!(lp_norm(&d, f64::INFINITY).unwrap() > 1.0 + 1e-6);
    }

    #[test]
    fn influence_order_fails_for_bell_boolean() {
        // same T: d_0 T has eigenvalues {3/2, −1/2, −1/2, −1/2}
        let t = Observable::from_real_terms(
            2,
            [(idx(&[0, 0]), -0.5), (idx(&[1, 1]), 0.5), (idx(&[2, 2]), 0.5), (idx(&[3, 3]), -0.5)],
        )
        .unwrap();
        assert!(is_quantum_boolean(&t).unwrap());
        let i2 = influence(&t, 0, 2.0).unwrap();
        let i15 = influence(&t, 0, 1.5).unwrap();
        assert_abs_diff_eq!(i2, 0.75, epsilon = 1e-12);
        let expected = (1.5f64.powf(1.5) + 3.0 * 0.5f64.powf(1.5)) / 4.0;
        assert_abs_diff_eq!(i15, expected, epsilon = 1e-12);
        assert!(i2 > i15);
    }

    #[test]
    fn derivative_contracts_on_unit_interval_and_influence_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let terms: Vec<_> = (0..16u64)
                .map(|c| (PauliIndex::from_code(2, c).unwrap(), rng.random_range(-1.0..1.0)))
                .collect();
            let raw = Observable::from_real_terms(2, terms).unwrap();
            let ev = DenseOperator::synthesize(&raw).unwrap().eigenvalues().unwrap().to_vec();
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            let unit = raw
                .sub(&Observable::identity(2).unwrap().scale_real(lo))
                .unwrap()
                .scale_real(1.0 / (hi - lo));
            for j in 0..2 {
                assert!(lp_norm(&partial_derivative(&unit, j).unwrap(), f64::INFINITY).unwrap() <= 1.0 + 1e-10);
                let i2 = influence(&unit, j, 2.0).unwrap();
                for p in [1.0, 1.25, 1.5, 1.75] {
                    assert!(i2 <= influence(&unit, j, p).unwrap() + 1e-10);
                }
            }
        }
    }
}
