//! Pauli strings and sparse Fourier coefficient maps on (M_2)^{⊗n}.
//!
//! The single-site basis is σ0 = I, σ1 = diag(1, -1), σ2 = [[0, 1], [1, 0]],
//! σ3 = [[0, i], [-i, 0]]. Note that σ3 is minus the usual Y, so the product
//! table is generated from these matrices instead of being written out.
//! Sites are 0-based throughout the API.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_SITES: usize = 31;

/// Coefficient parts below this are snapped to zero on canonicalization.
pub const STORAGE_EPS: f64 = 1e-14;

const LOW_BITS: u64 = 0x5555_5555_5555_5555;

/// A multi-index s ∈ {0,1,2,3}^n packed two bits per site, site 0 most
/// significant, so the derived order is lexicographic on digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliIndex {
    n: u8,
    code: u64,
}

#[inline]
pub(crate) fn site_shift(n: usize, j: usize) -> u32 {
    (2 * (n - 1 - j)) as u32
}

/// Maps a site mask (bit j = site j) to the packed layout (low bit of each pair).
pub(crate) fn spread_mask(n: usize, mask: u64) -> u64 {
    let mut out = 0u64;
    for j in 0..n {
        if mask >> j & 1 == 1 {
            out |= 1u64 << site_shift(n, j);
        }
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if n > MAX_SITES {
        return Err(Error::TooManySites(n));
    }
    Ok(())
}

impl PauliIndex {
    pub fn identity(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(PauliIndex { n: n as u8, code: 0 })
    }

    pub fn new(digits: &[u8]) -> Result<Self> {
        check_n(digits.len())?;
        let mut code = 0u64;
        for &d in digits {
            if d > 3 {
                return Err(Error::InvalidDigit(d));
            }
            code = (code << 2) | d as u64;
        }
        Ok(PauliIndex {
            n: digits.len() as u8,
            code,
        })
    }

    /// Builds an index from its packed code; bits above 2n are ignored.
    pub fn from_code(n: usize, code: u64) -> Result<Self> {
        check_n(n)?;
        let mask = if n == 0 { 0 } else { u64::MAX >> (64 - 2 * n) };
        Ok(PauliIndex {
            n: n as u8,
            code: code & mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    /// Digit at site `j`. Panics if `j >= n`.
    pub fn digit(&self, j: usize) -> u8 {
        assert!(j < self.n(), "site {j} out of range for n = {}", self.n);
        ((self.code >> site_shift(self.n(), j)) & 3) as u8
    }

    pub fn digits(&self) -> Vec<u8> {
        (0..self.n()).map(|j| self.digit(j)).collect()
    }

    /// Returns a copy with digit `j` overwritten. Panics on bad site or digit.
    pub fn with_digit(&self, j: usize, a: u8) -> Self {
        assert!(a <= 3);
        let sh = site_shift(self.n(), j);
        PauliIndex {
            n: self.n,
            code: (self.code & !(3u64 << sh)) | ((a as u64) << sh),
        }
    }

    /// Low bit of each occupied pair in the packed layout.
    #[inline]
    pub(crate) fn occupancy(&self) -> u64 {
        (self.code | (self.code >> 1)) & LOW_BITS
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.digit(j) != 0).collect()
    }

    /// Support as a site mask (bit j set iff s_j ≠ 0).
    pub fn support_mask(&self) -> u64 {
        let mut m = 0u64;
        for j in 0..self.n() {
            if self.digit(j) != 0 {
                m |= 1 << j;
            }
        }
        m
    }

    #[inline]
    pub fn support_size(&self) -> usize {
        self.occupancy().count_ones() as usize
    }

    /// s ⊕ e_j^α, defined only when s_j = 0.
    pub fn index_insert(&self, j: usize, alpha: u8) -> Result<Self> {
        if j >= self.n() {
            return Err(Error::SiteOutOfRange { site: j, n: self.n() });
        }
        if !(1..=3).contains(&alpha) {
            return Err(Error::InvalidDigit(alpha));
        }
        if self.digit(j) != 0 {
            return Err(Error::OccupiedSite(j));
        }
        Ok(self.with_digit(j, alpha))
    }

    /// Appends `extra` digits to the right.
    pub fn extend(&self, extra: &[u8]) -> Result<Self> {
        check_n(self.n() + extra.len())?;
        let mut code = self.code;
        for &d in extra {
            if d > 3 {
                return Err(Error::InvalidDigit(d));
            }
            code = (code << 2) | d as u64;
        }
        Ok(PauliIndex {
            n: (self.n() + extra.len()) as u8,
            code,
        })
    }

    /// Product of two strings: σ_s σ_t = phase · σ_u.
    pub fn product(&self, other: &PauliIndex) -> Result<(Phase, PauliIndex)> {
        if self.n != other.n {
            return Err(Error::SiteMismatch(self.n(), other.n()));
        }
        let mut phase = Phase::ONE;
        let mut code = 0u64;
        for j in 0..self.n() {
            let (ph, c) = single_site_product(self.digit(j), other.digit(j));
            phase = phase * ph;
            code = (code << 2) | c as u64;
        }
        Ok((phase, PauliIndex { n: self.n, code }))
    }
}

impl fmt::Debug for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "σ(")?;
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl Serialize for PauliIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.digits().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PauliIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let digits = Vec::<u8>::deserialize(d)?;
        PauliIndex::new(&digits).map_err(serde::de::Error::custom)
    }
}

/// A phase i^k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn power(&self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

/// The 2×2 basis matrix σ_a as rows.
pub fn pauli_matrix(a: u8) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match a {
        0 => [[o, z], [z, o]],
        1 => [[o, z], [z, -o]],
        2 => [[z, o], [o, z]],
        3 => [[z, i], [-i, z]],
        _ => panic!("digit {a} is not in {{0,1,2,3}}"),
    }
}

fn mat_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

fn generate_table() -> [[(Phase, u8); 4]; 4] {
    let mut table = [[(Phase::ONE, 0u8); 4]; 4];
    for a in 0..4u8 {
        for b in 0..4u8 {
            let m = mat_mul(&pauli_matrix(a), &pauli_matrix(b));
            let mut found = None;
            for c in 0..4u8 {
                // normalized pairing tr(σ_c^* M) / 2; σ_c is Hermitian
                let s = pauli_matrix(c);
                let mut lam = Complex64::new(0.0, 0.0);
                for r in 0..2 {
                    for k in 0..2 {
                        lam += s[r][k].conj() * m[r][k];
                    }
                }
                lam /= 2.0;
                if lam.norm() > 0.5 {
                    let ph = (0..4u8)
                        .map(Phase)
                        .find(|p| (p.to_complex() - lam).norm() < 1e-12)
                        .expect("product of basis matrices has a unit phase");
                    found = Some((ph, c));
                }
            }
            table[a as usize][b as usize] = found.expect("product is proportional to a basis matrix");
        }
    }
    table
}

/// σ_a σ_b = phase · σ_c, from a table generated once from the matrices above.
pub fn single_site_product(a: u8, b: u8) -> (Phase, u8) {
    static TABLE: OnceLock<[[(Phase, u8); 4]; 4]> = OnceLock::new();
    TABLE.get_or_init(generate_table)[a as usize][b as usize]
}

#[inline]
fn snap(c: Complex64) -> Option<Complex64> {
    let re = if c.re.abs() < STORAGE_EPS { 0.0 } else { c.re };
    let im = if c.im.abs() < STORAGE_EPS { 0.0 } else { c.im };
    if re == 0.0 && im == 0.0 {
        None
    } else {
        Some(Complex64::new(re, im))
    }
}

/// T = Σ_s T̂(s) σ_s stored sparsely in canonical form.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    n: usize,
    terms: BTreeMap<PauliIndex, Complex64>,
}

impl Observable {
    pub fn zero(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Observable {
            n,
            terms: BTreeMap::new(),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut o = Self::zero(n)?;
        o.terms
            .insert(PauliIndex::identity(n)?, Complex64::new(1.0, 0.0));
        Ok(o)
    }

    pub fn pauli(s: PauliIndex) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, Complex64::new(1.0, 0.0));
        Observable { n: s.n(), terms }
    }

    /// Sums repeated indices, then canonicalizes.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliIndex, Complex64)>,
    {
        check_n(n)?;
        let mut acc: BTreeMap<PauliIndex, Complex64> = BTreeMap::new();
        for (s, c) in terms {
            if s.n() != n {
                return Err(Error::SiteMismatch(n, s.n()));
            }
            *acc.entry(s).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        Ok(Self::from_map_unchecked(n, acc))
    }

    pub fn from_real_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliIndex, f64)>,
    {
        Self::from_terms(n, terms.into_iter().map(|(s, c)| (s, Complex64::new(c, 0.0))))
    }

    pub(crate) fn from_map_unchecked(n: usize, map: BTreeMap<PauliIndex, Complex64>) -> Self {
        let terms = map
            .into_iter()
            .filter_map(|(s, c)| snap(c).map(|c| (s, c)))
            .collect();
        Observable { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<PauliIndex, Complex64> {
        &self.terms
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// T̂(s); zero when absent.
    pub fn coefficient(&self, s: &PauliIndex) -> Complex64 {
        self.terms.get(s).copied().unwrap_or_default()
    }

    /// Exact in canonical form: every stored coefficient is real.
    pub fn is_hermitian(&self) -> bool {
        self.terms.values().all(|c| c.im == 0.0)
    }

    /// Keeps terms for which `f` returns a nonzero multiplier, scaling by it.
    pub fn map_terms<F>(&self, mut f: F) -> Observable
    where
        F: FnMut(&PauliIndex, Complex64) -> Complex64,
    {
        let map = self.terms.iter().map(|(s, &c)| (*s, f(s, c))).collect();
        Self::from_map_unchecked(self.n, map)
    }

    /// Real multiplier per index, the form every coefficient-diagonal operator takes.
    pub fn multiplier<F>(&self, mut f: F) -> Observable
    where
        F: FnMut(&PauliIndex) -> f64,
    {
        self.map_terms(|s, c| c * f(s))
    }

    pub fn filter<F>(&self, mut keep: F) -> Observable
    where
        F: FnMut(&PauliIndex) -> bool,
    {
        Observable {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(s, _)| keep(s))
                .map(|(s, c)| (*s, *c))
                .collect(),
        }
    }

    fn check_same(&self, other: &Observable) -> Result<()> {
        if self.n != other.n {
            return Err(Error::SiteMismatch(self.n, other.n));
        }
        Ok(())
    }

    pub fn add(&self, other: &Observable) -> Result<Observable> {
        self.check_same(other)?;
        let mut acc = self.terms.clone();
        for (s, c) in &other.terms {
            *acc.entry(*s).or_default() += c;
        }
        Ok(Self::from_map_unchecked(self.n, acc))
    }

    pub fn sub(&self, other: &Observable) -> Result<Observable> {
        self.add(&other.scale_real(-1.0))
    }

    pub fn scale(&self, c: Complex64) -> Observable {
        self.map_terms(|_, v| v * c)
    }

    pub fn scale_real(&self, c: f64) -> Observable {
        self.map_terms(|_, v| v * c)
    }

    pub fn adjoint(&self) -> Observable {
        Observable {
            n: self.n,
            terms: self.terms.iter().map(|(s, c)| (*s, c.conj())).collect(),
        }
    }

    /// Σ_s conj(Ŝ(s)) T̂(s).
    pub fn inner_product(&self, other: &Observable) -> Result<Complex64> {
        self.check_same(other)?;
        let (small, large, swap) = if self.terms.len() <= other.terms.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, a) in &small.terms {
            if let Some(b) = large.terms.get(s) {
                acc += if swap { b.conj() * a } else { a.conj() * b };
            }
        }
        Ok(acc)
    }

    /// Normalized trace, i.e. T̂(0…0).
    pub fn trace(&self) -> Complex64 {
        match PauliIndex::identity(self.n) {
            Ok(id) => self.coefficient(&id),
            Err(_) => Complex64::default(),
        }
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|s| s.support_size()).max().unwrap_or(0)
    }

    /// ‖T‖_2² by Parseval.
    pub fn norm2_sq(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum()
    }

    /// Σ_{s≠0} |T̂(s)|².
    pub fn variance(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(s, _)| s.code() != 0)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// Largest coefficient deviation |Ŝ(s) − T̂(s)| over the union of supports.
    pub fn max_deviation(&self, other: &Observable) -> Result<f64> {
        self.check_same(other)?;
        let mut m: f64 = 0.0;
        for (s, a) in &self.terms {
            m = m.max((a - other.coefficient(s)).norm());
        }
        for (s, b) in &other.terms {
            if !self.terms.contains_key(s) {
                m = m.max(b.norm());
            }
        }
        Ok(m)
    }

    pub fn multiply(&self, other: &Observable) -> Result<Observable> {
        self.check_same(other)?;
        let mut acc: BTreeMap<PauliIndex, Complex64> = BTreeMap::new();
        for (s, a) in &self.terms {
            for (t, b) in &other.terms {
                let (ph, u) = s.product(t)?;
                *acc.entry(u).or_default() += ph.to_complex() * a * b;
            }
        }
        Ok(Self::from_map_unchecked(self.n, acc))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("observable serializes")
    }

    pub fn from_json(s: &str) -> Result<Observable> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    s: Vec<u8>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct ObservableRepr {
    n: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for Observable {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ObservableRepr {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(s, c)| TermRepr {
                    s: s.digits(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ObservableRepr::deserialize(d)?;
        let mut terms = Vec::with_capacity(repr.terms.len());
        for t in repr.terms {
            let s = PauliIndex::new(&t.s).map_err(serde::de::Error::custom)?;
            terms.push((s, Complex64::new(t.re, t.im)));
        }
        Observable::from_terms(repr.n, terms).map_err(serde::de::Error::custom)
    }
}
