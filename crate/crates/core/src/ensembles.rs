//! Reproducible instance families.
//!
//! Every instance gets its own ChaCha stream derived from (seed, index), so
//! instances can be drawn in parallel and still come out identical.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseOperator, DENSE_CAP};
use crate::error::{Error, Result};
use crate::pauli::{Observable, PauliIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    PauliString,
    Classical,
    Subcube,
    RandomProjection,
    RandomBoolean,
    RandomContraction,
    RandomLowDegree,
    RemarkP2,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 8] = [
        EnsembleKind::PauliString,
        EnsembleKind::Classical,
        EnsembleKind::Subcube,
        EnsembleKind::RandomProjection,
        EnsembleKind::RandomBoolean,
        EnsembleKind::RandomContraction,
        EnsembleKind::RandomLowDegree,
        EnsembleKind::RemarkP2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::PauliString => "pauli_string",
            EnsembleKind::Classical => "classical",
            EnsembleKind::Subcube => "subcube",
            EnsembleKind::RandomProjection => "random_projection",
            EnsembleKind::RandomBoolean => "random_boolean",
            EnsembleKind::RandomContraction => "random_contraction",
            EnsembleKind::RandomLowDegree => "random_low_degree",
            EnsembleKind::RemarkP2 => "remark_p2",
        }
    }
}

/// Named Boolean functions on x ∈ {0,1}^n, embedded as diagonal projections.
/// Digit x_j = 0 is the +1 eigenvector of σ1 at site j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalFunction {
    /// [x_0 = 0], i.e. (𝟙 + σ_1^{(0)})/2.
    Dictator,
    /// [x_0 + … + x_{k−1} even].
    Parity,
    /// [more zeros than ones], n odd.
    Majority,
    /// OR over consecutive tribes of width w of AND(x_j = 0).
    Tribes,
}

impl ClassicalFunction {
    pub const ALL: [ClassicalFunction; 4] = [
        ClassicalFunction::Dictator,
        ClassicalFunction::Parity,
        ClassicalFunction::Majority,
        ClassicalFunction::Tribes,
    ];
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    /// Projection rank r (random_projection, random_boolean); default 2^{n−1}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Subcube codimension or parity width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Degree cap for random_low_degree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<ClassicalFunction>,
    /// Fixed Pauli string for pauli_string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<Vec<u8>>,
    /// Emit 2P − 𝟙 instead of the projection P (classical, subcube).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed: Option<bool>,
    /// Tribe width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    #[serde(default)]
    pub params: EnsembleParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub observable: Observable,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize, seed: u64, count: usize) -> Self {
        EnsembleSpec {
            kind,
            n,
            params: EnsembleParams::default(),
            seed,
            count,
        }
    }

    pub fn with_params(mut self, params: EnsembleParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if n == 0 {
            return bad("ensemble n must be at least 1".into());
        }
        if n > DENSE_CAP {
            return Err(Error::DenseCap { n, cap: DENSE_CAP });
        }
        if let Some(r) = self.params.rank {
            if r == 0 || r > 1 << n {
                return bad(format!("rank {r} outside 1..=2^{n}"));
            }
        }
        if let Some(k) = self.params.k {
            if k > n {
                return bad(format!("k = {k} exceeds n = {n}"));
            }
        }
        if let Some(d) = self.params.degree {
            if d > n {
                return bad(format!("degree {d} exceeds n = {n}"));
            }
        }
        if let Some(w) = self.params.width {
            if w == 0 || w > n {
                return bad(format!("tribe width {w} outside 1..=n"));
            }
        }
        if let Some(ix) = &self.params.index {
            if ix.len() != n {
                return bad(format!("index has {} digits, n = {n}", ix.len()));
            }
            PauliIndex::new(ix)?;
        }
        if self.kind == EnsembleKind::Classical
            && self.params.function == Some(ClassicalFunction::Majority)
            && n % 2 == 0
        {
            return bad(format!("majority needs odd n, got {n}"));
        }
        Ok(())
    }

    pub fn instance_id(&self, i: usize) -> String {
        format!("{}-n{}-seed{}-{}", self.kind.name(), self.n, self.seed, i)
    }
}

/// Independent stream for instance `i`.
pub fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

pub fn make(spec: &EnsembleSpec) -> Result<Vec<Instance>> {
    spec.validate()?;
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(spec.seed, i);
            Ok(Instance {
                id: spec.instance_id(i),
                observable: make_one(spec, i, &mut rng)?,
            })
        })
        .collect()
}

fn make_one(spec: &EnsembleSpec, i: usize, rng: &mut ChaCha8Rng) -> Result<Observable> {
    let n = spec.n;
    let p = &spec.params;
    let signed = p.signed.unwrap_or(false);
    match spec.kind {
        EnsembleKind::PauliString => match &p.index {
            Some(ix) => Ok(Observable::pauli(PauliIndex::new(ix)?)),
            None => {
                let mut digits: Vec<u8> = (0..n).map(|_| rng.random_range(0..4u8)).collect();
                if digits.iter().all(|&d| d == 0) {
                    let j = rng.random_range(0..n);
                    digits[j] = rng.random_range(1..4u8);
                }
                Ok(Observable::pauli(PauliIndex::new(&digits)?))
            }
        },
        EnsembleKind::Classical => {
            let f = match p.function {
                Some(f) => f,
                None => {
                    let pool: Vec<ClassicalFunction> = ClassicalFunction::ALL
                        .into_iter()
                        .filter(|f| *f != ClassicalFunction::Majority || n % 2 == 1)
                        .collect();
                    pool[i % pool.len()]
                }
            };
            let k = p.k.unwrap_or(n).max(1);
            let w = p.width.unwrap_or(2.min(n));
            let table: Vec<bool> = (0..1usize << n)
                .map(|x| evaluate_classical(f, n, k, w, x))
                .collect();
            signed_if(classical_projection(n, &table)?, signed)
        }
        EnsembleKind::Subcube => {
            let k = p.k.unwrap_or(1 + i % n);
            signed_if(subcube(n, k)?, signed)
        }
        EnsembleKind::RandomProjection => {
            let r = p.rank.unwrap_or(1 << (n - 1));
            random_projection(n, r, rng)
        }
        EnsembleKind::RandomBoolean => {
            let r = p.rank.unwrap_or(1 << (n - 1));
            signed_if(random_projection(n, r, rng)?, true)
        }
        EnsembleKind::RandomContraction => random_contraction(n, rng),
        EnsembleKind::RandomLowDegree => {
            let d = p.degree.unwrap_or(2.min(n));
            random_low_degree(n, d, rng)
        }
        EnsembleKind::RemarkP2 => remark_p2(n),
    }
}

fn signed_if(t: Observable, signed: bool) -> Result<Observable> {
    if !signed {
        return Ok(t);
    }
    t.scale_real(2.0).sub(&Observable::identity(t.n())?)
}

/// Bit j of x is the value x_j (site j).
fn evaluate_classical(f: ClassicalFunction, n: usize, k: usize, w: usize, x: usize) -> bool {
    let bit = |j: usize| (x >> j) & 1;
    match f {
        ClassicalFunction::Dictator => bit(0) == 0,
        ClassicalFunction::Parity => (0..k).map(bit).sum::<usize>() % 2 == 0,
        ClassicalFunction::Majority => {
            let ones: usize = (0..n).map(bit).sum();
            2 * ones < n
        }
        ClassicalFunction::Tribes => (0..n)
            .step_by(w)
            .any(|start| (start..(start + w).min(n)).all(|j| bit(j) == 0)),
    }
}

/// Diagonal projection onto {x : table[x]}; coefficients by a Walsh–Hadamard
/// transform on the {0,1}-digit sector.
pub fn classical_projection(n: usize, table: &[bool]) -> Result<Observable> {
    if table.len() != 1 << n {
        return Err(Error::InvalidParameter(format!(
            "truth table has {} rows, expected 2^{n}",
            table.len()
        )));
    }
    let mut v: Vec<f64> = table.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (1usize << n) as f64;
    let mut terms = Vec::new();
    for (mask, c) in v.into_iter().enumerate() {
        if c != 0.0 {
            let digits: Vec<u8> = (0..n).map(|j| ((mask >> j) & 1) as u8).collect();
            terms.push((PauliIndex::new(&digits)?, c * scale));
        }
    }
    Observable::from_real_terms(n, terms)
}

/// ∏_{j<k} (𝟙 + σ_1^{(j)})/2, expanded in closed form.
pub fn subcube(n: usize, k: usize) -> Result<Observable> {
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    let c = 2f64.powi(-(k as i32));
    let terms = (0..1usize << k).map(|mask| {
        let digits: Vec<u8> = (0..n)
            .map(|j| if j < k { ((mask >> j) & 1) as u8 } else { 0 })
            .collect();
        (PauliIndex::new(&digits).expect("binary digits"), c)
    });
    Observable::from_real_terms(n, terms)
}

/// ½𝟙 + (1/(2n)) Σ_j σ_1^{(j)}.
pub fn remark_p2(n: usize) -> Result<Observable> {
    let mut terms = vec![(PauliIndex::identity(n)?, 0.5)];
    for j in 0..n {
        terms.push((PauliIndex::identity(n)?.with_digit(j, 1), 1.0 / (2.0 * n as f64)));
    }
    Observable::from_real_terms(n, terms)
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// First `r` columns of a Haar unitary: QR of a complex Gaussian matrix with
/// the diagonal of R made positive real.
pub fn haar_isometry(dim: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(dim, r, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rm = qr.r();
    for c in 0..r {
        let d = rm[(c, c)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, c)] *= ph;
        }
    }
    q
}

pub fn random_projection(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<Observable> {
    let dim = 1usize << n;
    if r == 0 || r > dim {
        return Err(Error::InvalidParameter(format!("rank {r} outside 1..=2^{n}")));
    }
    let q = haar_isometry(dim, r, rng);
    let p = &q * q.adjoint();
    let dense = DenseOperator::from_matrix(n, p)?;
    Ok(hermitian_part(&dense.analyze()))
}

/// Drops imaginary round-off from an analysis of a Hermitian matrix.
fn hermitian_part(t: &Observable) -> Observable {
    t.map_terms(|_, c| Complex64::new(c.re, 0.0))
}

/// (H − λ_min)/(λ_max − λ_min) for a Gaussian Hermitian H.
pub fn random_contraction(n: usize, rng: &mut ChaCha8Rng) -> Result<Observable> {
    let dim = 1usize << n;
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let h = hermitian_part(&DenseOperator::from_matrix(n, h)?.analyze());
    let ev = DenseOperator::synthesize(&h)?.eigenvalues()?.to_vec();
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if hi - lo <= 0.0 {
        return Observable::zero(n);
    }
    Ok(h
        .sub(&Observable::identity(n)?.scale_real(lo))?
        .scale_real(1.0 / (hi - lo)))
}

/// N(0,1) real coefficients on every |supp(s)| ≤ d, normalized to ‖T‖_2 = 1.
pub fn random_low_degree(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Observable> {
    let mut terms = Vec::new();
    for code in 0..(1u64 << (2 * n)) {
        let s = PauliIndex::from_code(n, code)?;
        if s.support_size() <= d {
            let c: f64 = rng.sample(StandardNormal);
            terms.push((s, c));
        }
    }
    let t = Observable::from_real_terms(n, terms)?;
    let norm = t.norm2_sq().sqrt();
    Ok(t.scale_real(1.0 / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercube::{influence, is_projection, is_quantum_boolean, total_influence};
    use approx::assert_abs_diff_eq;

    #[test]
    fn remark_p2_values() {
        let t = remark_p2(4).unwrap();
        assert_abs_diff_eq!(t.variance(), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(total_influence(&t, 2.0).unwrap(), 1.0 / 16.0, epsilon = 1e-15);
        for j in 0..4 {
            assert_abs_diff_eq!(influence(&t, j, 2.0).unwrap(), 1.0 / 64.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn full_subcube_is_rank_one() {
        for n in 1..=5 {
            let t = subcube(n, n).unwrap();
            let ev = DenseOperator::synthesize(&t).unwrap().eigenvalues().unwrap().to_vec();
            assert_abs_diff_eq!(t.trace().re, 2f64.powi(-(n as i32)), epsilon = 1e-15);
            assert_abs_diff_eq!(ev[ev.len() - 1], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ev[ev.len() - 2], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn subcube_matches_classical_and() {
        let n = 4;
        for k in 0..=n {
            let table: Vec<bool> = (0..1usize << n).map(|x| x & ((1 << k) - 1) == 0).collect();
            let c = classical_projection(n, &table).unwrap();
            assert!(c.max_deviation(&subcube(n, k).unwrap()).unwrap() < 1e-15);
        }
    }

    #[test]
    fn dictator_matches_closed_form() {
        let spec = EnsembleSpec::new(EnsembleKind::Classical, 3, 0, 1).with_params(EnsembleParams {
            function: Some(ClassicalFunction::Dictator),
            ..Default::default()
        });
        let t = &make(&spec).unwrap()[0].observable;
        let expected = Observable::from_real_terms(
            3,
            [
                (PauliIndex::new(&[0, 0, 0]).unwrap(), 0.5),
                (PauliIndex::new(&[1, 0, 0]).unwrap(), 0.5),
            ],
        )
        .unwrap();
        assert_eq!(t, &expected);
    }

    #[test]
    fn balanced_projection_variance() {
        let spec = EnsembleSpec::new(EnsembleKind::RandomProjection, 4, 3, 4);
        for inst in make(&spec).unwrap() {
            assert_abs_diff_eq!(inst.observable.variance(), 0.25, epsilon = 1e-10);
            assert!(is_projection(&inst.observable).unwrap());
            assert!(inst.observable.is_hermitian());
        }
    }

    #[test]
    fn booleans_are_quantum_boolean() {
        let spec = EnsembleSpec::new(EnsembleKind::RandomBoolean, 3, 8, 4).with_params(EnsembleParams {
            rank: Some(3),
            ..Default::default()
        });
        for inst in make(&spec).unwrap() {
            assert!(is_quantum_boolean(&inst.observable).unwrap());
        }
    }

    #[test]
    fn contraction_in_unit_interval() {
        let spec = EnsembleSpec::new(EnsembleKind::RandomContraction, 3, 1, 3);
        for inst in make(&spec).unwrap() {
            let ev = DenseOperator::synthesize(&inst.observable).unwrap().eigenvalues().unwrap().to_vec();
            assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(ev[ev.len() - 1], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn low_degree_normalized() {
        let spec = EnsembleSpec::new(EnsembleKind::RandomLowDegree, 4, 1, 3).with_params(EnsembleParams {
            degree: Some(2),
            ..Default::default()
        });
        for inst in make(&spec).unwrap() {
            assert_abs_diff_eq!(inst.observable.norm2_sq(), 1.0, epsilon = 1e-12);
            assert!(inst.observable.degree() <= 2);
        }
    }

    #[test]
    fn deterministic_and_streams_differ() {
        let spec = EnsembleSpec::new(EnsembleKind::RandomProjection, 3, 42, 3);
        let a = make(&spec).unwrap();
        let b = make(&spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].observable, a[1].observable);
        assert_eq!(a[2].id, "random_projection-n3-seed42-2");
    }

    #[test]
    fn classical_embeddings_match_brute_force() {
        // influence and variance of the diagonal embedding against direct
        // evaluation on {−1,1}^n: Inf_j = P[f(x) ≠ f(x ⊕ e_j)] / 4 for f ∈ {0,1}
        for n in [3usize, 5] {
            for f in ClassicalFunction::ALL {
                if f == ClassicalFunction::Majority && n % 2 == 0 {
                    continue;
                }
                let table: Vec<bool> = (0..1usize << n).map(|x| evaluate_classical(f, n, n, 2, x)).collect();
                let t = classical_projection(n, &table).unwrap();
                assert!(is_projection(&t).unwrap());
                let mean = table.iter().filter(|&&b| b).count() as f64 / table.len() as f64;
                assert_abs_diff_eq!(t.variance(), mean - mean * mean, epsilon = 1e-14);
                for j in 0..n {
                    let flips = (0..1usize << n).filter(|&x| table[x] != table[x ^ (1 << j)]).count();
                    let expected = flips as f64 / (1usize << n) as f64 / 4.0;
                    assert_abs_diff_eq!(influence(&t, j, 2.0).unwrap(), expected, epsilon = 1e-14);
                    assert_abs_diff_eq!(influence(&t, j, 1.0).unwrap(), 2.0 * expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn classical_embeddings_commute() {
        let n = 3;
        let ts: Vec<Observable> = ClassicalFunction::ALL
            .iter()
            .map(|&f| {
                let table: Vec<bool> = (0..1usize << n).map(|x| evaluate_classical(f, n, 2, 2, x)).collect();
                classical_projection(n, &table).unwrap()
            })
            .collect();
        for a in &ts {
            for b in &ts {
                let ab = a.multiply(b).unwrap();
                let ba = b.multiply(a).unwrap();
                assert!(ab.max_deviation(&ba).unwrap() < 1e-15);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut spec = EnsembleSpec::new(EnsembleKind::RandomProjection, 3, 0, 1);
        spec.params.rank = Some(9);
        assert!(make(&spec).is_err());
        let spec = EnsembleSpec::new(EnsembleKind::Classical, 4, 0, 1).with_params(EnsembleParams {
            function: Some(ClassicalFunction::Majority),
            ..Default::default()
        });
        assert!(make(&spec).is_err());
        assert!(make(&EnsembleSpec::new(EnsembleKind::Subcube, 0, 0, 1)).is_err());
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"kind":"nope","n":2}"#).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let js = r#"{"kind":"subcube","n":5,"params":{"k":3},"seed":7,"count":2}"#;
        let spec: EnsembleSpec = serde_json::from_str(js).unwrap();
        assert_eq!(spec.params.k, Some(3));
        let insts = make(&spec).unwrap();
        assert_eq!(insts.len(), 2);
        assert!(insts[0].observable.max_deviation(&subcube(5, 3).unwrap()).unwrap() < 1e-15);
    }
}
