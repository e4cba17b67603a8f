//! Random subsets J ~ μ_δ (each site independently with probability δ),
//! exact enumeration, and the expectation identities built on them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensembles::instance_rng;
use crate::error::{Error, Result};
use crate::hypercube::{conditional_expectation, delta_power, weight_approx, SubsetJ};
use crate::pauli::{Observable, PauliIndex};
use crate::record::{params, CheckRecord};

/// Hard limit on 2^n enumeration.
pub const ENUMERATION_CAP: usize = 20;
/// Largest n handled by exact enumeration in the checks; Monte Carlo above.
pub const EXACT_LIMIT: usize = 16;
pub const MC_SAMPLES: usize = 1 << 14;
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetDistribution {
    n: usize,
    delta: f64,
}

impl SubsetDistribution {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta {delta} outside [0, 1]")));
        }
        if n > 63 {
            return Err(Error::TooManySites(n));
        }
        Ok(SubsetDistribution { n, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// δ^{|J|}(1 − δ)^{n − |J|}.
    pub fn probability(&self, set: &SubsetJ) -> f64 {
        let k = set.len() as i32;
        self.delta.powi(k) * (1.0 - self.delta).powi(self.n as i32 - k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsetJ {
        let mut mask = 0u64;
        for j in 0..self.n {
            if rng.random::<f64>() < self.delta {
                mask |= 1 << j;
            }
        }
        SubsetJ::from_mask(self.n, mask).expect("mask within n")
    }

    /// All 2^n subsets in mask order with their weights; `cap` bounds n.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<(SubsetJ, f64)>> {
        let cap = cap.min(ENUMERATION_CAP);
        if self.n > cap {
            return Err(Error::CapExceeded { n: self.n, cap });
        }
        Ok((0..1u64 << self.n)
            .map(|mask| {
                let set = SubsetJ::from_mask(self.n, mask).expect("mask within n");
                (set, self.probability(&set))
            })
            .collect())
    }
}

/// Pairwise sum over a fixed binary tree; the result does not depend on the
/// thread schedule.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let (a, b) = xs.split_at(len / 2);
            let (x, y) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
            x + y
        }
    }
}

fn pairwise_sum_observables(xs: &[Observable]) -> Result<Observable> {
    match xs.len() {
        0 => Err(Error::InvalidParameter("empty observable sum".into())),
        1 => Ok(xs[0].clone()),
        len => {
            let (a, b) = xs.split_at(len / 2);
            let (x, y) = rayon::join(|| pairwise_sum_observables(a), || pairwise_sum_observables(b));
            x?.add(&y?)
        }
    }
}

/// Σ_J μ_δ(J)·E_J(T) by exact enumeration.
pub fn averaged_conditional_expectation(t: &Observable, delta: f64) -> Result<Observable> {
    let dist = SubsetDistribution::new(t.n(), delta)?;
    let subsets = dist.enumerate(EXACT_LIMIT)?;
    let parts: Vec<Observable> = subsets
        .par_iter()
        .map(|(set, w)| Ok(conditional_expectation(t, set)?.scale_real(*w)))
        .collect::<Result<_>>()?;
    pairwise_sum_observables(&parts)
}

/// δ^L(T) against the μ_δ-average of E_J(T); lhs is the max coefficient deviation.
pub fn check_tav(t: &Observable, delta: f64) -> Result<CheckRecord> {
    let lhs = delta_power(t, delta)?;
    let rhs = averaged_conditional_expectation(t, delta)?;
    let dev = lhs.max_deviation(&rhs)?;
    Ok(CheckRecord::compare("tav", params([("delta", delta)]), dev, IDENTITY_TOL))
}

/// μ_{1/d}{J : |supp(s) ∩ J| = 1} = (1 − 1/d)^{m−1}·m/d with m = |supp(s)|.
pub fn single_hit_probability(s: &PauliIndex, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("single-hit probability needs d >= 1".into()));
    }
    let m = s.support_size();
    if m == 0 {
        return Ok(0.0);
    }
    let d = d as f64;
    Ok((1.0 - 1.0 / d).powi(m as i32 - 1) * (m as f64 / d))
}

fn hits_once(s: &PauliIndex, set: &SubsetJ) -> bool {
    (s.support_mask() & set.mask()).count_ones() == 1
}

/// The same probability by summing μ_{1/d} over all subsets.
pub fn single_hit_by_enumeration(s: &PauliIndex, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("single-hit probability needs d >= 1".into()));
    }
    let dist = SubsetDistribution::new(s.n(), 1.0 / d as f64)?;
    let ws: Vec<f64> = dist
        .enumerate(EXACT_LIMIT)?
        .into_iter()
        .filter(|(set, _)| hits_once(s, set))
        .map(|(_, w)| w)
        .collect();
    Ok(pairwise_sum(&ws))
}

/// Σ_{j∈J} ‖R_j^J T‖_2²: the mass on indices whose support meets J exactly once.
pub fn restricted_mass(t: &Observable, set: &SubsetJ) -> f64 {
    t.iter().filter(|(s, _)| hits_once(s, set)).map(|(_, c)| c.norm_sqr()).sum()
}

/// E_J[Σ_{j∈J} ‖R_j^J T‖_2²] from the spectrum.
pub fn zrr_closed_form(t: &Observable, d: usize) -> Result<f64> {
    let mut acc = 0.0;
    for (s, c) in t.iter() {
        acc += c.norm_sqr() * single_hit_probability(s, d)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZrrOutcome {
    pub record: CheckRecord,
    pub expectation: f64,
    /// A subset whose restricted mass is at least the mean.
    pub witness: SubsetJ,
    pub witness_mass: f64,
}

/// (1/8)W_{≈d}(T) ≤ E_J[Σ_{j∈J}‖R_j^J T‖_2²] with J ~ μ_{1/d}.
///
/// The closed form is cross-checked by enumeration for n ≤ 16 and by a
/// seeded Monte Carlo estimate (six standard errors) beyond.
pub fn zrr_expectation(t: &Observable, d: usize, seed: u64) -> Result<ZrrOutcome> {
    if d == 0 {
        return Err(Error::InvalidParameter("zrr needs d >= 1".into()));
    }
    let n = t.n();
    let expectation = zrr_closed_form(t, d)?;
    let lhs = weight_approx(t, d)? / 8.0;
    let mut record = CheckRecord::compare("zrr", params([("d", d as f64)]), lhs, expectation);
    let dist = SubsetDistribution::new(n, 1.0 / d as f64)?;

    let (witness, witness_mass) = if n <= EXACT_LIMIT {
        let subsets = dist.enumerate(EXACT_LIMIT)?;
        let masses: Vec<(f64, f64)> = subsets
            .par_iter()
            .map(|(set, w)| (w * restricted_mass(t, set), restricted_mass(t, set)))
            .collect();
        let weighted: Vec<f64> = masses.iter().map(|m| m.0).collect();
        let enumerated = pairwise_sum(&weighted);
        let dev = (enumerated - expectation).abs();
        if dev > IDENTITY_TOL * expectation.max(1.0) {
            record = record.force_violated(format!("enumeration differs from closed form by {dev:e}"));
        }
        // heaviest subset with positive weight; ties go to the smallest mask
        let best = subsets
            .iter()
            .zip(&masses)
            .filter(|((_, w), _)| *w > 0.0)
            .fold(None::<(SubsetJ, f64)>, |acc, ((set, _), m)| match acc {
                Some((_, bm)) if bm >= m.1 => acc,
                _ => Some((*set, m.1)),
            })
            .expect("some subset has positive weight");
        best
    } else {
        let mut rng: ChaCha8Rng = instance_rng(seed, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut best: Option<(SubsetJ, f64)> = None;
        for _ in 0..MC_SAMPLES {
            let set = dist.sample(&mut rng);
            let m = restricted_mass(t, &set);
            sum += m;
            sum_sq += m * m;
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((set, m));
            }
        }
        let k = MC_SAMPLES as f64;
        let mean = sum / k;
        let se = ((sum_sq / k - mean * mean).max(0.0) / (k - 1.0)).sqrt();
        record = record.with_note(format!("monte carlo mean {mean:e} se {se:e}"));
        if (mean - expectation).abs() > 6.0 * se + IDENTITY_TOL {
            record = record.force_violated("monte carlo estimate disagrees with closed form");
        }
        best.expect("at least one sample")
    };
    if witness_mass < expectation * (1.0 - 1e-12) - IDENTITY_TOL {
        record = record.force_violated("no witness subset reaches the mean");
    }
    Ok(ZrrOutcome {
        record,
        expectation,
        witness,
        witness_mass,
    })
}
