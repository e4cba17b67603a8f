//! Random-restart hill climbing on the constant ratio of one check.

use std::collections::BTreeMap;

use num_complex::Complex64;
use qhypercube::dense::DenseOperator;
use qhypercube::ensembles::{instance_rng, Instance};
use qhypercube::record::{CheckRecord, Status};
use qhypercube::suite::{lookup, run_check_ctx, Hypothesis, InstanceContext};
use qhypercube::{Observable, PauliIndex, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::WitnessConfig;

const GROW: f64 = 1.5;
const SHRINK: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub check_id: String,
    pub start: String,
    pub ratio: f64,
    pub initial_ratio: f64,
    pub accepted: usize,
    pub observable: Observable,
    pub record: CheckRecord,
}

/// Hermitian part (T + T^*)/2.
fn hermitian_part(t: &Observable) -> Result<Observable> {
    Ok(t.add(&t.adjoint())?.scale_real(0.5))
}

fn clip(t: &Observable, lo: f64, hi: f64) -> Result<Observable> {
    let d = DenseOperator::synthesize(&hermitian_part(t)?)?;
    Ok(d.functional_calculus(|x| x.clamp(lo, hi))?.analyze())
}

/// Nearest member of the hypothesis class, in the spectral sense.
pub fn repair(h: Hypothesis, t: &Observable) -> Result<Observable> {
    let n = t.n();
    match h {
        Hypothesis::None => Ok(t.clone()),
        Hypothesis::L2Ball => {
            let norm = t.norm2_sq().sqrt();
            Ok(if norm > 1.0 { t.scale_real(1.0 / norm) } else { t.clone() })
        }
        Hypothesis::Contraction => {
            if t.is_hermitian() {
                return clip(t, -1.0, 1.0);
            }
            let op = DenseOperator::synthesize(t)?.schatten_norm(f64::INFINITY)?;
            Ok(if op > 1.0 { t.scale_real(1.0 / op) } else { t.clone() })
        }
        Hypothesis::Positive => clip(t, 0.0, f64::INFINITY),
        Hypothesis::UnitInterval => clip(t, 0.0, 1.0),
        Hypothesis::Projection => {
            let d = DenseOperator::synthesize(&hermitian_part(t)?)?;
            Ok(d.functional_calculus(|x| if x > 0.5 { 1.0 } else { 0.0 })?.analyze())
        }
        Hypothesis::BalancedProjection => {
            let d = DenseOperator::synthesize(&hermitian_part(t)?)?;
            let (_, vecs) = d.eigen()?;
            let dim = d.dim();
            let top = vecs.columns(dim / 2, dim - dim / 2).into_owned();
            let p = &top * top.adjoint();
            Ok(DenseOperator::from_matrix(n, p)?.analyze())
        }
    }
}

/// A random direction of unit L_2 norm over every Pauli string.
fn direction(n: usize, hermitian: bool, rng: &mut ChaCha8Rng) -> Result<Observable> {
    let mut terms = Vec::with_capacity(1 << (2 * n));
    for code in 0..1u64 << (2 * n) {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if hermitian { 0.0 } else { rng.sample(StandardNormal) };
        terms.push((PauliIndex::from_code(n, code)?, Complex64::new(re, im)));
    }
    let g = Observable::from_terms(n, terms)?;
    let norm = g.norm2_sq().sqrt();
    Ok(g.scale_real(1.0 / norm))
}

fn score(id: &str, t: &Observable, params: &BTreeMap<String, f64>) -> Result<(f64, CheckRecord)> {
    let ctx = InstanceContext::new("witness", t.clone());
    let e = run_check_ctx(id, &ctx, params)?;
    let s = match e.record.status {
        Status::Holds | Status::Violated => e.constant_ratio.or(e.record.ratio).unwrap_or(f64::NEG_INFINITY),
        _ => f64::NEG_INFINITY,
    };
    Ok((if s.is_nan() { f64::NEG_INFINITY } else { s }, e.record))
}

fn climb(
    id: &str,
    h: Hypothesis,
    start: &Instance,
    params: &BTreeMap<String, f64>,
    cfg: &WitnessConfig,
    mut rng: ChaCha8Rng,
) -> Result<SearchResult> {
    let n = start.observable.n();
    let mut best = repair(h, &start.observable)?;
    let (mut best_score, mut best_record) = score(id, &best, params)?;
    let initial_ratio = best_score;
    let hermitian = best.is_hermitian() || h != Hypothesis::None && h != Hypothesis::L2Ball && h != Hypothesis::Contraction;
    let mut step = cfg.step;
    let mut accepted = 0;
    for _ in 0..cfg.steps {
        if step < cfg.min_step {
            break;
        }
        let g = direction(n, hermitian, &mut rng)?;
        let cand = repair(h, &best.add(&g.scale_real(step))?)?;
        let (s, rec) = score(id, &cand, params)?;
        if s > best_score {
            best = cand;
            best_score = s;
            best_record = rec;
            accepted += 1;
            step = (step * GROW).min(cfg.step * 4.0);
        } else {
            step *= SHRINK;
        }
    }
    Ok(SearchResult {
        check_id: id.to_string(),
        start: start.id.clone(),
        ratio: best_score,
        initial_ratio,
        accepted,
        observable: best,
        record: best_record.with_instance(&format!("witness-from-{}", start.id)),
    })
}

/// One climb per start; restarts draw from independent streams of `seed`.
pub fn search(
    id: &str,
    starts: &[Instance],
    params: &BTreeMap<String, f64>,
    cfg: &WitnessConfig,
    seed: u64,
) -> Result<Option<SearchResult>> {
    let info = lookup(id)?;
    let results = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| climb(info.id, info.hypothesis, s, params, cfg, instance_rng(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<SearchResult> = None;
    for r in results {
        if r.ratio.is_finite() && best.as_ref().is_none_or(|b| r.ratio > b.ratio) {
            best = Some(r);
        }
    }
    Ok(best)
}
