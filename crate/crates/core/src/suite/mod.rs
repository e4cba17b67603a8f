//! Registry of numerical inequality checks and the harness that runs them
//! over ensembles.

pub mod calculus;
pub mod checks;
pub mod context;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{make, EnsembleSpec, Instance};
use crate::error::{Error, Result};
use crate::pauli::Observable;
use crate::record::{CheckRecord, Status};

pub use checks::{subset_family, Args, Eval};
pub use context::{Hypothesis, InstanceContext};

/// Instance id used for checks without an observable input.
pub const NO_INSTANCE: &str = "-";
/// Slack applied to an estimated supremum before re-verification.
pub const CONSTANT_SLACK: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// lhs ≤ K·(…): admissible K are at least the supremum.
    Upper,
    /// K·(…) ≤ rhs: admissible K are at most the reciprocal supremum.
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckClass {
    /// No free constant; a violation is a failure.
    Unconditional,
    /// A universal constant to be estimated.
    Constant { name: &'static str, side: Side },
}

type Runner = fn(&InstanceContext, &Args) -> Result<Eval>;

#[derive(Clone, Copy)]
enum Body {
    Instance(Runner),
    Standalone(fn(&Args) -> Result<Eval>),
}

#[derive(Clone, Copy)]
pub struct CheckInfo {
    pub id: &'static str,
    pub hypothesis: Hypothesis,
    pub class: CheckClass,
    /// Parameter names with defaults; `None` marks an optional parameter.
    pub params: &'static [(&'static str, Option<f64>)],
    body: Body,
}

impl std::fmt::Debug for CheckInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckInfo")
            .field("id", &self.id)
            .field("hypothesis", &self.hypothesis)
            .field("class", &self.class)
            .finish()
    }
}

impl CheckInfo {
    pub fn needs_instance(&self) -> bool {
        matches!(self.body, Body::Instance(_))
    }

    pub fn is_unconditional(&self) -> bool {
        self.class == CheckClass::Unconditional
    }

    /// Defaults merged with `given`; unknown names are rejected.
    pub fn resolve(&self, given: &BTreeMap<String, f64>) -> Result<Args> {
        let mut map = BTreeMap::new();
        for (k, default) in self.params {
            if let Some(v) = default {
                map.insert(k.to_string(), *v);
            }
        }
        for (k, v) in given {
            if !self.params.iter().any(|(name, _)| name == k) {
                return Err(Error::InvalidParameter(format!("{}: unknown parameter {k}", self.id)));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{}: {k} = {v} is not finite", self.id)));
            }
            map.insert(k.clone(), *v);
        }
        Ok(Args { id: self.id, map })
    }

    /// The constant value to plug in given a supremum of constant ratios.
    pub fn admissible_constant(&self, sup_ratio: f64) -> Option<(&'static str, f64)> {
        match self.class {
            CheckClass::Unconditional => None,
            CheckClass::Constant { name, side: Side::Upper } => Some((name, sup_ratio * CONSTANT_SLACK)),
            CheckClass::Constant { name, side: Side::Lower } => Some((name, 1.0 / (sup_ratio * CONSTANT_SLACK))),
        }
    }
}

const HALF_LN3: f64 = 0.549_306_144_334_054_8;

macro_rules! entry {
    ($id:literal, $hyp:ident, $class:expr, [$($k:literal = $v:expr),* $(,)?], $f:path) => {
        CheckInfo {
            id: $id,
            hypothesis: Hypothesis::$hyp,
            class: $class,
            params: &[$(($k, $v)),*],
            body: Body::Instance($f),
        }
    };
}

const U: CheckClass = CheckClass::Unconditional;

const fn upper(name: &'static str) -> CheckClass {
    CheckClass::Constant { name, side: Side::Upper }
}

const fn lower(name: &'static str) -> CheckClass {
    CheckClass::Constant { name, side: Side::Lower }
}

use checks as c;

static REGISTRY: &[CheckInfo] = &[
    entry!("buser", None, U, ["p" = Some(1.0), "t" = Some(0.5)], c::buser),
    CheckInfo {
        id: "calculus_bound",
        hypothesis: Hypothesis::None,
        class: U,
        params: &[("d", Some(1.0)), ("t0", None)],
        body: Body::Standalone(c::calculus_bound),
    },
    entry!("comlemma", UnitInterval, U, ["p" = Some(1.0), "d" = Some(1.0)], c::comlemma),
    entry!("cor_ik1", None, U, ["J" = None], c::cor_ik1),
    entry!("curvature_i", None, U, ["coefficient" = Some(-2.0)], c::curvature_i),
    entry!("curvature_i_symmetrized", None, U, [], c::curvature_i_symmetrized),
    entry!("curvature_ii", None, U, ["t" = Some(0.5), "j" = None], c::curvature_ii),
    entry!("curvature_iii", None, U, ["t" = Some(0.5)], c::curvature_iii),
    entry!("deviation", L2Ball, upper("K"), ["t" = Some(1.0), "K" = Some(1.0)], c::deviation),
    entry!("dgood", UnitInterval, U, ["p" = Some(1.0)], c::dgood),
    entry!("dim_free_kkl", UnitInterval, upper("K"), ["p" = Some(1.0), "K" = Some(1.0)], c::dim_free_kkl),
    entry!("eldan_gross", Projection, upper("K"), ["K" = Some(1.0)], c::eldan_gross),
    entry!("fundamental_identity", Projection, U, ["t" = Some(0.5)], c::fundamental_identity),
    entry!("gradient_estimate", None, U, ["p" = Some(2.0), "t" = Some(0.5)], c::gradient_estimate),
    entry!("high_degree", Projection, U, ["d" = Some(1.0)], c::high_degree),
    entry!(
        "hypercontractivity_sample",
        None,
        U,
        ["p" = Some(2.0), "q" = Some(4.0), "t" = Some(HALF_LN3)],
        c::hypercontractivity_sample
    ),
    entry!("isoperimetric", Projection, upper("K"), ["K" = Some(1.0)], c::isoperimetric),
    entry!("key_identity8", None, U, ["j" = None], c::key_identity8),
    entry!("key_prop", Projection, U, ["d" = Some(1.0), "J" = None], c::key_prop),
    entry!("kk18", Projection, U, ["d" = Some(1.0)], c::kk18),
    entry!("kkl_dichotomy", BalancedProjection, lower("C"), ["eps" = Some(0.5), "C" = Some(1.0)], c::kkl_dichotomy),
    entry!("kkl_geometric", BalancedProjection, lower("C"), ["C" = Some(1.0)], c::kkl_geometric),
    entry!("kkl_index", BalancedProjection, lower("C"), ["C" = Some(1.0)], c::kkl_index),
    entry!("kkl_lp", UnitInterval, lower("C"), ["p" = Some(1.0), "C" = Some(1.0)], c::kkl_lp),
    entry!("lehd", UnitInterval, U, ["d" = Some(1.0), "p" = Some(1.0)], c::lehd),
    entry!("lem_cjc", None, U, ["J" = None, "j" = None], c::lem_cjc),
    entry!("lem_tj", None, U, ["d" = Some(1.0), "J" = None, "j" = None], c::lem_tj),
    entry!("local_reverse_poincare", None, U, ["t" = Some(0.5)], c::local_reverse_poincare),
    entry!("log_sobolev", None, U, [], c::log_sobolev),
    entry!("main_spectral", Projection, U, [], c::main_spectral),
    entry!("modified_log_sobolev", Contraction, U, ["p" = Some(1.0)], c::modified_log_sobolev),
    entry!("moment_comparison", None, U, ["r" = Some(4.0)], c::moment_comparison),
    entry!("paley_zygmund", Positive, U, ["delta" = Some(0.5)], c::paley_zygmund),
    entry!("poincare", None, U, [], c::poincare),
    entry!("prrr", Contraction, U, ["p" = Some(1.0), "J" = None], c::prrr),
    entry!("stability", Projection, lower("C2"), ["C1" = Some(1.0), "C2" = Some(1.0)], c::stability),
    entry!("talagrand_influence", UnitInterval, upper("C"), ["p" = Some(1.0), "C" = Some(1.0)], c::talagrand_influence),
    entry!("tav", None, U, ["delta" = Some(0.25)], c::tav),
    entry!("y1j", None, U, ["d" = Some(1.0), "t0" = Some(1.0), "J" = None, "j" = None], c::y1j),
    entry!("zrr", None, U, ["d" = Some(1.0), "seed" = Some(0.0)], c::zrr),
];

pub fn registry() -> &'static [CheckInfo] {
    REGISTRY
}

pub fn lookup(id: &str) -> Result<&'static CheckInfo> {
    REGISTRY
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::UnknownCheck(id.to_string()))
}

/// A record together with the instance's constant ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluated {
    pub record: CheckRecord,
    pub constant_ratio: Option<f64>,
}

fn finish(info: &CheckInfo, eval: Eval, instance: &str) -> Evaluated {
    let record = eval.record.with_instance(instance);
    checks::debug_assert_consistent(&record);
    // ratios of skipped or degenerate records never feed an estimate
    let constant_ratio = match record.status {
        Status::Holds | Status::Violated => eval.constant_ratio.filter(|r| !r.is_nan()),
        _ => None,
    };
    debug_assert_eq!(record.check_id, info.id);
    Evaluated { record, constant_ratio }
}

fn failed(info: &CheckInfo, instance: &str, e: Error) -> Error {
    Error::CheckFailed {
        check: info.id.to_string(),
        instance: instance.to_string(),
        message: e.to_string(),
    }
}

/// Runs one check against a prepared context, honouring its hypothesis.
pub fn run_check_ctx(id: &str, ctx: &InstanceContext, params: &BTreeMap<String, f64>) -> Result<Evaluated> {
    let info = lookup(id)?;
    let args = info.resolve(params)?;
    let eval = match info.body {
        Body::Standalone(f) => f(&args),
        Body::Instance(f) => {
            if !ctx.satisfies(info.hypothesis).map_err(|e| failed(info, &ctx.id, e))? {
                let rec = CheckRecord::skipped(info.id, args.map.clone(), format!("requires {}", info.hypothesis.describe()));
                Ok(Eval { record: rec, constant_ratio: None })
            } else {
                f(ctx, &args)
            }
        }
    }
    .map_err(|e| match e {
        Error::InvalidParameter(_) | Error::UnknownCheck(_) => e,
        other => failed(info, &ctx.id, other),
    })?;
    Ok(finish(info, eval, &ctx.id))
}

pub fn run_check(id: &str, t: &Observable, params: &BTreeMap<String, f64>) -> Result<CheckRecord> {
    let ctx = InstanceContext::new("adhoc", t.clone());
    Ok(run_check_ctx(id, &ctx, params)?.record)
}

/// Checks without an observable input.
pub fn run_standalone(id: &str, params: &BTreeMap<String, f64>) -> Result<Evaluated> {
    let info = lookup(id)?;
    let args = info.resolve(params)?;
    match info.body {
        Body::Standalone(f) => Ok(finish(info, f(&args)?, NO_INSTANCE)),
        Body::Instance(_) => Err(Error::InvalidParameter(format!("{id} needs an instance"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRequest {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl CheckRequest {
    pub fn new(id: &str) -> Self {
        CheckRequest {
            id: id.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, k: &str, v: f64) -> Self {
        self.params.insert(k.to_string(), v);
        self
    }

    pub fn validate(&self) -> Result<()> {
        lookup(&self.id)?.resolve(&self.params).map(|_| ())
    }
}

fn params_cmp(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Ordering {
    let mut ia = a.iter();
    let mut ib = b.iter();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((ka, va)), Some((kb, vb))) => {
                let o = ka.cmp(kb).then(va.total_cmp(vb));
                if o != Ordering::Equal {
                    return o;
                }
            }
        }
    }
}

pub fn record_order(a: &CheckRecord, b: &CheckRecord) -> Ordering {
    a.check_id
        .cmp(&b.check_id)
        .then_with(|| a.instance_id.cmp(&b.instance_id))
        .then_with(|| params_cmp(&a.params, &b.params))
}

/// Every (check, instance) pair, in parallel, sorted by ids then params.
/// Standalone checks run once each.
pub fn run_pairs(requests: &[CheckRequest], instances: &[Instance]) -> Result<Vec<Evaluated>> {
    for r in requests {
        r.validate()?;
    }
    let contexts: Vec<InstanceContext> = instances
        .iter()
        .map(|i| InstanceContext::new(i.id.clone(), i.observable.clone()))
        .collect();
    let mut jobs: Vec<(&CheckRequest, Option<&InstanceContext>)> = Vec::new();
    for r in requests {
        if lookup(&r.id)?.needs_instance() {
            jobs.extend(contexts.iter().map(|c| (r, Some(c))));
        } else {
            jobs.push((r, None));
        }
    }
    let mut out = jobs
        .into_par_iter()
        .map(|(r, ctx)| match ctx {
            Some(c) => run_check_ctx(&r.id, c, &r.params),
            None => run_standalone(&r.id, &r.params),
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| record_order(&a.record, &b.record));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantEstimate {
    pub check_id: String,
    pub sup_ratio: f64,
    pub witness: String,
    pub records: Vec<CheckRecord>,
}

impl ConstantEstimate {
    /// Constant value to use for re-verification, when the check has one.
    pub fn admissible(&self) -> Result<Option<(&'static str, f64)>> {
        Ok(lookup(&self.check_id)?.admissible_constant(self.sup_ratio))
    }
}

/// Supremum of the constant ratio over pre-built instances.
pub fn estimate_over(id: &str, instances: &[Instance], params: &BTreeMap<String, f64>) -> Result<ConstantEstimate> {
    let req = CheckRequest {
        id: id.to_string(),
        params: params.clone(),
    };
    let evals = run_pairs(&[req], instances)?;
    let mut best: Option<(f64, String)> = None;
    for e in &evals {
        if let Some(r) = e.constant_ratio {
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, e.record.instance_id.clone()));
            }
        }
    }
    let (sup_ratio, witness) = best.ok_or_else(|| Error::EmptyEnsemble(id.to_string()))?;
    Ok(ConstantEstimate {
        check_id: id.to_string(),
        sup_ratio,
        witness,
        records: evals.into_iter().map(|e| e.record).collect(),
    })
}

pub fn estimate_constant(id: &str, spec: &EnsembleSpec, params: &BTreeMap<String, f64>) -> Result<ConstantEstimate> {
    estimate_over(id, &make(spec)?, params)
}

/// Re-runs a constant check with the estimated constant (times the slack)
/// plugged in. Returns the number of violated records.
pub fn verify_at_estimate(est: &ConstantEstimate, instances: &[Instance], params: &BTreeMap<String, f64>) -> Result<usize> {
    let mut p = params.clone();
    if let Some((name, value)) = est.admissible()? {
        p.insert(name.to_string(), value);
    }
    let req = CheckRequest { id: est.check_id.clone(), params: p };
    Ok(run_pairs(&[req], instances)?
        .iter()
        .filter(|e| e.record.status == Status::Violated)
        .count())
}

#[cfg(test)]
mod tests;
