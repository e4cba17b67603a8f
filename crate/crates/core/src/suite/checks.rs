//! One function per registry entry. Each returns the record plus the
//! instance's constant ratio used by the estimator.

use std::collections::BTreeMap;
use std::f64::consts::E;

use crate::dense::{DenseOperator, Interval};
use crate::error::{Error, Result};
use crate::hypercube::{
    conditional_expectation, dyadic_scales, generator, gradient_lp, hd_multiplier, lp_norm, partial_derivative,
    restriction, semigroup, spectral_slice_hd, weight_approx, weight_eq, weight_geq, weight_range, IndexStatus,
    SubsetJ,
};
use crate::pauli::Observable;
use crate::record::{is_violation, CheckRecord, Status};
use crate::restriction::{check_tav, zrr_expectation, EXACT_LIMIT};
use crate::scaffold::{check_key_identity8, check_lem_cjc, check_lem_tj, check_y1j};

use super::calculus::calculus_bound_values;
use super::context::InstanceContext;

/// Tolerance of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// A PSD-margin check passes when the smallest eigenvalue is ≥ −PSD_TOL.
pub const PSD_TOL: f64 = 1e-9;
/// Denominator floor for log(1/x) near x = 1.
pub const LOG_FLOOR: f64 = 1e-12;

pub struct Eval {
    pub record: CheckRecord,
    /// The instance's constant-free ratio: lhs/rhs with the free constant at 1,
    /// or the implied constant for checks where it enters non-linearly.
    pub constant_ratio: Option<f64>,
}

impl Eval {
    fn plain(record: CheckRecord) -> Self {
        let constant_ratio = record.ratio;
        Eval { record, constant_ratio }
    }

    fn with_ratio(record: CheckRecord, r: f64) -> Self {
        Eval {
            record,
            constant_ratio: Some(r),
        }
    }

    fn none(record: CheckRecord) -> Self {
        Eval {
            record,
            constant_ratio: None,
        }
    }
}

/// Resolved parameters (defaults filled in).
#[derive(Clone, Debug)]
pub struct Args {
    pub id: &'static str,
    pub map: BTreeMap<String, f64>,
}

impl Args {
    pub fn get(&self, k: &str) -> f64 {
        *self.map.get(k).unwrap_or_else(|| panic!("{}: parameter {k} has no default", self.id))
    }

    pub fn opt(&self, k: &str) -> Option<f64> {
        self.map.get(k).copied()
    }

    pub fn int(&self, k: &str) -> Result<usize> {
        int_value(self.id, k, self.get(k))
    }

    pub fn opt_int(&self, k: &str) -> Result<Option<usize>> {
        self.opt(k).map(|v| int_value(self.id, k, v)).transpose()
    }

    fn record(&self, lhs: f64, rhs: f64) -> CheckRecord {
        CheckRecord::compare(self.id, self.map.clone(), lhs, rhs)
    }

    fn skipped(&self, note: impl Into<String>) -> CheckRecord {
        CheckRecord::skipped(self.id, self.map.clone(), note)
    }

    fn degenerate(&self, lhs: f64, rhs: f64, note: impl Into<String>) -> CheckRecord {
        CheckRecord::degenerate(self.id, self.map.clone(), lhs, rhs, note)
    }

    fn bad(&self, msg: impl Into<String>) -> Error {
        Error::InvalidParameter(format!("{}: {}", self.id, msg.into()))
    }

    fn with(&self, extra: &[(&str, f64)]) -> BTreeMap<String, f64> {
        let mut m = self.map.clone();
        for (k, v) in extra {
            m.insert(k.to_string(), *v);
        }
        m
    }
}

fn int_value(id: &str, k: &str, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::InvalidParameter(format!("{id}: {k} = {v} is not a non-negative integer")));
    }
    Ok(v as usize)
}

/// Subsets J swept when the caller does not pin one: every nonempty subset
/// for n ≤ 4, otherwise the singletons, even sites, odd sites and [n].
pub fn subset_family(n: usize) -> Vec<SubsetJ> {
    if n <= 4 {
        return (1..1u64 << n).map(|m| SubsetJ::from_mask(n, m).expect("mask")).collect();
    }
    let mut out: Vec<SubsetJ> = (0..n).map(|j| SubsetJ::new(n, &[j]).expect("site")).collect();
    let even: Vec<usize> = (0..n).step_by(2).collect();
    let odd: Vec<usize> = (1..n).step_by(2).collect();
    out.push(SubsetJ::new(n, &even).expect("sites"));
    out.push(SubsetJ::new(n, &odd).expect("sites"));
    out.push(SubsetJ::full(n));
    out
}

fn subsets(args: &Args, n: usize) -> Result<Vec<SubsetJ>> {
    match args.opt_int("J")? {
        Some(mask) => {
            let set = SubsetJ::from_mask(n, mask as u64)?;
            if set.is_empty() {
                return Err(args.bad("J must be nonempty"));
            }
            Ok(vec![set])
        }
        None => Ok(subset_family(n)),
    }
}

fn sites_in(args: &Args, set: &SubsetJ) -> Result<Vec<usize>> {
    match args.opt_int("j")? {
        Some(j) if set.contains(j) => Ok(vec![j]),
        Some(_) => Ok(vec![]),
        None => Ok(set.members()),
    }
}

fn score(r: &CheckRecord) -> (u8, f64) {
    let tier = match r.status {
        Status::Violated => 3,
        Status::Holds => 2,
        Status::Degenerate => 1,
        Status::SkippedPrecondition => 0,
    };
    let s = if r.rhs > 1e-300 {
        r.lhs / r.rhs
    } else if r.lhs > 0.0 {
        f64::INFINITY
    } else {
        r.lhs - r.rhs
    };
    (tier, if s.is_nan() { f64::NEG_INFINITY } else { s })
}

/// The most critical of several sub-records: violated first, then the largest ratio.
fn worst(records: Vec<CheckRecord>) -> Option<CheckRecord> {
    let mut best: Option<CheckRecord> = None;
    for r in records {
        let better = match &best {
            None => true,
            Some(b) => {
                let (ta, sa) = score(&r);
                let (tb, sb) = score(b);
                ta > tb || (ta == tb && sa > sb)
            }
        };
        if better {
            best = Some(r);
        }
    }
    best
}

fn sub(args: &Args, extra: &[(&str, f64)], lhs: f64, rhs: f64, note: impl Into<String>) -> CheckRecord {
    CheckRecord::compare(args.id, args.with(extra), lhs, rhs).with_note(note)
}

fn relabel(mut r: CheckRecord, args: &Args, extra: &[(&str, f64)]) -> CheckRecord {
    r.check_id = args.id.to_string();
    let mut m = args.with(extra);
    for (k, v) in r.params {
        m.entry(k).or_insert(v);
    }
    r.params = m;
    r
}

fn dense(t: &Observable) -> Result<DenseOperator> {
    DenseOperator::synthesize(t)
}

/// e^{-tL} applied to a dense operator.
fn semigroup_dense(x: &DenseOperator, t: f64) -> Result<DenseOperator> {
    dense(&semigroup(&x.analyze(), t)?)
}

/// A^* A.
fn gram(a: &DenseOperator) -> Result<DenseOperator> {
    a.adjoint().mul(a)
}

fn sum_gram(ds: &[DenseOperator], n: usize) -> Result<DenseOperator> {
    let mut acc = DenseOperator::zeros(n)?;
    for d in ds {
        acc = acc.add(&gram(d)?)?;
    }
    Ok(acc)
}

fn psd_record(args: &Args, extra: &[(&str, f64)], x: &DenseOperator, note: &str) -> Result<CheckRecord> {
    let m = x.psd_margin()?;
    Ok(sub(args, extra, -m, PSD_TOL, note))
}

/// Largest |Pauli coefficient| of a dense operator.
fn max_coefficient(x: &DenseOperator) -> f64 {
    x.analyze().iter().map(|(_, c)| c.norm()).fold(0.0, f64::max)
}

fn require_p(args: &Args, lo: f64, hi: f64, hi_open: bool) -> Result<f64> {
    let p = args.get("p");
    let ok = p >= lo && if hi_open { p < hi } else { p <= hi };
    if !ok {
        return Err(args.bad(format!("p = {p} outside the allowed range")));
    }
    Ok(p)
}

fn positive_t(args: &Args) -> Result<f64> {
    let t = args.get("t");
    if !(t >= 0.0) || !t.is_finite() {
        return Err(args.bad(format!("t = {t} must be a finite non-negative time")));
    }
    Ok(t)
}

fn k_p(p: f64) -> f64 {
    4.0 / ((2.0 - p) * E)
}

fn ln_n_over_n(n: usize) -> f64 {
    (n as f64).ln() / n as f64
}

// ---------------------------------------------------------------- semigroup

pub fn poincare(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let lhs = ctx.variance();
    let rhs = ctx.total_influence(2.0)?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

fn entropy_of_square(x: &DenseOperator) -> Result<(f64, f64)> {
    let g = gram(x)?;
    let ev = g.eigenvalues()?;
    let lam: Vec<f64> = ev.iter().map(|v| v.max(0.0)).collect();
    let k = lam.len() as f64;
    let xlogx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    let norm_sq = lam.iter().sum::<f64>() / k;
    let ent = lam.iter().map(|&v| xlogx(v)).sum::<f64>() / k - xlogx(norm_sq);
    Ok((ent, norm_sq))
}

pub fn log_sobolev(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let (ent, _) = entropy_of_square(ctx.dense()?)?;
    let rhs = 2.0 * ctx.total_influence(2.0)?;
    Ok(Eval::plain(args.record(ent, rhs)))
}

pub fn modified_log_sobolev(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let norm_sq = ctx.t.norm2_sq();
    let lp = ctx.dense()?.schatten_norm(p)?;
    let xlogx = if norm_sq > 0.0 { norm_sq * norm_sq.ln() } else { 0.0 };
    let lhs = -k_p(p) * norm_sq.sqrt() * lp.powf(p / 2.0) - xlogx;
    let rhs = 2.0 * ctx.total_influence(2.0)?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn buser(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, false)?;
    let t = positive_t(args)?;
    let diff = ctx.t.sub(&semigroup(&ctx.t, t)?)?;
    let lhs = lp_norm(&diff, p)?;
    let rhs = (2.0 * t).sqrt() * ctx.gradient()?.schatten_norm(p)?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn local_reverse_poincare(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let t = positive_t(args)?;
    let n = ctx.n();
    let x = ctx.dense()?;
    let pt_sq = semigroup_dense(&gram(x)?, t)?;
    let sq_pt = gram(&dense(&semigroup(&ctx.t, t)?)?)?;
    let mut grads = Vec::with_capacity(n);
    for d in ctx.derivatives()? {
        grads.push(dense(&semigroup(d, t)?)?);
    }
    let g = sum_gram(&grads, n)?.scale((2.0 * t).exp() - 1.0);
    let gap = pt_sq.sub(&sq_pt)?.sub(&g)?;
    Ok(Eval::plain(psd_record(args, &[], &gap, "")?))
}

pub fn gradient_estimate(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = args.get("p");
    if !(p >= 2.0) {
        return Err(args.bad(format!("p = {p} must be at least 2")));
    }
    let t = positive_t(args)?;
    if t == 0.0 {
        return Err(args.bad("t must be positive"));
    }
    let lhs = gradient_lp(&semigroup(&ctx.t, t)?, p)?;
    let rhs = ctx.dense()?.schatten_norm(p)? / (2.0 * t).sqrt();
    Ok(Eval::plain(args.record(lhs, rhs)))
}

/// L(T^*T) − L(T)^*T − T^*L(T).
fn carre_du_champ(ctx: &InstanceContext) -> Result<DenseOperator> {
    let x = ctx.dense()?;
    let l_sq = dense(&generator(&gram(x)?.analyze()))?;
    let lx = dense(&generator(&ctx.t))?;
    l_sq.sub(&lx.adjoint().mul(x)?)?.sub(&x.adjoint().mul(&lx)?)
}

pub fn curvature_i(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let c = args.get("coefficient");
    let g = sum_gram(ctx.derivatives_dense()?, ctx.n())?;
    let defect = carre_du_champ(ctx)?.sub(&g.scale(c))?;
    Ok(Eval::plain(args.record(max_coefficient(&defect), IDENTITY_TOL)))
}

/// The identity with the conditional-expectation correction:
/// L(T^*T) − L(T)^*T − T^*L(T) = −Σ_j (|d_jT|² + E_{[n]∖{j}}|d_jT|²).
pub fn curvature_i_symmetrized(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let n = ctx.n();
    let mut acc = DenseOperator::zeros(n)?;
    for (j, d) in ctx.derivatives_dense()?.iter().enumerate() {
        let sq = gram(d)?;
        let rest = SubsetJ::new(n, &[j])?.complement();
        let avg = dense(&conditional_expectation(&sq.analyze(), &rest)?)?;
        acc = acc.add(&sq)?.add(&avg)?;
    }
    let defect = carre_du_champ(ctx)?.add(&acc)?;
    Ok(Eval::plain(args.record(max_coefficient(&defect), IDENTITY_TOL)))
}

pub fn curvature_ii(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let t = positive_t(args)?;
    let sites: Vec<usize> = match args.opt_int("j")? {
        Some(j) if j < ctx.n() => vec![j],
        Some(j) => return Err(Error::SiteOutOfRange { site: j, n: ctx.n() }),
        None => (0..ctx.n()).collect(),
    };
    let decay = (-2.0 * t).exp();
    let mut recs = Vec::new();
    for j in sites {
        let d = &ctx.derivatives_dense()?[j];
        let right = semigroup_dense(&gram(d)?, t)?.scale(decay);
        let left = gram(&dense(&semigroup(&ctx.derivatives()?[j], t)?)?)?;
        recs.push(psd_record(args, &[("j", j as f64)], &right.sub(&left)?, "")?);
    }
    Ok(Eval::plain(worst(recs).unwrap_or_else(|| args.skipped("no sites"))))
}

pub fn curvature_iii(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let t = positive_t(args)?;
    let n = ctx.n();
    let right = semigroup_dense(&sum_gram(ctx.derivatives_dense()?, n)?, t)?.scale((-2.0 * t).exp());
    let mut moved = Vec::with_capacity(n);
    for d in ctx.derivatives()? {
        moved.push(dense(&semigroup(d, t)?)?);
    }
    let left = sum_gram(&moved, n)?;
    Ok(Eval::plain(psd_record(args, &[], &right.sub(&left)?, "")?))
}

pub fn fundamental_identity(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let t = positive_t(args)?;
    let lhs = ctx.variance();
    let diff = ctx.t.sub(&semigroup(&ctx.t, t)?)?;
    let rhs = lp_norm(&diff, 1.0)? + semigroup(&ctx.t, t / 2.0)?.variance();
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn high_degree(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let lhs = 0.25 * (d as f64).sqrt() * weight_geq(&ctx.t, d)?;
    let rhs = ctx.gradient()?.schatten_norm(1.0)?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn moment_comparison(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let r = args.get("r");
    if !(r >= 2.0) || r.is_infinite() {
        return Err(args.bad(format!("r = {r} must be finite and at least 2")));
    }
    let k = ctx.t.degree() as f64;
    let lhs = ctx.dense()?.schatten_norm(r)?;
    let rhs = (r - 1.0).powf(k / 2.0) * ctx.t.norm2_sq().sqrt();
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn hypercontractivity_sample(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let (p, q, t) = (args.get("p"), args.get("q"), positive_t(args)?);
    if !(p > 1.0 && q >= p && q.is_finite()) {
        return Err(args.bad(format!("need 1 < p <= q < inf, got p = {p}, q = {q}")));
    }
    let t_min = 0.5 * ((q - 1.0) / (p - 1.0)).ln();
    if t < t_min * (1.0 - 1e-12) {
        return Ok(Eval::none(args.skipped(format!("t below the contraction time {t_min:e}"))));
    }
    let lhs = dense(&semigroup(&ctx.t, t)?)?.schatten_norm(q)?;
    let rhs = ctx.dense()?.schatten_norm(p)?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn deviation(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let t = args.get("t");
    if !(t > 0.0) {
        return Err(args.bad("t must be positive"));
    }
    let d = ctx.t.degree().max(1) as f64;
    let tail = ctx.dense()?.abs()?.indicator_trace(Interval::at_least(t))?;
    let envelope = (-d * t.powf(2.0 / d) / (4.0 * E)).exp();
    let rec = args.record(tail, args.get("K") * envelope);
    Ok(Eval::with_ratio(rec, tail / envelope))
}

pub fn paley_zygmund(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let delta = args.get("delta");
    if !(delta > 0.0 && delta < 1.0) {
        return Err(args.bad(format!("delta = {delta} outside (0, 1)")));
    }
    let x = ctx.dense()?;
    let l1 = x.schatten_norm(1.0)?;
    let l2sq = ctx.t.norm2_sq();
    if l2sq == 0.0 {
        return Ok(Eval::none(args.degenerate(0.0, 0.0, "T = 0")));
    }
    let lhs = (1.0 - delta).powi(2) * l1 * l1 / l2sq;
    let rhs = x.indicator_trace(Interval::at_least(delta * l1))?;
    Ok(Eval::plain(args.record(lhs, rhs)))
}

// ------------------------------------------------------------ KKL family

pub fn dim_free_kkl(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    let total = ctx.total_influence(p)?;
    let m = ctx.max_influence(p)?;
    let a = total / ((2.0 - p) * var);
    let lhs = 0.25 * (-args.get("K") * a).exp();
    let implied = ((1.0 / (4.0 * m)).ln() / a).max(0.0);
    Ok(Eval::with_ratio(args.record(lhs, m), implied))
}

pub fn kkl_lp(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    let base = (2.0 - p) * var * ln_n_over_n(ctx.n());
    let m = ctx.max_influence(p)?;
    let rec = args.record(args.get("C") * base, m);
    Ok(Eval::with_ratio(rec, if m > 0.0 { base / m } else { f64::INFINITY }))
}

pub fn talagrand_influence(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let mut base = 0.0;
    let mut clamped = false;
    for inf in ctx.influences(p)? {
        if inf <= 0.0 {
            continue;
        }
        let denom = if inf >= 1.0 - LOG_FLOOR {
            clamped = true;
            LOG_FLOOR
        } else {
            (1.0 / inf).ln().max(LOG_FLOOR)
        };
        base += inf / denom;
    }
    let var = ctx.variance();
    let mut rec = args.record(var, args.get("C") * base);
    if clamped {
        rec.status = Status::Degenerate;
        rec = rec.with_note("an influence reached 1; log denominator floored");
    }
    let ratio = if base > 0.0 { var / base } else if var > 0.0 { f64::INFINITY } else { 0.0 };
    Ok(Eval::with_ratio(rec, ratio))
}

pub fn isoperimetric(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    if var > 1.0 / E {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) > 1/e: log(1/var) < 1")));
    }
    let lhs = var * (1.0 / var).ln().sqrt();
    let grad = ctx.gradient()?.schatten_norm(1.0)?;
    let rec = args.record(lhs, args.get("K") * grad);
    Ok(Eval::with_ratio(rec, lhs / grad))
}

pub fn eldan_gross(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    let m = ctx.geometric_mass()?;
    let lhs = var * (1.0 + 1.0 / m).ln().sqrt();
    let grad = ctx.gradient()?.schatten_norm(1.0)?;
    let rec = args.record(lhs, args.get("K") * grad);
    Ok(Eval::with_ratio(rec, lhs / grad))
}

pub fn kkl_geometric(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let n = ctx.n() as f64;
    let base = n.ln().sqrt() / n;
    let m = ctx.l1_derivatives()?.into_iter().fold(0.0, f64::max);
    let rec = args.record(args.get("C") * base, m);
    Ok(Eval::with_ratio(rec, base / m))
}

pub fn kkl_dichotomy(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let eps = args.get("eps");
    if !(eps > 0.0 && eps < 1.0) {
        return Err(args.bad(format!("eps = {eps} outside (0, 1)")));
    }
    let n = ctx.n() as f64;
    let v1 = ctx.max_influence(2.0)?;
    let v2 = ctx.l1_derivatives()?.into_iter().fold(0.0, f64::max);
    let b1 = eps * n.ln() / n;
    let b2 = n.powf(-(1.0 + eps) / 2.0);
    let r1 = if b1 > 0.0 { v1 / b1 } else { f64::INFINITY };
    let best = r1.max(v2 / b2);
    let rec = args
        .record(args.get("C"), best)
        .with_note(format!("branch (i) {r1:e}, branch (ii) {:e}", v2 / b2));
    Ok(Eval::with_ratio(rec, 1.0 / best))
}

pub fn kkl_index(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let ind = ctx.index()?;
    if ind.status != IndexStatus::Defined || !(ind.value < 2.0) {
        return Ok(Eval::none(args.skipped(format!("ind(T) = {} is not below 2", ind.value))));
    }
    let alpha = ind.value.max(f64::MIN_POSITIVE);
    let c = args.get("C");
    let c_ind = (c * (2.0 - alpha) / (2.0 * alpha)).min((2.0 - alpha) * c.powf(alpha) / 4.0);
    let base = ln_n_over_n(ctx.n());
    let m = ctx.max_influence(2.0)?;
    let rec = args
        .record(c_ind * base, m)
        .with_note(format!("ind(T) = {alpha:e}"));
    // largest C for which this instance still satisfies the bound
    let ratio = if base > 0.0 {
        let q = m / base;
        let implied = (q * 2.0 * alpha / (2.0 - alpha)).max((4.0 * q / (2.0 - alpha)).powf(1.0 / alpha));
        1.0 / implied
    } else {
        0.0
    };
    Ok(Eval::with_ratio(rec, ratio))
}

pub fn stability(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    let n = ctx.n() as f64;
    let gate = args.get("C1") * n.ln() * var / n;
    let m = ctx.l1_derivatives()?.into_iter().fold(0.0, f64::max);
    if m > gate {
        return Ok(Eval::none(
            args.skipped(format!("max ||d_j T||_1 = {m:e} exceeds the gate {gate:e}")),
        ));
    }
    let cut = 0.5 * var * n.ln().sqrt();
    let mass = ctx.gradient()?.indicator_trace(Interval::above(cut))?;
    let rec = args.record(args.get("C2") * var, mass);
    Ok(Eval::with_ratio(rec, if mass > 0.0 { var / mass } else { f64::INFINITY }))
}

// ------------------------------------------------------------ spectrum

pub fn kk18(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let m = ctx.geometric_mass()?;
    let df = d as f64;
    if m > (-2.0 * df).exp() {
        return Ok(Eval::none(args.skipped(format!("M(T) = {m:e} > e^(-2d)"))));
    }
    if m == 0.0 {
        return Ok(Eval::none(args.degenerate(0.0, 0.0, "M(T) = 0: constant projection")));
    }
    let lhs = weight_eq(&ctx.t, d)?;
    let rhs = 6.0 * E / df * (2.0 * E / df).powi(d as i32) * m * (df / m).ln().powi(d as i32);
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn key_prop(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let m = ctx.geometric_mass()?;
    if m > (-2.0 * d as f64).exp() {
        return Ok(Eval::none(args.skipped(format!("M(T) = {m:e} > e^(-2d)"))));
    }
    let l1 = ctx.l1_derivatives()?;
    let df = d as f64;
    let mut recs = Vec::new();
    for set in subsets(args, ctx.n())? {
        let lhs: f64 = ctx
            .t
            .iter()
            .filter(|(s, _)| s.support_size() == d && (s.support_mask() & set.mask()).count_ones() == 1)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        let mj: f64 = set.members().iter().map(|&j| l1[j] * l1[j]).sum();
        let rhs = if mj > 0.0 {
            6.0 * (2.0 * E / df).powi(d as i32) * mj * (1.0 / mj).ln().powi(d as i32)
        } else {
            0.0
        };
        recs.push(sub(args, &[("J", set.mask() as f64)], lhs, rhs, ""));
    }
    Ok(Eval::plain(worst(recs).expect("nonempty subset family")))
}

pub fn main_spectral(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let m = ctx.geometric_mass()?;
    if m == 0.0 {
        return Ok(Eval::none(args.degenerate(0.0, 0.0, "M(T) = 0: constant projection")));
    }
    let rhs = 12.0 * E * m.powf(0.4);
    let cap = (1.0 / m).ln() / 10.0;
    if cap < 1.0 {
        return Ok(Eval::plain(args.record(0.0, rhs).with_note("vacuous: empty degree range")));
    }
    let lhs = weight_range(&ctx.t, 1, cap.floor() as usize);
    Ok(Eval::plain(args.record(lhs, rhs)))
}

pub fn dgood(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let var = ctx.variance();
    if var <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "var(T) = 0")));
    }
    let threshold = var * var / (16.0 * ctx.total_influence(p)?);
    let mut rhs = 0.0;
    for d in dyadic_scales(ctx.n()) {
        let w = weight_approx(&ctx.t, d as usize)?;
        if w >= threshold {
            rhs += w;
        }
    }
    Ok(Eval::plain(args.record(var / 2.0, rhs)))
}

pub fn lehd(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")? as u64;
    let p = require_p(args, 1.0, 2.0, true)?;
    let n = ctx.n();
    let h = spectral_slice_hd(&ctx.t, d)?;
    let hd = dense(&h)?;
    let id = DenseOperator::identity(n)?;
    let mut recs = vec![
        psd_record(args, &[], &id.sub(&hd)?, "(i) 1 - H_d T")?,
        psd_record(args, &[], &id.add(&hd)?, "(i) 1 + H_d T")?,
    ];
    let infl = ctx.influences(p)?;
    for (j, &inf_j) in infl.iter().enumerate() {
        let dj = partial_derivative(&h, j)?;
        let lhs = if dj.is_empty() { 0.0 } else { dense(&dj)?.schatten_pow(p)? };
        recs.push(sub(args, &[("j", j as f64)], lhs, 2f64.powf(p) * inf_j, "(ii)"));
    }
    let top = (2 * d as usize - 1).min(n);
    for m in d as usize..=top {
        let mult = hd_multiplier(d, m);
        recs.push(sub(args, &[("m", m as f64)], 0.25, mult, "(iii) lower"));
        recs.push(sub(args, &[("m", m as f64)], mult, 1.0, "(iii) upper"));
    }
    let mut mass = 0.0;
    let mut inf_sum = 0.0;
    for dd in dyadic_scales(n) {
        let hdd = spectral_slice_hd(&ctx.t, dd)?;
        mass += hdd.filter(|s| s.support_size() > 0).norm2_sq();
        inf_sum += (0..n)
            .map(|j| partial_derivative(&hdd, j).map(|x| x.norm2_sq()))
            .sum::<Result<f64>>()?;
    }
    recs.push(sub(args, &[], mass, ctx.variance(), "(iv) variance"));
    recs.push(sub(args, &[], inf_sum, ctx.total_influence(2.0)?, "(iv) influence"));
    Ok(Eval::plain(worst(recs).expect("claims present")))
}

pub fn comlemma(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, true)?;
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let m = ctx.max_influence(p)?;
    if m <= 0.0 {
        return Ok(Eval::none(args.degenerate(f64::NAN, f64::NAN, "all influences vanish")));
    }
    let w = weight_approx(&ctx.t, d)?;
    let lhs = (1.0 / m).ln() * w / 16.0 - k_p(p) / 16.0 * ctx.total_influence(p)?.sqrt() * w.sqrt();
    let rhs = ctx.total_influence(2.0)? + ctx.variance();
    Ok(Eval::plain(args.record(lhs, rhs)))
}

// ------------------------------------------------------------ restrictions

pub fn prrr(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let p = require_p(args, 1.0, 2.0, false)?;
    let n = ctx.n();
    let infl_p = ctx.influences(p)?;
    let var = ctx.variance();
    let inf_total = ctx.total_influence(2.0)?;
    let mut recs = Vec::new();
    for set in subsets(args, n)? {
        let jm = set.mask() as f64;
        let mut sum_inf = 0.0;
        for j in set.members() {
            let r = restriction(&ctx.t, j, &set)?;
            let rp = if r.is_empty() { 0.0 } else { dense(&r)?.schatten_pow(p)? };
            let r2 = r.norm2_sq();
            recs.push(sub(args, &[("J", jm), ("j", j as f64)], rp, infl_p[j], "(i)"));
            recs.push(sub(args, &[("J", jm), ("j", j as f64)], r2, rp, "(ii)"));
            sum_inf += (0..n)
                .map(|k| partial_derivative(&r, k).map(|x| x.norm2_sq()))
                .sum::<Result<f64>>()?;
        }
        recs.push(sub(args, &[("J", jm)], sum_inf, var + inf_total, "(iii)"));
    }
    Ok(Eval::plain(worst(recs).expect("nonempty subset family")))
}

pub fn cor_ik1(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let n = ctx.n();
    let mut recs = Vec::new();
    for set in subsets(args, n)? {
        let jm = set.mask() as f64;
        let comp = set.complement().members();
        let mut mass = 0.0;
        let mut per_k = vec![0.0; n];
        for j in set.members() {
            let r = restriction(&ctx.t, j, &set)?;
            mass += r.norm2_sq();
            let dk: Vec<f64> = (0..n)
                .map(|k| partial_derivative(&r, k).map(|x| x.norm2_sq()))
                .collect::<Result<_>>()?;
            let all: f64 = dk.iter().sum();
            let split: f64 = comp.iter().map(|&k| dk[k]).sum::<f64>() + dk[j];
            recs.push(sub(args, &[("J", jm), ("j", j as f64)], (all - split).abs(), IDENTITY_TOL, "(i)"));
            for &k in &comp {
                per_k[k] += dk[k];
            }
        }
        recs.push(sub(args, &[("J", jm)], mass, ctx.variance(), "(ii)"));
        for &k in &comp {
            let dk_t = ctx.derivatives()?[k].norm2_sq();
            recs.push(sub(args, &[("J", jm), ("k", k as f64)], per_k[k], dk_t, "(iii)"));
        }
    }
    Ok(Eval::plain(worst(recs).expect("nonempty subset family")))
}

pub fn zrr(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let out = zrr_expectation(&ctx.t, d, args.get("seed") as u64)?;
    let rec = relabel(out.record, args, &[])
        .with_note(format!("witness J = {:#b} with mass {:e}", out.witness.mask(), out.witness_mass));
    Ok(Eval::plain(rec))
}

pub fn tav(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    if ctx.n() > EXACT_LIMIT {
        return Ok(Eval::none(args.skipped("n beyond the enumeration limit")));
    }
    let rec = check_tav(&ctx.t, args.get("delta"))?;
    Ok(Eval::plain(relabel(rec, args, &[])))
}

fn over_pairs<F>(ctx: &InstanceContext, args: &Args, mut f: F) -> Result<Eval>
where
    F: FnMut(&SubsetJ, usize) -> Result<CheckRecord>,
{
    let mut recs = Vec::new();
    for set in subsets(args, ctx.n())? {
        for j in sites_in(args, &set)? {
            let r = f(&set, j)?;
            recs.push(relabel(r, args, &[("J", set.mask() as f64), ("j", j as f64)]));
        }
    }
    Ok(Eval::plain(worst(recs).unwrap_or_else(|| args.skipped("j is not in J"))))
}

fn lifted_fits(ctx: &InstanceContext, args: &Args) -> Option<Eval> {
    (ctx.n() + 1 > crate::dense::DENSE_CAP).then(|| Eval::none(args.skipped("n + 1 exceeds the dense cap")))
}

pub fn lem_cjc(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    over_pairs(ctx, args, |set, j| check_lem_cjc(&ctx.t, set, j))
}

pub fn key_identity8(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    if let Some(e) = lifted_fits(ctx, args) {
        return Ok(e);
    }
    let sites: Vec<usize> = match args.opt_int("j")? {
        Some(j) => vec![j],
        None => (0..ctx.n()).collect(),
    };
    let mut recs = Vec::new();
    for j in sites {
        recs.push(relabel(check_key_identity8(&ctx.t, j)?, args, &[("j", j as f64)]));
    }
    Ok(Eval::plain(worst(recs).unwrap_or_else(|| args.skipped("no sites"))))
}

pub fn lem_tj(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    over_pairs(ctx, args, |set, j| check_lem_tj(&ctx.t, set, j, d))
}

pub fn y1j(ctx: &InstanceContext, args: &Args) -> Result<Eval> {
    if let Some(e) = lifted_fits(ctx, args) {
        return Ok(e);
    }
    let d = args.int("d")?;
    let t0 = args.get("t0");
    over_pairs(ctx, args, |set, j| check_y1j(&ctx.t, set, j, d, t0))
}

// ------------------------------------------------------------ no instance

pub fn calculus_bound(args: &Args) -> Result<Eval> {
    let d = args.int("d")?;
    if d == 0 {
        return Err(args.bad("d must be at least 1"));
    }
    let floor = (4.0 * E).powf(d as f64 / 2.0);
    let t0 = args.opt("t0").unwrap_or(1.1 * floor);
    let mut a = args.clone();
    a.map.insert("t0".into(), t0);
    if !(t0 > floor) {
        return Ok(Eval::none(a.skipped(format!("t0 must exceed (4e)^(d/2) = {floor:e}"))));
    }
    let v = calculus_bound_values(d, t0)?;
    let mut rec = a.record(v.integral, v.bound).with_note(format!(
        "quadrature error {:e} over [t0, {:e}]",
        v.error_estimate, v.upper
    ));
    if v.error_estimate > super::calculus::QUAD_TOL {
        rec = rec.force_violated("quadrature did not reach its tolerance");
    }
    Ok(Eval::plain(rec))
}

/// Post-check sanity for records built by hand.
pub fn debug_assert_consistent(r: &CheckRecord) {
    if r.status == Status::Holds {
        debug_assert!(!is_violation(r.lhs, r.rhs), "{r:?}");
    }
}
