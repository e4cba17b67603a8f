//! Constructions on n + 1 sites used to move site j's Pauli digit to an extra
//! last site, and the exact identities relating them.
//!
//! The extra site has index n (sites are 0-based).

use crate::dense::{layercake_trace_range, DenseOperator};
use crate::error::{Error, Result};
use crate::hypercube::{conditional_expectation, lp_norm, partial_derivative, SubsetJ};
use crate::pauli::{Observable, PauliIndex};
use crate::record::{params, CheckRecord};

/// Tolerance of the exact scaffold identities.
pub const SCAFFOLD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftKind {
    Lift,
    MoveToLast { j: usize },
    Tj { j: usize, d: usize },
    Tcopy { j: usize },
    Ttilde { j: usize },
    Aj { j: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedObservable {
    source_n: usize,
    kind: LiftKind,
    observable: Observable,
}

impl LiftedObservable {
    fn new(source_n: usize, kind: LiftKind, observable: Observable) -> Self {
        debug_assert_eq!(observable.n(), source_n + 1);
        LiftedObservable {
            source_n,
            kind,
            observable,
        }
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn kind(&self) -> LiftKind {
        self.kind
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn into_observable(self) -> Observable {
        self.observable
    }
}

fn check_site(n: usize, j: usize) -> Result<()> {
    if j >= n {
        return Err(Error::SiteOutOfRange { site: j, n });
    }
    Ok(())
}

/// s̃ = (s, 0).
fn lift_index(s: &PauliIndex) -> Result<PauliIndex> {
    s.extend(&[0])
}

/// s^{j↷}: digit j moved to the extra site, zero left behind.
fn moved_index(s: &PauliIndex, j: usize) -> Result<PauliIndex> {
    let a = s.digit(j);
    s.with_digit(j, 0).extend(&[a])
}

/// s ⊕ e_{n}^{s_j}: digit j copied to the extra site.
fn copied_index(s: &PauliIndex, j: usize) -> Result<PauliIndex> {
    s.extend(&[s.digit(j)])
}

fn reindex<F>(t: &Observable, mut f: F) -> Result<Observable>
where
    F: FnMut(&PauliIndex) -> Result<Option<PauliIndex>>,
{
    let mut terms = Vec::with_capacity(t.len());
    for (s, c) in t.iter() {
        if let Some(u) = f(s)? {
            terms.push((u, *c));
        }
    }
    Observable::from_terms(t.n() + 1, terms)
}

/// T ⊗ 𝟙.
pub fn lift(t: &Observable) -> Result<LiftedObservable> {
    let obs = reindex(t, |s| lift_index(s).map(Some))?;
    Ok(LiftedObservable::new(t.n(), LiftKind::Lift, obs))
}

/// Ψ_j(T ⊗ 𝟙): every index mapped by s ↦ s^{j↷}.
pub fn move_to_last(t: &Observable, j: usize) -> Result<LiftedObservable> {
    check_site(t.n(), j)?;
    let obs = reindex(t, |s| moved_index(s, j).map(Some))?;
    Ok(LiftedObservable::new(t.n(), LiftKind::MoveToLast { j }, obs))
}

/// T_j: coefficient T̂(s ⊕ e_j^α) placed on s ⊕ e_n^α, for supp(s) ⊆ J^c and
/// |supp(s)| = d − 1.
pub fn build_tj(t: &Observable, set: &SubsetJ, j: usize, d: usize) -> Result<LiftedObservable> {
    check_site(t.n(), j)?;
    if set.n() != t.n() {
        return Err(Error::SiteMismatch(t.n(), set.n()));
    }
    if !set.contains(j) {
        return Err(Error::InvalidParameter(format!("T_j needs j = {j} in J")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("T_j needs d >= 1".into()));
    }
    let rest = set.complement().with(j)?;
    let obs = reindex(t, |u| {
        if u.digit(j) != 0 && rest.covers(u) && u.support_size() == d {
            moved_index(u, j).map(Some)
        } else {
            Ok(None)
        }
    })?;
    Ok(LiftedObservable::new(t.n(), LiftKind::Tj { j, d }, obs))
}

/// T_copy,j: s_j = 0 terms lifted, the others moved to the last site.
pub fn build_tcopy(t: &Observable, j: usize) -> Result<LiftedObservable> {
    check_site(t.n(), j)?;
    let obs = reindex(t, |s| {
        if s.digit(j) == 0 {
            lift_index(s).map(Some)
        } else {
            moved_index(s, j).map(Some)
        }
    })?;
    Ok(LiftedObservable::new(t.n(), LiftKind::Tcopy { j }, obs))
}

/// T̃_j: s_j = 0 terms lifted, the others with digit s_j copied to the last site.
pub fn build_ttilde(t: &Observable, j: usize) -> Result<LiftedObservable> {
    check_site(t.n(), j)?;
    let obs = reindex(t, |s| copied_index(s, j).map(Some))?;
    Ok(LiftedObservable::new(t.n(), LiftKind::Ttilde { j }, obs))
}

/// A_j = σ_{e_j^1} + σ_{e_j^2} + σ_{e_j^3} on n + 1 sites.
pub fn build_aj(n: usize, j: usize) -> Result<LiftedObservable> {
    check_site(n, j)?;
    let base = PauliIndex::identity(n + 1)?;
    let obs = Observable::from_real_terms(n + 1, (1..4u8).map(|a| (base.with_digit(j, a), 1.0)))?;
    Ok(LiftedObservable::new(n, LiftKind::Aj { j }, obs))
}

/// J^c ∪ {extra site} on n + 1 sites.
fn outer_set(set: &SubsetJ) -> Result<SubsetJ> {
    let n = set.n();
    SubsetJ::from_mask(n + 1, set.complement().mask() | 1 << n)
}

/// E_{J^c ∪ {n}}(A_j T̃_j).
pub fn expected_aj_ttilde(t: &Observable, set: &SubsetJ, j: usize) -> Result<Observable> {
    let a = build_aj(t.n(), j)?;
    let tt = build_ttilde(t, j)?;
    let prod = a.observable().multiply(tt.observable())?;
    conditional_expectation(&prod, &outer_set(set)?)
}

fn require_member(set: &SubsetJ, t: &Observable, j: usize) -> Result<()> {
    check_site(t.n(), j)?;
    if set.n() != t.n() {
        return Err(Error::SiteMismatch(t.n(), set.n()));
    }
    if !set.contains(j) {
        return Err(Error::InvalidParameter(format!("site {j} not in J")));
    }
    Ok(())
}

/// E(A_j T̃_j) = E(d_n T_copy,j), coefficient-wise.
pub fn check_lem_cjc(t: &Observable, set: &SubsetJ, j: usize) -> Result<CheckRecord> {
    require_member(set, t, j)?;
    let lhs = expected_aj_ttilde(t, set, j)?;
    let copy = build_tcopy(t, j)?;
    let rhs = conditional_expectation(&partial_derivative(copy.observable(), t.n())?, &outer_set(set)?)?;
    let dev = lhs.max_deviation(&rhs)?;
    Ok(CheckRecord::compare("lem_cjc", params([("j", j as f64)]), dev, SCAFFOLD_TOL))
}

/// ‖d_n T_copy,j‖_1 = ‖d_j T‖_1.
pub fn check_key_identity8(t: &Observable, j: usize) -> Result<CheckRecord> {
    check_site(t.n(), j)?;
    let copy = build_tcopy(t, j)?;
    let a = lp_norm(&partial_derivative(copy.observable(), t.n())?, 1.0)?;
    let b = lp_norm(&partial_derivative(t, j)?, 1.0)?;
    Ok(CheckRecord::compare("key_identity8", params([("j", j as f64)]), (a - b).abs(), SCAFFOLD_TOL)
        .with_note(format!("lifted {a:e} original {b:e}")))
}

/// Σ|T̂(s ⊕ e_j^α)|² = |⟨T̄_j, A_j T̃_j⟩|² with T̄_j = T_j/‖T_j‖_2.
///
/// The pairing is the trace inner product tr(X^* Y); for Hermitian T it
/// coincides with tr(X·Y).
pub fn check_lem_tj(t: &Observable, set: &SubsetJ, j: usize, d: usize) -> Result<CheckRecord> {
    require_member(set, t, j)?;
    let ps = params([("j", j as f64), ("d", d as f64)]);
    let tj = build_tj(t, set, j, d)?;
    let mass = tj.observable().norm2_sq();
    if mass == 0.0 {
        return Ok(CheckRecord::skipped("lem_tj", ps, "T_j = 0"));
    }
    let bar = tj.observable().scale_real(1.0 / mass.sqrt());
    let a = build_aj(t.n(), j)?;
    let at = a.observable().multiply(build_ttilde(t, j)?.observable())?;
    let pairing = bar.adjoint().multiply(&at)?.trace();
    let dev = (mass - pairing.norm_sqr()).abs();
    Ok(CheckRecord::compare("lem_tj", ps, dev, SCAFFOLD_TOL))
}

/// ∫_0^{t_0} tr[1_{(t,∞)}(|T̄_j|)·|E(A_j T̃_j)|] dt ≤ t_0‖d_j T‖_1.
pub fn check_y1j(t: &Observable, set: &SubsetJ, j: usize, d: usize, t0: f64) -> Result<CheckRecord> {
    require_member(set, t, j)?;
    if !(t0 > 0.0) {
        return Err(Error::InvalidParameter(format!("t_0 = {t0} must be positive")));
    }
    let ps = params([("j", j as f64), ("d", d as f64), ("t0", t0)]);
    let tj = build_tj(t, set, j, d)?;
    let mass = tj.observable().norm2_sq();
    if mass == 0.0 {
        return Ok(CheckRecord::skipped("y1j", ps, "T_j = 0"));
    }
    let bar = DenseOperator::synthesize(&tj.observable().scale_real(1.0 / mass.sqrt()))?.abs()?;
    let weight = DenseOperator::synthesize(&expected_aj_ttilde(t, set, j)?)?.abs()?;
    let lhs = layercake_trace_range(&weight, &bar, 0.0, t0)?.re;
    let rhs = t0 * lp_norm(&partial_derivative(t, j)?, 1.0)?;
    Ok(CheckRecord::compare("y1j", ps, lhs, rhs))
}
