//! Per-instance cache shared by every check run on the same observable.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use crate::dense::DenseOperator;
use crate::error::Result;
use crate::hypercube::{gradient_magnitude, index_of, partial_derivative, IndexValue, PREDICATE_TOL};
use crate::pauli::Observable;

/// Hypotheses a check may require of its instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    None,
    /// T ≥ 0.
    Positive,
    /// 0 ≤ T ≤ 1.
    UnitInterval,
    /// ‖T‖_∞ ≤ 1.
    Contraction,
    /// ‖T‖_2 ≤ 1.
    L2Ball,
    Projection,
    BalancedProjection,
}

impl Hypothesis {
    pub fn describe(&self) -> &'static str {
        match self {
            Hypothesis::None => "none",
            Hypothesis::Positive => "T >= 0",
            Hypothesis::UnitInterval => "0 <= T <= 1",
            Hypothesis::Contraction => "||T||_inf <= 1",
            Hypothesis::L2Ball => "||T||_2 <= 1",
            Hypothesis::Projection => "projection",
            Hypothesis::BalancedProjection => "balanced projection",
        }
    }
}

fn once<T: Clone>(cell: &OnceLock<T>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    if let Some(v) = cell.get() {
        return Ok(v.clone());
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v).clone())
}

fn once_ref<T>(cell: &OnceLock<T>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

pub struct InstanceContext {
    pub id: String,
    pub t: Observable,
    dense: OnceLock<DenseOperator>,
    derivatives: OnceLock<Vec<Observable>>,
    derivatives_dense: OnceLock<Vec<DenseOperator>>,
    gradient: OnceLock<DenseOperator>,
    influences: Mutex<BTreeMap<u64, Vec<f64>>>,
    index: OnceLock<IndexValue>,
    projection: OnceLock<bool>,
}

impl InstanceContext {
    pub fn new(id: impl Into<String>, t: Observable) -> Self {
        InstanceContext {
            id: id.into(),
            t,
            dense: OnceLock::new(),
            derivatives: OnceLock::new(),
            derivatives_dense: OnceLock::new(),
            gradient: OnceLock::new(),
            influences: Mutex::new(BTreeMap::new()),
            index: OnceLock::new(),
            projection: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.t.n()
    }

    pub fn dense(&self) -> Result<&DenseOperator> {
        once_ref(&self.dense, || DenseOperator::synthesize(&self.t))
    }

    pub fn variance(&self) -> f64 {
        self.t.variance()
    }

    /// d_j T for every site.
    pub fn derivatives(&self) -> Result<&[Observable]> {
        once_ref(&self.derivatives, || {
            (0..self.n()).map(|j| partial_derivative(&self.t, j)).collect()
        })
        .map(Vec::as_slice)
    }

    pub fn derivatives_dense(&self) -> Result<&[DenseOperator]> {
        once_ref(&self.derivatives_dense, || {
            self.derivatives()?.iter().map(DenseOperator::synthesize).collect()
        })
        .map(Vec::as_slice)
    }

    /// |∇T|.
    pub fn gradient(&self) -> Result<&DenseOperator> {
        once_ref(&self.gradient, || gradient_magnitude(&self.t))
    }

    /// Inf_j^p(T) = ‖d_j T‖_p^p for every j.
    pub fn influences(&self, p: f64) -> Result<Vec<f64>> {
        let key = p.to_bits();
        if let Some(v) = self.influences.lock().expect("influence cache").get(&key) {
            return Ok(v.clone());
        }
        let v: Vec<f64> = if p == 2.0 {
            self.derivatives()?.iter().map(Observable::norm2_sq).collect()
        } else {
            self.derivatives_dense()?
                .iter()
                .zip(self.derivatives()?)
                .map(|(d, o)| if o.is_empty() { Ok(0.0) } else { d.schatten_pow(p) })
                .collect::<Result<_>>()?
        };
        self.influences.lock().expect("influence cache").insert(key, v.clone());
        Ok(v)
    }

    pub fn total_influence(&self, p: f64) -> Result<f64> {
        Ok(self.influences(p)?.iter().sum())
    }

    pub fn max_influence(&self, p: f64) -> Result<f64> {
        Ok(self.influences(p)?.iter().cloned().fold(0.0, f64::max))
    }

    /// ‖d_j T‖_1 for every j.
    pub fn l1_derivatives(&self) -> Result<Vec<f64>> {
        self.influences(1.0)
    }

    /// M(T) = Σ_j ‖d_j T‖_1².
    pub fn geometric_mass(&self) -> Result<f64> {
        Ok(self.l1_derivatives()?.iter().map(|x| x * x).sum())
    }

    pub fn index(&self) -> Result<IndexValue> {
        once(&self.index, || index_of(&self.t))
    }

    pub fn eigen_range(&self) -> Result<(f64, f64)> {
        let ev = self.dense()?.eigenvalues()?;
        Ok((ev[0], ev[ev.len() - 1]))
    }

    pub fn op_norm(&self) -> Result<f64> {
        self.dense()?.schatten_norm(f64::INFINITY)
    }

    pub fn is_hermitian(&self) -> Result<bool> {
        Ok(self.dense()?.is_hermitian())
    }

    pub fn is_projection(&self) -> Result<bool> {
        once(&self.projection, || {
            if !self.is_hermitian()? {
                return Ok(false);
            }
            let m = self.dense()?;
            Ok(m.eigenvalues()?
                .iter()
                .all(|&x| x.abs() <= PREDICATE_TOL || (x - 1.0).abs() <= PREDICATE_TOL))
        })
    }

    pub fn satisfies(&self, h: Hypothesis) -> Result<bool> {
        Ok(match h {
            Hypothesis::None => true,
            Hypothesis::Positive => self.is_hermitian()? && self.eigen_range()?.0 >= -PREDICATE_TOL,
            Hypothesis::UnitInterval => {
                self.is_hermitian()? && {
                    let (lo, hi) = self.eigen_range()?;
                    lo >= -PREDICATE_TOL && hi <= 1.0 + PREDICATE_TOL
                }
            }
            Hypothesis::Contraction => self.op_norm()? <= 1.0 + PREDICATE_TOL,
            Hypothesis::L2Ball => self.t.norm2_sq().sqrt() <= 1.0 + PREDICATE_TOL,
            Hypothesis::Projection => self.is_projection()?,
            Hypothesis::BalancedProjection => self.is_projection()? && (self.variance() - 0.25).abs() <= 1e-9,
        })
    }
}
