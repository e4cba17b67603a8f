//! Check outcomes and their JSON-lines encoding.
//!
//! Reals are written with 17 significant digits in exponent form so that a
//! record round-trips bit for bit; non-finite values are written as null.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

/// Relative slack in the violation rule lhs > rhs·(1 + REL) + ABS.
pub const VIOLATION_REL: f64 = 1e-9;
pub const VIOLATION_ABS: f64 = 1e-12;
/// Below this rhs the ratio is not reported.
pub const RATIO_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Violated,
    SkippedPrecondition,
    Degenerate,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Violated => "violated",
            Status::SkippedPrecondition => "skipped_precondition",
            Status::Degenerate => "degenerate",
        }
    }
}

/// A real written as 17 significant digits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real17(pub f64);

impl Serialize for Real17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Real17(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

fn ser_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    Real17(*x).serialize(s)
}

fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Real17::deserialize(d)?.0)
}

fn ser_opt_real<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => Real17(*v).serialize(s),
        None => s.serialize_none(),
    }
}

fn ser_params<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k, Real17(*v))))
}

fn de_params<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let m = BTreeMap::<String, Real17>::deserialize(d)?;
    Ok(m.into_iter().map(|(k, v)| (k, v.0)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub instance_id: String,
    #[serde(serialize_with = "ser_params", deserialize_with = "de_params")]
    pub params: BTreeMap<String, f64>,
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_opt_real")]
    pub ratio: Option<f64>,
    pub status: Status,
    pub note: String,
}

pub fn ratio_of(lhs: f64, rhs: f64) -> Option<f64> {
    (rhs > RATIO_FLOOR && lhs.is_finite()).then(|| lhs / rhs)
}

pub fn is_violation(lhs: f64, rhs: f64) -> bool {
    lhs > rhs * (1.0 + VIOLATION_REL) + VIOLATION_ABS
}

impl CheckRecord {
    /// lhs ≤ rhs; status from the violation rule.
    pub fn compare(check_id: &str, params: BTreeMap<String, f64>, lhs: f64, rhs: f64) -> Self {
        let status = if lhs.is_nan() || rhs.is_nan() {
            Status::Degenerate
        } else if is_violation(lhs, rhs) {
            Status::Violated
        } else {
            Status::Holds
        };
        CheckRecord {
            check_id: check_id.to_string(),
            instance_id: String::new(),
            params,
            lhs,
            rhs,
            ratio: ratio_of(lhs, rhs),
            status,
            note: String::new(),
        }
    }

    pub fn skipped(check_id: &str, params: BTreeMap<String, f64>, note: impl Into<String>) -> Self {
        CheckRecord {
            check_id: check_id.to_string(),
            instance_id: String::new(),
            params,
            lhs: f64::NAN,
            rhs: f64::NAN,
            ratio: None,
            status: Status::SkippedPrecondition,
            note: note.into(),
        }
    }

    pub fn degenerate(check_id: &str, params: BTreeMap<String, f64>, lhs: f64, rhs: f64, note: impl Into<String>) -> Self {
        CheckRecord {
            status: Status::Degenerate,
            note: note.into(),
            ..Self::compare(check_id, params, lhs, rhs)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if self.note.is_empty() {
            self.note = note;
        } else if !note.is_empty() {
            self.note = format!("{}; {}", self.note, note);
        }
        self
    }

    pub fn with_instance(mut self, id: &str) -> Self {
        self.instance_id = id.to_string();
        self
    }

    /// Marks the record violated regardless of lhs/rhs (an internal cross-check failed).
    pub fn force_violated(mut self, note: impl Into<String>) -> Self {
        self.status = Status::Violated;
        self.with_note(note)
    }

    /// Re-derives holds/violated under other tolerances. Records whose status
    /// did not come from the default rule (forced, skipped, degenerate) are kept.
    pub fn reclassify(&mut self, rel: f64, abs: f64) {
        let from_rule = match self.status {
            Status::Holds => !is_violation(self.lhs, self.rhs),
            Status::Violated => is_violation(self.lhs, self.rhs),
            _ => false,
        };
        if from_rule {
            let violated = self.lhs > self.rhs * (1.0 + rel) + abs;
            self.status = if violated { Status::Violated } else { Status::Holds };
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json_line(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Builds a params map from (name, value) pairs.
pub fn params<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
