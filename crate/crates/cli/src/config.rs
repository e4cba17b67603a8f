//! JSON run configuration and command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use qhypercube::dense::DENSE_CAP;
use qhypercube::ensembles::{make, EnsembleSpec, Instance};
use qhypercube::record::{VIOLATION_ABS, VIOLATION_REL};
use qhypercube::suite::CheckRequest;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// n above which a warning is printed.
pub const WARN_N: usize = 8;

pub const TOLERANCE_KEYS: [&str; 2] = ["violation_rel", "violation_abs"];

fn default_output() -> PathBuf {
    PathBuf::from("qhc-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    #[serde(default = "WitnessConfig::default_steps")]
    pub steps: usize,
    /// Initial perturbation size in L_2 norm.
    #[serde(default = "WitnessConfig::default_step")]
    pub step: f64,
    #[serde(default = "WitnessConfig::default_min_step")]
    pub min_step: f64,
}

impl WitnessConfig {
    fn default_steps() -> usize {
        200
    }
    fn default_step() -> f64 {
        0.25
    }
    fn default_min_step() -> f64 {
        1e-4
    }
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            steps: Self::default_steps(),
            step: Self::default_step(),
            min_step: Self::default_min_step(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub checks: Vec<CheckRequest>,
    #[serde(default)]
    pub ensembles: Vec<EnsembleSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Added to every ensemble seed; also seeds zrr sampling and witness search.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Option<usize>,
    /// Keys: violation_rel, violation_abs.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub n_cap: Option<usize>,
    /// Site counts at which `constants` re-instantiates every ensemble.
    #[serde(default)]
    pub trend: Vec<usize>,
    #[serde(default)]
    pub witness: WitnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub n_cap: Option<usize>,
}

impl RunConfig {
    pub fn from_json(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.output = p.clone();
        }
        if let Some(j) = o.jobs {
            self.parallelism = Some(j);
        }
        if let Some(c) = o.n_cap {
            self.n_cap = Some(c);
        }
    }

    pub fn n_cap(&self) -> usize {
        self.n_cap.unwrap_or(DENSE_CAP)
    }

    pub fn tolerance(&self, key: &str) -> f64 {
        let default = if key == "violation_rel" { VIOLATION_REL } else { VIOLATION_ABS };
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    pub fn has_tolerance_overrides(&self) -> bool {
        !self.tolerances.is_empty()
    }

    /// Everything that can be checked without running a check.
    pub fn validate(&self) -> CliResult<()> {
        let cfg = |m: String| Err(CliError::Config(m));
        let cap = self.n_cap();
        if cap == 0 || cap > DENSE_CAP {
            return cfg(format!("n_cap {cap} outside 1..={DENSE_CAP}"));
        }
        if self.parallelism == Some(0) {
            return cfg("parallelism must be at least 1".into());
        }
        for c in &self.checks {
            c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&k.as_str()) {
                return cfg(format!("unknown tolerance {k}"));
            }
            if !(*v >= 0.0) || !v.is_finite() {
                return cfg(format!("tolerance {k} = {v} must be finite and non-negative"));
            }
        }
        for e in &self.ensembles {
            self.check_n(e.n, e.kind.name())?;
            self.seeded(e).validate().map_err(|err| CliError::Config(err.to_string()))?;
        }
        for &n in &self.trend {
            self.check_n(n, "trend")?;
        }
        let w = &self.witness;
        if !(w.step > 0.0 && w.min_step > 0.0 && w.min_step <= w.step) {
            return cfg("witness needs 0 < min_step <= step".into());
        }
        Ok(())
    }

    fn check_n(&self, n: usize, what: &str) -> CliResult<()> {
        if n > self.n_cap() {
            return Err(CliError::Config(format!("{what}: n = {n} exceeds the cap {}", self.n_cap())));
        }
        if n > WARN_N {
            eprintln!("warning: {what} at n = {n}: dense work scales as 8^n");
        }
        Ok(())
    }

    /// The ensemble with the global seed folded in.
    pub fn seeded(&self, e: &EnsembleSpec) -> EnsembleSpec {
        let mut e = e.clone();
        e.seed = e.seed.wrapping_add(self.seed);
        e
    }

    /// Check requests with run-wide defaults filled in.
    pub fn requests(&self) -> Vec<CheckRequest> {
        self.checks
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.id == "zrr" && !c.params.contains_key("seed") {
                    // exact in f64 up to 2^53
                    c.params.insert("seed".into(), (self.seed & ((1 << 53) - 1)) as f64);
                }
                c
            })
            .collect()
    }

    /// All instances of all ensembles, with unique ids.
    pub fn instances(&self) -> CliResult<Vec<Instance>> {
        let mut out = Vec::new();
        for e in &self.ensembles {
            out.extend(make(&self.seeded(e))?);
        }
        unique_ids(&out)?;
        Ok(out)
    }
}

pub fn unique_ids(instances: &[Instance]) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for i in instances {
        if !seen.insert(i.id.as_str()) {
            return Err(CliError::Config(format!(
                "duplicate instance id {}: give ensembles with the same kind and n distinct seeds",
                i.id
            )));
        }
    }
    Ok(())
}
