use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qhypercube::dense::DenseOperator;
use qhypercube::ensembles::{classical_projection, instance_rng, make, random_low_degree, remark_p2, subcube};
use qhypercube::ensembles::{EnsembleKind, EnsembleParams, EnsembleSpec, Instance};
use qhypercube::hypercube::{index_of, influences, weight_range};
use qhypercube::record::{params, CheckRecord, Status};
use qhypercube::restriction::check_tav;
use qhypercube::suite::{estimate_over, lookup, run_check, run_pairs, run_standalone, verify_at_estimate};
use qhypercube::{Error, Observable};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{self, ConstantRow};
use crate::witness;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub records: usize,
    /// Violations that make the run fail.
    pub failures: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        u8::from(self.failures > 0)
    }
}

/// Runs `f` on a pool of the configured size.
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j);
    }
    let pool = b.build().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn retolerate(cfg: &RunConfig, records: &mut [CheckRecord]) {
    if cfg.has_tolerance_overrides() {
        let (rel, abs) = (cfg.tolerance("violation_rel"), cfg.tolerance("violation_abs"));
        for r in records {
            r.reclassify(rel, abs);
        }
    }
}

fn unconditional_violations(records: &[CheckRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.status == Status::Violated && lookup(&r.check_id).is_ok_and(|c| c.is_unconditional()))
        .count()
}

/// Every (check, instance) pair; writes records.jsonl and summary.csv.
pub fn verify(cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let instances = cfg.instances()?;
    let requests = cfg.requests();
    let evals = with_pool(cfg.parallelism, || run_pairs(&requests, &instances))??;
    let mut records: Vec<CheckRecord> = evals.into_iter().map(|e| e.record).collect();
    retolerate(cfg, &mut records);
    report::ensure_dir(&cfg.output)?;
    report::write_records(&cfg.output, &records)?;
    report::write_summary(&cfg.output, &report::summarize(&records))?;
    let failures = unconditional_violations(&records);
    for r in records.iter().filter(|r| r.status == Status::Violated) {
        eprintln!("violated: {} on {} (lhs {:e}, rhs {:e})", r.check_id, r.instance_id, r.lhs, r.rhs);
    }
    Ok(Outcome {
        records: records.len(),
        failures,
    })
}

fn constant_row(cfg: &RunConfig, id: &str, params: &BTreeMap<String, f64>, spec: &EnsembleSpec) -> CliResult<ConstantRow> {
    let instances = make(spec)?;
    let mut row = ConstantRow {
        check_id: id.to_string(),
        ensemble: spec.kind.name().to_string(),
        n: spec.n,
        count: instances.len(),
        sup_ratio: None,
        witness: String::new(),
        constant: None,
        violations: 0,
        status: "ok",
    };
    match estimate_over(id, &instances, params) {
        Ok(est) => {
            let mut recheck = est.records.clone();
            retolerate(cfg, &mut recheck);
            row.sup_ratio = Some(est.sup_ratio);
            row.witness = est.witness.clone();
            row.constant = est.admissible()?.map(|(k, v)| (k.to_string(), v));
            row.violations = if row.constant.is_some() {
                verify_at_estimate(&est, &instances, params)?
            } else {
                unconditional_violations(&recheck)
            };
        }
        Err(Error::EmptyEnsemble(_)) => {
            eprintln!("{id} over {} n = {}: no instance passed the preconditions", row.ensemble, row.n);
            row.status = "empty";
        }
        Err(e) => return Err(e.into()),
    }
    Ok(row)
}

/// Supremum of each check's constant ratio per ensemble, plus the trend
/// across the configured site counts; writes constants.csv.
pub fn constants(cfg: &RunConfig) -> CliResult<(Outcome, Vec<ConstantRow>)> {
    cfg.validate()?;
    cfg.instances()?;
    let mut rows = Vec::new();
    with_pool(cfg.parallelism, || -> CliResult<()> {
        for req in cfg.requests() {
            let info = lookup(&req.id)?;
            if !info.needs_instance() {
                eprintln!("{}: no instance input, nothing to estimate", req.id);
                continue;
            }
            for e in &cfg.ensembles {
                let spec = cfg.seeded(e);
                rows.push(constant_row(cfg, &req.id, &req.params, &spec)?);
                for &n in &cfg.trend {
                    if n == spec.n {
                        continue;
                    }
                    let mut s = spec.clone();
                    s.n = n;
                    if s.validate().is_err() {
                        continue;
                    }
                    rows.push(constant_row(cfg, &req.id, &req.params, &s)?);
                }
            }
        }
        Ok(())
    })??;
    rows.sort_by(|a, b| (&a.check_id, &a.ensemble, a.n).cmp(&(&b.check_id, &b.ensemble, b.n)));
    report::ensure_dir(&cfg.output)?;
    report::write_constants(&cfg.output, &rows)?;
    let failures = rows.iter().map(|r| r.violations).sum();
    Ok((
        Outcome {
            records: rows.len(),
            failures,
        },
        rows,
    ))
}

/// Band weights, variance, influences, M(T), ind(T) and degree as JSON.
pub fn spectrum(t: &Observable) -> CliResult<serde_json::Value> {
    let n = t.n();
    let bands: Vec<f64> = (0..=n).map(|d| weight_range(t, d, d)).collect();
    let mut infl = serde_json::Map::new();
    for (key, p) in [("1", 1.0), ("1.5", 1.5), ("2", 2.0)] {
        let v = influences(t, p)?;
        let total: f64 = v.iter().sum();
        infl.insert(key.into(), json!({ "per_site": v, "total": total }));
    }
    let l1 = influences(t, 1.0)?;
    let ind = index_of(t)?;
    Ok(json!({
        "n": n,
        "degree": t.degree(),
        "variance": t.variance(),
        "weights": bands,
        "influences": infl,
        "geometric_mass": l1.iter().map(|x| x * x).sum::<f64>(),
        "index": { "value": ind.value, "status": ind.status },
    }))
}

pub fn spectrum_file(path: &Path) -> CliResult<serde_json::Value> {
    let s = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let t = Observable::from_json(&s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    spectrum(&t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    pub check_id: String,
    pub ensemble: String,
    pub n: usize,
    pub result: Option<witness::SearchResult>,
}

/// Hill-climbs the check's ratio from every instance of every ensemble and
/// writes the best observable per ensemble.
pub fn witness(cfg: &RunConfig, id: &str) -> CliResult<Vec<WitnessReport>> {
    cfg.validate()?;
    let info = lookup(id).map_err(|e| CliError::Config(e.to_string()))?;
    if !info.needs_instance() {
        return Err(CliError::Config(format!("{id} takes no instance")));
    }
    let params = cfg
        .requests()
        .into_iter()
        .find(|r| r.id == id)
        .map(|r| r.params)
        .unwrap_or_default();
    report::ensure_dir(&cfg.output)?;
    let mut out = Vec::new();
    for (k, e) in cfg.ensembles.iter().enumerate() {
        let spec = cfg.seeded(e);
        let starts: Vec<Instance> = make(&spec)?;
        let seed = cfg.seed.wrapping_add(k as u64);
        let result = with_pool(cfg.parallelism, || witness::search(id, &starts, &params, &cfg.witness, seed))??;
        if let Some(r) = &result {
            let path = cfg.output.join(format!("witness-{id}-{}-n{}.json", spec.kind.name(), spec.n));
            fs::write(&path, r.observable.to_json()).map_err(|e| CliError::io(path, e))?;
        }
        out.push(WitnessReport {
            check_id: id.to_string(),
            ensemble: spec.kind.name().to_string(),
            n: spec.n,
            result,
        });
    }
    Ok(out)
}

pub struct SelftestItem {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn item(name: &'static str, f: impl FnOnce() -> qhypercube::Result<(bool, String)>) -> SelftestItem {
    match f() {
        Ok((pass, detail)) => SelftestItem { name, pass, detail },
        Err(e) => SelftestItem {
            name,
            pass: false,
            detail: e.to_string(),
        },
    }
}

/// Fast built-in regressions.
pub fn selftest() -> Vec<SelftestItem> {
    let none = BTreeMap::new();
    vec![
        item("fourier_round_trip", || {
            let mut worst: f64 = 0.0;
            for n in 1..=4 {
                let mut rng = instance_rng(17, n);
                let t = random_low_degree(n, n, &mut rng)?;
                let back = DenseOperator::synthesize(&t)?.analyze();
                worst = worst.max(t.max_deviation(&back)?);
            }
            Ok((worst <= 1e-10, format!("max deviation {worst:e}")))
        }),
        item("eldan_gross_dictator", || {
            let table: Vec<bool> = (0..8).map(|x| x & 1 == 0).collect();
            let r = run_check("eldan_gross", &classical_projection(3, &table)?, &none)?;
            let k = r.ratio.unwrap_or(f64::NAN);
            Ok(((k - 0.6345).abs() <= 1e-3, format!("K = {k:.6}")))
        }),
        item("kk18_subcube", || {
            let r = run_check("kk18", &subcube(4, 4)?, &none)?;
            let ok = r.status == Status::Holds && (r.lhs - 1.0 / 64.0).abs() <= 1e-12;
            Ok((ok, format!("W_1 = {:e}, bound {:e}", r.lhs, r.rhs)))
        }),
        item("poincare_degree_one", || {
            let spec = EnsembleSpec::new(EnsembleKind::RandomLowDegree, 4, 1, 4).with_params(EnsembleParams {
                degree: Some(1),
                ..Default::default()
            });
            let est = estimate_over("poincare", &make(&spec)?, &none)?;
            Ok(((est.sup_ratio - 1.0).abs() <= 1e-9, format!("sup ratio {:e}", est.sup_ratio)))
        }),
        item("curvature_negative_control", || {
            let t = subcube(3, 2)?;
            let good = run_check("curvature_i", &t, &none)?;
            let bad = run_check("curvature_i", &t, &params([("coefficient", 2.0)]))?;
            let ok = good.status == Status::Holds && bad.status == Status::Violated;
            Ok((ok, format!("correct sign {}, flipped sign {}", good.status.name(), bad.status.name())))
        }),
        item("calculus_bound_grid", || {
            let mut ok = true;
            for d in 1..=3 {
                for f in [1.1, 2.0, 5.0] {
                    let t0 = f * (4.0 * std::f64::consts::E).powf(d as f64 / 2.0);
                    let e = run_standalone("calculus_bound", &params([("d", d as f64), ("t0", t0)]))?;
                    ok &= e.record.status == Status::Holds;
                }
            }
            Ok((ok, "d in 1..=3, t0/(4e)^(d/2) in {1.1, 2, 5}".into()))
        }),
        item("tav_exact", || {
            let mut rng = instance_rng(3, 0);
            let t = random_low_degree(3, 3, &mut rng)?;
            let r = check_tav(&t, 0.25)?;
            Ok((r.status == Status::Holds, format!("deviation {:e}", r.lhs)))
        }),
        item("remark_p2_values", || {
            let t = remark_p2(4)?;
            let inf: f64 = influences(&t, 2.0)?.iter().sum();
            let ok = (t.variance() - 1.0 / 16.0).abs() <= 1e-12 && (inf - 1.0 / 16.0).abs() <= 1e-12;
            Ok((ok, format!("var {:e}, Inf {:e}", t.variance(), inf)))
        }),
    ]
}
