use super::*;
use crate::ensembles::{classical_projection, subcube, EnsembleKind, EnsembleParams};
use crate::pauli::PauliIndex;
use crate::record::params;
use approx::assert_abs_diff_eq;
use std::f64::consts::E;

fn none() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

fn dictator(n: usize) -> Observable {
    let table: Vec<bool> = (0..1usize << n).map(|x| x & 1 == 0).collect();
    classical_projection(n, &table).unwrap()
}

fn pauli(d: &[u8]) -> Observable {
    Observable::pauli(PauliIndex::new(d).unwrap())
}

#[test]
fn registry_ids_are_unique_and_sorted() {
    let ids: Vec<&str> = registry().iter().map(|c| c.id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(ids, sorted);
}

#[test]
fn unknown_ids_and_params_are_errors() {
    let t = pauli(&[1]);
    assert!(matches!(run_check("nope", &t, &none()), Err(Error::UnknownCheck(_))));
    assert!(matches!(
        run_check("poincare", &t, &params([("t", 1.0)])),
        Err(Error::InvalidParameter(_))
    ));
    assert!(run_check("buser", &t, &params([("p", 3.0)])).is_err());
}

#[test]
fn dictator_has_the_expected_form() {
    let t = dictator(3);
    assert_abs_diff_eq!(t.coefficient(&PauliIndex::identity(3).unwrap()).re, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(t.coefficient(&PauliIndex::new(&[1, 0, 0]).unwrap()).re, 0.5, epsilon = 1e-12);
}

#[test]
fn eldan_gross_dictator_constant() {
    // M = 1/4, ‖|∇T|‖_1 = 1/2, var = 1/4
    let want = 0.25 * 5f64.ln().sqrt() / 0.5;
    let ctx = InstanceContext::new("dict", dictator(3));
    let e = run_check_ctx("eldan_gross", &ctx, &none()).unwrap();
    assert_abs_diff_eq!(e.record.lhs, 0.25 * 5f64.ln().sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(e.record.rhs, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(e.constant_ratio.unwrap(), want, epsilon = 1e-12);
    assert!((want - 0.6345).abs() < 1e-3);
}

#[test]
fn kk18_on_subcube_four() {
    let t = subcube(4, 4).unwrap();
    let r = run_check("kk18", &t, &none()).unwrap();
    let m = 1.0 / 64.0;
    assert_abs_diff_eq!(r.lhs, m, epsilon = 1e-12);
    assert_abs_diff_eq!(r.rhs, 6.0 * E * 2.0 * E * m * 64f64.ln(), epsilon = 1e-10);
    assert_eq!(r.status, Status::Holds);
    // k = 1 has M = 1/4 > e^{-2}
    let r = run_check("kk18", &subcube(4, 1).unwrap(), &none()).unwrap();
    assert_eq!(r.status, Status::SkippedPrecondition);
}

#[test]
fn paley_zygmund_saturates_on_projections() {
    let t = subcube(3, 2).unwrap();
    let r = run_check("paley_zygmund", &t, &params([("delta", 1e-9)])).unwrap();
    assert_abs_diff_eq!(r.lhs, 0.25, epsilon = 1e-8);
    assert_abs_diff_eq!(r.rhs, 0.25, epsilon = 1e-12);
    assert_eq!(r.status, Status::Holds);
}

#[test]
fn buser_on_pauli_strings() {
    for (d, m) in [(&[1u8, 0, 0][..], 1.0), (&[1, 2, 0], 2.0), (&[3, 2, 1], 3.0)] {
        for t in [0.1, 0.5, 1.0] {
            let r = run_check("buser", &pauli(d), &params([("p", 2.0), ("t", t)])).unwrap();
            assert_abs_diff_eq!(r.lhs, 1.0 - (-t * m).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(r.rhs, (2.0 * t * m).sqrt(), epsilon = 1e-12);
            assert_eq!(r.status, Status::Holds);
        }
    }
}

#[test]
fn poincare_is_tight_in_degree_one() {
    let spec = EnsembleSpec::new(EnsembleKind::RandomLowDegree, 4, 3, 6).with_params(EnsembleParams {
        degree: Some(1),
        ..Default::default()
    });
    let est = estimate_constant("poincare", &spec, &none()).unwrap();
    assert_abs_diff_eq!(est.sup_ratio, 1.0, epsilon = 1e-9);
    assert_eq!(est.records.len(), 6);
}

#[test]
fn curvature_sign_control() {
    let t = dictator(3);
    let good = run_check("curvature_i", &t, &none()).unwrap();
    assert_eq!(good.status, Status::Holds);
    let bad = run_check("curvature_i", &t, &params([("coefficient", 2.0)])).unwrap();
    assert_eq!(bad.status, Status::Violated);
}

#[test]
fn curvature_corrected_identity_on_noncommuting_input() {
    // σ_1 ⊗ 𝟙 + σ_2 ⊗ σ_3: d_0 T does not commute with T
    let t = pauli(&[1, 0]).add(&pauli(&[2, 3])).unwrap();
    assert_eq!(run_check("curvature_i_symmetrized", &t, &none()).unwrap().status, Status::Holds);
    let spec = EnsembleSpec::new(EnsembleKind::RandomLowDegree, 3, 1, 8);
    for inst in make(&spec).unwrap() {
        let r = run_check("curvature_i_symmetrized", &inst.observable, &none()).unwrap();
        assert_eq!(r.status, Status::Holds, "{r:?}");
    }
}

#[test]
fn hypothesis_gate_skips() {
    let t = pauli(&[1, 1]);
    let r = run_check("isoperimetric", &t, &none()).unwrap();
    assert_eq!(r.status, Status::SkippedPrecondition);
    assert!(r.note.contains("projection"));
    assert_eq!(r.ratio, None);
}

#[test]
fn log_sobolev_on_a_projection() {
    // T = P with tr P = 1/2: Ent(P²) = ½ ln 2 (normalized), ‖T‖_2² = 1/2
    let t = dictator(2);
    let r = run_check("log_sobolev", &t, &none()).unwrap();
    let want = 0.0 - 0.5 * 0.5f64.ln();
    assert_abs_diff_eq!(r.lhs, want, epsilon = 1e-12);
    assert_abs_diff_eq!(r.rhs, 0.5, epsilon = 1e-12);
}

#[test]
fn calculus_bound_standalone() {
    let e = run_standalone("calculus_bound", &params([("d", 2.0)])).unwrap();
    assert_eq!(e.record.instance_id, NO_INSTANCE);
    assert_eq!(e.record.status, Status::Holds);
    assert!(e.record.params.contains_key("t0"));
    let low = run_standalone("calculus_bound", &params([("d", 1.0), ("t0", 1.0)])).unwrap();
    assert_eq!(low.record.status, Status::SkippedPrecondition);
}

#[test]
fn subset_family_shapes() {
    assert_eq!(subset_family(3).len(), 7);
    let big = subset_family(6);
    assert_eq!(big.len(), 9);
    assert_eq!(big[6].mask(), 0b010101);
    assert_eq!(big[8].len(), 6);
}

#[test]
fn prrr_and_cor_ik1_hold_on_classical() {
    let t = dictator(3);
    for p in [1.0, 1.5] {
        let r = run_check("prrr", &t, &params([("p", p)])).unwrap();
        assert_eq!(r.status, Status::Holds, "{r:?}");
    }
    let r = run_check("cor_ik1", &t, &none()).unwrap();
    assert_eq!(r.status, Status::Holds, "{r:?}");
    assert!(r.params.contains_key("J"));
}

#[test]
fn run_pairs_is_sorted_and_deterministic() {
    let spec = EnsembleSpec::new(EnsembleKind::RandomProjection, 3, 9, 4);
    let inst = make(&spec).unwrap();
    let reqs = vec![
        CheckRequest::new("poincare"),
        CheckRequest::new("buser").with("t", 0.1),
        CheckRequest::new("calculus_bound"),
    ];
    let a = run_pairs(&reqs, &inst).unwrap();
    let b = run_pairs(&reqs, &inst).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4 + 4 + 1);
    for w in a.windows(2) {
        assert_ne!(record_order(&w[0].record, &w[1].record), Ordering::Greater);
    }
}

#[test]
fn estimated_constants_reverify() {
    let spec = EnsembleSpec::new(EnsembleKind::RandomProjection, 4, 2, 8).with_params(EnsembleParams {
        rank: Some(8),
        ..Default::default()
    });
    let inst = make(&spec).unwrap();
    for id in ["dim_free_kkl", "eldan_gross", "isoperimetric", "kkl_lp", "talagrand_influence", "kkl_geometric"] {
        let est = estimate_over(id, &inst, &none()).unwrap();
        assert!(est.sup_ratio.is_finite(), "{id}");
        assert_eq!(verify_at_estimate(&est, &inst, &none()).unwrap(), 0, "{id}");
    }
}

#[test]
fn empty_ensemble_is_reported() {
    let spec = EnsembleSpec::new(EnsembleKind::PauliString, 3, 0, 3);
    let err = estimate_constant("eldan_gross", &spec, &none()).unwrap_err();
    assert!(matches!(err, Error::EmptyEnsemble(_)));
}
