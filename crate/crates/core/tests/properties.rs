//! Randomized invariant checks for the projection and selection layer.

use bifi_core::bifidelity::{
    greedy_select, project_coefficients, projection_error, reconstruct, BiFiModel,
    ProjectionMode,
};
use bifi_core::diagnostics::fit_decay;
use bifi_core::grid::Grid;
use bifi_core::lofi::prolong;
use bifi_core::orchestrate::truncate_model;
use bifi_core::snapshot::{Fidelity, Snapshot, SnapshotLayout, SnapshotSet};
use proptest::prelude::*;

fn grid(len: usize) -> Grid {
    Grid::new(1, 1.0, len, 8.0, 4).unwrap()
}

fn snapshot(values: Vec<f64>, z: f64, fidelity: Fidelity) -> Snapshot {
    let g = grid(values.len());
    let layout = SnapshotLayout { components: vec![("field".to_string(), 1)], grid: g.spec() };
    let mut snap = Snapshot::zeros(layout, &g, vec![z], fidelity);
    snap.values = values;
    snap
}

fn value_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0..10.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inner_product_cauchy_schwarz(a in value_vec(24), b in value_vec(24)) {
        let sa = snapshot(a, 0.0, Fidelity::Low);
        let sb = snapshot(b, 1.0, Fidelity::Low);
        let ip = sa.inner_product(&sb).unwrap();
        prop_assert!(ip.abs() <= sa.norm() * sb.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn greedy_residuals_never_increase(
        rows in proptest::collection::vec(value_vec(16), 4..10),
        k in 1usize..4,
    ) {
        let mut set = SnapshotSet::new();
        for (i, row) in rows.iter().enumerate() {
            set.push(snapshot(row.clone(), i as f64, Fidelity::Low)).unwrap();
        }
        if let Ok(selection) = greedy_select(&set, k.min(rows.len())) {
            for w in selection.residual_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            // pivots are distinct
            let mut pivots = selection.pivots.clone();
            pivots.sort_unstable();
            pivots.dedup();
            prop_assert_eq!(pivots.len(), selection.pivots.len());
        }
    }

    #[test]
    fn projection_error_monotone_in_node_count(
        rows in proptest::collection::vec(value_vec(20), 6..10),
        query in value_vec(20),
    ) {
        let mut set = SnapshotSet::new();
        for (i, row) in rows.iter().enumerate() {
            set.push(snapshot(row.clone(), i as f64, Fidelity::Low)).unwrap();
        }
        let k_max = 4.min(rows.len());
        let selection = match greedy_select(&set, k_max) {
            Ok(s) => s,
            Err(_) => return Ok(()), // degenerate random set
        };
        let lo: Vec<Snapshot> =
            selection.pivots.iter().map(|&p| set.snapshots[p].clone()).collect();
        let hi: Vec<Snapshot> = lo
            .iter()
            .map(|s| {
                let mut h = s.clone();
                h.fidelity = Fidelity::High;
                h
            })
            .collect();
        let model = BiFiModel::new(selection, lo, hi, ProjectionMode::Concatenated).unwrap();
        let q = snapshot(query, 99.0, Fidelity::Low);
        let mut previous = f64::INFINITY;
        for k in 1..=k_max {
            let truncated = truncate_model(&model, k).unwrap();
            let err = match projection_error(&q, &truncated) {
                Ok(e) => e,
                Err(_) => return Ok(()),
            };
            prop_assert!(err <= previous * (1.0 + 1e-9) + 1e-12,
                "error grew from {previous:.6e} to {err:.6e} at k={k}");
            previous = err;
        }
    }

    #[test]
    fn reconstruction_is_exact_for_basis_combinations(
        coeffs in proptest::collection::vec(-2.0..2.0f64, 3),
    ) {
        // three orthogonal indicator-block snapshots: projection recovers
        // any linear combination exactly
        let len = 24;
        let mut set = SnapshotSet::new();
        for i in 0..3 {
            let mut values = vec![0.0; len];
            for v in &mut values[i * 8..(i + 1) * 8] {
                *v = 1.0;
            }
            set.push(snapshot(values, i as f64, Fidelity::Low)).unwrap();
        }
        let selection = greedy_select(&set, 3).unwrap();
        let lo: Vec<Snapshot> =
            selection.pivots.iter().map(|&p| set.snapshots[p].clone()).collect();
        let hi: Vec<Snapshot> = lo
            .iter()
            .map(|s| {
                let mut h = s.clone();
                h.fidelity = Fidelity::High;
                h
            })
            .collect();
        let model = BiFiModel::new(selection, lo.clone(), hi, ProjectionMode::Concatenated).unwrap();
        let mut values = vec![0.0; len];
        for (i, &c) in coeffs.iter().enumerate() {
            let src = lo.iter().find(|s| s.z == vec![i as f64]).unwrap();
            for (v, s) in values.iter_mut().zip(&src.values) {
                *v += c * s;
            }
        }
        let q = snapshot(values.clone(), 50.0, Fidelity::Low);
        let c = project_coefficients(&q, &model).unwrap();
        let bi = reconstruct(&c, &model, vec![50.0], 0.0).unwrap();
        for (a, b) in bi.values.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn prolongation_preserves_constants_and_mass(c in -5.0..5.0f64) {
        let coarse = grid(8);
        let fine = grid(32);
        let snap = snapshot(vec![c; 8], 0.0, Fidelity::Low);
        let fine_snap = prolong(&snap, &fine).unwrap();
        for v in &fine_snap.values {
            prop_assert!((v - c).abs() < 1e-14);
        }
        let coarse_mass: f64 = snap.values.iter().sum::<f64>() * coarse.space_weight();
        let fine_mass: f64 = fine_snap.values.iter().sum::<f64>() * fine.space_weight();
        prop_assert!((coarse_mass - fine_mass).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_recovers_rate(lambda in 0.1..5.0f64, amp in 0.5..10.0f64) {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = times.iter().map(|t| amp * (-lambda * t).exp()).collect();
        let (fit, r2) = fit_decay(&times, &values).unwrap();
        prop_assert!((fit - lambda).abs() < 1e-8 * lambda.max(1.0));
        prop_assert!(r2 > 0.999);
    }
}
