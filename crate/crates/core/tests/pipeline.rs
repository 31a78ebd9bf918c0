//! End-to-end offline/online pipeline checks on small smoke configurations.

use std::path::PathBuf;

use bifi_core::config::RunConfig;
use bifi_core::grid::GridSpec;
use bifi_core::initial::{InitialDataSpec, ProfileKind};
use bifi_core::lofi::LoFiKind;
use bifi_core::orchestrate::{
    cmd_energy_study, cmd_evaluate, cmd_offline, cmd_online, load_offline,
};
use bifi_core::params::ModelParams;

fn smoke_config(out: PathBuf) -> RunConfig {
    RunConfig {
        model: ModelParams { n_species: 2, ..Default::default() },
        hi_grid: GridSpec { dim: 1, x_len: vec![1.0], n_x: vec![16], l_v: 8.0, n_v: 16 },
        lofi: LoFiKind::CoarseKinetic(2),
        initial: InitialDataSpec {
            profile: ProfileKind::Volcano,
            sigma: 0.1,
            ell: 0.1,
            fraction: 0.95,
            periodic_covariance: true,
        },
        m: 8,
        k: 3,
        m_eval: 4,
        k_sweep: vec![2, 3],
        t_final: 0.02,
        output_dir: out,
        workers: 2,
        ..Default::default()
    }
}

#[test]
fn offline_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path().join("run"));
    let summary = cmd_offline(&config).unwrap();
    assert_eq!(summary.lo_completed, 8);
    assert_eq!(summary.hi_completed, 3);
    assert!(summary.warnings.is_empty(), "{:?}", summary.warnings);

    // manifest inventories 8 lo + 3 hi snapshot payloads and verifies
    let (model, manifest) = load_offline(&config).unwrap();
    let lo_bins =
        manifest.files.iter().filter(|f| f.path.starts_with("lo/") && f.path.ends_with(".bin"));
    let hi_bins =
        manifest.files.iter().filter(|f| f.path.starts_with("hi/") && f.path.ends_with(".bin"));
    assert_eq!(lo_bins.count(), 8);
    assert_eq!(hi_bins.count(), 3);
    assert_eq!(model.k(), 3);
    assert_eq!(manifest.config_hash, config.content_hash());

    // a fresh run in a different directory reproduces the pivots exactly;
    // re-running in place resumes from cache with the same result
    let config2 = smoke_config(dir.path().join("run2"));
    let summary2 = cmd_offline(&config2).unwrap();
    assert_eq!(summary2.pivots, summary.pivots);
    let resumed = cmd_offline(&config).unwrap();
    assert_eq!(resumed.pivots, summary.pivots);
}

#[test]
fn online_identity_at_nodes_with_aliased_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = smoke_config(dir.path().join("run"));
    config.lofi = LoFiKind::CoarseKinetic(1); // low fidelity aliased to high
    let summary = cmd_offline(&config).unwrap();
    let (model, _) = load_offline(&config).unwrap();
    assert_eq!(summary.pivots.len(), 3);

    let queries: Vec<Vec<f64>> = model.hi_basis.iter().map(|s| s.z.clone()).collect();
    let result = cmd_online(&config, &queries).unwrap();
    assert_eq!(result.snapshots.len(), queries.len());
    for (bi, hi) in result.snapshots.iter().zip(&model.hi_basis) {
        let scale = hi.norm().max(1.0);
        let diff: f64 = bi
            .values
            .iter()
            .zip(&hi.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff / scale < 1e-10, "node reconstruction error {diff:.3e}");
    }
}

#[test]
fn evaluate_smoke_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path().join("run"));
    cmd_offline(&config).unwrap();
    let rows = cmd_evaluate(&config).unwrap();
    let names = rows.iter().map(|r| r.component.clone()).collect::<Vec<_>>();
    // one row per snapshot component at the configured K
    assert!(names.contains(&"rho".to_string()));
    assert!(names.contains(&"u".to_string()));
    assert!(rows.iter().all(|r| r.k == 3));
    assert!(rows.iter().all(|r| r.err_bi.is_finite() && r.err_lo.is_finite()));
    let csv = std::fs::read_to_string(config.output_dir.join("errors.csv")).unwrap();
    assert!(csv.starts_with("K,component,err_bi,err_lo,err_ratio,runtime_hi_s,runtime_lo_s\n"));
    assert_eq!(csv.lines().count(), 1 + rows.len());
}

#[test]
fn evaluate_without_offline_artifacts_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path().join("never_run"));
    assert!(matches!(cmd_evaluate(&config), Err(bifi_core::Error::MissingArtifact(_))));
}

#[test]
fn energy_study_equilibrium_is_flat_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = smoke_config(dir.path().join("run"));
    config.initial.profile = ProfileKind::Equilibrium;
    config.initial.sigma = 0.0; // deterministic equilibrium data
    let report = cmd_energy_study(&config).unwrap();
    assert!(report.times.len() >= 2);
    assert!(report.e2.iter().all(|&e| e.abs() < 1e-16), "max {:?}", report.e2);
    assert!(config.output_dir.join("energy.csv").exists());
}
