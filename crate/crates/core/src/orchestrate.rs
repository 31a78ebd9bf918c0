//! Run orchestration: the offline training stage (candidate sweep, node
//! selection, high-fidelity runs), the online query stage, held-out
//! evaluation, the energy study, and the node-count convergence study.
//! Sample sweeps run on a fixed-size worker pool; each worker owns its
//! solver instance and writes to a per-sample file, so completion order
//! never affects output content.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifidelity::{
    greedy_select, project_coefficients, reconstruct, BiFiModel, GreedySelection,
};
use crate::config::RunConfig;
use crate::diagnostics::{energy, fmt_f64, mean_l2_error, EnergyReport};
use crate::error::{Error, Result};
use crate::initial::InitialData;
use crate::kinetic::KineticSolver;
use crate::lofi::{prolong, run_high_fidelity, run_low_fidelity, RunStats};
use crate::persist::{
    load_model, load_snapshot, save_kl, save_model, save_snapshot, sha256_file,
    snapshot_is_valid,
};
use crate::samples::{draw_samples, ParameterSample, SampleStream};
use crate::snapshot::{Snapshot, SnapshotSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub checksum: String,
}

/// Top-level record of an offline run: configuration hash, stage timings,
/// and a checksummed inventory of every artifact written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub timings: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    /// Check that every inventoried file exists with a matching checksum.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for entry in &self.files {
            let path = root.join(&entry.path);
            if !path.exists() {
                return Err(Error::MissingArtifact(path.display().to_string()));
            }
            if sha256_file(&path)? != entry.checksum {
                return Err(Error::ChecksumMismatch { path: path.display().to_string() });
            }
        }
        Ok(())
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn initial_data(config: &RunConfig) -> Result<InitialData> {
    InitialData::new(config.initial.clone(), &config.hi_grid()?)
}

fn training_samples(config: &RunConfig, initial: &InitialData) -> Result<Vec<ParameterSample>> {
    let dim = initial.z_dim(&config.model);
    if dim == 0 {
        return Err(Error::Config(
            "sigma = 0 gives deterministic initial data; the sweep needs random inputs".into(),
        ));
    }
    draw_samples(config.m, dim, config.distribution, config.seed, SampleStream::Training)
}

fn evaluation_samples(config: &RunConfig, initial: &InitialData) -> Result<Vec<ParameterSample>> {
    let dim = initial.z_dim(&config.model);
    if dim == 0 {
        return Err(Error::Config(
            "sigma = 0 gives deterministic initial data; the sweep needs random inputs".into(),
        ));
    }
    draw_samples(config.m_eval, dim, config.distribution, config.seed, SampleStream::Evaluation)
}

/// Run one fidelity sweep over `samples`, caching per-sample files under
/// `dir` and skipping entries that are already present with valid
/// checksums. Returns the snapshots (in sample order), per-sample wall
/// times, and warnings for failed samples. Aborts if more than 1% of the
/// sweep fails.
fn sweep(
    config: &RunConfig,
    initial: &InitialData,
    samples: &[ParameterSample],
    dir: &Path,
    high: bool,
) -> Result<(Vec<Snapshot>, Vec<f64>, Vec<String>)> {
    fs::create_dir_all(dir)?;
    let pool = thread_pool(config.workers)?;
    let hi_grid = config.hi_grid()?;
    let lo_grid = config.lo_grid()?;
    let results: Vec<std::result::Result<(Snapshot, f64), String>> = pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, sample)| {
                let stem = format!("sample_{i:04}");
                if snapshot_is_valid(dir, &stem) {
                    let (snap, manifest) = load_snapshot(dir, &stem)
                        .map_err(|e| format!("sample {i}: reload failed: {e}"))?;
                    if snap.z != sample.z {
                        return Err(format!("sample {i}: cached artifact has different z"));
                    }
                    return Ok((snap, manifest.wall_seconds));
                }
                let run = if high {
                    run_high_fidelity(
                        initial,
                        &sample.z,
                        &config.model,
                        &hi_grid,
                        config.t_final,
                        config.cfl,
                    )
                } else {
                    run_low_fidelity(
                        initial,
                        &sample.z,
                        &config.model,
                        &lo_grid,
                        config.lofi,
                        config.t_final,
                        config.cfl,
                    )
                };
                let (snap, stats): (Snapshot, RunStats) =
                    run.map_err(|e| format!("sample {i}: {e}"))?;
                save_snapshot(
                    dir,
                    &stem,
                    &snap,
                    stats.wall_seconds,
                    if high { None } else { Some(config.lofi) },
                )
                .map_err(|e| format!("sample {i}: save failed: {e}"))?;
                Ok((snap, stats.wall_seconds))
            })
            .collect()
    });
    let total = samples.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 100 > total {
        return Err(Error::SweepAborted { failed, total });
    }
    let mut snapshots = Vec::new();
    let mut walls = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok((snap, wall)) => {
                snapshots.push(snap);
                walls.push(wall);
            }
            Err(msg) => warnings.push(msg),
        }
    }
    Ok((snapshots, walls, warnings))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineSummary {
    pub pivots: Vec<usize>,
    pub lo_completed: usize,
    pub hi_completed: usize,
    pub warnings: Vec<String>,
    pub manifest_path: PathBuf,
}

/// Offline stage: run the low-fidelity candidate sweep, select collocation
/// nodes by greedy pivoted Cholesky, run the high-fidelity model at the
/// selected nodes, and persist the resulting model with a checksummed
/// manifest.
pub fn cmd_offline(config: &RunConfig) -> Result<OfflineSummary> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml_string()?)?;
    let mut timings: Vec<(String, f64)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    let t0 = Instant::now();
    let initial = initial_data(config)?;
    save_kl(&out.join("kl"), &initial.kl)?;
    timings.push(("initial_data".into(), t0.elapsed().as_secs_f64()));

    let samples = training_samples(config, &initial)?;
    let t0 = Instant::now();
    let (lo_snaps, _, sweep_warnings) = sweep(config, &initial, &samples, &out.join("lo"), false)?;
    warnings.extend(sweep_warnings);
    timings.push(("lo_sweep".into(), t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let mut candidates = SnapshotSet::new();
    for snap in &lo_snaps {
        candidates.push(snap.clone())?;
    }
    let selection = greedy_select(&candidates, config.k)?;
    timings.push(("selection".into(), t0.elapsed().as_secs_f64()));

    let node_samples: Vec<ParameterSample> = selection
        .pivots
        .iter()
        .map(|&p| ParameterSample { z: lo_snaps[p].z.clone(), distribution: config.distribution })
        .collect();
    let t0 = Instant::now();
    let (hi_snaps, _, hi_warnings) = sweep(config, &initial, &node_samples, &out.join("hi"), true)?;
    if hi_snaps.len() != node_samples.len() {
        return Err(Error::SweepAborted {
            failed: node_samples.len() - hi_snaps.len(),
            total: node_samples.len(),
        });
    }
    warnings.extend(hi_warnings);
    timings.push(("hi_sweep".into(), t0.elapsed().as_secs_f64()));

    let lo_basis: Vec<Snapshot> =
        selection.pivots.iter().map(|&p| lo_snaps[p].clone()).collect();
    let model = BiFiModel::new(selection.clone(), lo_basis, hi_snaps, config.projection)?;
    save_model(&out.join("model"), &model)?;

    let mut files = Vec::new();
    for i in 0..config.m {
        for ext in ["bin", "json"] {
            files.push(format!("lo/sample_{i:04}.{ext}"));
        }
    }
    for i in 0..config.k {
        for ext in ["bin", "json"] {
            files.push(format!("hi/sample_{i:04}.{ext}"));
            files.push(format!("model/lo_basis/node_{i:04}.{ext}"));
            files.push(format!("model/hi_basis/node_{i:04}.{ext}"));
        }
    }
    files.extend(
        ["kl/kl.json", "kl/kl_eigvals.bin", "kl/kl_eigvecs.bin", "model/model.json",
         "model/selection.json", "model/selection_l.bin", "model/selection_g.bin",
         "config.toml"]
        .map(String::from),
    );
    let mut inventory = Vec::new();
    for rel in files {
        let path = out.join(&rel);
        if path.exists() {
            inventory.push(FileEntry { path: rel, checksum: sha256_file(&path)? });
        }
    }
    let manifest = RunManifest {
        config_hash: config.content_hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timings,
        files: inventory,
        warnings: warnings.clone(),
    };
    let manifest_path = out.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))? + "\n",
    )?;
    Ok(OfflineSummary {
        pivots: selection.pivots,
        lo_completed: lo_snaps.len(),
        hi_completed: config.k,
        warnings,
        manifest_path,
    })
}

/// Load the persisted model and its manifest, verifying checksums.
pub fn load_offline(config: &RunConfig) -> Result<(BiFiModel, RunManifest)> {
    let out = &config.output_dir;
    let manifest_path = out.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(manifest_path.display().to_string()));
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| Error::Serde(e.to_string()))?;
    manifest.verify(out)?;
    let model = load_model(&out.join("model"))?;
    Ok((model, manifest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineResult {
    /// One bi-fidelity snapshot per query, in query order.
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    /// Wall time spent in low-fidelity solves.
    pub lo_wall_seconds: f64,
    /// Total online wall time including projection and reconstruction.
    pub total_wall_seconds: f64,
}

/// Online stage: for each query parameter, run the low-fidelity model,
/// project onto the selected nodes, and reconstruct the bi-fidelity
/// surrogate from the high-fidelity basis.
pub fn cmd_online(config: &RunConfig, queries: &[Vec<f64>]) -> Result<OnlineResult> {
    let (model, _) = load_offline(config)?;
    let initial = initial_data(config)?;
    let lo_grid = config.lo_grid()?;
    let mut snapshots = Vec::with_capacity(queries.len());
    let mut lo_wall = 0.0;
    let start = Instant::now();
    for z in queries {
        let (lo_snap, stats) = run_low_fidelity(
            &initial,
            z,
            &config.model,
            &lo_grid,
            config.lofi,
            config.t_final,
            config.cfl,
        )?;
        lo_wall += stats.wall_seconds;
        let coeff = project_coefficients(&lo_snap, &model)?;
        snapshots.push(reconstruct(&coeff, &model, z.clone(), config.t_final)?);
    }
    Ok(OnlineResult {
        snapshots,
        lo_wall_seconds: lo_wall,
        total_wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One row of the evaluation table: mean errors for one (node count,
/// component) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRow {
    pub k: usize,
    pub component: String,
    pub err_bi: f64,
    pub err_lo: f64,
    pub err_ratio: f64,
    pub runtime_hi_s: f64,
    pub runtime_lo_s: f64,
}

pub fn write_error_csv(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::from("K,component,err_bi,err_lo,err_ratio,runtime_hi_s,runtime_lo_s\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.k,
            row.component,
            fmt_f64(row.err_bi),
            fmt_f64(row.err_lo),
            fmt_f64(row.err_ratio),
            fmt_f64(row.runtime_hi_s),
            fmt_f64(row.runtime_lo_s),
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Restriction of a trained model to its first `k` nodes. Valid because the
/// greedy selection is nested: the first `k` pivots and the leading `k x k`
/// Gramian block are exactly what selection with budget `k` would produce.
pub fn truncate_model(model: &BiFiModel, k: usize) -> Result<BiFiModel> {
    let full = model.k();
    if k == 0 || k > full {
        return Err(Error::InvalidParameter(format!(
            "cannot truncate a {full}-node model to {k} nodes"
        )));
    }
    let selection = GreedySelection {
        pivots: model.selection.pivots[..k].to_vec(),
        l: model.selection.l.iter().map(|row| row[..k].to_vec()).collect(),
        gramian: model.selection.gramian[..k].iter().map(|row| row[..k].to_vec()).collect(),
        residual_history: model
            .selection
            .residual_history
            .iter()
            .take(k + 1)
            .cloned()
            .collect(),
    };
    BiFiModel::new(
        selection,
        model.lo_basis[..k].to_vec(),
        model.hi_basis[..k].to_vec(),
        model.mode,
    )
}

struct EvalData {
    hi_truth: Vec<Snapshot>,
    lo_runs: Vec<Snapshot>,
    hi_wall_mean: f64,
    lo_wall_mean: f64,
}

/// High-fidelity truth and low-fidelity runs on the held-out set, cached
/// under `eval_hi` / `eval_lo`.
fn evaluation_data(config: &RunConfig, initial: &InitialData) -> Result<EvalData> {
    let samples = evaluation_samples(config, initial)?;
    let out = &config.output_dir;
    let (hi_truth, hi_walls, hi_warn) =
        sweep(config, initial, &samples, &out.join("eval_hi"), true)?;
    let (lo_runs, lo_walls, lo_warn) =
        sweep(config, initial, &samples, &out.join("eval_lo"), false)?;
    if !hi_warn.is_empty() || !lo_warn.is_empty() || hi_truth.len() != lo_runs.len() {
        return Err(Error::SweepAborted {
            failed: hi_warn.len() + lo_warn.len(),
            total: 2 * samples.len(),
        });
    }
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len().max(1) as f64;
    Ok(EvalData {
        hi_truth,
        lo_runs,
        hi_wall_mean: mean(&hi_walls),
        lo_wall_mean: mean(&lo_walls),
    })
}

fn error_rows(config: &RunConfig, model: &BiFiModel, data: &EvalData) -> Result<Vec<ErrorRow>> {
    let hi_grid = config.hi_grid()?;
    let mut hi_set = SnapshotSet::new();
    let mut bi_set = SnapshotSet::new();
    let mut lo_set = SnapshotSet::new();
    for (hi, lo) in data.hi_truth.iter().zip(&data.lo_runs) {
        let coeff = project_coefficients(lo, model)?;
        let bi = reconstruct(&coeff, model, lo.z.clone(), lo.t)?;
        hi_set.push(hi.clone())?;
        bi_set.push(bi)?;
        lo_set.push(prolong(lo, &hi_grid)?)?;
    }
    let err_bi = mean_l2_error(&hi_set, &bi_set)?;
    let err_lo = mean_l2_error(&hi_set, &lo_set)?;
    Ok(err_bi
        .into_iter()
        .zip(err_lo)
        .map(|((component, bi), (_, lo))| ErrorRow {
            k: model.k(),
            component,
            err_bi: bi,
            err_lo: lo,
            err_ratio: bi / lo.max(f64::MIN_POSITIVE),
            runtime_hi_s: data.hi_wall_mean,
            runtime_lo_s: data.lo_wall_mean,
        })
        .collect())
}

/// Evaluation stage: run high-fidelity truth on the held-out set, compare
/// the bi-fidelity surrogate and the raw low-fidelity model against it, and
/// write `errors.csv`.
pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<ErrorRow>> {
    let (model, _) = load_offline(config)?;
    let initial = initial_data(config)?;
    let data = evaluation_data(config, &initial)?;
    let rows = error_rows(config, &model, &data)?;
    write_error_csv(&config.output_dir.join("errors.csv"), &rows)?;
    Ok(rows)
}

/// Convergence study: evaluate nested truncations of the trained model at
/// every node count in `k_sweep` and write `convergence.csv`.
pub fn cmd_convergence_study(config: &RunConfig) -> Result<Vec<ErrorRow>> {
    let (model, _) = load_offline(config)?;
    let initial = initial_data(config)?;
    let data = evaluation_data(config, &initial)?;
    let mut rows = Vec::new();
    for &k in &config.k_sweep {
        let truncated = truncate_model(&model, k)?;
        rows.extend(error_rows(config, &truncated, &data)?);
    }
    write_error_csv(&config.output_dir.join("convergence.csv"), &rows)?;
    Ok(rows)
}

/// Energy study: integrate the kinetic model for one parameter sample,
/// record the order-0/1/2 perturbation energies at every checkpoint, fit
/// the decay rate, and write `energy.csv` plus `energy_report.json`.
pub fn cmd_energy_study(config: &RunConfig) -> Result<EnergyReport> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let initial = initial_data(config)?;
    let dim = initial.z_dim(&config.model);
    let z = if dim == 0 {
        Vec::new()
    } else {
        draw_samples(1, dim, config.distribution, config.seed, SampleStream::Evaluation)?
            .remove(0)
            .z
    };
    let hi_grid = config.hi_grid()?;
    let (mut state, _) = initial.build_kinetic(&z, &config.model, &hi_grid)?;
    let mut solver = KineticSolver::new(config.model.clone(), hi_grid.clone())?;
    let total_steps =
        (config.t_final / solver.stable_dt(&state, config.cfl)).ceil().max(1.0) as usize;
    let every = if config.checkpoint_every > 0 {
        config.checkpoint_every
    } else {
        (total_steps / 40).max(1)
    };
    let mut times = Vec::new();
    let mut series = [Vec::new(), Vec::new(), Vec::new()];
    let mut checkpoint_error: Option<Error> = None;
    {
        let mut on_checkpoint = |s: &crate::state::KineticState| {
            if checkpoint_error.is_some() {
                return;
            }
            times.push(s.t);
            for order in 0..3 {
                match energy(s, &config.model, &hi_grid, order) {
                    Ok(e) => series[order].push(e),
                    Err(e) => checkpoint_error = Some(e),
                }
            }
        };
        solver.run(&mut state, config.t_final, config.cfl, Some(&mut on_checkpoint), every)?;
    }
    if let Some(e) = checkpoint_error {
        return Err(e);
    }
    let [e0, e1, e2] = series;
    let report = EnergyReport::from_series(times, e0, e1, e2);
    let mut csv = String::from("t,E0,E1,E2\n");
    for i in 0..report.times.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(report.times[i]),
            fmt_f64(report.e0[i]),
            fmt_f64(report.e1[i]),
            fmt_f64(report.e2[i]),
        ));
    }
    fs::write(out.join("energy.csv"), csv)?;
    fs::write(
        out.join("energy_report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))? + "\n",
    )?;
    Ok(report)
}
