//! On-disk artifacts: a raw little-endian binary array format for field
//! data (bit-exact round trips) paired with JSON manifests carrying
//! metadata and SHA-256 checksums, plus save/load for the selection model
//! and the random-field decomposition.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bifidelity::{BiFiModel, GreedySelection, ProjectionMode};
use crate::error::{Error, Result};
use crate::kl::KLField;
use crate::lofi::LoFiKind;
use crate::snapshot::{Fidelity, Snapshot, SnapshotLayout};

const MAGIC: &[u8; 5] = b"BIFI1";
const DTYPE_F64: u8 = 0;

/// Write a flat f64 array with its dimensions. Layout: magic `BIFI1`, dtype
/// byte, rank byte, little-endian u64 dimensions, then the payload as
/// little-endian f64.
pub fn write_array(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "array has {} entries but dims {:?} imply {}",
            data.len(),
            dims,
            expected
        )));
    }
    if dims.len() > u8::MAX as usize {
        return Err(Error::InvalidParameter("array rank exceeds format limit".into()));
    }
    let mut buf = Vec::with_capacity(7 + 8 * dims.len() + 8 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.push(DTYPE_F64);
    buf.push(dims.len() as u8);
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Read an array written by [`write_array`], bit-exactly.
pub fn read_array(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut file = fs::File::open(path)?;
    let mut header = [0u8; 7];
    file.read_exact(&mut header)?;
    if &header[..5] != MAGIC {
        return Err(Error::Serde(format!("{}: bad magic", path.display())));
    }
    if header[5] != DTYPE_F64 {
        return Err(Error::Serde(format!("{}: unsupported dtype {}", path.display(), header[5])));
    }
    let rank = header[6] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        file.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8) as usize);
    }
    let count: usize = dims.iter().product();
    let mut payload = vec![0u8; 8 * count];
    file.read_exact(&mut payload)?;
    let mut rest = [0u8; 1];
    if file.read(&mut rest)? != 0 {
        return Err(Error::Serde(format!("{}: trailing bytes", path.display())));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn sha256_str(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

/// Metadata written next to each snapshot's binary payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub layout: SnapshotLayout,
    pub z: Vec<f64>,
    pub fidelity: Fidelity,
    pub t: f64,
    pub wall_seconds: f64,
    pub lofi_kind: Option<LoFiKind>,
    /// SHA-256 of the companion `.bin` file.
    pub checksum: String,
}

fn snapshot_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

/// Persist a snapshot as `stem.bin` (values and weights, stacked) plus
/// `stem.json` (metadata with the binary checksum).
pub fn save_snapshot(
    dir: &Path,
    stem: &str,
    snap: &Snapshot,
    wall_seconds: f64,
    lofi_kind: Option<LoFiKind>,
) -> Result<()> {
    let (bin, json) = snapshot_paths(dir, stem);
    let mut data = snap.values.clone();
    data.extend_from_slice(&snap.weights);
    write_array(&bin, &[2, snap.values.len()], &data)?;
    let manifest = SnapshotManifest {
        layout: snap.layout.clone(),
        z: snap.z.clone(),
        fidelity: snap.fidelity,
        t: snap.t,
        wall_seconds,
        lofi_kind,
        checksum: sha256_file(&bin)?,
    };
    write_json(&json, &manifest)
}

/// Load a snapshot saved by [`save_snapshot`], verifying the checksum.
pub fn load_snapshot(dir: &Path, stem: &str) -> Result<(Snapshot, SnapshotManifest)> {
    let (bin, json) = snapshot_paths(dir, stem);
    let manifest: SnapshotManifest = read_json(&json)?;
    if !bin.exists() {
        return Err(Error::MissingArtifact(bin.display().to_string()));
    }
    if sha256_file(&bin)? != manifest.checksum {
        return Err(Error::ChecksumMismatch { path: bin.display().to_string() });
    }
    let (dims, data) = read_array(&bin)?;
    if dims.len() != 2 || dims[0] != 2 || dims[1] != manifest.layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "{}: dims {:?} do not match layout length {}",
            bin.display(),
            dims,
            manifest.layout.len()
        )));
    }
    let n = dims[1];
    let snap = Snapshot {
        layout: manifest.layout.clone(),
        values: data[..n].to_vec(),
        weights: data[n..].to_vec(),
        z: manifest.z.clone(),
        fidelity: manifest.fidelity,
        t: manifest.t,
    };
    Ok((snap, manifest))
}

/// True if both files of a saved snapshot exist and the checksum matches;
/// used to skip completed work when resuming an interrupted sweep.
pub fn snapshot_is_valid(dir: &Path, stem: &str) -> bool {
    load_snapshot(dir, stem).is_ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SelectionManifest {
    pivots: Vec<usize>,
    residual_history: Vec<f64>,
    m: usize,
    k: usize,
    l_checksum: String,
    gramian_checksum: String,
}

/// Persist a greedy selection: pivot metadata in `selection.json`, the
/// Cholesky factor rows in `selection_l.bin`, the node Gramian in
/// `selection_g.bin`.
pub fn save_selection(dir: &Path, selection: &GreedySelection) -> Result<()> {
    let m = selection.l.len();
    let k = selection.pivots.len();
    let l_flat: Vec<f64> = selection.l.iter().flat_map(|r| r.iter().cloned()).collect();
    let g_flat: Vec<f64> = selection.gramian.iter().flat_map(|r| r.iter().cloned()).collect();
    let l_path = dir.join("selection_l.bin");
    let g_path = dir.join("selection_g.bin");
    write_array(&l_path, &[m, k], &l_flat)?;
    write_array(&g_path, &[k, k], &g_flat)?;
    let manifest = SelectionManifest {
        pivots: selection.pivots.clone(),
        residual_history: selection.residual_history.clone(),
        m,
        k,
        l_checksum: sha256_file(&l_path)?,
        gramian_checksum: sha256_file(&g_path)?,
    };
    write_json(&dir.join("selection.json"), &manifest)
}

pub fn load_selection(dir: &Path) -> Result<GreedySelection> {
    let manifest: SelectionManifest = read_json(&dir.join("selection.json"))?;
    let l_path = dir.join("selection_l.bin");
    let g_path = dir.join("selection_g.bin");
    for (path, sum) in [(&l_path, &manifest.l_checksum), (&g_path, &manifest.gramian_checksum)] {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        if &sha256_file(path)? != sum {
            return Err(Error::ChecksumMismatch { path: path.display().to_string() });
        }
    }
    let (l_dims, l_flat) = read_array(&l_path)?;
    let (g_dims, g_flat) = read_array(&g_path)?;
    if l_dims != [manifest.m, manifest.k] || g_dims != [manifest.k, manifest.k] {
        return Err(Error::LayoutMismatch("selection array dims disagree with manifest".into()));
    }
    let l = l_flat.chunks(manifest.k.max(1)).map(|c| c.to_vec()).collect();
    let gramian = g_flat.chunks(manifest.k.max(1)).map(|c| c.to_vec()).collect();
    Ok(GreedySelection {
        pivots: manifest.pivots,
        l,
        gramian,
        residual_history: manifest.residual_history,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest {
    mode: ProjectionMode,
    k: usize,
}

/// Persist a full bi-fidelity model under `dir`: the selection, the paired
/// low/high snapshot bases, and the projection mode.
pub fn save_model(dir: &Path, model: &BiFiModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_selection(dir, &model.selection)?;
    for (i, snap) in model.lo_basis.iter().enumerate() {
        save_snapshot(&dir.join("lo_basis"), &format!("node_{i:04}"), snap, 0.0, None)?;
    }
    for (i, snap) in model.hi_basis.iter().enumerate() {
        save_snapshot(&dir.join("hi_basis"), &format!("node_{i:04}"), snap, 0.0, None)?;
    }
    write_json(
        &dir.join("model.json"),
        &ModelManifest { mode: model.mode, k: model.lo_basis.len() },
    )
}

pub fn load_model(dir: &Path) -> Result<BiFiModel> {
    let manifest: ModelManifest = read_json(&dir.join("model.json"))?;
    let selection = load_selection(dir)?;
    let mut lo_basis = Vec::with_capacity(manifest.k);
    let mut hi_basis = Vec::with_capacity(manifest.k);
    for i in 0..manifest.k {
        lo_basis.push(load_snapshot(&dir.join("lo_basis"), &format!("node_{i:04}"))?.0);
        hi_basis.push(load_snapshot(&dir.join("hi_basis"), &format!("node_{i:04}"))?.0);
    }
    BiFiModel::new(selection, lo_basis, hi_basis, manifest.mode)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KLManifest {
    ell: f64,
    sigma: f64,
    n_modes: usize,
    spectrum_fraction: f64,
    n_points: usize,
    eigvals_checksum: String,
    eigvecs_checksum: String,
}

/// Persist a random-field decomposition: scalars in `kl.json`, eigenvalues
/// and eigenvectors as binary arrays.
pub fn save_kl(dir: &Path, field: &KLField) -> Result<()> {
    let n = field.eigvals.len();
    let vec_flat: Vec<f64> = field.eigvecs.iter().flat_map(|r| r.iter().cloned()).collect();
    let val_path = dir.join("kl_eigvals.bin");
    let vec_path = dir.join("kl_eigvecs.bin");
    write_array(&val_path, &[n], &field.eigvals)?;
    write_array(&vec_path, &[n, vec_flat.len() / n.max(1)], &vec_flat)?;
    let manifest = KLManifest {
        ell: field.ell,
        sigma: field.sigma,
        n_modes: field.n_modes,
        spectrum_fraction: field.spectrum_fraction,
        n_points: if n == 0 { 0 } else { vec_flat.len() / n },
        eigvals_checksum: sha256_file(&val_path)?,
        eigvecs_checksum: sha256_file(&vec_path)?,
    };
    write_json(&dir.join("kl.json"), &manifest)
}

pub fn load_kl(dir: &Path) -> Result<KLField> {
    let manifest: KLManifest = read_json(&dir.join("kl.json"))?;
    let val_path = dir.join("kl_eigvals.bin");
    let vec_path = dir.join("kl_eigvecs.bin");
    for (path, sum) in
        [(&val_path, &manifest.eigvals_checksum), (&vec_path, &manifest.eigvecs_checksum)]
    {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        if &sha256_file(path)? != sum {
            return Err(Error::ChecksumMismatch { path: path.display().to_string() });
        }
    }
    let (_, eigvals) = read_array(&val_path)?;
    let (vec_dims, vec_flat) = read_array(&vec_path)?;
    if vec_dims != [eigvals.len(), manifest.n_points] {
        return Err(Error::LayoutMismatch("eigenvector dims disagree with manifest".into()));
    }
    let eigvecs = vec_flat.chunks(manifest.n_points.max(1)).map(|c| c.to_vec()).collect();
    Ok(KLField {
        ell: manifest.ell,
        sigma: manifest.sigma,
        eigvals,
        eigvecs,
        n_modes: manifest.n_modes,
        spectrum_fraction: manifest.spectrum_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifidelity::greedy_select;
    use crate::grid::Grid;
    use crate::snapshot::SnapshotSet;

    fn scratch() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn array_round_trip_bit_exact() {
        let dir = scratch();
        let path = dir.path().join("a.bin");
        // include values whose shortest decimal form would lose bits if we
        // went through text
        let data = vec![0.1 + 0.2, f64::MIN_POSITIVE, 1e308, -0.0, 3.0f64.sqrt()];
        write_array(&path, &[5], &data).unwrap();
        let (dims, back) = read_array(&path).unwrap();
        assert_eq!(dims, vec![5]);
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn array_rejects_dim_mismatch_and_corruption() {
        let dir = scratch();
        let path = dir.path().join("a.bin");
        assert!(write_array(&path, &[3], &[1.0, 2.0]).is_err());
        write_array(&path, &[2], &[1.0, 2.0]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(read_array(&path).is_err());
    }

    fn sample_snapshot(seed: usize) -> Snapshot {
        let grid = Grid::new(1, 1.0, 8, 8.0, 8).unwrap();
        let layout = SnapshotLayout {
            components: vec![("a".to_string(), 1), ("b".to_string(), 1)],
            grid: grid.spec(),
        };
        let mut snap = Snapshot::zeros(layout, &grid, vec![seed as f64, 0.5], Fidelity::Low);
        for (i, v) in snap.values.iter_mut().enumerate() {
            *v = (i as f64 * (0.3 + 0.21 * seed as f64)).sin();
        }
        snap.t = 0.25;
        snap
    }

    #[test]
    fn snapshot_round_trip_and_checksum() {
        let dir = scratch();
        let snap = sample_snapshot(1);
        save_snapshot(dir.path(), "s1", &snap, 1.5, Some(LoFiKind::HydroLimit)).unwrap();
        let (back, manifest) = load_snapshot(dir.path(), "s1").unwrap();
        assert_eq!(back.values, snap.values);
        assert_eq!(back.weights, snap.weights);
        assert_eq!(back.z, snap.z);
        assert_eq!(back.t, snap.t);
        assert_eq!(manifest.wall_seconds, 1.5);
        assert_eq!(manifest.lofi_kind, Some(LoFiKind::HydroLimit));
        assert!(snapshot_is_valid(dir.path(), "s1"));

        // flip one payload byte: load must fail with a checksum error
        let bin = dir.path().join("s1.bin");
        let mut bytes = fs::read(&bin).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(
            load_snapshot(dir.path(), "s1"),
            Err(Error::ChecksumMismatch { .. })
        ));
        assert!(!snapshot_is_valid(dir.path(), "s1"));
    }

    #[test]
    fn missing_snapshot_reports_artifact() {
        let dir = scratch();
        assert!(matches!(
            load_snapshot(dir.path(), "absent"),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn model_round_trip() {
        let dir = scratch();
        let mut candidates = SnapshotSet::new();
        for i in 0..6 {
            candidates.push(sample_snapshot(i)).unwrap();
        }
        let selection = greedy_select(&candidates, 3).unwrap();
        let lo: Vec<Snapshot> =
            selection.pivots.iter().map(|&p| candidates.snapshots[p].clone()).collect();
        let hi: Vec<Snapshot> = lo
            .iter()
            .map(|s| {
                let mut h = s.clone();
                h.fidelity = Fidelity::High;
                h.values.iter_mut().for_each(|v| *v *= 2.0);
                h
            })
            .collect();
        let model = BiFiModel::new(selection, lo, hi, ProjectionMode::PerComponent).unwrap();
        save_model(dir.path(), &model).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.selection.pivots, model.selection.pivots);
        assert_eq!(back.selection.l, model.selection.l);
        assert_eq!(back.selection.gramian, model.selection.gramian);
        assert_eq!(back.mode, model.mode);
        for (a, b) in back.hi_basis.iter().zip(&model.hi_basis) {
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn kl_round_trip() {
        use crate::kl::{assemble_covariance, kl_decompose};
        let grid = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let cov = assemble_covariance(&grid, 0.1, true).unwrap();
        let field = kl_decompose(&cov, &grid, 0.1, 0.2, 0.95).unwrap();
        let dir = scratch();
        save_kl(dir.path(), &field).unwrap();
        let back = load_kl(dir.path()).unwrap();
        assert_eq!(back.eigvals, field.eigvals);
        assert_eq!(back.eigvecs, field.eigvecs);
        assert_eq!(back.n_modes, field.n_modes);
        assert_eq!(back.sigma, field.sigma);
    }
}
