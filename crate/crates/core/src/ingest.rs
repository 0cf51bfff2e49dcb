//! Paired latent / ground-truth trajectory sets and the HTRJ1 container.
//!
//! An HTRJ1 container is a directory:
//!
//! | file          | contents                                                      |
//! |---------------|---------------------------------------------------------------|
//! | `manifest.txt`| `key = value` lines: `magic`, `K`, `T`, `m`, `n`, `dt`, `has_kl` |
//! | `latent.f64`  | `K * (T+1) * 2m` little-endian f64, omitted when `m = 0`      |
//! | `truth.f64`   | `K * (T+1) * 2n` little-endian f64                            |
//! | `kl.f64`      | `2m` little-endian f64, present iff `has_kl = true`           |
//!
//! Payloads are row-major `[trajectory][step][dimension]`.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::phase::{PhaseState, Trajectory};

pub const MAGIC: &str = "HTRJ1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LATENT_FILE: &str = "latent.f64";
pub const TRUTH_FILE: &str = "truth.f64";
pub const KL_FILE: &str = "kl.f64";

/// Latent dimensions whose average KL from the prior falls below this carry
/// no information.
pub const DEFAULT_KL_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectorySet {
    trajectories: usize,
    steps: usize,
    latent_dim: usize,
    truth_dim: usize,
    dt: f64,
    latent: Vec<f64>,
    truth: Vec<f64>,
    kl: Option<Vec<f64>>,
    /// Column of the unfiltered latent each current latent column came from.
    source_index: Vec<usize>,
    source_latent_dim: usize,
}

impl LatentTrajectorySet {
    /// `steps` counts recorded states per trajectory (`T + 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        trajectories: usize,
        steps: usize,
        latent_dim: usize,
        truth_dim: usize,
        dt: f64,
        latent: Vec<f64>,
        truth: Vec<f64>,
        kl: Option<Vec<f64>>,
    ) -> Result<Self> {
        if trajectories == 0 {
            return Err(Error::InvalidDimension("set needs at least one trajectory".into()));
        }
        if steps < 2 {
            return Err(Error::InvalidDimension(format!(
                "trajectories need at least 2 states, got {steps}"
            )));
        }
        if truth_dim == 0 {
            return Err(Error::InvalidDimension("ground-truth dimension is zero".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let rows = trajectories * steps;
        if latent.len() != rows * latent_dim {
            return Err(Error::DimensionMismatch {
                expected: rows * latent_dim,
                found: latent.len(),
            });
        }
        if truth.len() != rows * truth_dim {
            return Err(Error::DimensionMismatch {
                expected: rows * truth_dim,
                found: truth.len(),
            });
        }
        if let Some(kl) = &kl {
            if kl.len() != latent_dim {
                return Err(Error::DimensionMismatch {
                    expected: latent_dim,
                    found: kl.len(),
                });
            }
        }
        if latent.iter().chain(&truth).chain(kl.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory set entry".into()));
        }
        Ok(Self {
            trajectories,
            steps,
            latent_dim,
            truth_dim,
            dt,
            latent,
            truth,
            kl,
            source_index: (0..latent_dim).collect(),
            source_latent_dim: latent_dim,
        })
    }

    /// Ground-truth-only set built from simulated trajectories.
    pub fn from_truth(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidDimension("no trajectories".into()))?;
        let steps = first.len();
        let dim = 2 * first.dof();
        let mut truth = Vec::with_capacity(trajectories.len() * steps * dim);
        for t in trajectories {
            if t.len() != steps {
                return Err(Error::DimensionMismatch {
                    expected: steps,
                    found: t.len(),
                });
            }
            if 2 * t.dof() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: 2 * t.dof(),
                });
            }
            for s in t.states() {
                truth.extend(s.to_flat());
            }
        }
        Self::new(trajectories.len(), steps, 0, dim, first.dt(), vec![], truth, None)
    }

    /// Same ground truth with a new latent payload.
    pub fn with_latent(&self, latent_dim: usize, latent: Vec<f64>, kl: Option<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.trajectories,
            self.steps,
            latent_dim,
            self.truth_dim,
            self.dt,
            latent,
            self.truth.clone(),
            kl,
        )
    }

    pub fn trajectories(&self) -> usize {
        self.trajectories
    }

    /// Recorded states per trajectory (`T + 1`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn truth_dim(&self) -> usize {
        self.truth_dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn kl(&self) -> Option<&[f64]> {
        self.kl.as_deref()
    }

    /// Original latent column of each current column.
    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    /// Latent dimension before any filtering.
    pub fn source_latent_dim(&self) -> usize {
        self.source_latent_dim
    }

    pub fn latent_point(&self, trajectory: usize, step: usize) -> &[f64] {
        let start = (trajectory * self.steps + step) * self.latent_dim;
        &self.latent[start..start + self.latent_dim]
    }

    pub fn truth_point(&self, trajectory: usize, step: usize) -> &[f64] {
        let start = (trajectory * self.steps + step) * self.truth_dim;
        &self.truth[start..start + self.truth_dim]
    }

    /// Rows `[first, last)` of trajectories as contiguous latent rows.
    pub fn latent_rows(&self, trajectories: std::ops::Range<usize>) -> &[f64] {
        let w = self.steps * self.latent_dim;
        &self.latent[trajectories.start * w..trajectories.end * w]
    }

    pub fn truth_rows(&self, trajectories: std::ops::Range<usize>) -> &[f64] {
        let w = self.steps * self.truth_dim;
        &self.truth[trajectories.start * w..trajectories.end * w]
    }

    /// Ground truth of one trajectory as phase states.
    pub fn truth_trajectory(&self, trajectory: usize) -> Result<Trajectory> {
        let states = (0..self.steps)
            .map(|s| PhaseState::from_flat(self.truth_point(trajectory, s)))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(self.dt, states)
    }

    /// Keeps latent columns `keep` (indices into the current columns).
    fn select_latent(&self, keep: &[usize]) -> Self {
        let rows = self.trajectories * self.steps;
        let mut latent = Vec::with_capacity(rows * keep.len());
        for row in self.latent.chunks_exact(self.latent_dim) {
            latent.extend(keep.iter().map(|&c| row[c]));
        }
        Self {
            latent_dim: keep.len(),
            latent,
            kl: self.kl.as_ref().map(|kl| keep.iter().map(|&c| kl[c]).collect()),
            source_index: keep.iter().map(|&c| self.source_index[c]).collect(),
            ..self.clone()
        }
    }
}

/// Per-dimension empirical variance of the latent columns.
fn latent_variance(set: &LatentTrajectorySet) -> Vec<f64> {
    let d = set.latent_dim;
    let rows = (set.trajectories * set.steps) as f64;
    let mut mean = vec![0.0; d];
    for row in set.latent.chunks_exact(d) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0; d];
    for row in set.latent.chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= rows);
    var
}

/// Drops latent dimensions whose KL is below `threshold`, or whose variance
/// is when no KL statistics were supplied. Returns the reduced set and the
/// kept column indices.
pub fn filter_informative_dims(
    set: &LatentTrajectorySet,
    threshold: f64,
) -> Result<(LatentTrajectorySet, Vec<usize>)> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "informative-dimension threshold must be positive, got {threshold}"
        )));
    }
    if set.latent_dim == 0 {
        return Err(Error::DegenerateLatent("set has no latent dimensions".into()));
    }
    let scores = match &set.kl {
        Some(kl) => kl.clone(),
        None => latent_variance(set),
    };
    let kept: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= threshold)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateLatent(format!(
            "all {} latent dimensions fall below the threshold {threshold}",
            set.latent_dim
        )));
    }
    Ok((set.select_latent(&kept), kept))
}

// ---------------------------------------------------------------------------
// container I/O

pub(crate) fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads exactly `count` finite little-endian f64 values.
pub(crate) fn read_f64s(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count * 8;
    if bytes.len() < expected {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            path,
            expected as u64,
            format!("{} trailing bytes after the declared payload", bytes.len() - expected),
        ));
    }
    bytes
        .chunks_exact(8)
        .enumerate()
        .map(|(i, chunk)| {
            let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(path, (i * 8) as u64, format!("non-finite value {v}")))
            }
        })
        .collect()
}

/// Parsed `key = value` manifest with the byte offset of each line.
pub(crate) struct Manifest {
    path: PathBuf,
    len: u64,
    entries: Vec<(String, String, u64)>,
}

impl Manifest {
    pub(crate) fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let content = line.trim();
            if !content.is_empty() && !content.starts_with('#') {
                let (key, value) = content.split_once('=').ok_or_else(|| {
                    Error::format(path, offset, format!("expected 'key = value', got '{content}'"))
                })?;
                let key = key.trim().to_string();
                if entries.iter().any(|(k, _, _)| *k == key) {
                    return Err(Error::format(path, offset, format!("duplicate key '{key}'")));
                }
                entries.push((key, value.trim().to_string(), offset));
            }
            offset += line.len() as u64;
        }
        Ok(Self {
            path: path.to_path_buf(),
            len: offset,
            entries,
        })
    }

    pub(crate) fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _, _)| !known.contains(&k.as_str())) {
            Some((k, _, off)) => Err(Error::format(&self.path, *off, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub(crate) fn raw(&self, key: &str) -> Result<(&str, u64)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, off)| (v.as_str(), *off))
            .ok_or_else(|| Error::format(&self.path, self.len, format!("missing key '{key}'")))
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (value, offset) = self.raw(key)?;
        value.parse().map_err(|_| {
            Error::format(&self.path, offset, format!("cannot parse {key} = '{value}'"))
        })
    }

    pub(crate) fn error(&self, key: &str, message: impl Into<String>) -> Error {
        let offset = self.raw(key).map(|(_, o)| o).unwrap_or(self.len);
        Error::format(&self.path, offset, message)
    }
}

/// Writes `set` as an HTRJ1 container directory. The latent dimension must
/// be even.
pub fn save_container(set: &LatentTrajectorySet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if set.latent_dim % 2 != 0 || set.truth_dim % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "container dimensions must be even, got latent {} and truth {}",
            set.latent_dim, set.truth_dim
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = format!(
        "magic = {MAGIC}\nK = {}\nT = {}\nm = {}\nn = {}\ndt = {}\nhas_kl = {}\n",
        set.trajectories,
        set.steps - 1,
        set.latent_dim / 2,
        set.truth_dim / 2,
        set.dt,
        set.kl.is_some()
    );
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let latent_path = dir.join(LATENT_FILE);
    if set.latent_dim > 0 {
        write_f64s(&latent_path, &set.latent)?;
    } else if latent_path.exists() {
        fs::remove_file(&latent_path).map_err(|e| Error::io(&latent_path, e))?;
    }
    write_f64s(&dir.join(TRUTH_FILE), &set.truth)?;
    let kl_path = dir.join(KL_FILE);
    match &set.kl {
        Some(kl) => write_f64s(&kl_path, kl)?,
        None if kl_path.exists() => {
            fs::remove_file(&kl_path).map_err(|e| Error::io(&kl_path, e))?
        }
        None => {}
    }
    Ok(())
}

pub fn load_container(dir: impl AsRef<Path>) -> Result<LatentTrajectorySet> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
    manifest.reject_unknown(&["magic", "K", "T", "m", "n", "dt", "has_kl"])?;
    let (magic, _) = manifest.raw("magic")?;
    if magic != MAGIC {
        return Err(manifest.error("magic", format!("magic mismatch: expected {MAGIC}, found '{magic}'")));
    }
    let k: usize = manifest.parse("K")?;
    let t: usize = manifest.parse("T")?;
    let m: usize = manifest.parse("m")?;
    let n: usize = manifest.parse("n")?;
    let dt: f64 = manifest.parse("dt")?;
    let has_kl: bool = manifest.parse("has_kl")?;
    if k == 0 {
        return Err(manifest.error("K", "K must be at least 1"));
    }
    if t == 0 {
        return Err(manifest.error("T", "T must be at least 1"));
    }
    if n == 0 {
        return Err(manifest.error("n", "n must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(manifest.error("dt", format!("dt must be positive, got {dt}")));
    }
    if has_kl && m == 0 {
        return Err(manifest.error("has_kl", "KL statistics declared for an empty latent"));
    }
    let rows = k * (t + 1);
    let latent = if m > 0 {
        read_f64s(&dir.join(LATENT_FILE), rows * 2 * m)?
    } else {
        Vec::new()
    };
    let truth = read_f64s(&dir.join(TRUTH_FILE), rows * 2 * n)?;
    let kl = if has_kl {
        Some(read_f64s(&dir.join(KL_FILE), 2 * m)?)
    } else {
        if dir.join(KL_FILE).exists() {
            warn!("{}: ignoring {KL_FILE} because has_kl = false", dir.display());
        }
        None
    };
    LatentTrajectorySet::new(k, t + 1, 2 * m, 2 * n, dt, latent, truth, kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_set(kl: Option<Vec<f64>>) -> LatentTrajectorySet {
        // 2 trajectories x 3 steps, latent 3 dims (dim 1 constant), truth 2
        let latent = vec![
            0.0, 5.0, 1.0, 1.0, 5.0, 2.0, 2.0, 5.0, 3.0, //
            3.0, 5.0, 4.0, 4.0, 5.0, 5.0, 5.0, 5.0, 6.0,
        ];
        let truth = (0..12).map(|i| i as f64).collect();
        LatentTrajectorySet::new(2, 3, 3, 2, 0.1, latent, truth, kl).unwrap()
    }

    #[test]
    fn kl_filter_keeps_informative_dims() {
        let set = small_set(Some(vec![0.5, 0.005, 0.02]));
        let (reduced, kept) = filter_informative_dims(&set, DEFAULT_KL_THRESHOLD).unwrap();
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(reduced.latent_dim(), 2);
        assert_eq!(reduced.latent_point(1, 0), &[3.0, 4.0]);
        assert_eq!(reduced.kl(), Some(&[0.5, 0.02][..]));
        assert_eq!(reduced.source_index(), &[0, 2]);
    }

    #[test]
    fn kl_filter_identity_when_all_informative() {
        let set = small_set(Some(vec![0.5, 0.5, 0.02]));
        let (reduced, kept) = filter_informative_dims(&set, DEFAULT_KL_THRESHOLD).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(reduced, set);
    }

    #[test]
    fn variance_fallback_drops_constant_dims() {
        let set = small_set(None);
        let (reduced, kept) = filter_informative_dims(&set, DEFAULT_KL_THRESHOLD).unwrap();
        assert_eq!(kept, vec![0, 2]);
        // second pass is a no-op and indices compose
        let (again, kept_again) = filter_informative_dims(&reduced, DEFAULT_KL_THRESHOLD).unwrap();
        assert_eq!(kept_again, vec![0, 1]);
        assert_eq!(again, reduced);
    }

    #[test]
    fn all_filtered_is_degenerate() {
        let set = small_set(Some(vec![0.0, 0.0, 0.0]));
        assert!(matches!(
            filter_informative_dims(&set, DEFAULT_KL_THRESHOLD),
            Err(Error::DegenerateLatent(_))
        ));
        assert!(filter_informative_dims(&set, 0.0).is_err());
    }

    #[test]
    fn set_validation() {
        assert!(LatentTrajectorySet::new(0, 3, 2, 2, 0.1, vec![], vec![], None).is_err());
        assert!(LatentTrajectorySet::new(1, 1, 2, 2, 0.1, vec![0.0; 2], vec![0.0; 2], None).is_err());
        assert!(LatentTrajectorySet::new(1, 2, 2, 2, 0.1, vec![0.0; 3], vec![0.0; 4], None).is_err());
        assert!(LatentTrajectorySet::new(1, 2, 2, 2, 0.1, vec![0.0; 4], vec![0.0; 4], Some(vec![1.0])).is_err());
        assert!(LatentTrajectorySet::new(1, 2, 2, 2, 0.0, vec![0.0; 4], vec![0.0; 4], None).is_err());
        assert!(LatentTrajectorySet::new(1, 2, 2, 2, 0.1, vec![f64::NAN; 4], vec![0.0; 4], None).is_err());
    }

    fn even_set(kl: bool) -> LatentTrajectorySet {
        let latent: Vec<f64> = (0..2 * 4 * 6).map(|i| (i as f64).sin()).collect();
        let truth: Vec<f64> = (0..2 * 4 * 2).map(|i| (i as f64).cos()).collect();
        LatentTrajectorySet::new(2, 4, 6, 2, 0.125, latent, truth, kl.then(|| vec![1.0, 1e-4, 0.3, 2.0, 0.5, 0.0]))
            .unwrap()
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = even_set(true);
        save_container(&set, dir.path()).unwrap();
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest, "magic = HTRJ1\nK = 2\nT = 3\nm = 3\nn = 1\ndt = 0.125\nhas_kl = true\n");
        let bytes = fs::read(dir.path().join(LATENT_FILE)).unwrap();
        assert_eq!(bytes.len(), 2 * 4 * 6 * 8);
        let loaded = load_container(dir.path()).unwrap();
        assert_eq!(loaded, set);
        // rewriting the loaded set reproduces identical payload bytes
        let again = tempfile::tempdir().unwrap();
        save_container(&loaded, again.path()).unwrap();
        for f in [MANIFEST_FILE, LATENT_FILE, TRUTH_FILE, KL_FILE] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
        }
    }

    #[test]
    fn missing_kl_file_is_fine_without_flag() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&even_set(false), dir.path()).unwrap();
        assert!(!dir.path().join(KL_FILE).exists());
        assert_eq!(load_container(dir.path()).unwrap().kl(), None);
    }

    #[test]
    fn wrong_payload_size_is_reported_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&even_set(false), dir.path()).unwrap();
        // declare 2m = 8 while the payload holds 2m = 6
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("m = 3", "m = 4");
        fs::write(&path, text).unwrap();
        match load_container(dir.path()) {
            Err(Error::Format { offset, message, .. }) => {
                assert_eq!(offset, 2 * 4 * 6 * 8);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_value_is_located() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&even_set(false), dir.path()).unwrap();
        let path = dir.path().join(TRUTH_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[40..48].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_container(dir.path()), Err(Error::Format { offset: 40, .. })));
    }

    #[test]
    fn magic_and_manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        save_container(&even_set(false), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let good = fs::read_to_string(&path).unwrap();
        fs::write(&path, good.replace("HTRJ1", "HTRJ2")).unwrap();
        assert!(matches!(load_container(dir.path()), Err(Error::Format { offset: 0, .. })));
        fs::write(&path, good.replace("K = 2\n", "")).unwrap();
        assert!(matches!(load_container(dir.path()), Err(Error::Format { .. })));
        fs::write(&path, format!("{good}color = red\n")).unwrap();
        assert!(matches!(load_container(dir.path()), Err(Error::Format { .. })));
        fs::write(&path, good.replace("dt = 0.125", "dt = fast")).unwrap();
        match load_container(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, good.find("dt =").unwrap()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truth_only_container() {
        let s0 = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        let s1 = PhaseState::new(vec![0.5], vec![-0.5]).unwrap();
        let traj = Trajectory::new(0.125, vec![s0, s1]).unwrap();
        let set = LatentTrajectorySet::from_truth(&[traj.clone(), traj]).unwrap();
        assert_eq!(set.latent_dim(), 0);
        let dir = tempfile::tempdir().unwrap();
        save_container(&set, dir.path()).unwrap();
        assert!(!dir.path().join(LATENT_FILE).exists());
        let loaded = load_container(dir.path()).unwrap();
        assert_eq!(loaded, set);
        assert_eq!(loaded.truth_trajectory(1).unwrap().last().p, vec![-0.5]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_bit_exact(
            k in 1usize..4, t in 1usize..6, m in 0usize..4, n in 1usize..3,
            has_kl in any::<bool>(), seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows = k * (t + 1);
            let latent: Vec<f64> = (0..rows * 2 * m).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect();
            let truth: Vec<f64> = (0..rows * 2 * n).map(|_| rng.random::<f64>() - 0.5).collect();
            let kl = (has_kl && m > 0).then(|| (0..2 * m).map(|_| rng.random::<f64>()).collect());
            let dt = rng.random_range(1e-4..1.0);
            let set = LatentTrajectorySet::new(k, t + 1, 2 * m, 2 * n, dt, latent, truth, kl).unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_container(&set, dir.path()).unwrap();
            let loaded = load_container(dir.path()).unwrap();
            prop_assert_eq!(loaded.dt().to_bits(), set.dt().to_bits());
            prop_assert!(loaded.latent().iter().zip(set.latent()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(loaded.truth().iter().zip(set.truth()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(loaded, set);
        }
    }
}
