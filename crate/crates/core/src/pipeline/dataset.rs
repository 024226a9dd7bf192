//! Patch-pair dataset generation from meshes, and its manifest.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::PatchPair;
use crate::error::{Error, Result};
use crate::geometry::io::{read_off, read_xyz, write_xyz};
use crate::geometry::{dist2, farthest_point_sample, poisson_sample, Mesh, NormalizeTransform, PointCloud};

/// Bumped whenever generation output would change for the same inputs.
pub const GENERATOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub patches_per_mesh: usize,
    pub patch_input: usize,
    pub patch_gt: usize,
    pub dense_points: usize,
    pub test_input: usize,
    pub test_gt: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            patches_per_mesh: 50,
            patch_input: 256,
            patch_gt: 1024,
            dense_points: 8192,
            test_input: 2048,
            test_gt: 8192,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_input == 0 || self.patch_input > self.patch_gt || self.patch_gt > self.dense_points {
            return Err(Error::Config(format!(
                "need 0 < patch_input ≤ patch_gt ≤ dense_points, got {} / {} / {}",
                self.patch_input, self.patch_gt, self.dense_points
            )));
        }
        if self.patches_per_mesh == 0 || self.patches_per_mesh > self.dense_points {
            return Err(Error::Config("patches_per_mesh must lie in [1, dense_points]".into()));
        }
        if self.test_input == 0 || self.test_gt == 0 {
            return Err(Error::Config("test cloud sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub input: String,
    pub gt: String,
    pub seed_point: usize,
    pub transform: NormalizeTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub input: String,
    pub gt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshEntry {
    pub name: String,
    pub mesh: String,
    pub seed: u64,
    pub patches: Vec<PatchEntry>,
    pub test: TestEntry,
}

/// Index of everything [`generate_dataset`] wrote. File paths are relative
/// to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub meshes: Vec<MeshEntry>,
}

impl DatasetManifest {
    pub fn patch_count(&self) -> usize {
        self.meshes.iter().map(|m| m.patches.len()).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            detail: format!("bad manifest: {e}"),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Per-mesh seed derived from the dataset seed and the mesh's position.
fn mesh_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Indices of the `m` points of `cloud` nearest to point `center`, nearest
/// first, ties by index, `center` itself always first.
pub fn nearest_indices(cloud: &PointCloud, center: usize, m: usize) -> Vec<usize> {
    let pts = cloud.points();
    let c = pts[center];
    let mut order: Vec<(f64, bool, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, &p)| (dist2(c, p), i != center, i))
        .collect();
    let m = m.min(order.len());
    if m < order.len() {
        order.select_nth_unstable_by(m - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        order.truncate(m);
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    order.into_iter().map(|(_, _, i)| i).collect()
}

/// Cuts `patches_per_mesh` training pairs out of the dense cloud `dense`.
/// Each gt patch holds the points nearest an FPS seed; its input is an FPS
/// subset of the gt patch that starts at the seed. Both are normalized by
/// the transform fitted on the gt patch.
pub fn cut_patches(dense: &PointCloud, cfg: &DatasetConfig, source: &str) -> Result<Vec<PatchPair>> {
    let seeds = farthest_point_sample(dense, cfg.patches_per_mesh, 0)?;
    let mut out = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let gt_idx = nearest_indices(dense, s, cfg.patch_gt);
        let gt = dense.select(&gt_idx)?;
        let in_idx = farthest_point_sample(&gt, cfg.patch_input, 0)?;
        let input = gt.select(&in_idx)?;
        let transform = NormalizeTransform::fit(&gt);
        out.push(PatchPair {
            input: transform.apply(&input)?,
            gt: transform.apply(&gt)?,
            transform,
            source: source.to_string(),
            seed_point: s,
        });
    }
    Ok(out)
}

/// Reads every `*.off` in `mesh_dir` (sorted by file name) and writes
/// normalized training patch pairs plus one unnormalized test pair per mesh
/// under `out_dir`, indexed by `manifest.json`. Unreadable meshes are
/// skipped with a warning.
pub fn generate_dataset(
    mesh_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mesh_dir = mesh_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(mesh_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("off")))
        .collect();
    paths.sort();
    let mut meshes: Vec<(String, PathBuf, Mesh)> = Vec::new();
    for p in paths {
        match read_off(&p) {
            Ok(m) if !m.is_empty() => {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                meshes.push((name, p, m));
            }
            Ok(_) => warn!("skipping {}: no usable faces", p.display()),
            Err(e) => warn!("skipping {}: {e}", p.display()),
        }
    }
    if meshes.is_empty() {
        return Err(Error::Data {
            path: mesh_dir.to_path_buf(),
            detail: "no usable OFF meshes".into(),
        });
    }
    fs::create_dir_all(out_dir.join("patches"))?;
    fs::create_dir_all(out_dir.join("test"))?;
    let mut entries = Vec::with_capacity(meshes.len());
    for (i, (name, path, mesh)) in meshes.iter().enumerate() {
        let ms = mesh_seed(seed, i);
        info!("sampling {name}");
        let dense = poisson_sample(mesh, cfg.dense_points, ms)?;
        let pairs = cut_patches(&dense, cfg, name)?;
        let mut patches = Vec::with_capacity(pairs.len());
        for (j, pair) in pairs.iter().enumerate() {
            let input = format!("patches/{name}_{j:03}_input.xyz");
            let gt = format!("patches/{name}_{j:03}_gt.xyz");
            write_xyz(out_dir.join(&input), &pair.input)?;
            write_xyz(out_dir.join(&gt), &pair.gt)?;
            patches.push(PatchEntry {
                input,
                gt,
                seed_point: pair.seed_point,
                transform: pair.transform,
            });
        }
        let test_in = poisson_sample(mesh, cfg.test_input, ms.wrapping_add(1))?;
        let test_gt = poisson_sample(mesh, cfg.test_gt, ms.wrapping_add(2))?;
        let test = TestEntry {
            input: format!("test/{name}_input.xyz"),
            gt: format!("test/{name}_gt.xyz"),
        };
        write_xyz(out_dir.join(&test.input), &test_in)?;
        write_xyz(out_dir.join(&test.gt), &test_gt)?;
        entries.push(MeshEntry {
            name: name.clone(),
            mesh: path.to_string_lossy().into_owned(),
            seed: ms,
            patches,
            test,
        });
    }
    let manifest = DatasetManifest {
        generator_version: GENERATOR_VERSION,
        seed,
        config: *cfg,
        meshes: entries,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn read_checked(path: &Path, expected: usize) -> Result<PointCloud> {
    let c = read_xyz(path)?;
    if c.len() != expected {
        return Err(Error::Data {
            path: path.to_path_buf(),
            detail: format!("expected {expected} points, found {}", c.len()),
        });
    }
    Ok(c)
}

/// Training pairs listed in a manifest; each file must hold the configured
/// number of points.
pub fn load_patch_pairs(manifest_path: impl AsRef<Path>) -> Result<Vec<PatchPair>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(manifest.patch_count());
    for m in &manifest.meshes {
        for p in &m.patches {
            let input = read_checked(&root.join(&p.input), manifest.config.patch_input)?;
            let gt = read_checked(&root.join(&p.gt), manifest.config.patch_gt)?;
            out.push(PatchPair {
                input,
                gt,
                transform: p.transform,
                source: root.join(&p.input).to_string_lossy().into_owned(),
                seed_point: p.seed_point,
            });
        }
    }
    Ok(out)
}

/// One test cloud pair with the mesh it was sampled from.
#[derive(Clone, Debug)]
pub struct TestPair {
    pub name: String,
    pub input: PointCloud,
    pub gt: PointCloud,
    pub mesh: PathBuf,
}

pub fn load_test_pairs(manifest_path: impl AsRef<Path>) -> Result<Vec<TestPair>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .meshes
        .iter()
        .map(|m| {
            Ok(TestPair {
                name: m.name.clone(),
                input: read_checked(&root.join(&m.test.input), manifest.config.test_input)?,
                gt: read_checked(&root.join(&m.test.gt), manifest.config.test_gt)?,
                mesh: PathBuf::from(&m.mesh),
            })
        })
        .collect()
}
