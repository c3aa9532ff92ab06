//! Dataset loading and the synthetic scene generator.
//!
//! A dataset on disk is a directory with a `scene.toml` config, an
//! `images/` directory of 8-bit RGB PNGs, and optional float sidecar
//! files for ground-truth and initial-guess cameras (poses in the
//! trajectory format, focals as `group_id f_x f_y` lines). Sidecars keep
//! oracle values exact; PNG quantization never touches them.

mod synthetic;

pub use synthetic::{
    generate_synthetic, integrate_ray, mini_preset, perturb_cameras, render_analytic,
    two_group_preset, AnalyticScene, Blob, CameraLayout, GroupSpec,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::camera::CameraGroup;
use crate::geometry::{read_trajectory, write_trajectory, PoseSE3};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing or invalid config: {0}")]
    MissingConfig(String),
    #[error("group mismatch: {0}")]
    GroupMismatch(String),
    #[error("unreadable image {file}: {message}")]
    UnreadableImage { file: String, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Row-major interleaved RGB image with components in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ImageBuf<T> {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuf {
            width,
            height,
            data: vec![T::zero(); width * height * 3],
        }
    }

    pub fn get_pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    pub fn cast<U: Scalar>(&self) -> ImageBuf<U> {
        ImageBuf {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| U::of_f64(x.to_f64_lossy())).collect(),
        }
    }

    /// Quantize to 8-bit and write as PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), DataError> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&x| {
                let v = x.to_f64_lossy().clamp(0.0, 1.0);
                (v * 255.0).round() as u8
            })
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("pixel buffer matches dimensions");
        img.save(path).map_err(|e| DataError::UnreadableImage {
            file: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<ImageBuf<T>, DataError> {
        let img = image::open(path)
            .map_err(|e| DataError::UnreadableImage {
                file: path.display().to_string(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img
            .into_raw()
            .into_iter()
            .map(|b| T::of_f64(b as f64 / 255.0))
            .collect();
        Ok(ImageBuf {
            width: w,
            height: h,
            data,
        })
    }
}

/// One capture: pixels plus its id, camera group and split assignment.
#[derive(Clone, Debug)]
pub struct SceneImage {
    pub id: u64,
    pub group: usize,
    pub heldout: bool,
    pub file: String,
    pub pixels: ImageBuf<f64>,
}

/// A full scene: images, camera groups, sampling bounds, and optional
/// exact camera ground truth / initial guesses.
#[derive(Clone, Debug)]
pub struct SceneDataset {
    pub images: Vec<SceneImage>,
    pub groups: Vec<CameraGroup>,
    pub near: f64,
    pub far: f64,
    pub white_background: bool,
    /// Ground-truth camera-to-world poses, one per image (same order).
    pub gt_trajectory: Option<Vec<PoseSE3<f64>>>,
    /// Ground-truth `(f_x, f_y)` per group.
    pub gt_focals: Option<Vec<(f64, f64)>>,
    /// Perturbed/external poses used as the optimization starting point.
    pub init_trajectory: Option<Vec<PoseSE3<f64>>>,
    /// Perturbed/external focals used to initialize the focal bank.
    pub init_focals: Option<Vec<(f64, f64)>>,
}

impl SceneDataset {
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.images.len()).filter(|&i| !self.images[i].heldout).collect()
    }

    pub fn heldout_indices(&self) -> Vec<usize> {
        (0..self.images.len()).filter(|&i| self.images[i].heldout).collect()
    }

    pub fn group_of(&self, image_idx: usize) -> &CameraGroup {
        &self.groups[self.images[image_idx].group]
    }

    /// Maximum pairwise ground-truth camera-center distance; used to
    /// normalize translation errors. Falls back to 1.0 without GT.
    pub fn scene_extent(&self) -> f64 {
        let Some(traj) = &self.gt_trajectory else {
            return 1.0;
        };
        let mut best: f64 = 0.0;
        for i in 0..traj.len() {
            for j in i + 1..traj.len() {
                best = best.max((traj[i].center() - traj[j].center()).norm());
            }
        }
        if best > 0.0 {
            best
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for img in &self.images {
            if img.group >= self.groups.len() || self.groups[img.group].id != img.group {
                return Err(DataError::GroupMismatch(format!(
                    "image {} (id {}) references unknown group {}",
                    img.file, img.id, img.group
                )));
            }
            let g = &self.groups[img.group];
            if img.pixels.width != g.width || img.pixels.height != g.height {
                return Err(DataError::GroupMismatch(format!(
                    "image {} is {}x{} but group {} is {}x{}",
                    img.file, img.pixels.width, img.pixels.height, g.id, g.width, g.height
                )));
            }
        }
        if let Some(t) = &self.gt_trajectory {
            if t.len() != self.images.len() {
                return Err(DataError::GroupMismatch(format!(
                    "ground-truth trajectory has {} poses for {} images",
                    t.len(),
                    self.images.len()
                )));
            }
        }
        if let Some(t) = &self.init_trajectory {
            if t.len() != self.images.len() {
                return Err(DataError::GroupMismatch(format!(
                    "init trajectory has {} poses for {} images",
                    t.len(),
                    self.images.len()
                )));
            }
        }
        for (name, focals) in [
            ("ground-truth", &self.gt_focals),
            ("init", &self.init_focals),
        ] {
            if let Some(f) = focals {
                if f.len() != self.groups.len() {
                    return Err(DataError::GroupMismatch(format!(
                        "{name} focals list has {} entries for {} groups",
                        f.len(),
                        self.groups.len()
                    )));
                }
            }
        }
        if !(self.far > self.near && self.near >= 0.0) {
            return Err(DataError::MissingConfig(format!(
                "invalid bounds near={} far={}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    /// Write the dataset (config, PNGs, float sidecars) under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir.join("images")).map_err(io_err(dir))?;
        for img in &self.images {
            img.pixels.save_png(&dir.join(&img.file))?;
        }
        let mut toml = SceneToml {
            near: self.near,
            far: self.far,
            white_background: self.white_background,
            trajectory: None,
            focals: None,
            init_trajectory: None,
            init_focals: None,
            groups: BTreeMap::new(),
            images: Vec::new(),
        };
        for g in &self.groups {
            toml.groups.insert(
                g.id.to_string(),
                GroupToml {
                    width: g.width,
                    height: g.height,
                },
            );
        }
        for img in &self.images {
            toml.images.push(ImageToml {
                file: img.file.clone(),
                id: img.id,
                group: img.group,
                heldout: img.heldout,
            });
        }
        if let Some(traj) = &self.gt_trajectory {
            let entries: Vec<(u64, PoseSE3<f64>)> = self
                .images
                .iter()
                .zip(traj.iter())
                .map(|(img, p)| (img.id, *p))
                .collect();
            write_trajectory(&dir.join("gt.txt"), &entries)
                .map_err(|e| DataError::MissingConfig(format!("writing gt.txt: {e}")))?;
            toml.trajectory = Some("gt.txt".into());
        }
        if let Some(focals) = &self.gt_focals {
            write_focals(&dir.join("gt_focals.txt"), focals).map_err(io_err(dir))?;
            toml.focals = Some("gt_focals.txt".into());
        }
        if let Some(traj) = &self.init_trajectory {
            let entries: Vec<(u64, PoseSE3<f64>)> = self
                .images
                .iter()
                .zip(traj.iter())
                .map(|(img, p)| (img.id, *p))
                .collect();
            write_trajectory(&dir.join("init_poses.txt"), &entries)
                .map_err(|e| DataError::MissingConfig(format!("writing init_poses.txt: {e}")))?;
            toml.init_trajectory = Some("init_poses.txt".into());
        }
        if let Some(focals) = &self.init_focals {
            write_focals(&dir.join("init_focals.txt"), focals).map_err(io_err(dir))?;
            toml.init_focals = Some("init_focals.txt".into());
        }
        let text = toml::to_string_pretty(&toml)
            .map_err(|e| DataError::MissingConfig(format!("serializing scene.toml: {e}")))?;
        std::fs::write(dir.join("scene.toml"), text).map_err(io_err(dir))?;
        Ok(())
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SceneToml {
    near: f64,
    far: f64,
    #[serde(default)]
    white_background: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    focals: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init_trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init_focals: Option<String>,
    groups: BTreeMap<String, GroupToml>,
    images: Vec<ImageToml>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct GroupToml {
    width: usize,
    height: usize,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ImageToml {
    file: String,
    id: u64,
    group: usize,
    #[serde(default)]
    heldout: bool,
}

pub fn write_focals(path: &Path, focals: &[(f64, f64)]) -> std::io::Result<()> {
    let mut out = String::from("# group_id f_x f_y\n");
    for (gid, (fx, fy)) in focals.iter().enumerate() {
        writeln!(out, "{gid} {fx} {fy}").unwrap();
    }
    std::fs::write(path, out)
}

pub fn read_focals(path: &Path, n_groups: usize) -> Result<Vec<(f64, f64)>, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = vec![None; n_groups];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(DataError::MissingConfig(format!(
                "{}:{}: expected `group_id f_x f_y`",
                path.display(),
                lineno + 1
            )));
        }
        let gid: usize = fields[0].parse().map_err(|e| {
            DataError::MissingConfig(format!("{}:{}: bad group id: {e}", path.display(), lineno + 1))
        })?;
        if gid >= n_groups {
            return Err(DataError::GroupMismatch(format!(
                "{}:{}: focal entry for unknown group {gid}",
                path.display(),
                lineno + 1
            )));
        }
        let fx: f64 = fields[1].parse().map_err(|e| {
            DataError::MissingConfig(format!("{}:{}: bad f_x: {e}", path.display(), lineno + 1))
        })?;
        let fy: f64 = fields[2].parse().map_err(|e| {
            DataError::MissingConfig(format!("{}:{}: bad f_y: {e}", path.display(), lineno + 1))
        })?;
        out[gid] = Some((fx, fy));
    }
    out.into_iter()
        .enumerate()
        .map(|(gid, f)| {
            f.ok_or_else(|| DataError::GroupMismatch(format!("no focal entry for group {gid}")))
        })
        .collect()
}

/// Load a dataset directory (see module docs for the layout). Every
/// validation error names the offending entry.
pub fn load_dataset(root: &Path) -> Result<SceneDataset, DataError> {
    let config_path = root.join("scene.toml");
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        DataError::MissingConfig(format!("{}: {e}", config_path.display()))
    })?;
    let toml: SceneToml = toml::from_str(&text)
        .map_err(|e| DataError::MissingConfig(format!("{}: {e}", config_path.display())))?;

    let mut groups = Vec::new();
    for (key, g) in &toml.groups {
        let id: usize = key.parse().map_err(|_| {
            DataError::MissingConfig(format!("group key {key:?} is not an integer id"))
        })?;
        groups.push(
            CameraGroup::new(id, g.width, g.height)
                .map_err(|e| DataError::MissingConfig(e.to_string()))?,
        );
    }
    groups.sort_by_key(|g| g.id);
    for (i, g) in groups.iter().enumerate() {
        if g.id != i {
            return Err(DataError::GroupMismatch(format!(
                "group ids must be contiguous from 0; found {}",
                g.id
            )));
        }
    }

    let mut images = Vec::new();
    for entry in &toml.images {
        if entry.group >= groups.len() {
            return Err(DataError::GroupMismatch(format!(
                "image {} (id {}) assigned to unknown group {}",
                entry.file, entry.id, entry.group
            )));
        }
        let pixels = ImageBuf::<f64>::load_png(&root.join(&entry.file))?;
        images.push(SceneImage {
            id: entry.id,
            group: entry.group,
            heldout: entry.heldout,
            file: entry.file.clone(),
            pixels,
        });
    }

    let read_traj = |file: &str| -> Result<Vec<PoseSE3<f64>>, DataError> {
        let entries = read_trajectory(&root.join(file))
            .map_err(|e| DataError::MissingConfig(format!("{file}: {e}")))?;
        if entries.len() != images.len() {
            return Err(DataError::GroupMismatch(format!(
                "{file} has {} poses for {} images",
                entries.len(),
                images.len()
            )));
        }
        // match poses to images by id
        images
            .iter()
            .map(|img| {
                entries
                    .iter()
                    .find(|(id, _)| *id == img.id)
                    .map(|(_, p)| *p)
                    .ok_or_else(|| {
                        DataError::GroupMismatch(format!(
                            "{file} has no pose for image id {}",
                            img.id
                        ))
                    })
            })
            .collect()
    };

    let gt_trajectory = toml.trajectory.as_deref().map(read_traj).transpose()?;
    let init_trajectory = toml.init_trajectory.as_deref().map(read_traj).transpose()?;
    let gt_focals = toml
        .focals
        .as_deref()
        .map(|f| read_focals(&root.join(f), groups.len()))
        .transpose()?;
    let init_focals = toml
        .init_focals
        .as_deref()
        .map(|f| read_focals(&root.join(f), groups.len()))
        .transpose()?;

    let dataset = SceneDataset {
        images,
        groups,
        near: toml.near,
        far: toml.far,
        white_background: toml.white_background,
        gt_trajectory,
        gt_focals,
        init_trajectory,
        init_focals,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Hash of the dataset directory contents (config, sidecars, images),
/// for run manifests.
pub fn dataset_fingerprint(root: &Path) -> Result<String, DataError> {
    let mut files: Vec<PathBuf> = Vec::new();
    fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, files)?;
            } else {
                files.push(path);
            }
        }
        Ok(())
    }
    walk(root, &mut files).map_err(io_err(root))?;
    files.sort();
    // FNV-1a over paths and contents; stable and dependency-free.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for f in &files {
        feed(f.display().to_string().as_bytes());
        let contents = std::fs::read(f).map_err(io_err(f))?;
        feed(&contents);
    }
    Ok(format!("{hash:016x}"))
}
