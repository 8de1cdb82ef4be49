//! Posed-image datasets in the transforms-JSON layout.
//!
//! Each split lives in `transforms_{split}.json`:
//!
//! ```json
//! {
//!   "camera_angle_x": 0.69, "near": 2.0, "far": 6.0, "refractive_index": 1.5,
//!   "frames": [
//!     { "file_path": "train/r_0.png", "mask_path": "train/m_0.png",
//!       "transform_matrix": [[...], [...], [...], [0, 0, 0, 1]] }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the dataset root; a `file_path` without extension
//! gets `.png` appended. Optional `fl_x`, `cx`, `cy` override the focal length
//! and principal point derived from `camera_angle_x`.

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::error::{Error, Result};
use crate::refindex::{Mask, SilhouetteSet};
use crate::render::Image;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformsFile {
    camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fl_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cy: Option<f64>,
    near: f64,
    far: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refractive_index: Option<f64>,
    frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameEntry {
    file_path: String,
    #[serde(default)]
    mask_path: Option<String>,
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub camera: Camera,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Integer downscale applied to images, masks and intrinsics.
    pub downscale: u32,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { downscale: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub root: PathBuf,
    pub train: Vec<Frame>,
    pub val: Vec<Frame>,
    pub test: Vec<Frame>,
    pub near: f64,
    pub far: f64,
    pub refractive_index: Option<f64>,
    pub downscale: u32,
}

impl SceneDataset {
    pub fn split(&self, name: &str) -> Result<&[Frame]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            _ => Err(Error::InvalidInput(format!("unknown split '{name}'"))),
        }
    }

    pub fn load_image(&self, frame: &Frame) -> Result<Image> {
        Ok(Image::load_png(&frame.image_path)?.downscaled(self.downscale))
    }

    /// Loads a mask; after downscaling a pixel is inside when at least half
    /// of its source block is.
    pub fn load_mask(&self, frame: &Frame) -> Result<Mask> {
        let full = Mask::load_png(&frame.mask_path)?;
        let f = self.downscale.max(1);
        if f == 1 {
            return Ok(full);
        }
        let (w, h) = (full.width / f, full.height / f);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let inside = (0..f * f).filter(|j| full.get(x * f + j % f, y * f + j / f)).count();
                2 * inside as u32 >= f * f
            })
            .collect();
        Ok(Mask { width: w, height: h, data })
    }

    /// Masks and cameras of a split.
    pub fn silhouettes(&self, split: &str) -> Result<SilhouetteSet> {
        let frames = self.split(split)?;
        let masks = frames.iter().map(|f| self.load_mask(f)).collect::<Result<Vec<_>>>()?;
        SilhouetteSet::new(masks, frames.iter().map(|f| f.camera).collect())
    }
}

fn resolve(root: &Path, rel: &str) -> PathBuf {
    let p = root.join(rel);
    if p.extension().is_none() {
        p.with_extension("png")
    } else {
        p
    }
}

pub fn load_dataset(root: &Path) -> Result<SceneDataset> {
    load_dataset_with(root, LoadOptions::default())
}

pub fn load_dataset_with(root: &Path, options: LoadOptions) -> Result<SceneDataset> {
    if options.downscale == 0 {
        return Err(Error::InvalidInput("downscale must be >= 1".into()));
    }
    let mut splits: Vec<Vec<Frame>> = Vec::new();
    let mut bounds: Option<(f64, f64, Option<f64>)> = None;
    let mut frame_offset = 0;
    for name in SPLITS {
        let path = root.join(format!("transforms_{name}.json"));
        if !path.exists() {
            if name == "train" {
                return Err(Error::io(&path, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
            splits.push(Vec::new());
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: TransformsFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        if !(file.near >= 0.0 && file.near < file.far) {
            return Err(Error::InvalidInput(format!(
                "{}: near {} must be below far {}",
                path.display(),
                file.near,
                file.far
            )));
        }
        bounds.get_or_insert((file.near, file.far, file.refractive_index));
        let mut frames = Vec::with_capacity(file.frames.len());
        let mut size: Option<(u32, u32)> = None;
        for (i, entry) in file.frames.iter().enumerate() {
            let frame = frame_offset + i;
            let image_path = resolve(root, &entry.file_path);
            let mask_path = match &entry.mask_path {
                Some(m) => resolve(root, m),
                None => {
                    return Err(Error::MissingMask {
                        frame,
                        path: PathBuf::from("<none>"),
                    })
                }
            };
            if !mask_path.exists() {
                return Err(Error::MissingMask { frame, path: mask_path });
            }
            let (w, h) = image::image_dimensions(&image_path).map_err(|source| Error::Image {
                path: image_path.clone(),
                source,
            })?;
            let (mw, mh) = image::image_dimensions(&mask_path).map_err(|source| Error::Image {
                path: mask_path.clone(),
                source,
            })?;
            if (mw, mh) != (w, h) {
                return Err(Error::BadFrame {
                    frame,
                    reason: format!("mask is {mw}x{mh}, image is {w}x{h}"),
                });
            }
            if *size.get_or_insert((w, h)) != (w, h) {
                return Err(Error::BadFrame {
                    frame,
                    reason: format!("image is {w}x{h}, split uses {:?}", size.unwrap()),
                });
            }
            let mut intr = Intrinsics::from_fov_x(w, h, file.camera_angle_x);
            if let Some(f) = file.fl_x {
                intr.focal = f;
            }
            intr.cx = file.cx.unwrap_or(intr.cx);
            intr.cy = file.cy.unwrap_or(intr.cy);
            let intr = intr.downscaled(options.downscale);
            let m = Matrix4::from_fn(|r, c| entry.transform_matrix[r][c]);
            let camera = Camera::from_matrix(intr, &m).map_err(|e| Error::BadFrame {
                frame,
                reason: e.to_string(),
            })?;
            frames.push(Frame {
                image_path,
                mask_path,
                camera,
            });
        }
        frame_offset += file.frames.len();
        splits.push(frames);
    }
    let (near, far, refractive_index) = bounds.expect("train split present");
    let mut it = splits.into_iter();
    Ok(SceneDataset {
        root: root.to_owned(),
        train: it.next().unwrap(),
        val: it.next().unwrap(),
        test: it.next().unwrap(),
        near,
        far,
        refractive_index,
        downscale: options.downscale,
    })
}

/// A view to write: camera, image and silhouette.
pub struct ViewRecord<'a> {
    pub camera: &'a Camera,
    pub image: &'a Image,
    pub mask: &'a Mask,
}

/// Writes PNGs and `transforms_{split}.json` for each provided split.
pub fn write_dataset(
    root: &Path,
    near: f64,
    far: f64,
    refractive_index: Option<f64>,
    splits: &[(&str, Vec<ViewRecord<'_>>)],
) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (name, views) in splits {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut frames = Vec::with_capacity(views.len());
        let mut intr = None;
        for (i, view) in views.iter().enumerate() {
            let file_path = format!("{name}/r_{i}.png");
            let mask_path = format!("{name}/m_{i}.png");
            view.image.save_png(&root.join(&file_path))?;
            view.mask.save_png(&root.join(&mask_path))?;
            let m = view.camera.to_matrix();
            frames.push(FrameEntry {
                file_path,
                mask_path: Some(mask_path),
                transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            });
            intr.get_or_insert(view.camera.intrinsics);
        }
        let intr = intr.unwrap_or_else(|| Intrinsics::from_fov_x(1, 1, 0.7));
        let file = TransformsFile {
            camera_angle_x: intr.camera_angle_x(),
            fl_x: Some(intr.focal),
            cx: Some(intr.cx),
            cy: Some(intr.cy),
            near,
            far,
            refractive_index,
            frames,
        };
        let path = root.join(format!("transforms_{name}.json"));
        let text = serde_json::to_string_pretty(&file).expect("transforms serialize");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
