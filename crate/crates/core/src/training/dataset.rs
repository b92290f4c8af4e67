use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{load_mesh, Vec3, TriMesh};
use crate::kinematics::{Pose, Skeleton};
use crate::render::{distance_transform, load_cameras, Camera, ColorImage, DistanceField, Mask};

/// One camera's observation of a frame: 8-bit RGB image, foreground mask
/// and the mask's boundary distance field.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
    pub mask: Mask,
    pub field: DistanceField,
}

impl View {
    pub fn new(image: &ColorImage, mask: Mask) -> Result<Self> {
        if image.width != mask.width || image.height != mask.height {
            return Err(Error::DimensionMismatch {
                what: "mask size",
                expected: image.width * image.height,
                got: mask.width * mask.height,
            });
        }
        let field = distance_transform(&mask)?;
        let q = image.quantized();
        Ok(Self {
            width: image.width,
            height: image.height,
            rgb: q.data.iter().map(|c| [to_u8(c.x), to_u8(c.y), to_u8(c.z)]).collect(),
            mask,
            field,
        })
    }

    pub fn image(&self) -> ColorImage {
        ColorImage {
            width: self.width,
            height: self.height,
            data: self
                .rgb
                .iter()
                .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
                .collect(),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub pose: Pose,
    pub views: Vec<View>,
}

/// `poses.json`: the canonical pose of the template and one pose per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub canonical: Pose,
    pub frames: Vec<Pose>,
}

impl PoseFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Template, skeleton, cameras and the multi-view frames used for training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub template: TriMesh,
    pub skeleton: Skeleton,
    pub canonical: Pose,
    pub cameras: Vec<Camera>,
    pub frames: Vec<Frame>,
}

pub fn frame_image_path(dir: &Path, frame: usize, cam: usize) -> PathBuf {
    dir.join("frames").join(format!("f{frame}_c{cam}.png"))
}

pub fn frame_mask_path(dir: &Path, frame: usize, cam: usize) -> PathBuf {
    dir.join("masks").join(format!("f{frame}_c{cam}.png"))
}

impl Dataset {
    /// Checks that poses, skeleton and cameras agree.
    pub fn validate(&self) -> Result<()> {
        let dof = self.skeleton.dof();
        for p in std::iter::once(&self.canonical).chain(self.frames.iter().map(|f| &f.pose)) {
            if p.rho.len() != dof {
                return Err(Error::DimensionMismatch {
                    what: "pose joint angles",
                    expected: dof,
                    got: p.rho.len(),
                });
            }
        }
        for f in &self.frames {
            if f.views.len() != self.cameras.len() {
                return Err(Error::DimensionMismatch {
                    what: "views per frame",
                    expected: self.cameras.len(),
                    got: f.views.len(),
                });
            }
            for (v, c) in f.views.iter().zip(&self.cameras) {
                if v.width != c.width || v.height != c.height {
                    return Err(Error::DimensionMismatch {
                        what: "image size",
                        expected: c.width * c.height,
                        got: v.width * v.height,
                    });
                }
            }
        }
        Ok(())
    }

    /// Reads the directory layout written by the synthetic generator.
    /// Every `stride`-th frame is kept.
    pub fn load(dir: impl AsRef<Path>, stride: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let template = load_mesh(dir.join("template.obj"))?;
        let skeleton = Skeleton::load(dir.join("skeleton.json"))?;
        let cameras = load_cameras(dir.join("cams.json"))?;
        let poses = PoseFile::load(dir.join("poses.json"))?;
        let stride = stride.max(1);
        let frames = poses
            .frames
            .into_par_iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0)
            .map(|(index, pose)| {
                let views = (0..cameras.len())
                    .map(|c| {
                        let image = ColorImage::load_png(frame_image_path(dir, index, c))?;
                        let mask = Mask::load_png(frame_mask_path(dir, index, c))?;
                        View::new(&image, mask)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Frame { index, pose, views })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = Self {
            template,
            skeleton,
            canonical: poses.canonical,
            cameras,
            frames,
        };
        data.validate()?;
        Ok(data)
    }
}
