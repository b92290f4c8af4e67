//! A two-bone arm with a known pose-dependent skinning field, a ring of
//! cameras, and the renderer that turns it into a training dataset.
//!
//! The ground-truth weights stretch the elbow transition band down the
//! forearm in proportion to the bend angle, so the forearm lags behind the
//! elbow more the further it bends. No single static weight table
//! reproduces all bent poses, while the learnable field (a function of
//! canonical position and normalized pose) contains the generator.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vertex_normals, write_obj, PartLabel, TriMesh, Vec3};
use crate::kinematics::{bind_transforms, normalize_pose, skinning_transforms, Axis, Joint, NormalizedPose, Pose, Rigid, Skeleton};
use crate::render::{rasterize, save_cameras, Camera, ColorImage, Mask};
use crate::skinning::{blend, SkinWeights};
use crate::training::{frame_image_path, frame_mask_path, Dataset, Frame, PoseFile, View};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Cylinder radius (m).
    pub radius: f64,
    /// Length of each of the two bones (m).
    pub bone_length: f64,
    pub radial_segments: usize,
    pub axial_segments: usize,
    /// Half-width of the smoothstep transition of the base weights (m).
    pub band: f64,
    /// Growth of the forearm side of the band per radian of bend (m).
    pub beta: f64,
    /// Distance from the elbow within which vertices are labelled cloth.
    pub cloth_band: f64,
    pub cameras: usize,
    pub image_size: usize,
    pub camera_distance: f64,
    pub focal: f64,
    /// Elbow bend range in degrees.
    pub elbow_range: [f64; 2],
    /// Shoulder angle range in degrees.
    pub shoulder_range: [f64; 2],
    /// Root yaw range in degrees.
    pub yaw_range: [f64; 2],
    /// Per-axis root translation range (m).
    pub translation_range: f64,
    pub train_poses: usize,
    pub heldout_poses: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            radius: 0.035,
            bone_length: 0.5,
            radial_segments: 16,
            axial_segments: 32,
            band: 0.1,
            beta: 0.3,
            cloth_band: 0.15,
            cameras: 8,
            image_size: 128,
            camera_distance: 2.6,
            focal: 190.0,
            elbow_range: [0.0, 120.0],
            shoulder_range: [-30.0, 30.0],
            yaw_range: [-45.0, 45.0],
            translation_range: 0.1,
            train_poses: 60,
            heldout_poses: 15,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("invalid scene: {m}")));
        if !(self.radius > 0.0 && self.bone_length > 0.0) {
            return bad("radius and bone length must be positive");
        }
        if self.radial_segments < 3 || self.axial_segments < 2 {
            return bad("need at least 3 radial and 2 axial segments");
        }
        if !(self.band > 0.0 && self.beta >= 0.0) {
            return bad("band must be positive and beta nonnegative");
        }
        if self.cameras < 2 {
            return bad("need at least two cameras");
        }
        if self.image_size < 8 || !(self.focal > 0.0) || !(self.camera_distance > 2.0 * self.bone_length) {
            return bad("cameras must be outside the arm's reach with a positive focal length");
        }
        for r in [self.elbow_range, self.shoulder_range, self.yaw_range] {
            if !(r[0] <= r[1]) {
                return bad("empty angle range");
            }
        }
        if !(self.translation_range >= 0.0) {
            return bad("negative translation range");
        }
        Ok(())
    }

    /// Reads a spec from TOML, or from JSON when the extension is `.json`.
    /// Missing fields take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// The generated arm: canonical template, skeleton and cameras.
#[derive(Debug, Clone)]
pub struct ArmScene {
    pub spec: SceneSpec,
    pub template: TriMesh,
    pub skeleton: Skeleton,
    pub canonical: Pose,
    pub cameras: Vec<Camera>,
    inverse_bind: Vec<Rigid>,
}

/// Exact poses and meshes of a generated sequence.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub train_poses: Vec<Pose>,
    pub train_meshes: Vec<TriMesh>,
    pub heldout_poses: Vec<Pose>,
    pub heldout_meshes: Vec<TriMesh>,
    /// Base weights of the template, equal to the field at zero bend.
    pub base_weights: SkinWeights,
}

/// Closed cylinder along `+x` from 0 to `length`, with cap centers.
fn cylinder(radius: f64, length: f64, radial: usize, axial: usize) -> Result<TriMesh> {
    let mut v = Vec::with_capacity(radial * (axial + 1) + 2);
    for a in 0..=axial {
        let x = length * a as f64 / axial as f64;
        for r in 0..radial {
            let phi = 2.0 * PI * r as f64 / radial as f64;
            v.push(Vec3::new(x, radius * phi.cos(), radius * phi.sin()));
        }
    }
    let start = v.len();
    v.push(Vec3::zeros());
    v.push(Vec3::new(length, 0.0, 0.0));
    let idx = |a: usize, r: usize| a * radial + r % radial;
    let mut f = Vec::with_capacity(2 * radial * (axial + 1));
    for a in 0..axial {
        for r in 0..radial {
            // outward normals: the ring runs counter-clockwise seen from +x
            f.push([idx(a, r), idx(a, r + 1), idx(a + 1, r + 1)]);
            f.push([idx(a, r), idx(a + 1, r + 1), idx(a + 1, r)]);
        }
    }
    for r in 0..radial {
        f.push([start, idx(0, r + 1), idx(0, r)]);
        f.push([start + 1, idx(axial, r), idx(axial, r + 1)]);
    }
    TriMesh::new(v, f)
}

fn uniform_in(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

impl ArmScene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let l = spec.bone_length;
        let mut template = cylinder(spec.radius, 2.0 * l, spec.radial_segments, spec.axial_segments)?;
        let labels = template
            .vertices()
            .iter()
            .map(|p| if (p.x - l).abs() < spec.cloth_band { PartLabel::Cloth } else { PartLabel::Skin })
            .collect();
        let colors = template.vertices().iter().map(|p| albedo(p, spec.radius)).collect();
        template = template.with_labels(labels)?.with_colors(colors)?;
        let skeleton = Skeleton::new(
            vec![
                Joint::new("shoulder", None, Vec3::zeros(), vec![Axis::Z]),
                Joint::new("elbow", Some(0), Vec3::new(l, 0.0, 0.0), vec![Axis::Z]),
            ],
            Axis::Y,
        )?;
        let canonical = Pose::zero(skeleton.dof());
        let inverse_bind = bind_transforms(&skeleton, &canonical)?;
        let center = Vec3::new(0.8 * l, 0.3 * l, 0.0);
        let cameras = (0..spec.cameras)
            .map(|c| {
                let phi = 2.0 * PI * (c as f64 + 0.5) / spec.cameras as f64;
                let height = if c % 2 == 0 { 0.35 } else { -0.2 } * spec.camera_distance;
                let eye = center + Vec3::new(phi.cos() * spec.camera_distance, height, phi.sin() * spec.camera_distance);
                Camera::look_at(eye, center, Vec3::y(), spec.focal, spec.image_size, spec.image_size)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            template,
            skeleton,
            canonical,
            cameras,
            inverse_bind,
        })
    }

    /// Static weights `(upper arm, forearm)`: a smoothstep across the elbow.
    pub fn base_weights(&self, x: &Vec3) -> [f64; 2] {
        let (l, b) = (self.spec.bone_length, self.spec.band);
        let w1 = smoothstep((x.x - (l - b)) / (2.0 * b));
        [1.0 - w1, w1]
    }

    pub fn base_weight_table(&self) -> SkinWeights {
        let rows: Vec<Vec<f64>> = self.template.vertices().iter().map(|p| self.base_weights(p).to_vec()).collect();
        SkinWeights::from_rows(&rows).expect("smoothstep rows lie on the simplex")
    }

    /// Ground-truth pose-dependent weights: the base smoothstep with its
    /// forearm end moved `β |bend|` further down the forearm.
    pub fn gt_weights(&self, x: &Vec3, theta: &NormalizedPose) -> [f64; 2] {
        let (l, b) = (self.spec.bone_length, self.spec.band);
        let bend = theta.values[6 + self.skeleton.dof_range(1).start];
        let w1 = smoothstep((x.x - (l - b)) / (2.0 * b + self.spec.beta * bend.abs()));
        [1.0 - w1, w1]
    }

    pub fn gt_weight_table(&self, pose: &Pose) -> SkinWeights {
        let theta = normalize_pose(pose, &self.skeleton.up());
        let rows: Vec<Vec<f64>> = self.template.vertices().iter().map(|p| self.gt_weights(p, &theta).to_vec()).collect();
        SkinWeights::from_rows(&rows).expect("renormalized rows lie on the simplex")
    }

    /// Linear blend skinning of the template with a weight table.
    pub fn pose_with(&self, weights: &SkinWeights, pose: &Pose) -> Result<TriMesh> {
        let t = skinning_transforms(&self.skeleton, &self.inverse_bind, pose)?;
        let v = self
            .template
            .vertices()
            .iter()
            .zip(weights.rows())
            .map(|(p, w)| blend(p, w, &t.skinning))
            .collect();
        self.template.with_positions(v)
    }

    pub fn pose_gt(&self, pose: &Pose) -> Result<TriMesh> {
        self.pose_with(&self.gt_weight_table(pose), pose)
    }

    /// Random poses within the spec's ranges.
    pub fn sample_poses(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<Pose> {
        let s = &self.spec;
        (0..count)
            .map(|_| {
                let yaw = uniform_in(rng, s.yaw_range).to_radians();
                let t = s.translation_range;
                let mut tr = [0.0; 3];
                for v in &mut tr {
                    *v = uniform_in(rng, [-t, t]);
                }
                let shoulder = uniform_in(rng, s.shoulder_range).to_radians();
                let elbow = uniform_in(rng, s.elbow_range).to_radians();
                Pose {
                    alpha: [0.0, yaw, 0.0],
                    t: tr,
                    rho: vec![shoulder, elbow],
                }
            })
            .collect()
    }

    /// Training poses followed by held-out poses, both drawn from the
    /// scene seed.
    pub fn poses(&self) -> (Vec<Pose>, Vec<Pose>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        let train = self.sample_poses(self.spec.train_poses, &mut rng);
        let heldout = self.sample_poses(self.spec.heldout_poses, &mut rng);
        (train, heldout)
    }

    /// Renders a posed mesh: per-vertex albedo times a Lambertian-style
    /// shade, quantized to 8 bits, and the coverage mask.
    pub fn render(&self, posed: &TriMesh, cam: &Camera) -> (ColorImage, Mask) {
        let normals = vertex_normals(posed.vertices(), posed.faces());
        let albedo = self.template.colors().expect("template has colors");
        let colors: Vec<Vec3> = albedo.iter().zip(&normals).map(|(a, n)| a * shade(n)).collect();
        let out = rasterize(posed.vertices(), posed.faces(), &colors, cam);
        (out.color.quantized(), out.coverage)
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let (train_poses, heldout_poses) = self.poses();
        let train_meshes = train_poses.iter().map(|p| self.pose_gt(p)).collect::<Result<Vec<_>>>()?;
        let heldout_meshes = heldout_poses.iter().map(|p| self.pose_gt(p)).collect::<Result<Vec<_>>>()?;
        Ok(GroundTruth {
            train_poses,
            train_meshes,
            heldout_poses,
            heldout_meshes,
            base_weights: self.base_weight_table(),
        })
    }

    fn views(&self, posed: &TriMesh) -> Result<Vec<View>> {
        self.cameras
            .iter()
            .map(|c| {
                let (img, mask) = self.render(posed, c);
                View::new(&img, mask)
            })
            .collect()
    }

    /// The training dataset held in memory, identical to what
    /// [`ArmScene::write_dataset`] followed by [`Dataset::load`] produces.
    pub fn dataset(&self, gt: &GroundTruth) -> Result<Dataset> {
        let frames = gt
            .train_meshes
            .par_iter()
            .zip(&gt.train_poses)
            .enumerate()
            .map(|(index, (mesh, pose))| {
                Ok(Frame {
                    index,
                    pose: pose.clone(),
                    views: self.views(mesh)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            template: self.template.clone(),
            skeleton: self.skeleton.clone(),
            canonical: self.canonical.clone(),
            cameras: self.cameras.clone(),
            frames,
        })
    }

    /// Writes the dataset directory: `cams.json`, `skeleton.json`,
    /// `poses.json`, `template.obj` (with colors), `template.labels`,
    /// `frames/f{i}_c{c}.png`, `masks/f{i}_c{c}.png`, plus `scene.json`,
    /// `gt/f{i}.obj` and `heldout/` with `poses.json` and `gt/f{i}.obj`.
    pub fn write_dataset(&self, dir: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["frames", "masks", "gt", "heldout/gt"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(p, e))?;
        }
        save_cameras(&self.cameras, dir.join("cams.json"))?;
        self.skeleton.save(dir.join("skeleton.json"))?;
        PoseFile {
            canonical: self.canonical.clone(),
            frames: gt.train_poses.clone(),
        }
        .save(dir.join("poses.json"))?;
        PoseFile {
            canonical: self.canonical.clone(),
            frames: gt.heldout_poses.clone(),
        }
        .save(dir.join("heldout/poses.json"))?;
        write_obj(&self.template, dir.join("template.obj"))?;
        let scene = dir.join("scene.json");
        std::fs::write(&scene, serde_json::to_string_pretty(&self.spec)?).map_err(|e| Error::io(scene, e))?;

        gt.train_meshes.par_iter().enumerate().try_for_each(|(i, mesh)| {
            for (c, cam) in self.cameras.iter().enumerate() {
                let (img, mask) = self.render(mesh, cam);
                img.save_png(frame_image_path(dir, i, c))?;
                mask.save_png(frame_mask_path(dir, i, c))?;
            }
            write_obj(&strip(mesh)?, dir.join("gt").join(format!("f{i}.obj")))
        })?;
        gt.heldout_meshes
            .iter()
            .enumerate()
            .try_for_each(|(i, mesh)| write_obj(&strip(mesh)?, dir.join("heldout/gt").join(format!("f{i}.obj"))))
    }
}

/// Geometry only, without labels and colors.
fn strip(mesh: &TriMesh) -> Result<TriMesh> {
    TriMesh::new(mesh.vertices().to_vec(), mesh.faces().to_vec())
}

/// Fixed light direction of the synthetic shading.
pub fn light_direction() -> Vec3 {
    Vec3::new(0.4, 0.8, 0.45).normalize()
}

/// Shade multiplier `0.5 + 0.5 max(0, n · l)`.
pub fn shade(normal: &Vec3) -> f64 {
    0.5 + 0.5 * normal.dot(&light_direction()).max(0.0)
}

/// Axial stripes with a slight variation around the circumference.
fn albedo(p: &Vec3, radius: f64) -> Vec3 {
    let t = 0.5 + 0.5 * (2.0 * PI * p.x / 0.25).sin();
    let a = Vec3::new(0.85, 0.35, 0.2);
    let b = Vec3::new(0.2, 0.55, 0.85);
    let ring = 0.1 * (p.z / radius);
    (a * (1.0 - t) + b * t).map(|c| (c + ring).clamp(0.0, 1.0))
}

/// Scene and ground truth for a spec.
pub fn make_arm_scene(spec: SceneSpec) -> Result<(ArmScene, GroundTruth)> {
    let scene = ArmScene::new(spec)?;
    let gt = scene.ground_truth()?;
    Ok((scene, gt))
}
