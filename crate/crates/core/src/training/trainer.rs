use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use nalgebra::Point3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::{Checkpoint, Model};
use super::config::TrainConfig;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{geodesic_diameter_estimate, one_ring, vertex_normals, Adjacency, Vec3};
use crate::kinematics::{bind_transforms, normalize_pose, skinning_transforms, NormalizedPose, Rigid};
use crate::losses::{
    laplacian_loss, part_loss, rendering_loss, rigid_skin_set, silhouette_loss, skinning_reg_loss, total_loss, SkinRegCost,
    StageMask, Term, TermValues,
};
use crate::nn::{adam_step, AdamState, AlbedoNet, Batch, GradTape, Mlp, MlpGrads, OutputMode, Precision, ShadowNet, SkinNet};
use crate::render::{rasterize, ColorImage, Mask};
use crate::skinning::{derive_bone_sets, heat_diffusion_weights, BoneSets, SkinWeights};

/// Quantities derived once from the dataset: adjacency, initial weights
/// and the regularizer tables built from them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub adjacency: Adjacency,
    pub init_weights: SkinWeights,
    pub bone_sets: BoneSets,
    /// Rigid vertices labelled skin, the support of the part loss.
    pub rigid_skin: Vec<usize>,
    pub skin_cost: SkinRegCost,
    pub inverse_bind: Vec<Rigid>,
}

impl Prepared {
    /// Uses `init` as the initial weights, or solves for heat-diffusion
    /// weights when it is `None`.
    pub fn new(data: &Dataset, cfg: &TrainConfig, init: Option<SkinWeights>) -> Result<Self> {
        let mesh = &data.template;
        let adjacency = one_ring(mesh);
        let init_weights = match init {
            Some(w) => {
                if w.vertex_count() != mesh.vertex_count() || w.joint_count() != data.skeleton.joint_count() {
                    return Err(Error::DimensionMismatch {
                        what: "initial weights",
                        expected: mesh.vertex_count() * data.skeleton.joint_count(),
                        got: w.vertex_count() * w.joint_count(),
                    });
                }
                w
            }
            None => heat_diffusion_weights(mesh, &adjacency, &data.skeleton, &data.canonical, &cfg.heat)?,
        };
        let bone_sets = derive_bone_sets(&init_weights, cfg.loss.u);
        let rigid_skin = rigid_skin_set(mesh, &bone_sets);
        let d_max = geodesic_diameter_estimate(mesh, &adjacency)?;
        let skin_cost = SkinRegCost::new(mesh, &adjacency, &bone_sets, d_max, cfg.loss.r)?;
        let inverse_bind = bind_transforms(&data.skeleton, &data.canonical)?;
        Ok(Self {
            adjacency,
            init_weights,
            bone_sets,
            rigid_skin,
            skin_cost,
            inverse_bind,
        })
    }
}

impl Model {
    /// Freshly initialized networks for a dataset.
    pub fn new(data: &Dataset, cfg: &TrainConfig) -> Self {
        let pose_dim = 6 + data.skeleton.dof();
        Self {
            skin: SkinNet::new(&cfg.net, data.skeleton.joint_count(), pose_dim, cfg.pose_conditioned, cfg.seed),
            albedo: AlbedoNet::new(&cfg.net, cfg.seed.wrapping_add(1)),
            shadow: ShadowNet::new(&cfg.net, pose_dim, cfg.seed.wrapping_add(2)),
        }
    }
}

/// Loss values of one iteration, averaged over its frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// 0 for the warm-up fit to the initial weights.
    pub stage: u8,
    pub iteration: u64,
    pub total: f64,
    pub terms: TermValues,
}

/// Receives progress from [`Trainer::run`].
pub trait TrainObserver {
    fn log(&mut self, _row: &LogRow) {}
    fn stage_done(&mut self, _ckpt: &Checkpoint) -> Result<()> {
        Ok(())
    }
    /// Called with the state before the failing iteration when training
    /// stops on a numerical error.
    fn aborted(&mut self, _last_good: &Checkpoint) {}
}

/// Discards everything.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Writes `loss.csv` and one checkpoint per stage into a directory. An
/// existing `loss.csv` is appended to.
pub struct DirObserver {
    dir: std::path::PathBuf,
    csv: std::io::BufWriter<std::fs::File>,
    pub every: u64,
}

impl DirObserver {
    pub fn new(dir: impl AsRef<Path>, every: u64) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("loss.csv");
        // a resumed run appends to the log of the earlier stages
        let fresh = std::fs::metadata(&path).map_or(true, |m| m.len() == 0);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut csv = std::io::BufWriter::new(file);
        if fresh {
            writeln!(csv, "stage,iteration,total,silh,rend,lap,skin,part").map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            dir,
            csv,
            every: every.max(1),
        })
    }

    pub fn checkpoint_path(dir: &Path, stage: u8) -> std::path::PathBuf {
        dir.join(format!("stage{stage}.ckpt"))
    }
}

impl TrainObserver for DirObserver {
    fn log(&mut self, r: &LogRow) {
        if r.iteration % self.every == 0 {
            let t = &r.terms;
            let _ = writeln!(
                self.csv,
                "{},{},{},{},{},{},{},{}",
                r.stage, r.iteration, r.total, t.silh, t.rend, t.lap, t.skin, t.part
            );
        }
    }

    fn stage_done(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let _ = self.csv.flush();
        ckpt.save(Self::checkpoint_path(&self.dir, ckpt.stage))
    }

    fn aborted(&mut self, last_good: &Checkpoint) {
        let _ = self.csv.flush();
        if let Err(e) = last_good.save(self.dir.join("last_good.ckpt")) {
            log::error!("could not save the last good checkpoint: {e}");
        }
    }
}

/// Which network a stage optimizes.
fn trained_net(stage: u8) -> usize {
    match stage {
        0 | 1 | 4 => 0,
        2 => 1,
        _ => 2,
    }
}

fn stage_seed(seed: u64, stage: u8) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage as u64 + 1))
}

/// Runs the four-stage schedule on a dataset.
pub struct Trainer<'a> {
    data: &'a Dataset,
    cfg: TrainConfig,
    prep: Prepared,
    pub model: Model,
    adam: [AdamState; 3],
    /// Last completed stage.
    pub stage: u8,
    iteration: u64,
    config_hash: [u8; 32],
    poses: Vec<NormalizedPose>,
}

/// Per-frame contribution to one iteration.
struct FrameOut {
    terms: TermValues,
    skin: Option<MlpGrads>,
    dalbedo: Option<Batch>,
    shadow: Option<MlpGrads>,
}

/// Read-only state shared by the frames of one iteration.
struct Pass<'p> {
    mask: StageMask,
    cams: &'p [usize],
    skin_mlp: &'p Mlp,
    shadow_mlp: &'p Mlp,
    train: usize,
    albedo: Option<&'p Batch>,
    posed: Option<&'p [Vec<Vec3>]>,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, cfg: TrainConfig, prep: Prepared) -> Result<Self> {
        let model = Model::new(data, &cfg);
        Self::with_model(data, cfg, prep, model, None, 0)
    }

    /// Continues from a checkpoint; stages up to `ckpt.stage` count as done.
    pub fn resume(data: &'a Dataset, cfg: TrainConfig, prep: Prepared, ckpt: Checkpoint) -> Result<Self> {
        if ckpt.config_hash != cfg.hash() {
            log::warn!("checkpoint was written with a different configuration; resuming anyway");
        }
        Self::with_model(data, cfg, prep, ckpt.model, ckpt.adam, ckpt.stage)
    }

    fn with_model(data: &'a Dataset, cfg: TrainConfig, prep: Prepared, model: Model, adam: Option<[AdamState; 3]>, stage: u8) -> Result<Self> {
        cfg.validate()?;
        data.validate()?;
        if data.frames.is_empty() {
            return Err(Error::InvalidArgument("dataset has no frames".into()));
        }
        if model.skin.joints != data.skeleton.joint_count() || model.skin.pose_dim != 6 + data.skeleton.dof() {
            return Err(Error::DimensionMismatch {
                what: "skinning network joints",
                expected: data.skeleton.joint_count(),
                got: model.skin.joints,
            });
        }
        let adam = adam.unwrap_or_else(|| {
            [
                AdamState::for_params(&model.skin.params, cfg.lr),
                AdamState::for_params(&model.albedo.params, cfg.lr),
                AdamState::for_params(&model.shadow.params, cfg.lr),
            ]
        });
        let up = data.skeleton.up();
        let poses = data.frames.iter().map(|f| normalize_pose(&f.pose, &up)).collect();
        Ok(Self {
            config_hash: cfg.hash(),
            data,
            cfg,
            prep,
            model,
            adam,
            stage,
            iteration: 0,
            poses,
        })
    }

    pub fn prepared(&self) -> &Prepared {
        &self.prep
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: Some(self.adam.clone()),
            stage: self.stage,
            iteration: self.iteration,
            config_hash: self.config_hash,
        }
    }

    /// Loss terms active in a stage under this configuration.
    pub fn stage_mask(&self, stage: u8) -> Result<StageMask> {
        let mask = StageMask::for_stage(stage)?;
        Ok(if self.cfg.rendering { mask } else { mask.without(Term::Rend) })
    }

    /// Runs the stages in `stages`. Stages 2 and 3 are skipped when the
    /// rendering loss is disabled; the warm-up runs before stage 1.
    pub fn run(&mut self, stages: RangeInclusive<u8>, obs: &mut dyn TrainObserver) -> Result<()> {
        if *stages.start() < 1 || *stages.end() > 4 {
            return Err(Error::InvalidArgument(format!("stages must lie in 1..=4, got {stages:?}")));
        }
        for stage in stages {
            let skipped = !self.cfg.rendering && (stage == 2 || stage == 3);
            if !skipped {
                if stage == 1 && self.cfg.skin_warmup > 0 {
                    self.run_stage(0, self.cfg.skin_warmup, obs)?;
                }
                self.run_stage(stage, self.cfg.stages[stage as usize - 1], obs)?;
            }
            self.stage = stage;
            obs.stage_done(&self.checkpoint())?;
        }
        Ok(())
    }

    fn run_stage(&mut self, stage: u8, iterations: u64, obs: &mut dyn TrainObserver) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(self.cfg.seed, stage));
        // Geometry is fixed while the skinning field is frozen, and albedo
        // while its network is frozen.
        let posed = if trained_net(stage) == 0 { None } else { Some(self.pose_all_frames()?) };
        let albedo = if stage >= 3 && self.cfg.rendering { Some(self.albedo_colors(None)?) } else { None };
        for it in 0..iterations {
            self.iteration = it;
            let row = match self.step(stage, it, &mut rng, posed.as_deref(), albedo.as_ref()) {
                Ok(row) => row,
                Err(e) => {
                    if e.is_numerical() {
                        obs.aborted(&self.checkpoint());
                    }
                    return Err(e);
                }
            };
            obs.log(&row);
        }
        self.iteration = iterations;
        Ok(())
    }

    fn pose_all_frames(&self) -> Result<Vec<Vec<Vec3>>> {
        let mlp = self.model.skin.params.compile_with(Precision::F32);
        self.data
            .frames
            .par_iter()
            .zip(&self.poses)
            .map(|(f, theta)| {
                let w = self.model.skin.forward(&mlp, self.data.template.vertices(), theta, None)?;
                let t = skinning_transforms(&self.data.skeleton, &self.prep.inverse_bind, &f.pose)?;
                Ok(blend_rows(self.data.template.vertices(), &w, &t.skinning))
            })
            .collect()
    }

    fn albedo_colors(&self, tape: Option<&mut GradTape>) -> Result<Batch> {
        let mlp = self.model.albedo.params.compile_with(Precision::F32);
        self.model.albedo.forward(&mlp, self.data.template.vertices(), OutputMode::Training, tape)
    }

    fn step(&mut self, stage: u8, it: u64, rng: &mut ChaCha8Rng, posed: Option<&[Vec<Vec3>]>, albedo: Option<&Batch>) -> Result<LogRow> {
        let nf = self.data.frames.len();
        let frames: Vec<usize> = sample(rng, nf, self.cfg.batch_frames.min(nf)).into_vec();
        let nc = self.data.cameras.len();
        let mut cams: Vec<usize> = sample(rng, nc, self.cfg.cameras_per_iter.min(nc)).into_vec();
        cams.sort_unstable();
        let batch = frames.len() as f64;

        if stage == 0 {
            return self.warmup_step(&frames, it);
        }
        let mask = self.stage_mask(stage)?;
        let train = trained_net(stage);
        let skin_mlp = self.model.skin.params.compile_with(Precision::F32);
        let shadow_mlp = self.model.shadow.params.compile_with(Precision::F32);
        let albedo_mlp = self.model.albedo.params.compile_with(Precision::F32);
        let mut albedo_tape = GradTape::new();
        let fresh_albedo;
        let albedo = match albedo {
            Some(a) => Some(a),
            None if mask.contains(Term::Rend) => {
                let tape = (train == 1).then_some(&mut albedo_tape);
                fresh_albedo = self.model.albedo.forward(&albedo_mlp, self.data.template.vertices(), OutputMode::Training, tape)?;
                Some(&fresh_albedo)
            }
            None => None,
        };
        let pass = Pass {
            mask,
            cams: &cams,
            skin_mlp: &skin_mlp,
            shadow_mlp: &shadow_mlp,
            train,
            albedo,
            posed,
        };
        let outs: Vec<FrameOut> = frames.par_iter().map(|&f| self.frame_pass(&pass, f)).collect::<Result<_>>()?;

        let mut terms = TermValues::default();
        for t in Term::ALL {
            terms.set(t, outs.iter().map(|o| o.terms.get(t)).sum::<f64>() / batch);
        }
        let total = total_loss(&terms, &self.cfg.loss, &mask)?;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { stage, iteration: it });
        }
        let grads = match train {
            0 => sum_grads(outs.into_iter().map(|o| o.skin.expect("skin gradients"))),
            1 => {
                let mut dalbedo = Batch::zeros(self.data.template.vertex_count(), 3);
                for o in &outs {
                    let d = o.dalbedo.as_ref().expect("albedo gradients");
                    dalbedo.as_mut_slice().iter_mut().zip(d.as_slice()).for_each(|(a, b)| *a += b);
                }
                self.model.albedo.backward(&albedo_mlp, &mut albedo_tape, &dalbedo)?
            }
            _ => sum_grads(outs.into_iter().map(|o| o.shadow.expect("shadow gradients"))),
        };
        let mut grads = grads;
        grads.scale(1.0 / batch);
        let params = match train {
            0 => &mut self.model.skin.params,
            1 => &mut self.model.albedo.params,
            _ => &mut self.model.shadow.params,
        };
        adam_step(&mut self.adam[train], params, &grads)?;
        Ok(LogRow {
            stage,
            iteration: it,
            total,
            terms,
        })
    }

    /// Fits the skinning field to the initial weights with a mean squared
    /// error over the template vertices.
    fn warmup_step(&mut self, frames: &[usize], it: u64) -> Result<LogRow> {
        let mlp = self.model.skin.params.compile_with(Precision::F32);
        let verts = self.data.template.vertices();
        let n = verts.len();
        let scale = 1.0 / (n * frames.len()) as f64;
        let outs: Vec<(f64, MlpGrads)> = frames
            .par_iter()
            .map(|&f| {
                let mut tape = GradTape::new();
                let w = self.model.skin.forward(&mlp, verts, &self.poses[f], Some(&mut tape))?;
                let mut dw = Batch::zeros(n, w.cols());
                let mut value = 0.0;
                for i in 0..n {
                    for (j, (d, w0)) in dw.row_mut(i).iter_mut().zip(self.prep.init_weights.row(i)).enumerate() {
                        let r = w.get(i, j) - w0;
                        value += r * r;
                        *d = 2.0 * r * scale;
                    }
                }
                Ok((value * scale, self.model.skin.backward(&mlp, &mut tape, &w, &dw)?))
            })
            .collect::<Result<_>>()?;
        let total: f64 = outs.iter().map(|o| o.0).sum();
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { stage: 0, iteration: it });
        }
        let grads = sum_grads(outs.into_iter().map(|o| o.1));
        adam_step(&mut self.adam[0], &mut self.model.skin.params, &grads)?;
        Ok(LogRow {
            stage: 0,
            iteration: it,
            total,
            terms: TermValues::default(),
        })
    }

    fn frame_pass(&self, pass: &Pass, f: usize) -> Result<FrameOut> {
        let data = self.data;
        let frame = &data.frames[f];
        let verts = data.template.vertices();
        let faces = data.template.faces();
        let n = verts.len();
        let lw = &self.cfg.loss;
        let train_skin = pass.train == 0;
        let transforms = skinning_transforms(&data.skeleton, &self.prep.inverse_bind, &frame.pose)?;

        let mut skin_tape = GradTape::new();
        let (positions, weights) = match pass.posed {
            Some(cache) if !train_skin => (cache[f].clone(), None),
            _ => {
                let tape = train_skin.then_some(&mut skin_tape);
                let w = self.model.skin.forward(pass.skin_mlp, verts, &self.poses[f], tape)?;
                (blend_rows(verts, &w, &transforms.skinning), Some(w))
            }
        };
        let mut terms = TermValues::default();
        let mut dx = vec![Vec3::zeros(); n];
        let mut dw = weights.as_ref().map(|w| Batch::zeros(n, w.cols()));

        if pass.mask.contains(Term::Silh) {
            let mut value = 0.0;
            for &c in pass.cams {
                let s = silhouette_loss(&positions, faces, &data.cameras[c], &frame.views[c].field)?;
                value += s.value();
                for (d, g) in dx.iter_mut().zip(&s.grad) {
                    *d += g * lw.silh;
                }
            }
            terms.silh = value;
        }
        if pass.mask.contains(Term::Lap) {
            let (value, g) = laplacian_loss(&positions, &self.prep.adjacency)?;
            terms.lap = value;
            for (d, g) in dx.iter_mut().zip(&g) {
                *d += g * lw.lap;
            }
        }
        let ids: Vec<usize> = (0..n).collect();
        if let (Some(w), Some(dw)) = (&weights, &mut dw) {
            if pass.mask.contains(Term::Skin) {
                let (value, g) = skinning_reg_loss(w, &ids, &self.prep.skin_cost)?;
                terms.skin = value;
                axpy(dw, lw.skin, &g);
            }
            if pass.mask.contains(Term::Part) {
                let (value, g) = part_loss(w, &ids, &self.prep.init_weights, &self.prep.rigid_skin)?;
                terms.part = value;
                axpy(dw, lw.part, &g);
            }
        }

        let mut dalbedo = None;
        let mut shadow_grads = None;
        if pass.mask.contains(Term::Rend) {
            let albedo = pass.albedo.expect("albedo computed when rendering");
            // Normals and view directions enter the shading network as
            // constants.
            let normals = vertex_normals(&positions, faces);
            let k = pass.cams.len();
            let mut pts = Vec::with_capacity(n * k);
            let mut ns = Vec::with_capacity(n * k);
            let mut ds = Vec::with_capacity(n * k);
            for &c in pass.cams {
                let cam = &data.cameras[c];
                pts.extend_from_slice(verts);
                ns.extend_from_slice(&normals);
                ds.extend(positions.iter().map(|x| cam.view_direction(x)));
            }
            let mut shadow_tape = GradTape::new();
            let train_shadow = pass.train == 2;
            let shade = self.model.shadow.forward(
                pass.shadow_mlp,
                &pts,
                &frame.pose,
                &ns,
                &ds,
                train_shadow.then_some(&mut shadow_tape),
            )?;
            let colors: Vec<Vec<Vec3>> = (0..k)
                .map(|ci| {
                    (0..n)
                        .map(|i| {
                            let a = albedo.row(i);
                            Vec3::new(a[0], a[1], a[2]) * shade.get(ci * n + i, 0)
                        })
                        .collect()
                })
                .collect();
            let outs: Vec<_> = pass
                .cams
                .iter()
                .zip(&colors)
                .map(|(&c, col)| rasterize(&positions, faces, col, &data.cameras[c]))
                .collect();
            let targets: Vec<(ColorImage, &Mask)> = pass.cams.iter().map(|&c| (frame.views[c].image(), &frame.views[c].mask)).collect();
            let rendered: Vec<(&ColorImage, &Mask)> = outs.iter().map(|o| (&o.color, &o.coverage)).collect();
            let target_refs: Vec<(&ColorImage, &Mask)> = targets.iter().map(|(i, m)| (i, *m)).collect();
            let (value, dcolor) = rendering_loss(&rendered, &target_refs)?;
            terms.rend = value;

            let mut da = (pass.train == 1).then(|| Batch::zeros(n, 3));
            let mut dshade = train_shadow.then(|| Batch::zeros(n * k, 1));
            for (ci, (&c, out)) in pass.cams.iter().zip(&outs).enumerate() {
                let g = out.backward(&positions, faces, &colors[ci], &data.cameras[c], &dcolor[ci]);
                if train_skin {
                    for (d, gp) in dx.iter_mut().zip(&g.positions) {
                        *d += gp * lw.rend;
                    }
                }
                if let Some(da) = &mut da {
                    for i in 0..n {
                        let s = shade.get(ci * n + i, 0) * lw.rend;
                        let row = da.row_mut(i);
                        for ch in 0..3 {
                            row[ch] += g.colors[i][ch] * s;
                        }
                    }
                }
                if let Some(ds) = &mut dshade {
                    for i in 0..n {
                        let a = albedo.row(i);
                        let dot = g.colors[i].x * a[0] + g.colors[i].y * a[1] + g.colors[i].z * a[2];
                        ds.row_mut(ci * n + i)[0] = dot * lw.rend;
                    }
                }
            }
            dalbedo = da;
            if let Some(ds) = dshade {
                shadow_grads = Some(self.model.shadow.backward(pass.shadow_mlp, &mut shadow_tape, &shade, &ds)?);
            }
        }

        let skin_grads = match (weights, dw) {
            (Some(w), Some(mut dw)) if train_skin => {
                for (i, p) in verts.iter().enumerate() {
                    let p = Point3::from(*p);
                    let row = dw.row_mut(i);
                    for (j, t) in transforms.skinning.iter().enumerate() {
                        row[j] += dx[i].dot(&(t * p).coords);
                    }
                }
                Some(self.model.skin.backward(pass.skin_mlp, &mut skin_tape, &w, &dw)?)
            }
            _ => None,
        };
        Ok(FrameOut {
            terms,
            skin: skin_grads,
            dalbedo,
            shadow: shadow_grads,
        })
    }
}

fn axpy(y: &mut Batch, a: f64, x: &Batch) {
    for (y, x) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *y += a * x;
    }
}

fn sum_grads(mut it: impl Iterator<Item = MlpGrads>) -> MlpGrads {
    let mut acc = it.next().expect("at least one frame");
    for g in it {
        acc.add_assign(&g);
    }
    acc
}

/// Blends every point with its row of `weights`.
pub(crate) fn blend_rows(points: &[Vec3], weights: &Batch, skinning: &[Rigid]) -> Vec<Vec3> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| crate::skinning::blend(p, weights.row(i), skinning))
        .collect()
}
