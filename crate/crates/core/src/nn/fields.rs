use serde::{Deserialize, Serialize};

use super::{Batch, EncodingSpec, GradTape, Mlp, MlpArch, MlpGrads, MlpParams};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kinematics::{NormalizedPose, Pose};

/// Architecture shared by the three fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    /// Hidden layer (0-based) whose input also receives the encoded input.
    pub skip_into: Option<usize>,
    pub encoding: EncodingSpec,
    /// Initial scale of the output layer magnitudes.
    pub head_scale: f32,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 128, 256, 256],
            skip_into: Some(2),
            encoding: EncodingSpec::default(),
            head_scale: 0.1,
        }
    }
}

impl NetConfig {
    pub fn arch(&self, input: usize, output: usize) -> MlpArch {
        MlpArch {
            input,
            hidden: self.hidden.clone(),
            output,
            skip_into: self.skip_into.filter(|&s| s > 0 && s < self.hidden.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    Skin,
    Albedo,
    Shadow,
}

impl FieldKind {
    pub const ALL: [FieldKind; 3] = [FieldKind::Skin, FieldKind::Albedo, FieldKind::Shadow];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Skin => "skin",
            FieldKind::Albedo => "albedo",
            FieldKind::Shadow => "shadow",
        }
    }
}

/// Whether appearance outputs are post-processed. Albedo is clamped to
/// `[0, 1]` only at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Training,
    Inference,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Batch) -> Batch {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradient of the logits given softmax outputs `w` and `dL/dw`.
pub fn softmax_backward(w: &Batch, dw: &Batch) -> Batch {
    let mut out = Batch::zeros(w.rows(), w.cols());
    for r in 0..w.rows() {
        let (wr, gr) = (w.row(r), dw.row(r));
        let dot: f64 = wr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &wi), &gi) in out.row_mut(r).iter_mut().zip(wr).zip(gr) {
            *o = wi * (gi - dot);
        }
    }
    out
}

/// Encoded points, each followed by the same `shared` values and `extra`
/// zero columns for the caller to fill.
fn encode_points(points: &[Vec3], spec: &EncodingSpec, shared: &[f64], extra: usize) -> Batch {
    let enc = spec.dim(3);
    let mut batch = Batch::zeros(points.len(), enc + shared.len() + extra);
    for (r, p) in points.iter().enumerate() {
        let row = batch.row_mut(r);
        spec.encode_into(p.as_slice(), &mut row[..enc]);
        row[enc..enc + shared.len()].copy_from_slice(shared);
    }
    batch
}

/// Pose-conditioned skinning weight field: `softmax(MLP([γ(x̄), θ̃]))`.
/// With `pose_conditioned = false` the pose input is dropped, giving a
/// static (but still optimizable) weight table.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinNet {
    pub params: MlpParams,
    pub encoding: EncodingSpec,
    pub joints: usize,
    pub pose_dim: usize,
    pub pose_conditioned: bool,
}

impl SkinNet {
    pub fn new(cfg: &NetConfig, joints: usize, pose_dim: usize, pose_conditioned: bool, seed: u64) -> Self {
        let input = cfg.encoding.dim(3) + if pose_conditioned { pose_dim } else { 0 };
        let mut params = MlpParams::init(cfg.arch(input, joints), seed);
        params.scale_head(cfg.head_scale);
        Self {
            params,
            encoding: cfg.encoding.clone(),
            joints,
            pose_dim,
            pose_conditioned,
        }
    }

    pub fn input(&self, points: &[Vec3], pose: &NormalizedPose) -> Result<Batch> {
        if pose.values.len() != self.pose_dim {
            return Err(Error::DimensionMismatch {
                what: "normalized pose",
                expected: self.pose_dim,
                got: pose.values.len(),
            });
        }
        Ok(if self.pose_conditioned {
            encode_points(points, &self.encoding, &pose.values, 0)
        } else {
            encode_points(points, &self.encoding, &[], 0)
        })
    }

    /// Weights for each point, one row per point.
    pub fn forward(&self, mlp: &Mlp, points: &[Vec3], pose: &NormalizedPose, tape: Option<&mut GradTape>) -> Result<Batch> {
        let logits = mlp.forward(&self.input(points, pose)?, tape)?;
        Ok(softmax_rows(&logits))
    }

    pub fn eval(&self, points: &[Vec3], pose: &NormalizedPose) -> Result<Batch> {
        self.forward(&self.params.compile(), points, pose, None)
    }

    /// Parameter gradients from `dL/dw`, where `weights` are the outputs of
    /// the forward pass that filled `tape`.
    pub fn backward(&self, mlp: &Mlp, tape: &mut GradTape, weights: &Batch, dweights: &Batch) -> Result<MlpGrads> {
        Ok(mlp.backward(tape, &softmax_backward(weights, dweights))?.0)
    }
}

/// Pose-independent color field `a(x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoNet {
    pub params: MlpParams,
    pub encoding: EncodingSpec,
}

impl AlbedoNet {
    pub fn new(cfg: &NetConfig, seed: u64) -> Self {
        let mut params = MlpParams::init(cfg.arch(cfg.encoding.dim(3), 3), seed);
        params.scale_head(cfg.head_scale);
        params.head_mut().bias.iter_mut().for_each(|b| *b = 0.5);
        Self {
            params,
            encoding: cfg.encoding.clone(),
        }
    }

    pub fn input(&self, points: &[Vec3]) -> Batch {
        encode_points(points, &self.encoding, &[], 0)
    }

    pub fn forward(&self, mlp: &Mlp, points: &[Vec3], mode: OutputMode, tape: Option<&mut GradTape>) -> Result<Batch> {
        let mut out = mlp.forward(&self.input(points), tape)?;
        if mode == OutputMode::Inference {
            out.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        Ok(out)
    }

    pub fn eval(&self, points: &[Vec3], mode: OutputMode) -> Result<Batch> {
        self.forward(&self.params.compile(), points, mode, None)
    }

    pub fn backward(&self, mlp: &Mlp, tape: &mut GradTape, dalbedo: &Batch) -> Result<MlpGrads> {
        Ok(mlp.backward(tape, dalbedo)?.0)
    }
}

/// Positive shading multiplier `s = exp(MLP([γ(x̄), θ, n, d]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowNet {
    pub params: MlpParams,
    pub encoding: EncodingSpec,
    pub pose_dim: usize,
}

impl ShadowNet {
    pub fn new(cfg: &NetConfig, pose_dim: usize, seed: u64) -> Self {
        let mut params = MlpParams::init(cfg.arch(cfg.encoding.dim(3) + pose_dim + 6, 1), seed);
        params.scale_head(cfg.head_scale);
        Self {
            params,
            encoding: cfg.encoding.clone(),
            pose_dim,
        }
    }

    /// `normals` and `view_dirs` are per point.
    pub fn input(&self, points: &[Vec3], pose: &Pose, normals: &[Vec3], view_dirs: &[Vec3]) -> Result<Batch> {
        if pose.dim() != self.pose_dim {
            return Err(Error::DimensionMismatch {
                what: "pose",
                expected: self.pose_dim,
                got: pose.dim(),
            });
        }
        if normals.len() != points.len() || view_dirs.len() != points.len() {
            return Err(Error::DimensionMismatch {
                what: "shading directions",
                expected: points.len(),
                got: normals.len().min(view_dirs.len()),
            });
        }
        let theta = pose.to_vec();
        let enc = self.encoding.dim(3);
        let mut batch = encode_points(points, &self.encoding, &theta, 6);
        for r in 0..points.len() {
            let row = batch.row_mut(r);
            let at = enc + self.pose_dim;
            row[at..at + 3].copy_from_slice(normals[r].as_slice());
            row[at + 3..at + 6].copy_from_slice(view_dirs[r].as_slice());
        }
        Ok(batch)
    }

    /// One multiplier per point, as a single-column batch.
    pub fn forward(
        &self,
        mlp: &Mlp,
        points: &[Vec3],
        pose: &Pose,
        normals: &[Vec3],
        view_dirs: &[Vec3],
        tape: Option<&mut GradTape>,
    ) -> Result<Batch> {
        let mut out = mlp.forward(&self.input(points, pose, normals, view_dirs)?, tape)?;
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.exp());
        Ok(out)
    }

    pub fn eval(&self, points: &[Vec3], pose: &Pose, normals: &[Vec3], view_dirs: &[Vec3]) -> Result<Batch> {
        self.forward(&self.params.compile(), points, pose, normals, view_dirs, None)
    }

    /// `shade` is the forward output.
    pub fn backward(&self, mlp: &Mlp, tape: &mut GradTape, shade: &Batch, dshade: &Batch) -> Result<MlpGrads> {
        let mut dz = dshade.clone();
        for (g, s) in dz.as_mut_slice().iter_mut().zip(shade.as_slice()) {
            *g *= s;
        }
        Ok(mlp.backward(tape, &dz)?.0)
    }
}
