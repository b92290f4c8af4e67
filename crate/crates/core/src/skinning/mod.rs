//! Linear blend skinning, heat-diffusion initial weights and the vertex sets
//! derived from them.

mod heat;
mod io;

pub use heat::{bone_segments, heat_diffusion_weights, BoneSegment, HeatConfig};
pub use io::{read_weights_bin, read_weights_json, weights_to_json, write_weights_bin, WEIGHTS_MAGIC};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kinematics::{JointTransforms, Rigid};

/// Tolerance on the row sums of a valid weight matrix.
pub const SIMPLEX_TOL: f64 = 1e-6;
/// Tolerance accepted by [`lbs`] before it reports an upstream bug.
pub const LBS_SIMPLEX_TOL: f64 = 1e-4;

/// Row-stochastic `N x J` weight matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinWeights {
    rows: usize,
    joints: usize,
    data: Vec<f64>,
}

impl SkinWeights {
    /// Wraps a row-major buffer, checking nonnegativity and partition of unity.
    pub fn new(rows: usize, joints: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * joints {
            return Err(Error::DimensionMismatch {
                what: "weight buffer",
                expected: rows * joints,
                got: data.len(),
            });
        }
        let w = Self { rows, joints, data };
        w.check(SIMPLEX_TOL)?;
        Ok(w)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let joints = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != joints) {
            return Err(Error::DimensionMismatch {
                what: "weight row",
                expected: joints,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), joints, rows.concat())
    }

    pub fn uniform(rows: usize, joints: usize) -> Self {
        Self {
            rows,
            joints,
            data: vec![1.0 / joints as f64; rows * joints],
        }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        for i in 0..self.rows {
            check_simplex(i, self.row(i), tol)?;
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.rows
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.joints..(i + 1) * self.joints]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.joints.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_simplex(row: usize, w: &[f64], tol: f64) -> Result<()> {
    let sum: f64 = w.iter().sum();
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sum - 1.0).abs().le(&tol) || min < -tol || !sum.is_finite() {
        return Err(Error::OffSimplex { row, sum, min });
    }
    Ok(())
}

/// Blends the skinning transforms without validating the weights.
#[inline]
pub fn blend(point: &Vec3, weights: &[f64], skinning: &[Rigid]) -> Vec3 {
    let p = nalgebra::Point3::from(*point);
    weights
        .iter()
        .zip(skinning)
        .filter(|(w, _)| **w != 0.0)
        .map(|(w, t)| (t * p).coords * *w)
        .sum()
}

/// Linear blend skinning of one canonical point.
pub fn lbs(point: &Vec3, weights: &[f64], transforms: &JointTransforms) -> Result<Vec3> {
    if weights.len() != transforms.joint_count() {
        return Err(Error::DimensionMismatch {
            what: "skinning weights",
            expected: transforms.joint_count(),
            got: weights.len(),
        });
    }
    check_simplex(0, weights, LBS_SIMPLEX_TOL)?;
    Ok(blend(point, weights, &transforms.skinning))
}

/// Vertex sets derived from the initial weights: `assign[j]` holds the
/// vertices whose largest weight is joint `j` (lowest index wins ties) and
/// `rigid` the vertices whose largest weight exceeds `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneSets {
    pub assign: Vec<Vec<usize>>,
    pub rigid: Vec<usize>,
    pub threshold: f64,
}

impl BoneSets {
    pub fn is_rigid(&self, i: usize) -> bool {
        self.rigid.binary_search(&i).is_ok()
    }

    pub fn owner(&self, i: usize) -> Option<usize> {
        self.assign.iter().position(|a| a.binary_search(&i).is_ok())
    }
}

/// Default rigid threshold `u`.
pub const RIGID_THRESHOLD: f64 = 0.95;

pub fn derive_bone_sets(weights: &SkinWeights, threshold: f64) -> BoneSets {
    let mut assign = vec![Vec::new(); weights.joint_count()];
    let mut rigid = Vec::new();
    for (i, row) in weights.rows().enumerate() {
        let mut best = 0;
        for (j, &w) in row.iter().enumerate() {
            if w > row[best] {
                best = j;
            }
        }
        if !assign.is_empty() {
            assign[best].push(i);
        }
        if row[best] > threshold {
            rigid.push(i);
        }
    }
    BoneSets {
        assign,
        rigid,
        threshold,
    }
}
