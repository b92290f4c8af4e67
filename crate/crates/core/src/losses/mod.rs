//! Supervision terms: silhouette, rendering, Laplacian smoothness, the
//! geodesic skinning regularizer and the rigid-skin part loss, plus the
//! stage-masked weighted total.

mod silhouette;

pub use silhouette::{silhouette_loss, silhouette_loss_for, SilhouetteLoss};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_from_set, uniform_laplacian_residual, Adjacency, TriMesh, Vec3};
use crate::nn::Batch;
use crate::render::{ColorImage, Mask};
use crate::skinning::BoneSets;

/// Blend weights of the five terms, the geodesic exponent `r` and the
/// rigid threshold `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub silh: f64,
    pub rend: f64,
    pub lap: f64,
    pub skin: f64,
    pub part: f64,
    pub r: f64,
    pub u: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            silh: 1.0,
            rend: 1.0,
            lap: 5.0,
            skin: 0.1,
            part: 1.0,
            r: 3.0,
            u: 0.95,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.silh, self.rend, self.lap, self.skin, self.part, self.r];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.u) {
            return Err(Error::Config(format!("rigid threshold {} outside [0, 1]", self.u)));
        }
        Ok(())
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Silh => self.silh,
            Term::Rend => self.rend,
            Term::Lap => self.lap,
            Term::Skin => self.skin,
            Term::Part => self.part,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Silh,
    Rend,
    Lap,
    Skin,
    Part,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Silh, Term::Rend, Term::Lap, Term::Skin, Term::Part];

    pub fn name(self) -> &'static str {
        match self {
            Term::Silh => "silh",
            Term::Rend => "rend",
            Term::Lap => "lap",
            Term::Skin => "skin",
            Term::Part => "part",
        }
    }
}

/// Which terms are active in a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageMask {
    active: [bool; 5],
}

impl StageMask {
    pub fn new(terms: &[Term]) -> Self {
        let mut active = [false; 5];
        for t in terms {
            active[*t as usize] = true;
        }
        Self { active }
    }

    /// Stage 1 fits the skinning field without the rendering loss, stages 2
    /// and 3 use the rendering loss alone, stage 4 uses every term.
    pub fn for_stage(stage: u8) -> Result<Self> {
        Ok(match stage {
            1 => Self::new(&[Term::Silh, Term::Lap, Term::Skin, Term::Part]),
            2 | 3 => Self::new(&[Term::Rend]),
            4 => Self::new(&Term::ALL),
            other => return Err(Error::InvalidArgument(format!("no training stage {other}"))),
        })
    }

    pub fn contains(&self, term: Term) -> bool {
        self.active[term as usize]
    }

    pub fn without(mut self, term: Term) -> Self {
        self.active[term as usize] = false;
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        Term::ALL.into_iter().filter(|t| self.contains(*t))
    }
}

/// Unweighted values of the five terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermValues {
    pub silh: f64,
    pub rend: f64,
    pub lap: f64,
    pub skin: f64,
    pub part: f64,
}

impl TermValues {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Silh => self.silh,
            Term::Rend => self.rend,
            Term::Lap => self.lap,
            Term::Skin => self.skin,
            Term::Part => self.part,
        }
    }

    pub fn set(&mut self, term: Term, value: f64) {
        match term {
            Term::Silh => self.silh = value,
            Term::Rend => self.rend = value,
            Term::Lap => self.lap = value,
            Term::Skin => self.skin = value,
            Term::Part => self.part = value,
        }
    }
}

/// Weighted sum of the active terms. Gradients of each term are scaled by
/// [`term_scale`] with the same arguments.
pub fn total_loss(values: &TermValues, weights: &LossWeights, mask: &StageMask) -> Result<f64> {
    if mask.terms().all(|t| weights.weight(t) == 0.0) {
        return Err(Error::Config("every active loss term has zero weight".into()));
    }
    Ok(mask.terms().map(|t| weights.weight(t) * values.get(t)).sum())
}

/// Multiplier applied to a term's gradient: its weight when active, zero
/// otherwise.
pub fn term_scale(term: Term, weights: &LossWeights, mask: &StageMask) -> f64 {
    if mask.contains(term) {
        weights.weight(term)
    } else {
        0.0
    }
}

/// Shaded color `a · s`.
pub fn compose_color(albedo: &Vec3, shade: f64) -> Vec3 {
    albedo * shade
}

/// L1 rendering loss over one or more cameras. Per camera the absolute
/// difference summed over channels is averaged over pixels covered both
/// by the rendering and by the mask; the per-camera means are summed.
/// Returns the value and `dL/dcolor` per camera and pixel.
pub fn rendering_loss(rendered: &[(&ColorImage, &Mask)], targets: &[(&ColorImage, &Mask)]) -> Result<(f64, Vec<Vec<Vec3>>)> {
    if rendered.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "camera count",
            expected: targets.len(),
            got: rendered.len(),
        });
    }
    let mut total = 0.0;
    let mut covered_any = false;
    let mut grads = Vec::with_capacity(rendered.len());
    for ((img, cov), (gt, mask)) in rendered.iter().zip(targets) {
        if img.data.len() != gt.data.len() || cov.data.len() != mask.data.len() || img.data.len() != cov.data.len() {
            return Err(Error::DimensionMismatch {
                what: "image size",
                expected: gt.data.len(),
                got: img.data.len(),
            });
        }
        let both: Vec<bool> = cov.data.iter().zip(&mask.data).map(|(a, b)| *a && *b).collect();
        let n = both.iter().filter(|&&b| b).count();
        let mut g = vec![Vec3::zeros(); img.data.len()];
        if n > 0 {
            covered_any = true;
            let inv = 1.0 / n as f64;
            for (k, _) in both.iter().enumerate().filter(|(_, &b)| b) {
                let d = img.data[k] - gt.data[k];
                total += d.abs().sum() * inv;
                g[k] = d.map(|x| if x > 0.0 { inv } else if x < 0.0 { -inv } else { 0.0 });
            }
        }
        grads.push(g);
    }
    if !covered_any {
        return Err(Error::NoCoverage);
    }
    Ok((total, grads))
}

/// `Σ_i |v_i - mean of its one-ring|²` and its gradient.
pub fn laplacian_loss(positions: &[Vec3], adj: &Adjacency) -> Result<(f64, Vec<Vec3>)> {
    if positions.len() != adj.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "vertex count",
            expected: adj.vertex_count(),
            got: positions.len(),
        });
    }
    let residual = uniform_laplacian_residual(positions, adj);
    let mut grad = vec![Vec3::zeros(); positions.len()];
    let mut value = 0.0;
    for (i, r) in residual.iter().enumerate() {
        value += r.norm_squared();
        let ring = adj.one_ring(i);
        if ring.is_empty() {
            continue;
        }
        grad[i] += r * 2.0;
        let share = r * (2.0 / ring.len() as f64);
        for &k in ring {
            grad[k] -= share;
        }
    }
    Ok((value, grad))
}

/// Per-vertex, per-joint penalties `(d_ij / d_max)^r`, where `d_ij` is the
/// graph geodesic distance from vertex `i` to the vertices initially
/// assigned to joint `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinRegCost {
    pub vertices: usize,
    pub joints: usize,
    pub cost: Vec<f64>,
}

impl SkinRegCost {
    /// `distances[j][i]` is the geodesic distance from vertex `i` to joint
    /// `j`'s set. Unreachable vertices get the maximal normalized cost 1.
    pub fn from_distances(distances: &[Vec<f64>], d_max: f64, r: f64) -> Result<Self> {
        if !(d_max > 0.0) {
            return Err(Error::InvalidArgument(format!("geodesic diameter must be positive, got {d_max}")));
        }
        let joints = distances.len();
        let vertices = distances.first().map_or(0, Vec::len);
        let mut cost = vec![0.0; vertices * joints];
        for (j, d) in distances.iter().enumerate() {
            for (i, &dij) in d.iter().enumerate() {
                let x = if dij.is_finite() { dij / d_max } else { 1.0 };
                cost[i * joints + j] = x.powf(r);
            }
        }
        Ok(Self { vertices, joints, cost })
    }

    /// Computes the per-joint geodesic tables from the bone sets of the
    /// initial weights. Joints that own no vertex get cost 1 everywhere.
    pub fn new(mesh: &TriMesh, adj: &Adjacency, sets: &BoneSets, d_max: f64, r: f64) -> Result<Self> {
        let mut distances = Vec::with_capacity(sets.assign.len());
        for (j, a) in sets.assign.iter().enumerate() {
            if a.is_empty() {
                log::warn!("joint {j} owns no vertex; its skinning penalty is constant");
                distances.push(vec![f64::INFINITY; mesh.vertex_count()]);
            } else {
                distances.push(geodesic_from_set(mesh, adj, a)?.dist);
            }
        }
        Self::from_distances(&distances, d_max, r)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cost[i * self.joints..(i + 1) * self.joints]
    }
}

/// `Σ_i Σ_j w_ij c_ij` over the rows of `weights` (row `k` is vertex
/// `vertex_ids[k]`). The gradient is the cost itself.
pub fn skinning_reg_loss(weights: &Batch, vertex_ids: &[usize], cost: &SkinRegCost) -> Result<(f64, Batch)> {
    if weights.cols() != cost.joints || weights.rows() != vertex_ids.len() {
        return Err(Error::DimensionMismatch {
            what: "skinning weights",
            expected: cost.joints,
            got: weights.cols(),
        });
    }
    let mut grad = Batch::zeros(weights.rows(), weights.cols());
    let mut value = 0.0;
    for (k, &i) in vertex_ids.iter().enumerate() {
        let c = cost.row(i);
        value += weights.row(k).iter().zip(c).map(|(w, c)| w * c).sum::<f64>();
        grad.row_mut(k).copy_from_slice(c);
    }
    Ok((value, grad))
}

/// `Σ_{i ∈ set} |w_i - w_init,i|²`; rows of `weights` are vertices
/// `vertex_ids`, `init` is indexed by vertex.
pub fn part_loss(weights: &Batch, vertex_ids: &[usize], init: &crate::skinning::SkinWeights, set: &[usize]) -> Result<(f64, Batch)> {
    if weights.cols() != init.joint_count() || weights.rows() != vertex_ids.len() {
        return Err(Error::DimensionMismatch {
            what: "skinning weights",
            expected: init.joint_count(),
            got: weights.cols(),
        });
    }
    let mut grad = Batch::zeros(weights.rows(), weights.cols());
    let mut value = 0.0;
    for (k, &i) in vertex_ids.iter().enumerate() {
        if set.binary_search(&i).is_err() {
            continue;
        }
        for ((g, w), w0) in grad.row_mut(k).iter_mut().zip(weights.row(k)).zip(init.row(i)) {
            let d = w - w0;
            value += d * d;
            *g = 2.0 * d;
        }
    }
    Ok((value, grad))
}

/// Vertices that are both rigid under the initial weights and labelled
/// skin. Without labels every vertex counts as skin.
pub fn rigid_skin_set(mesh: &TriMesh, sets: &BoneSets) -> Vec<usize> {
    use crate::geometry::PartLabel;
    sets.rigid
        .iter()
        .copied()
        .filter(|&i| mesh.labels().is_none_or(|l| l[i] == PartLabel::Skin))
        .collect()
}
