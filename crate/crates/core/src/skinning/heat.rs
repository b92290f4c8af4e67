//! Heat-equilibrium skin attachment: per joint, solve
//! `(-Δ + H) w_j = H p_j` on the mesh, where `H_ii = c / d_i²` with `d_i`
//! the distance from vertex `i` to its nearest bone and `p_j(i)` marks
//! vertices whose nearest bone is `j`.

use rayon::prelude::*;

use super::SkinWeights;
use crate::error::{Error, Result};
use crate::geometry::{Adjacency, TriMesh, Vec3};
use crate::kinematics::{forward_kinematics, Pose, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HeatConfig {
    /// Heat constant `c`.
    pub heat_constant: f64,
    /// Relative residual at which conjugate gradients stops.
    pub tolerance: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            heat_constant: 0.22,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneSegment {
    pub head: Vec3,
    pub tail: Vec3,
}

impl BoneSegment {
    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = self.tail - self.head;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - self.head).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.head + d * t)).norm()
    }
}

/// One segment per joint at the given pose. A joint's bone runs from its
/// origin to the mean of its children's origins; a leaf continues its
/// parent's direction for the parent's length; a lone root is a point.
pub fn bone_segments(skel: &Skeleton, pose: &Pose) -> Result<Vec<BoneSegment>> {
    let global = forward_kinematics(skel, pose)?;
    let origin = |j: usize| global[j].translation.vector;
    Ok((0..skel.joint_count())
        .map(|j| {
            let children: Vec<usize> = skel.children(j).collect();
            let head = origin(j);
            let tail = if !children.is_empty() {
                children.iter().map(|&c| origin(c)).sum::<Vec3>() / children.len() as f64
            } else if let Some(p) = skel.joints()[j].parent {
                head + (head - origin(p))
            } else {
                head
            };
            BoneSegment { head, tail }
        })
        .collect())
}

/// Symmetric sparse matrix in compressed-row form.
struct Csr {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }
}

/// Graph stiffness `K` (positive semidefinite, zero row sums) and lumped
/// vertex areas. Uses cotangent weights unless any is negative, in which case
/// the whole mesh falls back to unit edge weights.
fn stiffness(mesh: &TriMesh, adj: &Adjacency) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
    let n = mesh.vertex_count();
    let v = mesh.vertices();
    let mut mass = vec![0.0; n];
    let mut cot: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    for f in mesh.faces() {
        let area = mesh_face_area(v, f);
        for k in 0..3 {
            mass[f[k]] += area / 3.0;
            let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let (ea, eb) = (v[a] - v[c], v[b] - v[c]);
            let cross = ea.cross(&eb).norm();
            let w = if cross > 1e-300 { 0.5 * ea.dot(&eb) / cross } else { 0.0 };
            *cot.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
        }
    }
    let use_cot = cot.values().all(|&w| w >= 0.0);
    if !use_cot {
        log::warn!("negative cotangent weights; falling back to the uniform graph Laplacian");
    }
    let mut rows = vec![Vec::new(); n];
    for e in adj.edges() {
        let w = if use_cot { cot.get(&(e.a, e.b)).copied().unwrap_or(0.0) } else { 1.0 };
        rows[e.a].push((e.b, w));
        rows[e.b].push((e.a, w));
    }
    // Isolated vertices still need a positive mass for the system to be SPD.
    let mean_mass = mass.iter().sum::<f64>() / n.max(1) as f64;
    for m in &mut mass {
        if *m <= 0.0 {
            *m = mean_mass.max(1e-12);
        }
    }
    (rows, mass)
}

fn mesh_face_area(v: &[Vec3], f: &[usize; 3]) -> f64 {
    0.5 * (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]])).norm()
}

/// Jacobi-preconditioned conjugate gradients.
fn conjugate_gradient(a: &Csr, diag: &[f64], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Some(x);
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..(10 * n + 100) {
        a.mul(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= tol * b_norm {
            return Some(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    None
}

/// Initial skinning weights by heat diffusion from the bones of `skel` posed
/// at `canonical`. Bones are treated as visible from every vertex.
pub fn heat_diffusion_weights(
    mesh: &TriMesh,
    adj: &Adjacency,
    skel: &Skeleton,
    canonical: &Pose,
    cfg: &HeatConfig,
) -> Result<SkinWeights> {
    let n = mesh.vertex_count();
    let jc = skel.joint_count();
    if !(cfg.heat_constant > 0.0) {
        return Err(Error::SingularSystem {
            joint: 0,
            heat_constant: cfg.heat_constant,
        });
    }
    let bones = bone_segments(skel, canonical)?;
    let scale = mesh.bounding_box_diagonal().max(1e-12);

    // Nearest-bone attachment: heat coefficient and (tie-split) indicator.
    let mut heat = vec![0.0; n];
    let mut target = vec![0.0; n * jc];
    for (i, p) in mesh.vertices().iter().enumerate() {
        let d: Vec<f64> = bones.iter().map(|b| b.distance(p)).collect();
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let nearest: Vec<usize> = (0..jc).filter(|&j| d[j] <= dmin * (1.0 + 1e-9) + 1e-15).collect();
        let dclamp = dmin.max(1e-6 * scale);
        heat[i] = cfg.heat_constant / (dclamp * dclamp);
        for &j in &nearest {
            target[i * jc + j] = 1.0 / nearest.len() as f64;
        }
    }

    let (rows, mass) = stiffness(mesh, adj);
    let mut row_start = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut diag = vec![0.0; n];
    for i in 0..n {
        row_start.push(cols.len());
        let mut entries: Vec<(usize, f64)> = rows[i].iter().map(|&(j, w)| (j, -w)).collect();
        let d = rows[i].iter().map(|&(_, w)| w).sum::<f64>() + mass[i] * heat[i];
        entries.push((i, d));
        entries.sort_by_key(|e| e.0);
        diag[i] = d;
        for (j, v) in entries {
            cols.push(j);
            vals.push(v);
        }
    }
    row_start.push(cols.len());
    let system = Csr { row_start, cols, vals };

    let columns: Vec<Result<Vec<f64>>> = (0..jc)
        .into_par_iter()
        .map(|j| {
            let rhs: Vec<f64> = (0..n).map(|i| mass[i] * heat[i] * target[i * jc + j]).collect();
            conjugate_gradient(&system, &diag, &rhs, cfg.tolerance)
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .ok_or(Error::SingularSystem {
                    joint: j,
                    heat_constant: cfg.heat_constant,
                })
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;

    let mut data = vec![0.0; n * jc];
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..jc {
            let w = columns[j][i].max(0.0);
            data[i * jc + j] = w;
            sum += w;
        }
        if sum > 0.0 {
            for j in 0..jc {
                data[i * jc + j] /= sum;
            }
        } else {
            data[i * jc..(i + 1) * jc].copy_from_slice(&target[i * jc..(i + 1) * jc]);
        }
    }
    SkinWeights::new(n, jc, data)
}
