//! Surface-to-surface distances: one-sided mean and maximum point-to-mesh
//! distances from surface samples, and their sum (Chamfer).

mod grid;

pub use grid::{point_triangle_distance, TriangleGrid};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{surface_sample, write_obj, TriMesh, Vec3};

/// Distances between a predicted and a reference mesh, in the meshes'
/// length unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub chamfer: f64,
    /// Mean distance from predicted-surface samples to the reference.
    pub m2s: f64,
    /// Mean distance from reference-surface samples to the prediction.
    pub s2m: f64,
    pub m2s_max: f64,
    pub s2m_max: f64,
    /// Distance of each predicted vertex to the reference surface.
    pub per_vertex: Vec<f64>,
}

fn check(mesh: &TriMesh, which: &str) -> Result<()> {
    if mesh.face_count() == 0 || !(mesh.total_area() > 0.0) {
        return Err(Error::InvalidMesh(format!("{which} mesh has no area")));
    }
    Ok(())
}

fn distances(points: &[Vec3], grid: &TriangleGrid) -> Vec<f64> {
    points.par_iter().map(|p| grid.distance(p)).collect()
}

fn mean_max(d: &[f64]) -> (f64, f64) {
    let sum: f64 = d.iter().sum();
    (sum / d.len() as f64, d.iter().copied().fold(0.0, f64::max))
}

pub fn evaluate(pred: &TriMesh, gt: &TriMesh, samples: usize, seed: u64) -> Result<EvalReport> {
    check(pred, "predicted")?;
    check(gt, "reference")?;
    let gt_grid = TriangleGrid::new(gt);
    let pred_grid = TriangleGrid::new(pred);
    let from_pred = surface_sample(pred, samples, seed)?;
    let from_gt = surface_sample(gt, samples, seed.wrapping_add(1))?;
    let (m2s, m2s_max) = mean_max(&distances(&from_pred, &gt_grid));
    let (s2m, s2m_max) = mean_max(&distances(&from_gt, &pred_grid));
    Ok(EvalReport {
        chamfer: m2s + s2m,
        m2s,
        s2m,
        m2s_max,
        s2m_max,
        per_vertex: distances(pred.vertices(), &gt_grid),
    })
}

/// Mean of each scalar field over several reports (per-vertex errors are
/// dropped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub chamfer: f64,
    pub m2s: f64,
    pub s2m: f64,
    pub m2s_max: f64,
    pub s2m_max: f64,
}

pub fn summarize(reports: &[EvalReport]) -> EvalSummary {
    let n = reports.len().max(1) as f64;
    let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    EvalSummary {
        frames: reports.len(),
        chamfer: avg(|r| r.chamfer),
        m2s: avg(|r| r.m2s),
        s2m: avg(|r| r.s2m),
        m2s_max: avg(|r| r.m2s_max),
        s2m_max: avg(|r| r.s2m_max),
    }
}

/// Blue-to-red color for an error in `[0, max]`.
pub fn error_color(err: f64, max: f64) -> Vec3 {
    let t = if max > 0.0 { (err / max).clamp(0.0, 1.0) } else { 0.0 };
    Vec3::new(t, 1.0 - (2.0 * t - 1.0).abs(), 1.0 - t)
}

/// Writes `mesh` with per-vertex error colors (scaled to the largest
/// error) for heat-map viewing.
pub fn write_error_obj(mesh: &TriMesh, per_vertex: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let max = per_vertex.iter().copied().fold(0.0, f64::max);
    let colors = per_vertex.iter().map(|&e| error_color(e, max)).collect();
    let colored = TriMesh::new(mesh.vertices().to_vec(), mesh.faces().to_vec())?.with_colors(colors)?;
    write_obj(&colored, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{grid, icosphere};
    use crate::kinematics::Rigid;
    use nalgebra::{Point3, Translation3, UnitQuaternion};

    fn square(z: f64) -> TriMesh {
        TriMesh::new(
            vec![Vec3::new(0.0, 0.0, z), Vec3::new(1.0, 0.0, z), Vec3::new(1.0, 1.0, z), Vec3::new(0.0, 1.0, z)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn identical_meshes_score_zero() {
        let s = icosphere(2);
        let r = evaluate(&s, &s, 2000, 1).unwrap();
        assert!(r.chamfer <= 1e-6 && r.m2s_max <= 1e-6 && r.per_vertex.iter().all(|&d| d <= 1e-6));
    }

    #[test]
    fn parallel_squares() {
        let r = evaluate(&square(0.0), &square(0.25), 3000, 2).unwrap();
        assert!((r.m2s - 0.25).abs() < 1e-12 && (r.s2m - 0.25).abs() < 1e-12);
        assert!((r.chamfer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn patch_is_asymmetric() {
        let big = grid(5, 5, 0.5);
        let patch = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let r = evaluate(&patch, &big, 4000, 3).unwrap();
        assert!(r.m2s < 1e-12);
        assert!(r.s2m > 0.3);
        // brute-force oracle for the reverse direction
        let pts = surface_sample(&big, 4000, 4).unwrap();
        let brute: f64 = pts
            .iter()
            .map(|p| {
                patch
                    .faces()
                    .iter()
                    .map(|f| point_triangle_distance(p, &patch.vertices()[f[0]], &patch.vertices()[f[1]], &patch.vertices()[f[2]]))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 4000.0;
        assert!((r.s2m - brute).abs() < 0.03, "{} vs {brute}", r.s2m);
    }

    #[test]
    fn rigid_motion_invariance() {
        let a = icosphere(2);
        let b = a.with_positions(a.vertices().iter().map(|v| v * 1.1 + Vec3::new(0.05, 0.0, 0.0)).collect()).unwrap();
        let m = Rigid::from_parts(Translation3::new(3.0, -1.0, 2.0), UnitQuaternion::from_euler_angles(0.3, 1.2, -0.4));
        let mv = |t: &TriMesh| t.with_positions(t.vertices().iter().map(|v| (m * Point3::from(*v)).coords).collect()).unwrap();
        let r1 = evaluate(&a, &b, 3000, 5).unwrap();
        let r2 = evaluate(&mv(&a), &mv(&b), 3000, 5).unwrap();
        assert!((r1.chamfer - r2.chamfer).abs() <= 1e-6);
        assert!((r1.s2m_max - r2.s2m_max).abs() <= 1e-6);
    }

    #[test]
    fn sample_count_convergence() {
        let a = icosphere(2);
        let b = a.with_positions(a.vertices().iter().map(|v| Vec3::new(v.x * 1.2, v.y, v.z * 0.9)).collect()).unwrap();
        let r1 = evaluate(&a, &b, 20_000, 6).unwrap();
        let r2 = evaluate(&a, &b, 40_000, 6).unwrap();
        assert!((r1.chamfer - r2.chamfer).abs() < 0.02 * r2.chamfer);
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let flat = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![]).unwrap();
        assert!(evaluate(&flat, &square(0.0), 10, 0).is_err());
    }
}
