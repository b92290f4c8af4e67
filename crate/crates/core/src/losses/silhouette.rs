use crate::error::Result;
use crate::geometry::Vec3;
use crate::render::{contour_vertices, Camera, DistanceField};

/// Value and per-vertex position gradient of the silhouette term for one
/// camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteLoss {
    /// Mean squared field distance of the projected contour vertices.
    pub contour_to_mask: f64,
    /// Mean squared pixel distance from each mask boundary pixel to its
    /// nearest projected contour vertex.
    pub mask_to_contour: f64,
    pub grad: Vec<Vec3>,
}

impl SilhouetteLoss {
    pub fn value(&self) -> f64 {
        self.contour_to_mask + self.mask_to_contour
    }
}

/// Bidirectional silhouette alignment. Both directions are averaged over
/// their point counts. Nearest-vertex assignments of the second term are
/// treated as constants for the gradient.
pub fn silhouette_loss(positions: &[Vec3], faces: &[[usize; 3]], cam: &Camera, field: &DistanceField) -> Result<SilhouetteLoss> {
    let contour = contour_vertices(positions, faces, cam);
    silhouette_loss_for(positions, &contour, cam, field)
}

/// [`silhouette_loss`] with a precomputed contour set.
pub fn silhouette_loss_for(positions: &[Vec3], contour: &[usize], cam: &Camera, field: &DistanceField) -> Result<SilhouetteLoss> {
    let mut grad = vec![Vec3::zeros(); positions.len()];
    if contour.is_empty() {
        log::warn!("empty contour set; silhouette loss contributes zero");
        return Ok(SilhouetteLoss {
            contour_to_mask: 0.0,
            mask_to_contour: 0.0,
            grad,
        });
    }
    let mut proj = Vec::with_capacity(contour.len());
    let mut jac = Vec::with_capacity(contour.len());
    for &i in contour {
        let p = cam.project(&positions[i])?;
        proj.push((p.u, p.v));
        jac.push(cam.project_jacobian(&positions[i])?);
    }

    let inv_c = 1.0 / contour.len() as f64;
    let mut inner = 0.0;
    for (k, &i) in contour.iter().enumerate() {
        let s = field.sample(proj[k].0, proj[k].1);
        inner += s.value * s.value * inv_c;
        let g = nalgebra::Vector2::new(s.du, s.dv) * (2.0 * s.value * inv_c);
        grad[i] += jac[k].transpose() * g;
    }

    let inv_b = 1.0 / field.boundary.len().max(1) as f64;
    let mut outer = 0.0;
    for &(bx, by) in &field.boundary {
        let (px, py) = (bx as f64, by as f64);
        let mut best = (f64::INFINITY, 0);
        for (k, &(u, v)) in proj.iter().enumerate() {
            let d = (u - px).powi(2) + (v - py).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        let k = best.1;
        outer += best.0 * inv_b;
        let g = nalgebra::Vector2::new(proj[k].0 - px, proj[k].1 - py) * (2.0 * inv_b);
        grad[contour[k]] += jac[k].transpose() * g;
    }

    Ok(SilhouetteLoss {
        contour_to_mask: inner,
        mask_to_contour: outer,
        grad,
    })
}
