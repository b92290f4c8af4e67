use std::collections::HashMap;

use super::Camera;
use crate::geometry::Vec3;

/// Occluding-contour vertices seen from `cam`: vertices incident to both a
/// front-facing and a back-facing triangle, plus vertices on open mesh
/// boundaries. Triangles are front-facing when their counter-clockwise
/// normal points towards the camera center. Returned sorted.
pub fn contour_vertices(positions: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> Vec<usize> {
    let eye = cam.center();
    let mut front = vec![false; positions.len()];
    let mut back = vec![false; positions.len()];
    let mut edge_use: HashMap<(usize, usize), u32> = HashMap::new();
    for f in faces {
        let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
        let n = (b - a).cross(&(c - a));
        let facing = n.dot(&(eye - a)) > 0.0;
        for &v in f {
            if facing {
                front[v] = true;
            } else {
                back[v] = true;
            }
        }
        for k in 0..3 {
            let (u, v) = (f[k], f[(k + 1) % 3]);
            *edge_use.entry((u.min(v), u.max(v))).or_default() += 1;
        }
    }
    let mut on = vec![false; positions.len()];
    for (i, flag) in on.iter_mut().enumerate() {
        *flag = front[i] && back[i];
    }
    for (&(u, v), &count) in &edge_use {
        if count == 1 {
            on[u] = true;
            on[v] = true;
        }
    }
    on.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::icosphere;

    #[test]
    fn single_triangle_is_all_boundary() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y(), 50.0, 32, 32).unwrap();
        let pts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert_eq!(contour_vertices(&pts, &[[0, 1, 2]], &cam), vec![0, 1, 2]);
    }

    #[test]
    fn sphere_contour_hugs_the_equator() {
        let sphere = icosphere(3);
        let eye = Vec3::new(0.0, 0.0, 20.0);
        let cam = Camera::look_at(eye, Vec3::zeros(), Vec3::y(), 50.0, 32, 32).unwrap();
        let c = contour_vertices(sphere.vertices(), sphere.faces(), &cam);
        assert!(!c.is_empty());
        // ring spacing at subdivision 3 is about 0.08 rad
        for &i in &c {
            let v = sphere.vertices()[i];
            let to_eye = (eye - v).normalize();
            assert!(v.normalize().dot(&to_eye).abs() < 0.2, "vertex {i} far from the silhouette");
        }
    }

    #[test]
    fn convex_mesh_has_contour_from_any_view() {
        let sphere = icosphere(1);
        for eye in [Vec3::new(3.0, 1.0, 0.5), Vec3::new(-2.0, -4.0, 1.0), Vec3::new(0.1, 0.0, -6.0)] {
            let cam = Camera::look_at(eye, Vec3::zeros(), Vec3::new(0.3, 1.0, 0.1).normalize(), 50.0, 16, 16).unwrap();
            assert!(!contour_vertices(sphere.vertices(), sphere.faces(), &cam).is_empty());
        }
    }
}
