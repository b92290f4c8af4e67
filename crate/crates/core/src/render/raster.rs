use nalgebra::{Matrix2x3, Vector2};
use rayon::prelude::*;

use super::{Camera, ColorImage, Mask};
use crate::geometry::Vec3;

type V2 = Vector2<f64>;

/// Face index of uncovered pixels.
pub const NO_FACE: u32 = u32::MAX;

/// Per-pixel result of a z-buffered rasterization. Colors are interpolated
/// with screen-space barycentrics at pixel centers; uncovered pixels are
/// black.
#[derive(Debug, Clone)]
pub struct RasterOutput {
    pub color: ColorImage,
    pub coverage: Mask,
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

/// Gradients of a scalar with respect to per-vertex colors and positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrads {
    pub colors: Vec<Vec3>,
    pub positions: Vec<Vec3>,
}

fn signed_area(a: &V2, b: &V2, c: &V2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Partial derivatives of [`signed_area`] with respect to `a`, `b`, `c`.
fn signed_area_grads(a: &V2, b: &V2, c: &V2) -> [V2; 3] {
    [
        V2::new(b.y - c.y, c.x - b.x) * 0.5,
        V2::new(c.y - a.y, a.x - c.x) * 0.5,
        V2::new(a.y - b.y, b.x - a.x) * 0.5,
    ]
}

/// Screen position and depth of every vertex in front of the camera.
fn project_all(positions: &[Vec3], cam: &Camera) -> Vec<Option<(V2, f64)>> {
    positions
        .iter()
        .map(|x| cam.project(x).ok().map(|p| (V2::new(p.u, p.v), p.depth)))
        .collect()
}

/// Rasterizes triangles with per-vertex colors. Faces with a vertex behind
/// the camera are skipped; ties in depth go to the lower face index.
pub fn rasterize(positions: &[Vec3], faces: &[[usize; 3]], colors: &[Vec3], cam: &Camera) -> RasterOutput {
    assert_eq!(positions.len(), colors.len(), "one color per vertex");
    let (w, h) = (cam.width, cam.height);
    let proj = project_all(positions, cam);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut face = vec![NO_FACE; w * h];
    let mut bary = vec![[0.0; 3]; w * h];

    for (fi, f) in faces.iter().enumerate() {
        let (Some((p0, z0)), Some((p1, z1)), Some((p2, z2))) = (proj[f[0]], proj[f[1]], proj[f[2]]) else {
            continue;
        };
        let area = signed_area(&p0, &p1, &p2);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = p0.x.min(p1.x).min(p2.x).ceil().max(0.0);
        let xmax = p0.x.max(p1.x).max(p2.x).floor().min(w as f64 - 1.0);
        let ymin = p0.y.min(p1.y).min(p2.y).ceil().max(0.0);
        let ymax = p0.y.max(p1.y).max(p2.y).floor().min(h as f64 - 1.0);
        if xmin > xmax || ymin > ymax {
            continue;
        }
        for y in ymin as usize..=ymax as usize {
            for x in xmin as usize..=xmax as usize {
                let p = V2::new(x as f64, y as f64);
                let b = [
                    signed_area(&p, &p1, &p2) / area,
                    signed_area(&p0, &p, &p2) / area,
                    signed_area(&p0, &p1, &p) / area,
                ];
                if b.iter().any(|&bk| bk < 0.0) {
                    continue;
                }
                let z = 1.0 / (b[0] / z0 + b[1] / z1 + b[2] / z2);
                let k = y * w + x;
                if z < depth[k] {
                    depth[k] = z;
                    face[k] = fi as u32;
                    bary[k] = b;
                }
            }
        }
    }

    let mut color = ColorImage::new(w, h);
    let mut coverage = Mask::new(w, h);
    for k in 0..w * h {
        if face[k] != NO_FACE {
            let f = faces[face[k] as usize];
            let b = bary[k];
            color.data[k] = colors[f[0]] * b[0] + colors[f[1]] * b[1] + colors[f[2]] * b[2];
            coverage.data[k] = true;
        }
    }
    RasterOutput {
        color,
        coverage,
        face,
        bary,
        depth,
    }
}

impl RasterOutput {
    /// Back-propagates per-pixel color gradients. Face assignment is held
    /// fixed; positions receive gradient through the barycentric weights
    /// of the covering triangle.
    pub fn backward(&self, positions: &[Vec3], faces: &[[usize; 3]], colors: &[Vec3], cam: &Camera, dcolor: &[Vec3]) -> RasterGrads {
        assert_eq!(dcolor.len(), self.face.len(), "one gradient per pixel");
        let w = self.color.width;
        let proj = project_all(positions, cam);
        let mut dcol = vec![Vec3::zeros(); positions.len()];
        let mut dscreen = vec![V2::zeros(); positions.len()];
        for (k, &fi) in self.face.iter().enumerate() {
            if fi == NO_FACE || dcolor[k] == Vec3::zeros() {
                continue;
            }
            let f = faces[fi as usize];
            let b = self.bary[k];
            for c in 0..3 {
                dcol[f[c]] += dcolor[k] * b[c];
            }
            let p = V2::new((k % w) as f64, (k / w) as f64);
            let pv = [proj[f[0]].expect("covered face").0, proj[f[1]].expect("covered face").0, proj[f[2]].expect("covered face").0];
            let area = signed_area(&pv[0], &pv[1], &pv[2]);
            let g = [dcolor[k].dot(&colors[f[0]]), dcolor[k].dot(&colors[f[1]]), dcolor[k].dot(&colors[f[2]])];
            let gsum = g[0] * b[0] + g[1] * b[1] + g[2] * b[2];
            // b_k = A_k / A with A_k the area with vertex k replaced by p
            let ga = signed_area_grads(&pv[0], &pv[1], &pv[2]);
            for m in 0..3 {
                dscreen[f[m]] -= ga[m] * (gsum / area);
            }
            let g0 = signed_area_grads(&p, &pv[1], &pv[2]);
            dscreen[f[1]] += g0[1] * (g[0] / area);
            dscreen[f[2]] += g0[2] * (g[0] / area);
            let g1 = signed_area_grads(&pv[0], &p, &pv[2]);
            dscreen[f[0]] += g1[0] * (g[1] / area);
            dscreen[f[2]] += g1[2] * (g[1] / area);
            let g2 = signed_area_grads(&pv[0], &pv[1], &p);
            dscreen[f[0]] += g2[0] * (g[2] / area);
            dscreen[f[1]] += g2[1] * (g[2] / area);
        }
        let dpos = dscreen
            .par_iter()
            .zip(positions)
            .map(|(ds, x)| {
                if *ds == V2::zeros() {
                    return Vec3::zeros();
                }
                let j: Matrix2x3<f64> = cam.project_jacobian(x).expect("covered vertex is in front");
                j.transpose() * ds
            })
            .collect();
        RasterGrads {
            colors: dcol,
            positions: dpos,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn ortho_like() -> Camera {
        // camera at origin looking down +z; geometry at depth 10
        Camera::new(10.0, 10.0, 16.0, 16.0, Matrix3::identity(), Vec3::zeros(), 32, 32).unwrap()
    }

    fn pixel_to_world(u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - 16.0) * z / 10.0, (v - 16.0) * z / 10.0, z)
    }

    #[test]
    fn barycentric_mix_at_centroid() {
        let cam = ortho_like();
        let pts = vec![pixel_to_world(4.0, 4.0, 10.0), pixel_to_world(25.0, 4.0, 10.0), pixel_to_world(4.0, 25.0, 10.0)];
        let colors = vec![Vec3::x(), Vec3::y(), Vec3::z()];
        let out = rasterize(&pts, &[[0, 1, 2]], &colors, &cam);
        let c = out.color.get(11, 11);
        assert!((c - Vec3::new(1.0, 1.0, 1.0) / 3.0).norm() < 1e-12);
        assert!(out.coverage.get(4, 4) && !out.coverage.get(20, 20));
        for (k, &f) in out.face.iter().enumerate() {
            if f != NO_FACE {
                let b = out.bary[k];
                assert!(b.iter().all(|&x| x >= 0.0) && (b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let out = rasterize(&[], &[], &[], &ortho_like());
        assert_eq!(out.coverage.count(), 0);
        assert!(out.color.data.iter().all(|c| *c == Vec3::zeros()));
    }

    #[test]
    fn nearer_triangle_wins() {
        let cam = ortho_like();
        let tri = |z: f64| vec![pixel_to_world(2.0, 2.0, z), pixel_to_world(30.0, 2.0, z), pixel_to_world(2.0, 30.0, z)];
        let mut pts = tri(12.0);
        pts.extend(tri(8.0));
        let colors = vec![Vec3::x(), Vec3::x(), Vec3::x(), Vec3::y(), Vec3::y(), Vec3::y()];
        for faces in [vec![[0, 1, 2], [3, 4, 5]], vec![[3, 4, 5], [0, 1, 2]]] {
            let out = rasterize(&pts, &faces, &colors, &cam);
            for (k, c) in out.color.data.iter().enumerate() {
                if out.coverage.data[k] {
                    assert!((c - Vec3::y()).norm() < 1e-12);
                    assert!((out.depth[k] - 8.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn color_gradient_is_barycentric() {
        let cam = ortho_like();
        let pts = vec![pixel_to_world(3.0, 5.0, 9.0), pixel_to_world(27.0, 7.0, 11.0), pixel_to_world(10.0, 28.0, 10.0)];
        let colors = vec![Vec3::new(0.2, 0.3, 0.4), Vec3::new(0.9, 0.1, 0.5), Vec3::new(0.4, 0.6, 0.2)];
        let out = rasterize(&pts, &[[0, 1, 2]], &colors, &cam);
        let mut dcolor = vec![Vec3::zeros(); 32 * 32];
        let k = 15 * 32 + 12;
        dcolor[k] = Vec3::new(1.0, -2.0, 0.5);
        let g = out.backward(&pts, &[[0, 1, 2]], &colors, &cam, &dcolor);
        for v in 0..3 {
            assert!((g.colors[v] - dcolor[k] * out.bary[k][v]).norm() < 1e-15);
        }
    }

    #[test]
    fn position_gradient_matches_finite_differences() {
        let cam = ortho_like();
        let pts = vec![pixel_to_world(3.2, 5.1, 9.0), pixel_to_world(27.3, 7.7, 11.0), pixel_to_world(10.4, 28.6, 10.0)];
        let colors = vec![Vec3::new(0.2, 0.3, 0.4), Vec3::new(0.9, 0.1, 0.5), Vec3::new(0.4, 0.6, 0.2)];
        let faces = [[0, 1, 2]];
        let out = rasterize(&pts, &faces, &colors, &cam);
        let weights: Vec<Vec3> = (0..32 * 32).map(|k| Vec3::new((k % 7) as f64, 1.0, -((k % 3) as f64))).collect();
        let g = out.backward(&pts, &faces, &colors, &cam, &weights);
        // frozen face assignment: evaluate interpolation on the same pixels
        let loss = |p: &[Vec3]| {
            let proj: Vec<V2> = p.iter().map(|x| {
                let q = cam.project(x).unwrap();
                V2::new(q.u, q.v)
            }).collect();
            let area = signed_area(&proj[0], &proj[1], &proj[2]);
            let mut total = 0.0;
            for (k, &f) in out.face.iter().enumerate() {
                if f == NO_FACE {
                    continue;
                }
                let px = V2::new((k % 32) as f64, (k / 32) as f64);
                let b = [signed_area(&px, &proj[1], &proj[2]) / area, signed_area(&proj[0], &px, &proj[2]) / area, signed_area(&proj[0], &proj[1], &px) / area];
                let c = colors[0] * b[0] + colors[1] * b[1] + colors[2] * b[2];
                total += weights[k].dot(&c);
            }
            total
        };
        for v in 0..3 {
            for a in 0..3 {
                let h = 1e-6;
                let mut pp = pts.clone();
                let mut pm = pts.clone();
                pp[v][a] += h;
                pm[v][a] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let an = g.positions[v][a];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "v{v} a{a}: {fd} vs {an}");
            }
        }
    }
}
