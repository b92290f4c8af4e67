use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// Area-weighted uniform samples on the surface, tagged with the face they
/// were drawn from. Deterministic for a fixed seed.
pub fn surface_sample_with_faces(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<(usize, Vec3)>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidMesh("surface has zero area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = mesh.vertices();
    Ok((0..count)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let face = cumulative
                .partition_point(|&c| c <= target)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.faces()[face];
            // Square-root warp gives uniform density over the triangle.
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let p = v[a] * (1.0 - r1) + v[b] * (r1 * (1.0 - r2)) + v[c] * (r1 * r2);
            (face, p)
        })
        .collect())
}

pub fn surface_sample(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<Vec3>> {
    Ok(surface_sample_with_faces(mesh, count, seed)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn square() -> TriMesh {
        TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn mean_approaches_centroid() {
        let pts = surface_sample(&square(), 10_000, 1).unwrap();
        let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
        assert!((mean - Vec3::new(0.5, 0.5, 0.0)).norm() < 0.02);
    }

    #[test]
    fn single_sample_lies_on_its_face() {
        let m = square();
        let (f, p) = surface_sample_with_faces(&m, 1, 9).unwrap()[0];
        let [a, b, c] = m.faces()[f];
        let (a, b, c) = (m.vertices()[a], m.vertices()[b], m.vertices()[c]);
        // barycentric coordinates of p in the (planar) triangle
        let v0 = b - a;
        let v1 = c - a;
        let v2 = p - a;
        let d00 = v0.dot(&v0);
        let d01 = v0.dot(&v1);
        let d11 = v1.dot(&v1);
        let d20 = v2.dot(&v0);
        let d21 = v2.dot(&v1);
        let den = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / den;
        let w = (d00 * d21 - d01 * d20) / den;
        assert!(v >= -1e-12 && w >= -1e-12 && v + w <= 1.0 + 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let m = primitives::icosphere(1);
        assert_eq!(surface_sample(&m, 100, 5).unwrap(), surface_sample(&m, 100, 5).unwrap());
        assert_ne!(surface_sample(&m, 100, 5).unwrap(), surface_sample(&m, 100, 6).unwrap());
    }

    #[test]
    fn zero_area_and_zero_count_are_errors() {
        let flat = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), 2.0 * Vec3::x()], vec![[0, 1, 2]]).unwrap();
        assert!(surface_sample(&flat, 10, 0).is_err());
        assert!(surface_sample(&square(), 0, 0).is_err());
    }

    #[test]
    fn face_counts_follow_area_within_three_sigma() {
        // unequal areas: stretch a grid
        let base = primitives::grid(4, 3, 1.0);
        let stretched: Vec<Vec3> = base
            .vertices()
            .iter()
            .map(|v| Vec3::new(v.x * v.x, v.y, 0.0))
            .collect();
        let m = base.with_positions(stretched).unwrap();
        let n = 100_000usize;
        let mut counts = vec![0usize; m.face_count()];
        for (f, _) in surface_sample_with_faces(&m, n, 11).unwrap() {
            counts[f] += 1;
        }
        let total = m.total_area();
        for (f, &c) in counts.iter().enumerate() {
            let p = m.face_area(f) / total;
            let mean = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - mean).abs() <= 3.0 * sigma + 1e-9, "face {f}: {c} vs {mean}±{sigma}");
        }
    }
}
