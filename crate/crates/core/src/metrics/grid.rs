use crate::geometry::{TriMesh, Vec3};

/// Exact distance from `p` to the triangle `abc` (closest-point by
/// Voronoi region).
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point(p, a, b, c)).norm()
}

fn closest_point(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Uniform grid of triangle bounding boxes for nearest-triangle queries.
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    tris: Vec<[Vec3; 3]>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl TriangleGrid {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = mesh
            .faces()
            .iter()
            .map(|f| [mesh.vertices()[f[0]], mesh.vertices()[f[1]], mesh.vertices()[f[2]]])
            .collect();
        let (lo, hi) = mesh.bounding_box();
        let extent = hi - lo;
        let diag = extent.norm().max(1e-9);
        // roughly a few triangles per occupied cell
        let cell = (extent.x.max(diag * 1e-3) * extent.y.max(diag * 1e-3) * extent.z.max(diag * 1e-3) / tris.len().max(1) as f64)
            .cbrt()
            .max(diag / 256.0);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).min(256));
        let mut grid = Self {
            tris,
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (t, tri) in grid.tris.iter().enumerate() {
            let tlo = tri[0].inf(&tri[1]).inf(&tri[2]);
            let thi = tri[0].sup(&tri[1]).sup(&tri[2]);
            let a = grid.cell_of(&tlo);
            let b = grid.cell_of(&thi);
            for x in a[0]..=b[0] {
                for y in a[1]..=b[1] {
                    for z in a[2]..=b[2] {
                        let k = grid.index([x, y, z]);
                        grid.cells[k].push(t as u32);
                    }
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Distance from `p` to the nearest triangle. Rings of cells around
    /// `p`'s (clamped) cell are searched until no unvisited cell can hold a
    /// closer triangle.
    pub fn distance(&self, p: &Vec3) -> f64 {
        if self.tris.is_empty() {
            return f64::INFINITY;
        }
        let c = self.cell_of(p);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1);
        let mut best = f64::INFINITY;
        let mut seen = vec![false; self.tris.len()];
        for ring in 0..=max_ring {
            let lo = c.map(|v| v as isize - ring as isize);
            let hi = c.map(|v| v as isize + ring as isize);
            for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                        let on_shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] || z == lo[2] || z == hi[2];
                        if !on_shell {
                            continue;
                        }
                        for &t in &self.cells[self.index([x as usize, y as usize, z as usize])] {
                            if std::mem::replace(&mut seen[t as usize], true) {
                                continue;
                            }
                            let tri = &self.tris[t as usize];
                            best = best.min(point_triangle_distance(p, &tri[0], &tri[1], &tri[2]));
                        }
                    }
                }
            }
            // every cell beyond this ring is at least `ring` cells away
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::icosphere;
    use rand::{Rng, SeedableRng};

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(point_triangle_distance(&Vec3::new(0.2, 0.2, 0.5), &a, &b, &c), 0.5);
        assert!((point_triangle_distance(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&Vec3::new(0.5, -2.0, 0.0), &a, &b, &c) - 2.0).abs() < 1e-15);
        assert!((point_triangle_distance(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_matches_brute_force() {
        let s = icosphere(2);
        let grid = TriangleGrid::new(&s);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let p = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let brute = s
                .faces()
                .iter()
                .map(|f| point_triangle_distance(&p, &s.vertices()[f[0]], &s.vertices()[f[1]], &s.vertices()[f[2]]))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(grid.distance(&p), brute);
        }
    }
}
