use super::{TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// One-ring neighborhoods and the undirected edge list of a mesh.
#[derive(Debug, Clone)]
pub struct Adjacency {
    ring: Vec<Vec<usize>>,
    ring_lengths: Vec<Vec<f64>>,
    edges: Vec<Edge>,
}

impl Adjacency {
    /// Sorted neighbor indices of vertex `i`.
    pub fn one_ring(&self, i: usize) -> &[usize] {
        &self.ring[i]
    }

    /// Neighbors of `i` paired with canonical edge lengths.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ring[i].iter().copied().zip(self.ring_lengths[i].iter().copied())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.ring.len()
    }
}

pub fn one_ring(mesh: &TriMesh) -> Adjacency {
    let n = mesh.vertex_count();
    let mut ring: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            ring[a].push(b);
            ring[b].push(a);
        }
    }
    for r in &mut ring {
        r.sort_unstable();
        r.dedup();
    }
    let v = mesh.vertices();
    let ring_lengths: Vec<Vec<f64>> = ring
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|&j| (v[i] - v[j]).norm()).collect())
        .collect();
    let edges = ring
        .iter()
        .enumerate()
        .flat_map(|(a, r)| {
            r.iter()
                .filter(move |&&b| b > a)
                .map(move |&b| Edge { a, b, length: (v[a] - v[b]).norm() })
        })
        .collect();
    Adjacency { ring, ring_lengths, edges }
}

/// `v_i - mean(v_k for k in N_i)` per vertex. Isolated vertices get a zero
/// residual.
pub fn uniform_laplacian_residual(positions: &[Vec3], adj: &Adjacency) -> Vec<Vec3> {
    assert_eq!(positions.len(), adj.vertex_count(), "positions/adjacency size mismatch");
    let mut isolated = 0usize;
    let out = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ring = adj.one_ring(i);
            if ring.is_empty() {
                isolated += 1;
                return Vec3::zeros();
            }
            let mean = ring.iter().map(|&k| positions[k]).sum::<Vec3>() / ring.len() as f64;
            p - mean
        })
        .collect();
    if isolated > 0 {
        log::warn!("{isolated} isolated vertices get a zero Laplacian residual");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    fn tri() -> TriMesh {
        let h = 3f64.sqrt() / 2.0;
        TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, h, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_ring() {
        let adj = one_ring(&tri());
        assert_eq!(adj.one_ring(0), &[1, 2]);
        for e in adj.edges() {
            assert!((e.length - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_edge_ring() {
        // a=0, b=1, c=2, d=3 with triangles (a,b,c) and (b,d,c)
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let adj = one_ring(&m);
        assert_eq!(adj.one_ring(1), &[0, 2, 3]);
        assert_eq!(adj.edges().len(), 5);
    }

    #[test]
    fn residual_examples() {
        // vertex at (1,0,0) with two neighbors at the origin
        let adj = Adjacency {
            ring: vec![vec![1, 2], vec![0], vec![0]],
            ring_lengths: vec![vec![1.0, 1.0], vec![1.0], vec![1.0]],
            edges: vec![],
        };
        let pos = [Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), Vec3::zeros()];
        let r = uniform_laplacian_residual(&pos, &adj);
        assert_eq!(r[0], Vec3::new(1.0, 0.0, 0.0));

        // interior vertex of the chain x = 0, 1, 2
        let adj = Adjacency {
            ring: vec![vec![1], vec![0, 2], vec![1]],
            ring_lengths: vec![vec![1.0], vec![1.0, 1.0], vec![1.0]],
            edges: vec![],
        };
        let pos = [Vec3::zeros(), Vec3::x(), 2.0 * Vec3::x()];
        assert_eq!(uniform_laplacian_residual(&pos, &adj)[1], Vec3::zeros());
    }

    #[test]
    fn isolated_vertex_residual_is_zero() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(3.0, 3.0, 3.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let adj = one_ring(&m);
        let r = uniform_laplacian_residual(m.vertices(), &adj);
        assert_eq!(r[3], Vec3::zeros());
    }

    #[test]
    fn adjacency_is_symmetric_on_icosphere() {
        let m = crate::geometry::primitives::icosphere(2);
        let adj = one_ring(&m);
        for i in 0..m.vertex_count() {
            for &j in adj.one_ring(i) {
                assert!(adj.one_ring(j).contains(&i));
            }
        }
        assert!(adj.edges().iter().all(|e| e.length > 0.0));
    }

    proptest! {
        #[test]
        fn residual_is_rigid_equivariant(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
                                          tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0) {
            let m = crate::geometry::primitives::icosphere(1);
            let adj = one_ring(&m);
            let rot = Rotation3::new(Vector3::new(ax, ay, az));
            let t = Vector3::new(tx, ty, tz);
            let moved: Vec<Vec3> = m.vertices().iter().map(|v| rot * v + t).collect();
            let r0 = uniform_laplacian_residual(m.vertices(), &adj);
            let r1 = uniform_laplacian_residual(&moved, &adj);
            for (a, b) in r0.iter().zip(&r1) {
                prop_assert!((rot * a - b).norm() < 1e-9);
            }
        }
    }
}
