use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Adjacency, TriMesh};
use crate::error::{Error, Result};

/// Multi-source graph-geodesic distances over mesh edges.
#[derive(Debug, Clone)]
pub struct GeodesicTable {
    pub dist: Vec<f64>,
    /// Number of vertices not reachable from the source set (distance `+inf`).
    pub unreachable: usize,
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex index for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &Adjacency, sources: &[usize]) -> Vec<f64> {
    let n = adj.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Entry { dist: 0.0, vertex: s });
    }
    while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for (v, len) in adj.neighbors(u) {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry { dist: nd, vertex: v });
            }
        }
    }
    dist
}

pub fn geodesic_from_set(mesh: &TriMesh, adj: &Adjacency, sources: &[usize]) -> Result<GeodesicTable> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("geodesic source set is empty".into()));
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= mesh.vertex_count()) {
        return Err(Error::InvalidArgument(format!("source vertex {s} out of range")));
    }
    let dist = dijkstra(adj, sources);
    let unreachable = dist.iter().filter(|d| d.is_infinite()).count();
    if unreachable > 0 {
        log::warn!("{unreachable} vertices are unreachable from the geodesic source set");
    }
    Ok(GeodesicTable { dist, unreachable })
}

/// Double-sweep estimate of the graph diameter: farthest vertex from a start
/// vertex, then the eccentricity of that vertex. Several starts are tried
/// and the largest result is kept. Never exceeds the true diameter.
pub fn geodesic_diameter_estimate(mesh: &TriMesh, adj: &Adjacency) -> Result<f64> {
    if mesh.vertex_count() == 0 {
        return Err(Error::InvalidMesh("empty mesh".into()));
    }
    let first = dijkstra(adj, &[0]);
    if first.iter().any(|d| d.is_infinite()) {
        return Err(Error::Disconnected("geodesic diameter needs a connected mesh".into()));
    }
    let farthest = |d: &[f64]| {
        d.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, d)| (i, *d))
            .unwrap_or((0, 0.0))
    };
    // Sweep from vertex 0 and from the six axis-extreme vertices; each
    // start contributes the eccentricity of its farthest vertex.
    let mut starts = vec![0];
    for axis in 0..3 {
        let key = |i: &usize| mesh.vertices()[*i][axis];
        let idx: Vec<usize> = (0..mesh.vertex_count()).collect();
        starts.push(*idx.iter().min_by(|a, b| key(a).total_cmp(&key(b))).unwrap_or(&0));
        starts.push(*idx.iter().max_by(|a, b| key(a).total_cmp(&key(b)).then(b.cmp(a))).unwrap_or(&0));
    }
    starts.sort_unstable();
    starts.dedup();
    let mut best = 0.0f64;
    for s in starts {
        let d = if s == 0 { first.clone() } else { dijkstra(adj, &[s]) };
        let (far, _) = farthest(&d);
        best = best.max(farthest(&dijkstra(adj, &[far])).1);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{one_ring, primitives, Vec3};
    use rand::{Rng, SeedableRng};

    /// Bellman-Ford over the edge list; independent of the heap-based path.
    fn bellman_ford(n: usize, adj: &Adjacency, sources: &[usize]) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; n];
        for &s in sources {
            d[s] = 0.0;
        }
        for _ in 0..n {
            let mut changed = false;
            for e in adj.edges() {
                if d[e.a] + e.length < d[e.b] {
                    d[e.b] = d[e.a] + e.length;
                    changed = true;
                }
                if d[e.b] + e.length < d[e.a] {
                    d[e.a] = d[e.b] + e.length;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        d
    }

    fn chain3() -> TriMesh {
        // A strip whose bottom row is the chain 0-1-2 with unit spacing; the
        // top row sits far away so shortest paths along the bottom stay on it.
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(0.5, 10.0, 0.0),
                Vec3::new(2.5, 10.0, 0.0),
            ],
            vec![[0, 1, 4], [1, 2, 4], [2, 5, 4], [2, 3, 5]],
        )
        .unwrap()
    }

    #[test]
    fn chain_distances() {
        let m = chain3();
        let adj = one_ring(&m);
        let g = geodesic_from_set(&m, &adj, &[0]).unwrap();
        assert_eq!(&g.dist[..4], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.unreachable, 0);
    }

    #[test]
    fn single_triangle_diameter() {
        let h = 3f64.sqrt() / 2.0;
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, h, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let adj = one_ring(&m);
        assert!((geodesic_diameter_estimate(&m, &adj).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sources_rejected() {
        let m = chain3();
        assert!(geodesic_from_set(&m, &one_ring(&m), &[]).is_err());
    }

    #[test]
    fn disconnected_reports_infinity() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(5.0, 0.0, 0.0), Vec3::new(6.0, 0.0, 0.0), Vec3::new(5.0, 1.0, 0.0)],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let adj = one_ring(&m);
        let g = geodesic_from_set(&m, &adj, &[0]).unwrap();
        assert_eq!(g.unreachable, 3);
        assert!(g.dist[4].is_infinite());
        assert!(matches!(geodesic_diameter_estimate(&m, &adj), Err(Error::Disconnected(_))));
    }

    #[test]
    fn grid_matches_bellman_ford() {
        let m = primitives::grid(4, 4, 1.0);
        let adj = one_ring(&m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = [rng.random_range(0..16), rng.random_range(0..16)];
            let g = geodesic_from_set(&m, &adj, &s).unwrap();
            let oracle = bellman_ford(16, &adj, &s);
            assert_eq!(g.dist, oracle);
        }
    }

    #[test]
    fn diameter_on_8x8_grid_matches_all_pairs() {
        let m = primitives::grid(8, 8, 1.0);
        let adj = one_ring(&m);
        let exact = (0..m.vertex_count())
            .map(|s| bellman_ford(m.vertex_count(), &adj, &[s]).into_iter().fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let est = geodesic_diameter_estimate(&m, &adj).unwrap();
        assert!((est - exact).abs() < 1e-9, "{est} vs {exact}");
    }

    #[test]
    fn triangle_inequality_on_sphere() {
        let m = primitives::icosphere(2);
        let adj = one_ring(&m);
        let g = geodesic_from_set(&m, &adj, &[0, 17]).unwrap();
        for e in adj.edges() {
            assert!(g.dist[e.b] <= g.dist[e.a] + e.length + 1e-12);
            assert!(g.dist[e.a] <= g.dist[e.b] + e.length + 1e-12);
        }
    }
}
