//! Triangle meshes and the differential quantities the losses need: one-ring
//! adjacency, the uniform Laplacian, vertex normals, graph geodesics and
//! area-weighted surface sampling.

mod adjacency;
pub mod primitives;
mod geodesic;
mod obj;
mod sampling;

pub use adjacency::{one_ring, uniform_laplacian_residual, Adjacency, Edge};
pub use geodesic::{geodesic_diameter_estimate, geodesic_from_set, GeodesicTable};
pub use obj::{load_labels, load_mesh, parse_obj, write_labels, write_obj};
pub use sampling::{surface_sample, surface_sample_with_faces};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Per-vertex parsing label. The sidecar file stores `0` for skin and `1`
/// for cloth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartLabel {
    Skin,
    Cloth,
}

impl PartLabel {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(PartLabel::Skin),
            1 => Some(PartLabel::Cloth),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PartLabel::Skin => 0,
            PartLabel::Cloth => 1,
        }
    }
}

/// Canonical template mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    labels: Option<Vec<PartLabel>>,
    colors: Option<Vec<Vec3>>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range and degenerate faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {:?} but only {n} vertices exist",
                    f
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {:?}", f)));
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        Ok(Self {
            vertices,
            faces,
            labels: None,
            colors: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<PartLabel>) -> Result<Self> {
        if labels.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "vertex labels",
                expected: self.vertices.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "vertex colors",
                expected: self.vertices.len(),
                got: colors.len(),
            });
        }
        self.colors = Some(colors);
        Ok(self)
    }

    /// Same topology, labels and colors at new vertex positions.
    pub fn with_positions(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "vertex positions",
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            labels: self.labels.clone(),
            colors: self.colors.clone(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn labels(&self) -> Option<&[PartLabel]> {
        self.labels.as_deref()
    }

    pub fn colors(&self) -> Option<&[Vec3]> {
        self.colors.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Area-weighted vertex normals of the stored positions.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        vertex_normals(&self.vertices, &self.faces)
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Area-weighted average of incident face normals, normalized. Vertices
/// without a usable incident face get `+z`.
pub fn vertex_normals(positions: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); positions.len()];
    for f in faces {
        let [a, b, c] = *f;
        // Cross product length is twice the area, so the sum is area-weighted.
        let n = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 1e-300 && len.is_finite() {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect()
}
