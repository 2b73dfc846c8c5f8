//! Matching simplicial meshes of a polytopal domain in two or three
//! dimensions.
//!
//! A mesh is a set of non-overlapping triangles (d = 2) or tetrahedra
//! (d = 3) together with the set of their faces (edges in 2D). Faces are
//! identified by their sorted vertex tuple and enumerated in lexicographic
//! order of those tuples, so that two builds of the same mesh agree face by
//! face. Every face stores a unit normal `n_F`; for an interior face this is
//! the outward normal of the lower-indexed incident cell, and the incident
//! cells see the face with orientation signs `+1` / `-1` that are exact by
//! construction (both cells derive their outward normal from one shared
//! vector, so `n_{K+,F} = -n_{K-,F}` holds bitwise).
//!
//! Cell geometry (volume, barycenter, diameter, outward normals, the
//! distances `d_{K,F}` from the barycenter to each face plane, and the second
//! moment matrix used by the flux spaces) is computed once at construction.
//! Two identities tie this data together and are enforced by the test suite
//! on every mesh the suite generates:
//!
//! ```text
//!     sum_F |F| n_{K,F} = 0            (closed surface),
//!     sum_F |F| d_{K,F} = d |K|        (volume via the face pyramid split).
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Relative tolerance below which a cell volume counts as degenerate.
const DEGENERATE_REL_TOL: f64 = 1e-14;

/// Ways building or refining a mesh can fail.
#[derive(Debug, Error)]
pub enum MeshError {
    /// Only d = 2 and d = 3 are supported.
    #[error("unsupported dimension {0}, expected 2 or 3")]
    UnsupportedDimension(usize),
    /// The mesh has no cells or no vertices.
    #[error("mesh must contain at least one vertex and one cell")]
    Empty,
    /// A cell does not have exactly d + 1 vertices.
    #[error("cell {cell} has {len} vertices, expected {expected}")]
    WrongCellSize {
        cell: usize,
        len: usize,
        expected: usize,
    },
    /// A cell references a vertex that does not exist.
    #[error("cell {cell} references vertex {vertex}, but only {n_vertices} vertices exist")]
    InvalidIndex {
        cell: usize,
        vertex: usize,
        n_vertices: usize,
    },
    /// Two cells share the same vertex set.
    #[error("cells {first} and {second} have the same vertex set")]
    DuplicateCell { first: usize, second: usize },
    /// A cell has (numerically) zero volume.
    #[error("cell {cell} is degenerate: volume {volume:.3e} below tolerance for its diameter")]
    DegenerateCell { cell: usize, volume: f64 },
    /// A face is shared by more than two cells.
    #[error("face {vertices:?} is shared by {count} cells, meshes must be manifold")]
    NonManifold { vertices: Vec<usize>, count: usize },
    /// The requested operation is not implemented for this dimension.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// The JSON input did not match the mesh schema.
    #[error("mesh schema error: {0}")]
    Schema(String),
}

/// One face as seen from one incident cell.
#[derive(Debug, Clone)]
pub struct FaceOfCell {
    /// Global face index.
    pub face: usize,
    /// Outward unit normal `n_{K,F}` of this cell.
    pub normal: Vector3<f64>,
    /// Sign relating the cell normal to the face normal:
    /// `n_{K,F} = orientation * n_F`, exactly `+1.0` or `-1.0`.
    pub orientation: f64,
    /// Distance `d_{K,F} = n_{K,F} . (barycenter(F) - barycenter(K))` from
    /// the cell barycenter to the face plane; positive for valid cells.
    pub distance: f64,
    /// Face measure `|F|` (length in 2D, area in 3D), copied for convenience.
    pub measure: f64,
}

/// Geometry of a single simplex.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    /// Vertex indices, reordered if needed so the simplex is positively
    /// oriented.
    pub vertices: Vec<usize>,
    /// Measure `|K|` (area in 2D, volume in 3D), strictly positive.
    pub volume: f64,
    /// Barycenter of the cell.
    pub barycenter: Vector3<f64>,
    /// Diameter `h_K` (largest vertex distance).
    pub diameter: f64,
    /// Second moment matrix `int_K (x - barycenter)(x - barycenter)^T dx`,
    /// from the closed-form simplex formula. Only the upper-left d x d block
    /// is meaningful.
    pub second_moment: Matrix3<f64>,
    /// The d + 1 faces; local face `i` is opposite local vertex `i`.
    pub faces: Vec<FaceOfCell>,
}

/// Geometry and incidence of a single face.
#[derive(Debug, Clone)]
pub struct FaceGeometry {
    /// Sorted vertex indices identifying the face.
    pub vertices: Vec<usize>,
    /// Measure `|F|`.
    pub measure: f64,
    /// Barycenter of the face.
    pub barycenter: Vector3<f64>,
    /// Diameter `h_F`.
    pub diameter: f64,
    /// Unit normal `n_F`: the outward normal of the lower-indexed incident
    /// cell.
    pub normal: Vector3<f64>,
    /// Incident cells, lower index first; `None` on the boundary.
    pub cells: (usize, Option<usize>),
}

impl FaceGeometry {
    /// True if the face lies on the domain boundary.
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// A validated matching simplicial mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Vector3<f64>>,
    cells: Vec<CellGeometry>,
    faces: Vec<FaceGeometry>,
    interior_faces: Vec<usize>,
    boundary_faces: Vec<usize>,
}

/// JSON schema for mesh files: `{"dim": d, "vertices": [[..]], "cells": [[..]]}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
}

impl Mesh {
    /// Validates vertex/cell data and computes all geometric quantities.
    ///
    /// Cells with negative orientation are repaired by swapping their last
    /// two vertices. Degenerate cells, duplicate cells, out-of-range indices
    /// and non-manifold faces are rejected.
    pub fn build(
        dim: usize,
        vertices: Vec<Vector3<f64>>,
        cells: Vec<Vec<usize>>,
    ) -> Result<Mesh, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::UnsupportedDimension(dim));
        }
        if vertices.is_empty() || cells.is_empty() {
            return Err(MeshError::Empty);
        }

        // Validate connectivity and repair orientations.
        let mut oriented: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
        let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != dim + 1 {
                return Err(MeshError::WrongCellSize {
                    cell: c,
                    len: cell.len(),
                    expected: dim + 1,
                });
            }
            for &v in cell {
                if v >= vertices.len() {
                    return Err(MeshError::InvalidIndex {
                        cell: c,
                        vertex: v,
                        n_vertices: vertices.len(),
                    });
                }
            }
            let mut key = cell.clone();
            key.sort_unstable();
            if key.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::DegenerateCell {
                    cell: c,
                    volume: 0.0,
                });
            }
            if let Some(&first) = seen.get(&key) {
                return Err(MeshError::DuplicateCell { first, second: c });
            }
            seen.insert(key, c);

            let mut verts = cell.clone();
            let signed = signed_volume(dim, &vertices, &verts);
            if signed < 0.0 {
                let n = verts.len();
                verts.swap(n - 1, n - 2);
            }
            let volume = signed_volume(dim, &vertices, &verts);
            let diameter = simplex_diameter(&vertices, &verts);
            if volume <= DEGENERATE_REL_TOL * diameter.powi(dim as i32) {
                return Err(MeshError::DegenerateCell { cell: c, volume });
            }
            oriented.push(verts);
        }

        // Enumerate faces by sorted vertex tuple; local face i is opposite
        // local vertex i.
        let mut incidence: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
        for (c, cell) in oriented.iter().enumerate() {
            for i in 0..=dim {
                let mut fv: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .collect();
                fv.sort_unstable();
                incidence.entry(fv).or_default().push((c, i));
            }
        }
        for (fv, inc) in &incidence {
            if inc.len() > 2 {
                return Err(MeshError::NonManifold {
                    vertices: fv.clone(),
                    count: inc.len(),
                });
            }
        }

        // Face geometry with a raw normal fixed by the sorted vertex tuple;
        // cells pick up the raw normal with a sign, which keeps opposite
        // normals exactly opposite.
        let mut faces: Vec<FaceGeometry> = Vec::with_capacity(incidence.len());
        let mut face_signs: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(incidence.len());
        for (fv, inc) in &incidence {
            let (measure, raw_normal) = face_measure_normal(dim, &vertices, fv);
            let barycenter = centroid(&vertices, fv);
            let diameter = simplex_diameter(&vertices, fv);
            // Orientation sign of each incident cell relative to the raw
            // normal. Incidence lists are in increasing cell order because
            // cells were visited in order.
            let mut signs = Vec::with_capacity(inc.len());
            for &(c, local) in inc {
                let to_face = barycenter - centroid(&vertices, &oriented[c]);
                let s = if raw_normal.dot(&to_face) >= 0.0 { 1.0 } else { -1.0 };
                signs.push((c, local, s));
            }
            let owner_sign = signs[0].2;
            faces.push(FaceGeometry {
                vertices: fv.clone(),
                measure,
                barycenter,
                diameter,
                normal: raw_normal * owner_sign,
                cells: (inc[0].0, inc.get(1).map(|&(c, _)| c)),
            });
            face_signs.push(signs);
        }

        // Assemble per-cell geometry.
        let mut cell_faces: Vec<Vec<Option<FaceOfCell>>> =
            vec![vec![None; dim + 1]; oriented.len()];
        for (f, signs) in face_signs.iter().enumerate() {
            let owner_sign = signs[0].2;
            for &(c, local, s) in signs {
                let normal = faces[f].normal * (s * owner_sign);
                let distance =
                    normal.dot(&(faces[f].barycenter - centroid(&vertices, &oriented[c])));
                cell_faces[c][local] = Some(FaceOfCell {
                    face: f,
                    normal,
                    orientation: s * owner_sign,
                    distance,
                    measure: faces[f].measure,
                });
            }
        }

        let mut cell_geoms: Vec<CellGeometry> = Vec::with_capacity(oriented.len());
        for (c, verts) in oriented.iter().enumerate() {
            let volume = signed_volume(dim, &vertices, verts);
            let barycenter = centroid(&vertices, verts);
            cell_geoms.push(CellGeometry {
                vertices: verts.clone(),
                volume,
                barycenter,
                diameter: simplex_diameter(&vertices, verts),
                second_moment: second_moment(dim, &vertices, verts, volume, &barycenter),
                faces: cell_faces[c]
                    .iter()
                    .map(|x| x.clone().expect("every local face was enumerated"))
                    .collect(),
            });
        }

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for (f, face) in faces.iter().enumerate() {
            if face.is_boundary() {
                boundary.push(f);
            } else {
                interior.push(f);
            }
        }

        Ok(Mesh {
            dim,
            vertices,
            cells: cell_geoms,
            faces,
            interior_faces: interior,
            boundary_faces: boundary,
        })
    }

    /// Parses a mesh from its JSON representation.
    pub fn from_json_str(text: &str) -> Result<Mesh, MeshError> {
        let file: MeshFile =
            serde_json::from_str(text).map_err(|e| MeshError::Schema(e.to_string()))?;
        if file.dim != 2 && file.dim != 3 {
            return Err(MeshError::UnsupportedDimension(file.dim));
        }
        let mut vertices = Vec::with_capacity(file.vertices.len());
        for (i, coords) in file.vertices.iter().enumerate() {
            if coords.len() != file.dim {
                return Err(MeshError::Schema(format!(
                    "vertex {i} has {} coordinates, expected {}",
                    coords.len(),
                    file.dim
                )));
            }
            let mut v = Vector3::zeros();
            for (k, &x) in coords.iter().enumerate() {
                v[k] = x;
            }
            vertices.push(v);
        }
        Mesh::build(file.dim, vertices, file.cells)
    }

    /// Triangulates the unit square into `2 n^2` congruent right triangles,
    /// splitting each grid square along its north-east diagonal.
    pub fn structured_triangulation(n: usize) -> Result<Mesh, MeshError> {
        if n == 0 {
            return Err(MeshError::Empty);
        }
        let step = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vector3::new(i as f64 * step, j as f64 * step, 0.0));
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                cells.push(vec![v00, v10, v11]);
                cells.push(vec![v00, v11, v01]);
            }
        }
        Mesh::build(2, vertices, cells)
    }

    /// Refines every triangle into four congruent children via edge
    /// midpoints. Only implemented for d = 2.
    pub fn uniform_refine(&self) -> Result<Mesh, MeshError> {
        if self.dim != 2 {
            return Err(MeshError::Unsupported(
                "uniform refinement is only implemented for triangles".to_string(),
            ));
        }
        let mut vertices = self.vertices.clone();
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]) * 0.5);
                vertices.len() - 1
            })
        };
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for cell in &self.cells {
            let [a, b, c] = [cell.vertices[0], cell.vertices[1], cell.vertices[2]];
            let mab = midpoint(a, b, &mut vertices);
            let mbc = midpoint(b, c, &mut vertices);
            let mca = midpoint(c, a, &mut vertices);
            cells.push(vec![a, mab, mca]);
            cells.push(vec![b, mbc, mab]);
            cells.push(vec![c, mca, mbc]);
            cells.push(vec![mab, mbc, mca]);
        }
        Mesh::build(2, vertices, cells)
    }

    /// Spatial dimension, 2 or 3.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells.
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Number of faces.
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Geometry of cell `c`.
    pub fn cell(&self, c: usize) -> &CellGeometry {
        &self.cells[c]
    }

    /// Geometry of face `f`.
    pub fn face(&self, f: usize) -> &FaceGeometry {
        &self.faces[f]
    }

    /// All cells.
    pub fn cells(&self) -> &[CellGeometry] {
        &self.cells
    }

    /// All faces.
    pub fn faces(&self) -> &[FaceGeometry] {
        &self.faces
    }

    /// Coordinates of vertex `v` (third component zero when d = 2).
    pub fn vertex(&self, v: usize) -> Vector3<f64> {
        self.vertices[v]
    }

    /// Indices of interior faces, increasing.
    pub fn interior_faces(&self) -> &[usize] {
        &self.interior_faces
    }

    /// Indices of boundary faces, increasing.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    /// Total mesh measure `sum_K |K|`.
    pub fn domain_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Positions of the vertices of cell `c`.
    pub fn cell_vertex_coords(&self, c: usize) -> Vec<Vector3<f64>> {
        self.cells[c].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    /// Positions of the vertices of face `f`.
    pub fn face_vertex_coords(&self, f: usize) -> Vec<Vector3<f64>> {
        self.faces[f].vertices.iter().map(|&v| self.vertices[v]).collect()
    }
}

/// Signed measure of the simplex spanned by `verts` (positive when the
/// vertex order is counterclockwise in 2D / right-handed in 3D).
fn signed_volume(dim: usize, vertices: &[Vector3<f64>], verts: &[usize]) -> f64 {
    let p0 = vertices[verts[0]];
    match dim {
        2 => {
            let e1 = vertices[verts[1]] - p0;
            let e2 = vertices[verts[2]] - p0;
            0.5 * (e1.x * e2.y - e1.y * e2.x)
        }
        3 => {
            let e1 = vertices[verts[1]] - p0;
            let e2 = vertices[verts[2]] - p0;
            let e3 = vertices[verts[3]] - p0;
            e1.dot(&e2.cross(&e3)) / 6.0
        }
        _ => unreachable!("dimension validated at construction"),
    }
}

/// Arithmetic mean of a vertex set.
fn centroid(vertices: &[Vector3<f64>], verts: &[usize]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for &v in verts {
        c += vertices[v];
    }
    c / verts.len() as f64
}

/// Largest pairwise vertex distance.
fn simplex_diameter(vertices: &[Vector3<f64>], verts: &[usize]) -> f64 {
    let mut h: f64 = 0.0;
    for (i, &a) in verts.iter().enumerate() {
        for &b in &verts[i + 1..] {
            h = h.max((vertices[a] - vertices[b]).norm());
        }
    }
    h
}

/// Measure and an (arbitrarily oriented) unit normal of a face given by its
/// sorted vertex tuple.
fn face_measure_normal(
    dim: usize,
    vertices: &[Vector3<f64>],
    fv: &[usize],
) -> (f64, Vector3<f64>) {
    match dim {
        2 => {
            let t = vertices[fv[1]] - vertices[fv[0]];
            let len = t.norm();
            (len, Vector3::new(t.y, -t.x, 0.0) / len)
        }
        3 => {
            let e1 = vertices[fv[1]] - vertices[fv[0]];
            let e2 = vertices[fv[2]] - vertices[fv[0]];
            let n = e1.cross(&e2);
            let area2 = n.norm();
            (0.5 * area2, n / area2)
        }
        _ => unreachable!("dimension validated at construction"),
    }
}

/// Closed-form second moment of a simplex about its barycenter:
///
/// ```text
///     int_K (x - xbar)(x - xbar)^T dx
///         = |K| / ((d + 1)(d + 2)) * sum_i (v_i - xbar)(v_i - xbar)^T.
/// ```
fn second_moment(
    dim: usize,
    vertices: &[Vector3<f64>],
    verts: &[usize],
    volume: f64,
    barycenter: &Vector3<f64>,
) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for &v in verts {
        let r = vertices[v] - barycenter;
        m += r * r.transpose();
    }
    m * (volume / ((dim + 1) as f64 * (dim + 2) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_triangle() -> Mesh {
        Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap()
    }

    /// Two tetrahedra sharing the face {1, 2, 3}.
    fn two_tets() -> Mesh {
        Mesh::build(
            3,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(1.0, 1.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3], vec![1, 2, 3, 4]],
        )
        .unwrap()
    }

    #[test]
    fn reference_triangle_geometry() {
        let mesh = reference_triangle();
        let cell = mesh.cell(0);
        assert_relative_eq!(cell.volume, 0.5);
        assert_relative_eq!(cell.barycenter.x, 1.0 / 3.0);
        assert_relative_eq!(cell.barycenter.y, 1.0 / 3.0);
        assert_relative_eq!(cell.diameter, 2.0_f64.sqrt());

        // Local face 2 is opposite vertex 2, i.e. the edge on the x-axis.
        let bottom = &cell.faces[2];
        assert_relative_eq!(bottom.measure, 1.0);
        assert_relative_eq!(bottom.distance, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(bottom.normal.x, 0.0);
        assert_relative_eq!(bottom.normal.y, -1.0);

        // Local face 0 is the hypotenuse.
        let hyp = &cell.faces[0];
        assert_relative_eq!(hyp.measure, 2.0_f64.sqrt());
        assert_relative_eq!(hyp.distance, 2.0_f64.sqrt() / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_surface_and_pyramid_identities() {
        for mesh in [
            reference_triangle(),
            Mesh::structured_triangulation(3).unwrap(),
            two_tets(),
        ] {
            let d = mesh.dim() as f64;
            for cell in mesh.cells() {
                let mut normal_sum = Vector3::zeros();
                let mut pyramid = 0.0;
                for face in &cell.faces {
                    normal_sum += face.measure * face.normal;
                    pyramid += face.measure * face.distance;
                    assert!(face.distance > 0.0);
                }
                let scale = cell.diameter.powi(mesh.dim() as i32 - 1);
                assert!(normal_sum.norm() <= 1e-13 * scale);
                assert_relative_eq!(pyramid, d * cell.volume, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn second_moment_of_reference_triangle() {
        let mesh = reference_triangle();
        let m = mesh.cell(0).second_moment;
        assert_relative_eq!(m[(0, 0)], 1.0 / 36.0, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 1)], 1.0 / 36.0, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 1)], -1.0 / 72.0, epsilon = 1e-15);
        // Trace is int |x - xbar|^2 = 1/18 on the reference triangle.
        assert_relative_eq!(m.trace(), 1.0 / 18.0, epsilon = 1e-15);
    }

    #[test]
    fn structured_counts() {
        let m1 = Mesh::structured_triangulation(1).unwrap();
        assert_eq!(m1.n_cells(), 2);
        assert_eq!(m1.n_faces(), 5);
        assert_eq!(m1.boundary_faces().len(), 4);

        // The 2 x 2 criss-cross square: 8 cells, 16 edges, 8 on the boundary.
        let m2 = Mesh::structured_triangulation(2).unwrap();
        assert_eq!(m2.n_cells(), 8);
        assert_eq!(m2.n_faces(), 16);
        assert_eq!(m2.boundary_faces().len(), 8);

        let m4 = Mesh::structured_triangulation(4).unwrap();
        assert_eq!(m4.n_cells(), 32);
        assert_relative_eq!(m4.domain_measure(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn interior_faces_have_exactly_opposite_normals() {
        let mesh = Mesh::structured_triangulation(4).unwrap();
        for &f in mesh.interior_faces() {
            let face = mesh.face(f);
            let (c_plus, c_minus) = (face.cells.0, face.cells.1.unwrap());
            assert!(c_plus < c_minus, "incident cells must be sorted");
            let local_plus = mesh
                .cell(c_plus)
                .faces
                .iter()
                .find(|x| x.face == f)
                .unwrap();
            let local_minus = mesh
                .cell(c_minus)
                .faces
                .iter()
                .find(|x| x.face == f)
                .unwrap();
            // Bitwise opposition, not just approximate.
            assert_eq!(local_plus.normal.x, -local_minus.normal.x);
            assert_eq!(local_plus.normal.y, -local_minus.normal.y);
            assert_eq!(local_plus.orientation, 1.0);
            assert_eq!(local_minus.orientation, -1.0);
        }
        for &f in mesh.boundary_faces() {
            let face = mesh.face(f);
            let local = mesh
                .cell(face.cells.0)
                .faces
                .iter()
                .find(|x| x.face == f)
                .unwrap();
            assert_eq!(local.orientation, 1.0);
        }
    }

    #[test]
    fn face_enumeration_is_deterministic() {
        let a = Mesh::structured_triangulation(3).unwrap();
        let b = Mesh::structured_triangulation(3).unwrap();
        for f in 0..a.n_faces() {
            assert_eq!(a.face(f).vertices, b.face(f).vertices);
            assert_eq!(a.face(f).normal, b.face(f).normal);
        }
        // Face keys are sorted lexicographically.
        for w in a.faces().windows(2) {
            assert!(w[0].vertices < w[1].vertices);
        }
    }

    #[test]
    fn orientation_repair_flips_clockwise_cells() {
        let mesh = Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            // Clockwise input.
            vec![vec![0, 2, 1]],
        )
        .unwrap();
        assert!(mesh.cell(0).volume > 0.0);
        assert_eq!(mesh.cell(0).vertices, vec![0, 1, 2]);
    }

    #[test]
    fn refinement_quarters_cells_and_preserves_measure() {
        let coarse = Mesh::structured_triangulation(2).unwrap();
        let fine = coarse.uniform_refine().unwrap();
        assert_eq!(fine.n_cells(), 4 * coarse.n_cells());
        assert_relative_eq!(fine.domain_measure(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(fine.h_max(), 0.5 * coarse.h_max(), epsilon = 1e-14);
    }

    #[test]
    fn tetrahedral_mesh_counts_and_volumes() {
        let mesh = two_tets();
        assert_eq!(mesh.n_cells(), 2);
        assert_eq!(mesh.n_faces(), 7);
        assert_eq!(mesh.boundary_faces().len(), 6);
        assert_eq!(mesh.interior_faces().len(), 1);
        assert_relative_eq!(mesh.cell(0).volume, 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(mesh.cell(1).volume, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn refinement_of_tets_is_unsupported() {
        let err = two_tets().uniform_refine().unwrap_err();
        assert!(matches!(err, MeshError::Unsupported(_)));
    }

    #[test]
    fn rejects_invalid_input() {
        let v2 = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];

        let err = Mesh::build(4, v2.clone(), vec![vec![0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::UnsupportedDimension(4)));

        let err = Mesh::build(2, v2.clone(), vec![]).unwrap_err();
        assert!(matches!(err, MeshError::Empty));

        let err = Mesh::build(2, v2.clone(), vec![vec![0, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::WrongCellSize { .. }));

        let err = Mesh::build(2, v2.clone(), vec![vec![0, 1, 9]]).unwrap_err();
        assert!(matches!(err, MeshError::InvalidIndex { vertex: 9, .. }));

        let err = Mesh::build(2, v2.clone(), vec![vec![0, 1, 2], vec![2, 0, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateCell { first: 0, second: 1 }));

        // Collinear triangle.
        let err = Mesh::build(2, v2.clone(), vec![vec![0, 1, 5]]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateCell { .. }));

        // Three triangles sharing the edge {0, 1}.
        let err = Mesh::build(
            2,
            v2.clone(),
            vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 4]],
        )
        .unwrap_err();
        match err {
            MeshError::NonManifold { vertices, count } => {
                assert_eq!(vertices, vec![0, 1]);
                assert_eq!(count, 3);
            }
            other => panic!("expected NonManifold, got {other}"),
        }
    }

    #[test]
    fn json_roundtrip_and_schema_errors() {
        let text = r#"{
            "dim": 2,
            "vertices": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            "cells": [[0, 1, 2]]
        }"#;
        let mesh = Mesh::from_json_str(text).unwrap();
        assert_eq!(mesh.n_cells(), 1);
        assert_relative_eq!(mesh.cell(0).volume, 0.5);

        // Unknown fields are rejected.
        let bad = r#"{"dim": 2, "vertices": [[0,0],[1,0],[0,1]], "cells": [[0,1,2]], "extra": 1}"#;
        assert!(matches!(
            Mesh::from_json_str(bad),
            Err(MeshError::Schema(_))
        ));

        // Wrong coordinate count.
        let bad = r#"{"dim": 2, "vertices": [[0,0,0],[1,0],[0,1]], "cells": [[0,1,2]]}"#;
        assert!(matches!(
            Mesh::from_json_str(bad),
            Err(MeshError::Schema(_))
        ));
    }
}
