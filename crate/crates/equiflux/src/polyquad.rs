//! Quadrature and polynomial tools on reference and physical simplices.
//!
//! Quadrature rules are conical-product Gauss rules: the reference simplex is
//! collapsed onto the unit cube (Duffy transformation), which turns the
//! Jacobian into a one-dimensional Jacobi weight `(1 - t)^a` per collapsed
//! direction, and each direction then uses the matching Gauss-Jacobi rule
//! computed by the Golub-Welsch algorithm. The resulting rules have strictly
//! positive weights and are exact for polynomials up to the requested degree;
//! the test suite checks exactness against the closed-form simplex monomial
//! integrals
//!
//! ```text
//!     int_{ref simplex} x1^a1 ... xd^ad dx = a1! ... ad! / (a1 + .. + ad + d)!,
//! ```
//!
//! which are computed by an independent code path.
//!
//! On top of the rules, [`CellBasis`] and [`FaceBasis`] provide monomial bases
//! of total degree at most three, scaled by the barycenter and diameter of
//! their simplex so that mass matrix conditioning does not degrade under
//! refinement, together with L2 projectors.

use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

/// Largest quadrature degree the library ships on cells and faces.
pub const MAX_DEGREE: usize = 6;

/// Largest polynomial degree of the projection bases.
pub const MAX_BASIS_DEGREE: usize = 3;

/// Failure modes of quadrature and projection.
#[derive(Debug, Error)]
pub enum PolyError {
    /// A rule of higher degree than the library ships was requested.
    #[error("quadrature degree {requested} unavailable, rules are shipped up to degree {max}")]
    DegreeUnavailable { requested: usize, max: usize },
    /// A basis of higher degree than supported was requested.
    #[error("basis degree {requested} unavailable, bases are shipped up to degree {max}")]
    BasisDegreeUnavailable { requested: usize, max: usize },
    /// The mass matrix could not be factorized.
    #[error("mass matrix is not positive definite on cell of diameter {diameter:.3e}")]
    SingularMass { diameter: f64 },
    /// The requested operation is not implemented for this dimension.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

/// A quadrature rule on the reference simplex
/// `{x : x_i >= 0, sum x_i <= 1}` of dimension 1, 2 or 3.
#[derive(Debug, Clone)]
pub struct QuadRule {
    dim: usize,
    degree: usize,
    points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

impl QuadRule {
    /// Conical-product Gauss rule of the requested degree on the reference
    /// simplex. Errors with [`PolyError::DegreeUnavailable`] above
    /// [`MAX_DEGREE`].
    pub fn reference_simplex(dim: usize, degree: usize) -> Result<QuadRule, PolyError> {
        if degree > MAX_DEGREE {
            return Err(PolyError::DegreeUnavailable {
                requested: degree,
                max: MAX_DEGREE,
            });
        }
        if !(1..=3).contains(&dim) {
            return Err(PolyError::Unsupported(format!(
                "quadrature dimension {dim}, expected 1, 2 or 3"
            )));
        }
        // n Gauss points integrate degree 2n - 1 against their weight.
        let n = degree / 2 + 1;
        // One Gauss-Jacobi rule per collapsed direction: the direction that
        // collapses k later coordinates carries the weight (1 - t)^k.
        let line_rules: Vec<(Vec<f64>, Vec<f64>)> =
            (0..dim).map(|i| gauss_jacobi_unit(dim - 1 - i, n)).collect();

        let mut points = Vec::with_capacity(n.pow(dim as u32));
        let mut weights = Vec::with_capacity(n.pow(dim as u32));
        let mut index = vec![0usize; dim];
        loop {
            // Duffy map: x_i = t_i * prod_{j<i} (1 - t_j).
            let mut x = Vector3::zeros();
            let mut w = 1.0;
            let mut shrink = 1.0;
            for (i, rule) in line_rules.iter().enumerate() {
                let t = rule.0[index[i]];
                x[i] = t * shrink;
                w *= rule.1[index[i]];
                shrink *= 1.0 - t;
            }
            points.push(x);
            weights.push(w);
            // Advance the mixed-radix counter.
            let mut i = 0;
            loop {
                if i == dim {
                    return Ok(QuadRule {
                        dim,
                        degree,
                        points,
                        weights,
                    });
                }
                index[i] += 1;
                if index[i] < n {
                    break;
                }
                index[i] = 0;
                i += 1;
            }
        }
    }

    /// Spatial dimension of the rule.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Degree of exactness.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Quadrature points in reference coordinates.
    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Quadrature weights (strictly positive, summing to `1/dim!`).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Maps the rule onto a physical simplex given by `verts` (one more
    /// vertex than the rule dimension; the simplex may be embedded, e.g. a
    /// triangle in 3d space). Returns physical points and weights scaling to
    /// `measure`.
    pub fn mapped(&self, verts: &[Vector3<f64>], measure: f64) -> Vec<(Vector3<f64>, f64)> {
        assert_eq!(verts.len(), self.dim + 1, "vertex count must match rule dimension");
        let ref_measure = 1.0 / factorial(self.dim) as f64;
        let scale = measure / ref_measure;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                let mut x = verts[0];
                for i in 0..self.dim {
                    x += p[i] * (verts[i + 1] - verts[0]);
                }
                (x, w * scale)
            })
            .collect()
    }
}

/// Nodes and weights of the Gauss-Jacobi rule on `[0, 1]` with weight
/// `(1 - t)^alpha`, via Golub-Welsch on the monic Jacobi recurrence.
fn gauss_jacobi_unit(alpha: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = alpha as f64;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kk = k as f64;
        jac[(k, k)] = if k == 0 {
            -a / (a + 2.0)
        } else {
            -(a * a) / ((2.0 * kk + a) * (2.0 * kk + a + 2.0))
        };
    }
    for k in 1..n {
        let kk = k as f64;
        let num = 4.0 * kk * kk * (kk + a) * (kk + a);
        let den = (2.0 * kk + a).powi(2) * (2.0 * kk + a + 1.0) * (2.0 * kk + a - 1.0);
        let b = (num / den).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mu0 = 2.0_f64.powf(a + 1.0) / (a + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let weight = mu0 * eig.eigenvectors[(0, i)].powi(2);
            // Shift [-1, 1] with weight (1 - x)^a onto [0, 1] with (1 - t)^a.
            ((1.0 + node) / 2.0, weight * 0.5_f64.powf(a + 1.0))
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

fn factorial(n: usize) -> usize {
    (1..=n).product::<usize>().max(1)
}

/// Integrates `f` over cell `c` with a rule exact to `degree_hint`.
pub fn integrate_cell(
    mesh: &Mesh,
    c: usize,
    degree_hint: usize,
    f: impl Fn(&Vector3<f64>) -> f64,
) -> Result<f64, PolyError> {
    let rule = QuadRule::reference_simplex(mesh.dim(), degree_hint)?;
    let verts = mesh.cell_vertex_coords(c);
    Ok(rule
        .mapped(&verts, mesh.cell(c).volume)
        .iter()
        .map(|(x, w)| w * f(x))
        .sum())
}

/// Integrates `f` over face `F` with a rule exact to `degree_hint`.
pub fn integrate_face(
    mesh: &Mesh,
    f_idx: usize,
    degree_hint: usize,
    f: impl Fn(&Vector3<f64>) -> f64,
) -> Result<f64, PolyError> {
    let rule = QuadRule::reference_simplex(mesh.dim() - 1, degree_hint)?;
    let verts = mesh.face_vertex_coords(f_idx);
    Ok(rule
        .mapped(&verts, mesh.face(f_idx).measure)
        .iter()
        .map(|(x, w)| w * f(x))
        .sum())
}

/// Mean value `pi^0_K f` of `f` over cell `c`.
pub fn cell_mean(
    mesh: &Mesh,
    c: usize,
    degree_hint: usize,
    f: impl Fn(&Vector3<f64>) -> f64,
) -> Result<f64, PolyError> {
    Ok(integrate_cell(mesh, c, degree_hint, f)? / mesh.cell(c).volume)
}

/// Mean value `pi^0_F f` of `f` over face `f_idx`.
pub fn face_mean(
    mesh: &Mesh,
    f_idx: usize,
    degree_hint: usize,
    f: impl Fn(&Vector3<f64>) -> f64,
) -> Result<f64, PolyError> {
    Ok(integrate_face(mesh, f_idx, degree_hint, f)? / mesh.face(f_idx).measure)
}

/// Integrates `f` over a triangle cell after `levels` uniform midpoint
/// subdivisions, with the degree-`degree_hint` rule on every child. Used to
/// integrate non-polynomial data (manufactured trigonometric terms) to
/// near machine precision. Triangles only.
pub fn integrate_cell_composite(
    mesh: &Mesh,
    c: usize,
    degree_hint: usize,
    levels: usize,
    f: &impl Fn(&Vector3<f64>) -> f64,
) -> Result<f64, PolyError> {
    if mesh.dim() != 2 {
        return Err(PolyError::Unsupported(
            "composite integration is only implemented for triangles".to_string(),
        ));
    }
    let rule = QuadRule::reference_simplex(2, degree_hint)?;
    let v = mesh.cell_vertex_coords(c);
    Ok(integrate_triangle_recursive(&rule, [v[0], v[1], v[2]], levels, f))
}

fn integrate_triangle_recursive(
    rule: &QuadRule,
    v: [Vector3<f64>; 3],
    levels: usize,
    f: &impl Fn(&Vector3<f64>) -> f64,
) -> f64 {
    if levels == 0 {
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let area = 0.5 * (e1.x * e2.y - e1.y * e2.x).abs();
        return rule.mapped(&v, area).iter().map(|(x, w)| w * f(x)).sum();
    }
    let m01 = (v[0] + v[1]) * 0.5;
    let m12 = (v[1] + v[2]) * 0.5;
    let m20 = (v[2] + v[0]) * 0.5;
    [
        [v[0], m01, m20],
        [v[1], m12, m01],
        [v[2], m20, m12],
        [m01, m12, m20],
    ]
    .into_iter()
    .map(|child| integrate_triangle_recursive(rule, child, levels - 1, f))
    .sum()
}

/// Monomial multi-indices of total degree at most `n`, ordered by total
/// degree and, within a degree, by decreasing leading exponents.
fn multi_indices(dim: usize, n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for deg in 0..=n {
        match dim {
            1 => out.push([deg, 0, 0]),
            2 => {
                for a in (0..=deg).rev() {
                    out.push([a, deg - a, 0]);
                }
            }
            3 => {
                for a in (0..=deg).rev() {
                    for b in (0..=(deg - a)).rev() {
                        out.push([a, b, deg - a - b]);
                    }
                }
            }
            _ => unreachable!("dimension validated at construction"),
        }
    }
    out
}

/// Scaled monomial basis `((x - xbar)/h)^alpha` of `P^n` on a cell, with its
/// factorized mass matrix.
#[derive(Debug, Clone)]
pub struct CellBasis {
    dim: usize,
    degree: usize,
    exponents: Vec<[usize; 3]>,
    barycenter: Vector3<f64>,
    scale: f64,
    verts: Vec<Vector3<f64>>,
    volume: f64,
    mass: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl CellBasis {
    /// Builds the basis of `P^n` on cell `c` and factorizes its mass matrix.
    pub fn new(mesh: &Mesh, c: usize, n: usize) -> Result<CellBasis, PolyError> {
        if n > MAX_BASIS_DEGREE {
            return Err(PolyError::BasisDegreeUnavailable {
                requested: n,
                max: MAX_BASIS_DEGREE,
            });
        }
        let cell = mesh.cell(c);
        let exponents = multi_indices(mesh.dim(), n);
        let verts = mesh.cell_vertex_coords(c);
        let rule = QuadRule::reference_simplex(mesh.dim(), 2 * n)?;
        let mapped = rule.mapped(&verts, cell.volume);
        let dim_p = exponents.len();
        let mut mass = DMatrix::zeros(dim_p, dim_p);
        for (x, w) in &mapped {
            let vals: Vec<f64> = exponents
                .iter()
                .map(|&e| eval_monomial(&cell.barycenter, cell.diameter, e, x))
                .collect();
            for i in 0..dim_p {
                for j in 0..dim_p {
                    mass[(i, j)] += w * vals[i] * vals[j];
                }
            }
        }
        let condition = crate::linalg::condition_number(&mass);
        let chol = mass.clone().cholesky().ok_or(PolyError::SingularMass {
            diameter: cell.diameter,
        })?;
        Ok(CellBasis {
            dim: mesh.dim(),
            degree: n,
            exponents,
            barycenter: cell.barycenter,
            scale: cell.diameter,
            verts,
            volume: cell.volume,
            mass,
            chol,
            condition,
        })
    }

    /// Number of basis members, `binom(n + d, d)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    /// True if the basis is empty (never for valid degrees).
    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Polynomial degree `n`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Mass matrix in the scaled monomial basis.
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// Two-norm condition number of the mass matrix. Stays bounded under
    /// refinement thanks to the barycenter/diameter scaling.
    pub fn mass_condition(&self) -> f64 {
        self.condition
    }

    /// Value of basis member `j` at `x`.
    pub fn eval_member(&self, j: usize, x: &Vector3<f64>) -> f64 {
        eval_monomial(&self.barycenter, self.scale, self.exponents[j], x)
    }

    /// Value of the polynomial with the given coefficients at `x`.
    pub fn eval(&self, coeffs: &DVector<f64>, x: &Vector3<f64>) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * self.eval_member(j, x))
            .sum()
    }

    /// L2 projection of `f` onto `P^n`: coefficients in this basis.
    ///
    /// The right-hand side integrals use a rule of degree
    /// `n + degree_hint`, which must stay within the shipped degrees.
    pub fn project(
        &self,
        f: impl Fn(&Vector3<f64>) -> f64,
        degree_hint: usize,
    ) -> Result<DVector<f64>, PolyError> {
        let rule = QuadRule::reference_simplex(self.dim, self.degree + degree_hint)?;
        let mapped = rule.mapped(&self.verts, self.volume);
        let mut rhs = DVector::zeros(self.len());
        for (x, w) in &mapped {
            let fv = f(x);
            for j in 0..self.len() {
                rhs[j] += w * fv * self.eval_member(j, x);
            }
        }
        Ok(self.chol.solve(&rhs))
    }
}

fn eval_monomial(center: &Vector3<f64>, scale: f64, e: [usize; 3], x: &Vector3<f64>) -> f64 {
    let mut v = 1.0;
    for k in 0..3 {
        for _ in 0..e[k] {
            v *= (x[k] - center[k]) / scale;
        }
    }
    v
}

/// Scaled monomial basis of `P^n` on a face, expressed in an orthonormal
/// tangential frame centered at the face barycenter.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    face_dim: usize,
    degree: usize,
    exponents: Vec<[usize; 3]>,
    barycenter: Vector3<f64>,
    scale: f64,
    tangents: Vec<Vector3<f64>>,
    verts: Vec<Vector3<f64>>,
    measure: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl FaceBasis {
    /// Builds the basis of `P^n` on face `f_idx`.
    pub fn new(mesh: &Mesh, f_idx: usize, n: usize) -> Result<FaceBasis, PolyError> {
        if n > MAX_BASIS_DEGREE {
            return Err(PolyError::BasisDegreeUnavailable {
                requested: n,
                max: MAX_BASIS_DEGREE,
            });
        }
        let face = mesh.face(f_idx);
        let face_dim = mesh.dim() - 1;
        let verts = mesh.face_vertex_coords(f_idx);
        // Orthonormal tangential frame by Gram-Schmidt on the edge vectors.
        let mut tangents: Vec<Vector3<f64>> = Vec::with_capacity(face_dim);
        for i in 0..face_dim {
            let mut t = verts[i + 1] - verts[0];
            for prev in &tangents {
                t -= prev.dot(&t) * prev;
            }
            tangents.push(t / t.norm());
        }
        let exponents = multi_indices(face_dim, n);
        let rule = QuadRule::reference_simplex(face_dim, 2 * n)?;
        let mapped = rule.mapped(&verts, face.measure);
        let dim_p = exponents.len();
        let mut mass = DMatrix::zeros(dim_p, dim_p);
        for (x, w) in &mapped {
            let vals: Vec<f64> = exponents
                .iter()
                .map(|&e| {
                    eval_tangential_monomial(&face.barycenter, face.diameter, &tangents, e, x)
                })
                .collect();
            for i in 0..dim_p {
                for j in 0..dim_p {
                    mass[(i, j)] += w * vals[i] * vals[j];
                }
            }
        }
        let condition = crate::linalg::condition_number(&mass);
        let chol = mass.cholesky().ok_or(PolyError::SingularMass {
            diameter: face.diameter,
        })?;
        Ok(FaceBasis {
            face_dim,
            degree: n,
            exponents,
            barycenter: face.barycenter,
            scale: face.diameter,
            tangents,
            verts,
            measure: face.measure,
            chol,
            condition,
        })
    }

    /// Number of basis members, `binom(n + d - 1, d - 1)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    /// True if the basis is empty (never for valid degrees).
    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Two-norm condition number of the face mass matrix.
    pub fn mass_condition(&self) -> f64 {
        self.condition
    }

    /// Value of basis member `j` at the physical point `x` (assumed to lie
    /// on the face plane).
    pub fn eval_member(&self, j: usize, x: &Vector3<f64>) -> f64 {
        eval_tangential_monomial(&self.barycenter, self.scale, &self.tangents, self.exponents[j], x)
    }

    /// Value of the face polynomial with the given coefficients at `x`.
    pub fn eval(&self, coeffs: &DVector<f64>, x: &Vector3<f64>) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * self.eval_member(j, x))
            .sum()
    }

    /// L2 projection of `f` onto `P^n` over the face.
    pub fn project(
        &self,
        f: impl Fn(&Vector3<f64>) -> f64,
        degree_hint: usize,
    ) -> Result<DVector<f64>, PolyError> {
        let rule = QuadRule::reference_simplex(self.face_dim, self.degree + degree_hint)?;
        let mapped = rule.mapped(&self.verts, self.measure);
        let mut rhs = DVector::zeros(self.len());
        for (x, w) in &mapped {
            let fv = f(x);
            for j in 0..self.len() {
                rhs[j] += w * fv * self.eval_member(j, x);
            }
        }
        Ok(self.chol.solve(&rhs))
    }
}

fn eval_tangential_monomial(
    center: &Vector3<f64>,
    scale: f64,
    tangents: &[Vector3<f64>],
    e: [usize; 3],
    x: &Vector3<f64>,
) -> f64 {
    let r = x - center;
    let mut v = 1.0;
    for (k, t) in tangents.iter().enumerate() {
        let coord = t.dot(&r) / scale;
        for _ in 0..e[k] {
            v *= coord;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    /// Independent oracle: exact integral of a monomial over the reference
    /// simplex, `prod a_i! / (sum a_i + d)!`.
    fn monomial_oracle(dim: usize, e: [usize; 3]) -> f64 {
        let num: f64 = e.iter().take(dim).map(|&a| factorial(a) as f64).product();
        num / factorial(e.iter().take(dim).sum::<usize>() + dim) as f64
    }

    #[test]
    fn rules_have_positive_weights_summing_to_reference_measure() {
        for dim in 1..=3 {
            for degree in 0..=MAX_DEGREE {
                let rule = QuadRule::reference_simplex(dim, degree).unwrap();
                assert!(rule.weights().iter().all(|&w| w > 0.0));
                let total: f64 = rule.weights().iter().sum();
                assert_relative_eq!(total, 1.0 / factorial(dim) as f64, epsilon = 1e-14);
                // Every point lies inside the reference simplex.
                for p in rule.points() {
                    assert!(p.iter().take(dim).all(|&x| x >= 0.0));
                    assert!(p.iter().take(dim).sum::<f64>() <= 1.0 + 1e-14);
                }
            }
        }
    }

    #[test]
    fn rules_are_exact_for_monomials_up_to_their_degree() {
        for dim in 1..=3 {
            for degree in 0..=MAX_DEGREE {
                let rule = QuadRule::reference_simplex(dim, degree).unwrap();
                for e in multi_indices(dim, degree) {
                    let quad: f64 = rule
                        .points()
                        .iter()
                        .zip(rule.weights())
                        .map(|(p, &w)| {
                            w * (0..dim).map(|k| p[k].powi(e[k] as i32)).product::<f64>()
                        })
                        .sum();
                    assert_relative_eq!(
                        quad,
                        monomial_oracle(dim, e),
                        epsilon = 1e-15,
                        max_relative = 1e-13
                    );
                }
            }
        }
    }

    #[test]
    fn degree_seven_is_unavailable() {
        let err = QuadRule::reference_simplex(2, 7).unwrap_err();
        assert!(matches!(err, PolyError::DegreeUnavailable { requested: 7, max: 6 }));
    }

    #[test]
    fn physical_integrals_match_mesh_geometry() {
        let mesh = Mesh::structured_triangulation(3).unwrap();
        for c in 0..mesh.n_cells() {
            let cell = mesh.cell(c);
            let one = integrate_cell(&mesh, c, 0, |_| 1.0).unwrap();
            assert_relative_eq!(one, cell.volume, max_relative = 1e-14);
            // First moments about the barycenter vanish.
            let m1 = integrate_cell(&mesh, c, 1, |x| x.x - cell.barycenter.x).unwrap();
            assert_relative_eq!(m1, 0.0, epsilon = 1e-16);
            // Second moments match the closed-form vertex formula.
            let m_xy = integrate_cell(&mesh, c, 2, |x| {
                (x.x - cell.barycenter.x) * (x.y - cell.barycenter.y)
            })
            .unwrap();
            assert_relative_eq!(m_xy, cell.second_moment[(0, 1)], epsilon = 1e-16, max_relative = 1e-13);
        }
        for f in 0..mesh.n_faces() {
            let face = mesh.face(f);
            let one = integrate_face(&mesh, f, 0, |_| 1.0).unwrap();
            assert_relative_eq!(one, face.measure, max_relative = 1e-14);
            // Second tangential moment of a segment of length L is L^3 / 12.
            let t = (mesh.face_vertex_coords(f)[1] - mesh.face_vertex_coords(f)[0]).normalize();
            let m2 = integrate_face(&mesh, f, 2, |x| t.dot(&(x - face.barycenter)).powi(2))
                .unwrap();
            assert_relative_eq!(m2, face.measure.powi(3) / 12.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn tetrahedral_integrals_match_oracle() {
        let mesh = Mesh::build(
            3,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        // On the reference tetrahedron physical and reference coordinates
        // coincide, so the factorial oracle applies directly.
        let quad = integrate_cell(&mesh, 0, 4, |x| x.x * x.y.powi(2) * x.z).unwrap();
        assert_relative_eq!(quad, monomial_oracle(3, [1, 2, 1]), max_relative = 1e-13);
        let quad = integrate_face(&mesh, 0, 3, |x| x.x.powi(3)).unwrap();
        // Face 0 of the map is a triangle; just check it is finite and the
        // constant integral matches the measure.
        assert!(quad.is_finite());
    }

    #[test]
    fn mean_of_x_on_reference_triangle() {
        let mesh = Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        // int_K x = 1/6 and |K| = 1/2, so the mean (the P0 projection) is 1/3.
        assert_relative_eq!(integrate_cell(&mesh, 0, 1, |x| x.x).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(cell_mean(&mesh, 0, 1, |x| x.x).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn composite_integration_of_sine_product() {
        let mesh = Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let f = |x: &Vector3<f64>| (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin();
        // Closed form: int over the reference triangle of sin(pi x) sin(pi y)
        // equals 2 / pi^2.
        let oracle = 2.0 / std::f64::consts::PI.powi(2);
        let coarse = integrate_cell_composite(&mesh, 0, 6, 0, &f).unwrap();
        let fine = integrate_cell_composite(&mesh, 0, 6, 4, &f).unwrap();
        assert_relative_eq!(fine, oracle, epsilon = 1e-13);
        // Subdivision actually improves the result.
        assert!((fine - oracle).abs() < (coarse - oracle).abs());
    }

    #[test]
    fn projector_is_a_projection_and_reproduces_polynomials() {
        let mesh = Mesh::structured_triangulation(2).unwrap();
        let basis = CellBasis::new(&mesh, 3, 2).unwrap();
        assert_eq!(basis.len(), 6);
        let f = |x: &Vector3<f64>| 1.5 - 2.0 * x.x + 0.5 * x.y + 3.0 * x.x * x.y - x.y * x.y;
        let coeffs = basis.project(f, 2).unwrap();
        // Quadratics are reproduced exactly.
        for p in [
            Vector3::new(0.1, 0.2, 0.0),
            Vector3::new(0.4, 0.9, 0.0),
            Vector3::new(0.7, 0.3, 0.0),
        ] {
            assert_relative_eq!(basis.eval(&coeffs, &p), f(&p), max_relative = 1e-12);
        }
        // Projecting something rough, then projecting its polynomial
        // representative again, is idempotent.
        let rough = |x: &Vector3<f64>| (7.0 * x.x).sin() + (3.0 * x.y).cos();
        let once = basis.project(rough, 6 - 2).unwrap();
        let twice = basis.project(|x: &Vector3<f64>| basis.eval(&once, x), 2).unwrap();
        let scale = once.amax().max(1.0);
        assert!((&once - &twice).amax() <= 1e-14 * scale);
    }

    #[test]
    fn face_projector_reproduces_traces() {
        let mesh = Mesh::structured_triangulation(2).unwrap();
        let f_idx = mesh.interior_faces()[0];
        let basis = FaceBasis::new(&mesh, f_idx, 1).unwrap();
        assert_eq!(basis.len(), 2);
        let f = |x: &Vector3<f64>| 2.0 * x.x - 0.7 * x.y + 0.3;
        let coeffs = basis.project(f, 1).unwrap();
        let verts = mesh.face_vertex_coords(f_idx);
        let probe = verts[0] * 0.25 + verts[1] * 0.75;
        assert_relative_eq!(basis.eval(&coeffs, &probe), f(&probe), max_relative = 1e-12);
    }

    #[test]
    fn mass_conditioning_is_stable_under_refinement() {
        let coarse = Mesh::structured_triangulation(1).unwrap();
        let fine = coarse.uniform_refine().unwrap().uniform_refine().unwrap();
        // Both meshes contain a scaled copy of cell 0.
        let cond_coarse = CellBasis::new(&coarse, 0, 3).unwrap().mass_condition();
        let cond_fine = CellBasis::new(&fine, 0, 3).unwrap().mass_condition();
        assert!(cond_coarse.is_finite());
        assert_relative_eq!(cond_coarse, cond_fine, max_relative = 1e-8);
    }

    #[test]
    fn basis_degree_cap() {
        let mesh = Mesh::structured_triangulation(1).unwrap();
        let err = CellBasis::new(&mesh, 0, 4).unwrap_err();
        assert!(matches!(err, PolyError::BasisDegreeUnavailable { requested: 4, max: 3 }));
    }
}
