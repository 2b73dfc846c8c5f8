//! The primal scheme: find the enriched nonconforming potential with zero
//! boundary face means such that `(b grad u, grad v) = (pi0 f, v)` for all
//! test functions `v` in the same space.
//!
//! Unknowns are the cell means (one per cell) followed by the interior face
//! means (one per interior face). The local stiffness matrix in this degree
//! of freedom basis comes from the cell spaces; the load enters as
//! `|K| pi0_K f` against the cell-mean test function, since `(f, pi0 v)_K`
//! only sees the mean of `v`.

use super::{
    FaceNumbering, LoadField, LocalOperators, PrimalSolution, SchemeConfig, SchemeError,
    TripletSystem,
};
use crate::local_spaces::Mobility;
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Global unknown indices of one cell's local degrees of freedom
/// (cell mean first, then its faces; `None` marks constrained boundary
/// faces).
fn cell_dof_map(mesh: &Mesh, numbering: &FaceNumbering, c: usize) -> Vec<Option<usize>> {
    let n_cells = mesh.n_cells();
    let mut map = Vec::with_capacity(mesh.dim() + 2);
    map.push(Some(c));
    for fo in &mesh.cell(c).faces {
        map.push(numbering.interior_index(fo.face).map(|k| n_cells + k));
    }
    map
}

pub(crate) fn assemble_primal(
    mesh: &Mesh,
    ops: &LocalOperators,
    numbering: &FaceNumbering,
) -> TripletSystem {
    let n = mesh.n_cells() + numbering.n_interior();
    let mut sys = TripletSystem::new(n);
    for c in 0..mesh.n_cells() {
        let a = ops.cell(c).potential.stiffness_dof();
        let map = cell_dof_map(mesh, numbering, c);
        for (l, &gl) in map.iter().enumerate() {
            let Some(gl) = gl else { continue };
            for (m, &gm) in map.iter().enumerate() {
                if let Some(gm) = gm {
                    sys.add(gl, gm, a[(l, m)]);
                }
            }
        }
        sys.add_rhs(c, mesh.cell(c).volume * ops.fbar(c));
    }
    sys
}

/// Dense primal system (stiffness matrix and load vector) for diagnostics,
/// residual certification, and oracle tests.
pub fn primal_system(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
) -> Result<(DMatrix<f64>, DVector<f64>), SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, load)?;
    let numbering = FaceNumbering::new(mesh);
    Ok(assemble_primal(mesh, &ops, &numbering).to_dense())
}

/// Solves the primal scheme.
pub fn solve_primal(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<PrimalSolution, SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let numbering = FaceNumbering::new(mesh);
    let sys = assemble_primal(mesh, &ops, &numbering);
    let x = sys.solve_spd(config.solver)?;
    unpack_primal(mesh, &ops, &numbering, &x)
}

/// Splits a primal unknown vector into means and reconstructs the cellwise
/// potential coefficients.
pub(crate) fn unpack_primal(
    mesh: &Mesh,
    ops: &LocalOperators,
    numbering: &FaceNumbering,
    x: &DVector<f64>,
) -> Result<PrimalSolution, SchemeError> {
    let n_cells = mesh.n_cells();
    let cell_means: Vec<f64> = (0..n_cells).map(|c| x[c]).collect();
    let face_means = numbering.scatter(x, n_cells);
    let mut cell_coeffs = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        // Stable reconstruction through the condensation closed form; the
        // dof-matrix inversion recovers the same member but loses digits
        // of the bubble coefficient under strong anisotropy.
        let lambda: Vec<f64> = mesh
            .cell(c)
            .faces
            .iter()
            .map(|fo| face_means[fo.face])
            .collect();
        cell_coeffs.push(super::potential_from_face_means(mesh, ops, c, &lambda));
    }
    Ok(PrimalSolution {
        cell_coeffs,
        cell_means,
        face_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyquad;
    use crate::schemes::SolverKind;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn two_cell_mesh() -> Mesh {
        Mesh::structured_triangulation(1).unwrap()
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let mesh = Mesh::structured_triangulation(3).unwrap();
        let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 100.0, 0.3).unwrap();
        let sol = solve_primal(
            &mesh,
            &mobility,
            &SchemeConfig::new(LoadField::Constant(0.0)),
        )
        .unwrap();
        for c in 0..mesh.n_cells() {
            assert_relative_eq!(sol.cell_coeffs[c].norm(), 0.0, epsilon = 1e-14);
        }
    }

    /// Brute-force oracle: assemble the 2-cell system by pointwise
    /// quadrature of `b grad phi_i . grad phi_j`, with basis functions
    /// obtained from the dof map and gradients evaluated at quadrature
    /// nodes. No Gram-matrix shortcut is involved.
    #[test]
    fn matches_quadrature_assembled_oracle_on_two_cells() {
        let mesh = two_cell_mesh();
        let mobility = Mobility::identity(&mesh);
        let load = LoadField::Constant(1.0);
        let ops = LocalOperators::build(&mesh, &mobility, &load).unwrap();
        let numbering = FaceNumbering::new(&mesh);
        let n = mesh.n_cells() + numbering.n_interior();
        assert_eq!(n, 3);

        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for c in 0..mesh.n_cells() {
            let pot = &ops.cell(c).potential;
            let map = cell_dof_map(&mesh, &numbering, c);
            let n_loc = map.len();
            // Basis member alpha: dofs = e_alpha.
            let basis: Vec<_> = (0..n_loc)
                .map(|alpha| {
                    let mut dofs = DVector::zeros(n_loc);
                    dofs[alpha] = 1.0;
                    pot.potential_from_dofs(&dofs).unwrap()
                })
                .collect();
            let b = mobility.cell_matrix(c);
            for (l, &gl) in map.iter().enumerate() {
                let Some(gl) = gl else { continue };
                // The load pairs with pi0_K(v), which is the mean dof of
                // the test function: 1 for l = 0, else 0.
                if l == 0 {
                    rhs[gl] +=
                        polyquad::integrate_cell(&mesh, c, 4, |x| load.eval(x)).unwrap();
                }
                for (m, &gm) in map.iter().enumerate() {
                    let Some(gm) = gm else { continue };
                    let val = polyquad::integrate_cell(&mesh, c, 4, |x| {
                        let gl_ = pot.gradient(&basis[l], x);
                        let gm_ = pot.gradient(&basis[m], x);
                        (b * gl_).dot(&gm_)
                    })
                    .unwrap();
                    a[(gl, gm)] += val;
                }
            }
        }
        let oracle = a.lu().solve(&rhs).unwrap();

        let sol = solve_primal(&mesh, &mobility, &SchemeConfig::new(load)).unwrap();
        for c in 0..mesh.n_cells() {
            assert_relative_eq!(sol.cell_means[c], oracle[c], epsilon = 1e-12);
        }
        let f = mesh.interior_faces()[0];
        assert_relative_eq!(sol.face_means[f], oracle[2], epsilon = 1e-12);
    }

    #[test]
    fn assembled_matrix_is_symmetric_and_positive() {
        let mesh = Mesh::structured_triangulation(3).unwrap();
        let mobility = Mobility::random_spd_per_cell(&mesh, 7, 1.0, 1e3).unwrap();
        let (a, _) = primal_system(&mesh, &mobility, &LoadField::Constant(1.0)).unwrap();
        let asym = (&a - a.transpose()).amax();
        assert!(asym <= 1e-13 * a.amax(), "asymmetry {asym:e}");
        // Random Rayleigh quotients stay positive.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let v = DVector::from_fn(a.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let q = v.dot(&(&a * &v));
            assert!(q > 0.0);
        }
    }

    #[test]
    fn cg_and_dense_solves_agree() {
        let mesh = Mesh::structured_triangulation(4).unwrap();
        let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 50.0, 0.5).unwrap();
        let dense = solve_primal(
            &mesh,
            &mobility,
            &SchemeConfig::new(LoadField::SinSin),
        )
        .unwrap();
        let cg = solve_primal(
            &mesh,
            &mobility,
            &SchemeConfig {
                solver: SolverKind::cg(),
                load: LoadField::SinSin,
            },
        )
        .unwrap();
        let scale = dense
            .cell_means
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for c in 0..mesh.n_cells() {
            assert_relative_eq!(
                dense.cell_means[c],
                cg.cell_means[c],
                epsilon = 1e-10 * scale
            );
        }
    }

    #[test]
    fn broken_energy_error_decreases_under_refinement() {
        // Manufactured sinsin potential with identity mobility.
        let u = |x: &Vector3<f64>| (std::f64::consts::PI * x.x).sin()
            * (std::f64::consts::PI * x.y).sin();
        let load = LoadField::Custom(std::sync::Arc::new(move |x: &Vector3<f64>| {
            2.0 * std::f64::consts::PI.powi(2)
                * (std::f64::consts::PI * x.x).sin()
                * (std::f64::consts::PI * x.y).sin()
        }));
        let mut previous = f64::INFINITY;
        for n in [4, 8, 16] {
            let mesh = Mesh::structured_triangulation(n).unwrap();
            let mobility = Mobility::identity(&mesh);
            let sol = solve_primal(&mesh, &mobility, &SchemeConfig::new(load.clone())).unwrap();
            let ops = LocalOperators::build(&mesh, &mobility, &LoadField::Constant(0.0)).unwrap();
            let mut err = 0.0;
            for c in 0..mesh.n_cells() {
                let pot = &ops.cell(c).potential;
                let coeffs = &sol.cell_coeffs[c];
                err += polyquad::integrate_cell_composite(&mesh, c, 6, 1, &|x| {
                    (pot.eval(coeffs, x) - u(x)).powi(2)
                })
                .unwrap();
            }
            let err = err.sqrt();
            assert!(err < 0.6 * previous, "error {err} at n={n} vs {previous}");
            previous = err;
        }
    }
}
