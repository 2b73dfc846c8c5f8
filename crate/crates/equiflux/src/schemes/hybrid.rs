//! The two hybridized formulations.
//!
//! Hybrid primal: potentials are fully broken across cells; a constant
//! multiplier per face (the normal flux) enforces face-mean continuity and
//! zero boundary means. The multiplier space pairs one value per face with
//! the two incident cells through opposite outward normals, so it is
//! parametrized by a single unknown `s_F` per face with per-cell signs
//! `eps_{K,F}`; the interface consistency condition holds by construction
//! and is reported per (cell, face) against the outward normal.
//!
//! Hybrid mixed: fluxes are broken Raviart-Thomas fields per cell; a
//! constant multiplier per interior face (the potential trace) enforces
//! normal-trace continuity, with boundary multipliers fixed to zero. The
//! cell blocks are eliminated by a stored per-cell factorization, a
//! symmetric positive definite system is solved for the multiplier, and
//! the same factorizations are reused for the reconstruction pass.

use super::{
    FaceNumbering, HybridMixedSolution, HybridPrimalSolution, LocalOperators, SchemeConfig,
    SchemeError,
};
use crate::linalg::{self, LinalgError};
use crate::local_spaces::Mobility;
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Solves the hybridized primal scheme.
///
/// The cell-mean unknown of every cell is eliminated first (its diagonal
/// stiffness entry is strictly positive), leaving a dense saddle system in
/// the broken face means and the face multipliers, solved by LU. Cell means
/// are recovered in a closed-form back-substitution.
pub fn solve_hybrid_primal(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<HybridPrimalSolution, SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let d = mesh.dim();
    let n_loc = d + 1;
    let n_cells = mesh.n_cells();
    let n_g = n_cells * n_loc;
    let n = n_g + mesh.n_faces();

    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    // Per-cell elimination data for the back-substitution pass.
    let mut elim = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let cell = mesh.cell(c);
        let stiff = ops.cell(c).potential.stiffness_dof();
        let amm = stiff[(0, 0)];
        if amm <= 0.0 {
            return Err(SchemeError::Solver(LinalgError::SingularSystem(format!(
                "nonpositive mean-mean stiffness {amm:e} on cell {c}"
            ))));
        }
        let a_gm = DVector::from_fn(n_loc, |fi, _| stiff[(1 + fi, 0)]);
        let load_c = cell.volume * ops.fbar(c);
        for fi in 0..n_loc {
            let row = c * n_loc + fi;
            // Schur complement of the mean unknown inside the cell block.
            for fj in 0..n_loc {
                a[(row, c * n_loc + fj)] +=
                    stiff[(1 + fi, 1 + fj)] - a_gm[fi] * a_gm[fj] / amm;
            }
            rhs[row] += -a_gm[fi] * load_c / amm;
            // Multiplier coupling: -(sigma_dK, v)_dK with
            // sigma_dK|_F = eps_{K,F} s_F.
            let fo = &cell.faces[fi];
            let col = n_g + fo.face;
            a[(row, col)] -= fo.orientation * fo.measure;
            a[(col, row)] -= fo.orientation * fo.measure;
        }
        elim.push((amm, a_gm, load_c));
    }

    let x = linalg::solve_lu_dense(&a, &rhs)?;

    let mut cell_coeffs = Vec::with_capacity(n_cells);
    let mut cell_means = Vec::with_capacity(n_cells);
    let mut multipliers = Vec::with_capacity(n_cells);
    let face_flux: Vec<f64> = (0..mesh.n_faces()).map(|f| x[n_g + f]).collect();
    for c in 0..n_cells {
        let cell = mesh.cell(c);
        let (amm, a_gm, load_c) = &elim[c];
        let g = DVector::from_fn(n_loc, |fi, _| x[c * n_loc + fi]);
        let mean = (load_c - a_gm.dot(&g)) / amm;
        cell_coeffs.push(super::potential_from_face_means(
            mesh,
            &ops,
            c,
            g.as_slice(),
        ));
        cell_means.push(mean);
        multipliers.push(
            cell.faces
                .iter()
                .map(|fo| fo.orientation * face_flux[fo.face])
                .collect(),
        );
    }
    Ok(HybridPrimalSolution {
        cell_coeffs,
        cell_means,
        multipliers,
        face_flux,
    })
}

/// Solves the hybridized mixed scheme.
///
/// Each cell carries a local saddle block in its flux coefficients and its
/// mean potential; the interior-face multiplier system (the Schur
/// complement) is symmetric positive definite and solved by Cholesky, with
/// an LU fallback. The stored cell factorizations are reused to recover
/// fluxes and means.
pub fn solve_hybrid_mixed(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<HybridMixedSolution, SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let numbering = FaceNumbering::new(mesh);
    let d = mesh.dim();
    let n_loc = d + 1;
    let n_lambda = numbering.n_interior();

    let mut schur = DMatrix::zeros(n_lambda, n_lambda);
    let mut gvec = DVector::zeros(n_lambda);
    let mut cell_lu = Vec::with_capacity(mesh.n_cells());
    let mut cell_e = Vec::with_capacity(mesh.n_cells());
    let mut cell_b = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let flux = &ops.cell(c).flux;
        let t = flux.trace_matrix();
        let gw = flux.gram_weighted();
        // Local saddle: [[Gw, dvec], [dvec^T, 0]] with dvec the divergence
        // pairing (u, div tau)_K = u d |K| c_radial.
        let mut s = DMatrix::zeros(n_loc + 1, n_loc + 1);
        s.view_mut((0, 0), (n_loc, n_loc)).copy_from(gw);
        s[(n_loc - 1, n_loc)] = d as f64 * cell.volume;
        s[(n_loc, n_loc - 1)] = d as f64 * cell.volume;
        // Multiplier coupling: (tau . n_KF, lambda)_F = |F| (T tau)_fi lambda.
        let mut e = DMatrix::zeros(n_loc + 1, n_loc);
        for fi in 0..n_loc {
            for i in 0..n_loc {
                e[(i, fi)] = cell.faces[fi].measure * t[(fi, i)];
            }
        }
        let mut b = DVector::zeros(n_loc + 1);
        b[n_loc] = -cell.volume * ops.fbar(c);

        let lu = s.lu();
        let x_cols = lu.solve(&e).ok_or_else(|| {
            LinalgError::SingularSystem(format!("singular local saddle on cell {c}"))
        })?;
        let y0 = lu.solve(&b).ok_or_else(|| {
            LinalgError::SingularSystem(format!("singular local saddle on cell {c}"))
        })?;
        let h = e.transpose() * &x_cols;
        let gloc = e.transpose() * &y0;
        for fi in 0..n_loc {
            let Some(li) = numbering.interior_index(cell.faces[fi].face) else {
                continue;
            };
            gvec[li] += gloc[fi];
            for fj in 0..n_loc {
                if let Some(lj) = numbering.interior_index(cell.faces[fj].face) {
                    schur[(li, lj)] += h[(fi, fj)];
                }
            }
        }
        cell_lu.push(lu);
        cell_e.push(e);
        cell_b.push(b);
    }

    let rhs = -gvec;
    let lambda = match linalg::solve_spd_dense(&schur, &rhs) {
        Ok(l) => l,
        Err(_) => linalg::solve_lu_dense(&schur, &rhs)?,
    };

    let face_potential = numbering.scatter(&lambda, 0);
    let mut cell_flux_coeffs = Vec::with_capacity(mesh.n_cells());
    let mut cell_means = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let mut lambda_loc = DVector::zeros(n_loc);
        for fi in 0..n_loc {
            lambda_loc[fi] = face_potential[cell.faces[fi].face];
        }
        let rhs_loc = &cell_e[c] * lambda_loc + &cell_b[c];
        let y = cell_lu[c].solve(&rhs_loc).ok_or_else(|| {
            LinalgError::SingularSystem(format!("singular local saddle on cell {c}"))
        })?;
        cell_flux_coeffs.push(DVector::from_fn(n_loc, |i, _| y[i]));
        cell_means.push(y[n_loc]);
    }
    Ok(HybridMixedSolution {
        cell_flux_coeffs,
        cell_means,
        face_potential,
    })
}
