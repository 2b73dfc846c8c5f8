//! The mixed scheme: find the Raviart-Thomas flux `sigma` and the
//! cellwise-constant potential `u` such that
//!
//! ```text
//! (b^-1 sigma, tau) + sum_K (u, div tau)_K = 0        for all tau,
//!                     sum_K (v, div sigma)_K = -(f, v) for all v.
//! ```
//!
//! The global flux unknown is one normal value per face, oriented along the
//! face normal `n_F` and shared by both incident cells, which builds the
//! normal-trace continuity of H(div) into the space. No boundary condition
//! is imposed: the Dirichlet condition is natural here.

use super::{
    flux_coeffs_from_face_values, LoadField, LocalOperators, MixedSolution, SchemeConfig,
    SchemeError,
};
use crate::linalg;
use crate::local_spaces::Mobility;
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Dense mixed saddle-point system. Unknowns: face fluxes (one per face,
/// against `n_F`) followed by cell potentials.
pub fn mixed_system(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
) -> Result<(DMatrix<f64>, DVector<f64>), SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, load)?;
    mixed_system_from(mesh, &ops)
}

pub(crate) fn mixed_system_from(
    mesh: &Mesh,
    ops: &LocalOperators,
) -> Result<(DMatrix<f64>, DVector<f64>), SchemeError> {
    let n_faces = mesh.n_faces();
    let n = n_faces + mesh.n_cells();
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let flux = &ops.cell(c).flux;
        let n_loc = cell.faces.len();
        // chi_fi: local coefficients of the flux with unit normal trace on
        // local face fi (against the outward normal) and zero on the rest.
        let mut chi = Vec::with_capacity(n_loc);
        for fi in 0..n_loc {
            let mut traces = DVector::zeros(n_loc);
            traces[fi] = 1.0;
            chi.push(flux.coeffs_from_traces(&traces)?);
        }
        let gw = flux.gram_weighted();
        for (fo_i, chi_i) in cell.faces.iter().zip(&chi) {
            let gi = fo_i.face;
            // Weighted mass of the local trace basis, with the global
            // orientation signs folded in.
            let gw_chi = gw * chi_i;
            for (fo_j, chi_j) in cell.faces.iter().zip(&chi) {
                a[(gi, fo_j.face)] += fo_i.orientation * fo_j.orientation * chi_j.dot(&gw_chi);
            }
            // Divergence coupling: int_K div(phi_F) = eps_{K,F} |F|.
            let div_entry = fo_i.orientation * fo_i.measure;
            a[(gi, n_faces + c)] += div_entry;
            a[(n_faces + c, gi)] += div_entry;
        }
        rhs[n_faces + c] = -cell.volume * ops.fbar(c);
    }
    Ok((a, rhs))
}

/// Solves the mixed scheme by a dense direct factorization (the system is
/// an indefinite saddle point, so the conjugate-gradient option does not
/// apply and is ignored).
pub fn solve_mixed(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<MixedSolution, SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let (a, rhs) = mixed_system_from(mesh, &ops)?;
    let x = linalg::solve_lu_dense(&a, &rhs)?;
    let n_faces = mesh.n_faces();
    let face_flux: Vec<f64> = (0..n_faces).map(|f| x[f]).collect();
    let cell_means: Vec<f64> = (0..mesh.n_cells()).map(|c| x[n_faces + c]).collect();
    let mut cell_radial = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let coeffs = flux_coeffs_from_face_values(mesh, &ops, c, &face_flux)?;
        cell_radial.push(coeffs[mesh.dim()]);
    }
    Ok(MixedSolution {
        face_flux,
        cell_radial,
        cell_means,
    })
}
