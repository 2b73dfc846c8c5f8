//! Static condensation of the primal scheme.
//!
//! Eliminating the cell unknowns by hand leaves a Crouzeix-Raviart system
//! in the interior face means alone,
//!
//! ```text
//! A_{FG} = sum_K (|F||G| / |K|) n_KF . (b_K n_KG),
//! r_F    = sum_K pi0_K f |F| d_KF / d,
//! ```
//!
//! after which everything else is recovered cell by cell in closed form:
//! the linear part of the potential is the Crouzeix-Raviart reconstruction
//! of the face means, the bubble coefficient is `-pi0_K f / d`, the
//! constant `c_K = (2 + d) eta_K / (2 d |K|)` restores the face means the
//! bubble would otherwise shift, the cell mean picks up
//! `eta_K pi0_K f / (d^2 |K|)`, and the flux is
//! `b grad u_CR - (pi0_K f / d)(x - xbar)`.

use super::{
    FaceNumbering, LocalOperators, MixedSolution, PrimalSolution, SchemeConfig, SchemeError,
    TripletSystem,
};
use crate::local_spaces::Mobility;
use crate::mesh::Mesh;

/// Assembles the condensed (Crouzeix-Raviart) system in the interior face
/// unknowns.
pub(crate) fn assemble_condensed(
    mesh: &Mesh,
    ops: &LocalOperators,
    numbering: &FaceNumbering,
) -> TripletSystem {
    let d = mesh.dim() as f64;
    let mut sys = TripletSystem::new(numbering.n_interior());
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let b = ops.cell(c).flux.mobility();
        for fo_i in &cell.faces {
            let Some(gi) = numbering.interior_index(fo_i.face) else {
                continue;
            };
            let bn_i = b * fo_i.normal;
            for fo_j in &cell.faces {
                if let Some(gj) = numbering.interior_index(fo_j.face) {
                    sys.add(
                        gi,
                        gj,
                        fo_i.measure * fo_j.measure / cell.volume * bn_i.dot(&fo_j.normal),
                    );
                }
            }
            sys.add_rhs(gi, ops.fbar(c) * fo_i.measure * fo_i.distance / d);
        }
    }
    sys
}

/// Solves the primal problem through its statically condensed form and
/// reconstructs both the primal and the mixed solutions.
pub fn solve_condensed(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<(PrimalSolution, MixedSolution), SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let numbering = FaceNumbering::new(mesh);
    let sys = assemble_condensed(mesh, &ops, &numbering);
    let x = sys.solve_spd(config.solver)?;

    let d = mesh.dim();
    let face_means = numbering.scatter(&x, 0);

    let mut cell_coeffs = Vec::with_capacity(mesh.n_cells());
    let mut cell_means = Vec::with_capacity(mesh.n_cells());
    let mut cell_radial = Vec::with_capacity(mesh.n_cells());
    let mut flux_coeffs = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let cellops = ops.cell(c);
        // Crouzeix-Raviart reconstruction from the face means, bubble
        // correction u_K = u_CR - (fbar / d)(psi - c_K).
        let lambda: Vec<f64> = cell.faces.iter().map(|fo| face_means[fo.face]).collect();
        let coeffs = super::potential_from_face_means(mesh, &ops, c, &lambda);
        // Cell mean per the condensation identity: the mean of u_CR plus
        // eta fbar / (d^2 |K|).
        let mean = coeffs[0] + coeffs[d + 1] * cellops.potential.psi_cell_mean();
        // Flux: b grad u_CR - (fbar / d)(x - xbar) in the RT basis.
        let sigma = cellops.potential.flux_coeffs(&coeffs);

        cell_coeffs.push(coeffs);
        cell_means.push(mean);
        cell_radial.push(sigma[d]);
        flux_coeffs.push(sigma);
    }

    let face_flux = super::face_flux_from_cells(mesh, &ops, &flux_coeffs);
    Ok((
        PrimalSolution {
            cell_coeffs,
            cell_means: cell_means.clone(),
            face_means,
        },
        MixedSolution {
            face_flux,
            cell_radial,
            cell_means,
        },
    ))
}
