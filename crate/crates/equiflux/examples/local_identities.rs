//! The local structure everything else is built on: the enriched potential
//! space D(K) = P1 + span{psi_K}, its flux image RT(K) = b grad D(K), and
//! the closed-form identities that make the schemes equivalent.

use equiflux::local_spaces::{
    flux_map_surjectivity_check, LocalFluxSpace, LocalPotentialSpace, Mobility,
};
use equiflux::mesh::Mesh;
use nalgebra::{DVector, Vector3};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    // Reference triangle {(0,0), (1,0), (0,1)} with identity mobility.
    let mesh = Mesh::build(
        2,
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![vec![0, 1, 2]],
    )?;
    let id = Mobility::identity(&mesh);
    let pot = LocalPotentialSpace::new(&mesh, 0, &id)?;

    // The bubble psi(x) = |x - xbar|^2 / 2 has two classical constants on
    // this cell: eta = int psi' weights = 1/18 and the uniform face mean
    // c_K = 1/9.
    println!("reference triangle, b = I:");
    println!("  eta  = {:.16}   (exact 1/18 = {:.16})", pot.eta(), 1.0 / 18.0);
    println!(
        "  c_K  = {:.16}   (exact 1/9  = {:.16})",
        pot.psi_face_mean_closed_form(),
        1.0 / 9.0
    );
    println!("  psi face means by quadrature: {:?}", pot.psi_face_means());

    // Now a skewed triangle with strong anisotropy. The identities that
    // survive arbitrary geometry and mobility are the ones the solvers use.
    let mesh = Mesh::build(
        2,
        vec![
            Vector3::new(0.2, -0.1, 0.0),
            Vector3::new(1.3, 0.3, 0.0),
            Vector3::new(0.4, 1.1, 0.0),
        ],
        vec![vec![0, 1, 2]],
    )?;
    let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 500.0, 0.6)?;
    let pot = LocalPotentialSpace::new(&mesh, 0, &mobility)?;
    let flux = LocalFluxSpace::new(&mesh, 0, &mobility)?;
    let d = mesh.dim();

    // b grad psi = x - xbar, so div(b grad psi) = d and the normal trace on
    // face F is the barycenter distance d_KF.
    let psi = DVector::from_fn(d + 2, |i, _| if i == d + 1 { 1.0 } else { 0.0 });
    let sigma_psi = pot.flux_coeffs(&psi);
    println!("\nskewed triangle, rotated anisotropy 500:");
    println!("  div(b grad psi) = {:.16} (exact {})", flux.divergence(&sigma_psi), d);
    for (fi, fo) in mesh.cell(0).faces.iter().enumerate() {
        println!(
            "  face {fi}: (b grad psi).n_KF = {:.16}, d_KF = {:.16}",
            flux.normal_trace(&sigma_psi, fi),
            fo.distance
        );
    }

    // One constant normal flux per face picks out exactly one member of
    // RT(K); the right-inverse constant measures how stably.
    let report = flux_map_surjectivity_check(&flux)?;
    println!(
        "\n  trace map rank {} of {}, right-inverse constant {:.4}",
        report.rank,
        d + 1,
        report.right_inverse_constant
    );

    // The degree-of-freedom map (cell mean, face means) round trips.
    let coeffs = DVector::from_vec(vec![0.7, -1.2, 2.1, 0.4]);
    let rec = pot.potential_from_dofs(&pot.dofs_of(&coeffs))?;
    println!(
        "  dof map round trip error {:.2e}",
        (&rec - &coeffs).norm() / coeffs.norm()
    );
    Ok(())
}
