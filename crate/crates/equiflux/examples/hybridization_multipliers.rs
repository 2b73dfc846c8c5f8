//! Hybridization breaks the continuity constraints and enforces them with
//! Lagrange multipliers, and the multipliers turn out to be the other
//! formulation's variables: hybridizing the primal scheme produces the
//! mixed face fluxes, hybridizing the mixed scheme produces the primal face
//! means.

use equiflux::local_spaces::Mobility;
use equiflux::mesh::Mesh;
use equiflux::schemes::{
    solve_hybrid_mixed, solve_hybrid_primal, solve_mixed, solve_primal, LoadField, SchemeConfig,
};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let mesh = Mesh::structured_triangulation(6)?;
    let mobility = Mobility::random_spd_per_cell(&mesh, 7, 1.0, 1e3)?;
    let config = SchemeConfig::new(LoadField::SinSin);

    let primal = solve_primal(&mesh, &mobility, &config)?;
    let mixed = solve_mixed(&mesh, &mobility, &config)?;
    let hybrid_primal = solve_hybrid_primal(&mesh, &mobility, &config)?;
    let hybrid_mixed = solve_hybrid_mixed(&mesh, &mobility, &config)?;

    // The multiplier of the hybridized primal scheme is the normal flux.
    let mut worst_flux = 0.0f64;
    for f in 0..mesh.n_faces() {
        worst_flux = worst_flux.max((hybrid_primal.face_flux[f] - mixed.face_flux[f]).abs());
    }
    println!("hybrid-primal multiplier vs mixed face flux: max difference {worst_flux:.3e}");

    // The multiplier of the hybridized mixed scheme is the potential trace.
    let mut worst_trace = 0.0f64;
    for f in 0..mesh.n_faces() {
        worst_trace =
            worst_trace.max((hybrid_mixed.face_potential[f] - primal.face_means[f]).abs());
    }
    println!("hybrid-mixed multiplier vs primal face means: max difference {worst_trace:.3e}");

    // Per (cell, face) the primal multipliers of the two incident cells
    // cancel exactly: that is the interface condition they enforce.
    let f = mesh.interior_faces()[0];
    let (k0, k1) = mesh.face(f).cells;
    let k1 = k1.expect("interior face");
    let local = |k: usize| {
        mesh.cell(k)
            .faces
            .iter()
            .position(|fo| fo.face == f)
            .unwrap()
    };
    let m0 = hybrid_primal.multipliers[k0][local(k0)];
    let m1 = hybrid_primal.multipliers[k1][local(k1)];
    println!(
        "\ninterior face {f}: multiplier {m0:+.10} from cell {k0}, {m1:+.10} from cell {k1}, sum {:.1e}",
        m0 + m1
    );

    // Either hybridization reproduces its parent's own unknowns too.
    let mut worst_mean = 0.0f64;
    for c in 0..mesh.n_cells() {
        worst_mean = worst_mean
            .max((hybrid_primal.cell_means[c] - primal.cell_means[c]).abs())
            .max((hybrid_mixed.cell_means[c] - mixed.cell_means[c]).abs());
    }
    println!("\ncell means across all four solves: max difference {worst_mean:.3e}");
    Ok(())
}
