//! Solution dumps are falsifiable artifacts: the auditor recomputes every
//! certificate from the raw coefficients. This example dumps a solve to
//! JSON, audits it (clean pass), then corrupts one face degree of freedom
//! and audits again (the conformity certificates fail loudly).

use equiflux::equivalence::{self, Tolerances};
use equiflux::harness::{dump_of, dump_to_json};
use equiflux::local_spaces::{LocalPotentialSpace, Mobility};
use equiflux::mesh::Mesh;
use equiflux::schemes::{solve_unified, LoadField, Scheme, SchemeConfig, SolutionDump};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let mesh = Mesh::structured_triangulation(4)?;
    let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 100.0, 0.3)?;
    let load = LoadField::Constant(1.0);
    let config = SchemeConfig::new(load.clone());

    let sol = solve_unified(&mesh, &mobility, &config, Scheme::Primal)?;
    let dump = dump_of(&mesh, &mobility, &load, &sol)?;

    let dir = std::env::temp_dir().join("equiflux_solution_audit");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("primal.json");
    std::fs::write(&path, dump_to_json(&dump))?;
    println!("wrote {}", path.display());

    let tol = Tolerances::default();
    let grade = |dump: &SolutionDump| -> Result<(), Box<dyn Error>> {
        let outcome = equivalence::audit_dump(&mesh, &mobility, &load, dump)?;
        let r = &outcome.report;
        println!(
            "  hdiv jump {:.3e} (<= {:.0e} * {:.3e}), potential jump {:.3e}, divergence {:.3e}",
            r.hdiv_jump_max,
            tol.hdiv_rel,
            r.flux_norm,
            r.potential_jump_max,
            r.divergence_residual_max
        );
        println!(
            "  verdict: {}",
            if r.passes(&tol, false) { "PASS" } else { "FAIL" }
        );
        Ok(())
    };

    println!("\naudit of the clean dump:");
    let clean: SolutionDump = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    grade(&clean)?;

    // Corrupt one interior face mean by 1e-3 through the dof map, the way a
    // buggy solver (or a tampered file) would: the potential stays in the
    // space, but its face means no longer match across the face.
    let mut corrupt = clean.clone();
    let c = 0;
    let pot = LocalPotentialSpace::new(&mesh, c, &mobility)?;
    let coeffs = nalgebra::DVector::from_vec(corrupt.cell_coeffs[c].clone());
    let mut dofs = pot.dofs_of(&coeffs);
    dofs[1] += 1e-3;
    corrupt.cell_coeffs[c] = pot.potential_from_dofs(&dofs)?.as_slice().to_vec();

    println!("\naudit after perturbing one face mean of cell {c} by 1e-3:");
    grade(&corrupt)?;
    Ok(())
}
