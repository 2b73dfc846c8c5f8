//! Builds meshes three ways (structured, from JSON, by refinement) and
//! prints the geometric bookkeeping the solvers depend on: face incidence,
//! outward normals, orientation signs, and barycenter distances.

use equiflux::mesh::Mesh;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    // A structured n x n triangulation of the unit square.
    let mesh = Mesh::structured_triangulation(4)?;
    println!(
        "structured 4x4: {} cells, {} faces ({} interior, {} boundary), h = {:.4}",
        mesh.n_cells(),
        mesh.n_faces(),
        mesh.interior_faces().len(),
        mesh.boundary_faces().len(),
        mesh.h_max()
    );
    let area: f64 = mesh.cells().iter().map(|c| c.volume).sum();
    println!("cell areas sum to {area:.16} (unit square)");

    // The same validation path accepts JSON, the format the CLI reads.
    let json = r#"{
        "dim": 2,
        "vertices": [[0,0],[1,0],[1,1],[0,1],[0.5,0.5]],
        "cells": [[0,1,4],[1,2,4],[2,3,4],[3,0,4]]
    }"#;
    let quad = Mesh::from_json_str(json)?;
    println!(
        "\nJSON mesh: {} triangles around an interior vertex, area {:.3}",
        quad.n_cells(),
        quad.domain_measure()
    );

    // Per-cell face data: local face i is opposite local vertex i, normals
    // point outward, and n_KF = orientation * n_F ties the two incident
    // cells of an interior face together.
    let c = 0;
    let cell = quad.cell(c);
    println!("\ncell {c}: vertices {:?}, barycenter ({:.3}, {:.3})", cell.vertices, cell.barycenter.x, cell.barycenter.y);
    for fo in &cell.faces {
        let face = quad.face(fo.face);
        println!(
            "  face {} (|F| = {:.4}): outward normal ({:+.3}, {:+.3}), orientation {:+.0}, distance {:.4}, boundary: {}",
            fo.face, fo.measure, fo.normal.x, fo.normal.y, fo.orientation, fo.distance, face.is_boundary()
        );
    }

    // Interior faces see exactly two cells with opposite outward normals.
    let f = quad.interior_faces()[0];
    let (k0, k1) = quad.face(f).cells;
    let k1 = k1.expect("interior face has two cells");
    let n0 = quad.cell(k0).faces.iter().find(|fo| fo.face == f).unwrap().normal;
    let n1 = quad.cell(k1).faces.iter().find(|fo| fo.face == f).unwrap().normal;
    println!(
        "\ninterior face {f} between cells {k0} and {k1}: n_K0F + n_K1F = ({:+.1e}, {:+.1e})",
        (n0 + n1).x,
        (n0 + n1).y
    );

    // Uniform refinement quarters every triangle.
    let fine = mesh.uniform_refine()?;
    println!(
        "\nrefined: {} cells, h = {:.4} (was {:.4})",
        fine.n_cells(),
        fine.h_max(),
        mesh.h_max()
    );
    Ok(())
}
