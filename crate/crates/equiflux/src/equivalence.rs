//! Numerical certification of the equivalences between the formulations.
//!
//! Every lemma-level claim becomes a measured residual: normal-trace
//! continuity of the flux, face-mean continuity of the potential, exact
//! elementwise balance with the projected load, the constitutive relation
//! between flux and potential, membership in the target formulation's own
//! linear system, and pairwise agreement of fluxes and means across the
//! formulations. Reports never throw on nonzero residuals; thresholds live
//! with the caller so the auditor stays usable on third-party data.
//!
//! Residual fields are absolute quantities; the norms needed to scale them
//! are recorded alongside so a report is self-contained.

use crate::local_spaces::{CompanionFlavor, CompanionSpace, LocalSpaceError, Mobility};
use crate::mesh::{Mesh, MeshError};
use crate::polyquad::{self, PolyError};
use crate::schemes::{
    self, flux_coeffs_from_face_values, LoadField, LocalOperators, MixedSolution,
    HybridMixedSolution, PrimalSolution, Scheme, SchemeConfig, SchemeError, SolutionDump,
    UnifiedSolution,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Smallest admissible scale: keeps zero problems passing with exactly
/// zero residuals while any genuine noise against a zero norm still fails.
const SCALE_FLOOR: f64 = f64::MIN_POSITIVE;

/// Errors of the audit entry points. Residual magnitudes are never errors.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Local(#[from] LocalSpaceError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Quadrature(#[from] PolyError),
    #[error("solution file rejected: {0}")]
    Schema(String),
    #[error("{what}: got {got}, expected {expected}")]
    DimensionMismatch {
        what: String,
        got: usize,
        expected: usize,
    },
}

/// All residuals the equivalence lemmas assert to vanish, plus the norms
/// used to scale them.
///
/// `system_residual` is already relative (algebraic residual of the
/// scheme's own linear system over the size of that system's data); every
/// other residual is absolute and pairs with the recorded norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceReport {
    /// Max over interior faces of the normal-trace jump of the cellwise
    /// flux `P(b grad u_K)`.
    pub hdiv_jump_max: f64,
    /// Max over faces of the face-mean jump of the potential (boundary
    /// faces contribute their trace, certifying the Dirichlet condition).
    pub potential_jump_max: f64,
    /// Max over cells of `|div sigma + pi0_K f|` for the face-based flux.
    pub divergence_residual_max: f64,
    /// Broken L2 distance between the face-based flux and `b grad` of the
    /// potential reconstruction. Zero for enriched-space reconstructions;
    /// genuinely nonzero for strong-bubble companions.
    pub constitutive_residual: f64,
    /// Relative algebraic residual in the scheme's own global system.
    pub system_residual: f64,
    /// Worst pairwise broken-L2 flux gap in a cross-scheme comparison
    /// (zero when a single solution is audited).
    pub cross_scheme_flux_gap: f64,
    /// Worst pairwise cell-mean gap in a cross-scheme comparison.
    pub cross_scheme_mean_gap: f64,
    /// Broken L2 norm of the face-based flux.
    pub flux_norm: f64,
    /// Broken L2 norm of the potential reconstruction.
    pub potential_norm: f64,
    /// L2 norm of the load.
    pub load_norm: f64,
}

impl EquivalenceReport {
    /// A report with every field zero (the zero solution of a zero
    /// problem).
    pub fn zeros() -> EquivalenceReport {
        EquivalenceReport {
            hdiv_jump_max: 0.0,
            potential_jump_max: 0.0,
            divergence_residual_max: 0.0,
            constitutive_residual: 0.0,
            system_residual: 0.0,
            cross_scheme_flux_gap: 0.0,
            cross_scheme_mean_gap: 0.0,
            flux_norm: 0.0,
            potential_norm: 0.0,
            load_norm: 0.0,
        }
    }

    /// Checks the report against relative tolerances. When
    /// `strong_companion` is set the constitutive residual is expected to
    /// be nonzero and is not graded.
    pub fn passes(&self, tol: &Tolerances, strong_companion: bool) -> bool {
        let flux_scale = self.flux_norm.max(SCALE_FLOOR);
        let pot_scale = self.potential_norm.max(SCALE_FLOOR);
        let load_scale = self.load_norm.max(SCALE_FLOOR);
        self.hdiv_jump_max <= tol.hdiv_rel * flux_scale
            && self.potential_jump_max <= tol.potential_jump_rel * pot_scale
            && self.divergence_residual_max <= tol.divergence_rel * load_scale
            && (strong_companion
                || self.constitutive_residual <= tol.constitutive_rel * flux_scale)
            && self.system_residual <= tol.system_rel
            && self.cross_scheme_flux_gap <= tol.flux_gap_rel
            && self.cross_scheme_mean_gap <= tol.mean_gap_rel
    }
}

/// Relative pass thresholds. The defaults are the certification levels
/// used by the test suite and the `verify` command.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub hdiv_rel: f64,
    pub potential_jump_rel: f64,
    pub divergence_rel: f64,
    pub constitutive_rel: f64,
    pub system_rel: f64,
    pub flux_gap_rel: f64,
    pub mean_gap_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances {
            hdiv_rel: 1e-11,
            potential_jump_rel: 1e-11,
            divergence_rel: 1e-12,
            constitutive_rel: 1e-11,
            system_rel: 1e-10,
            flux_gap_rel: 1e-10,
            mean_gap_rel: 1e-10,
        }
    }
}

/// One solution as the auditor sees it: a face-based flux, cell means, and
/// a cellwise potential in either the enriched or the strong-companion
/// basis.
pub struct SolutionView<'a> {
    pub scheme: &'a str,
    pub strong_companion: bool,
    pub face_flux: &'a [f64],
    pub cell_means: &'a [f64],
    pub coeffs: &'a [DVector<f64>],
}

impl<'a> SolutionView<'a> {
    /// View of a unified solve result. Strong-bubble projection runs are
    /// audited through their companion coefficients, everything else
    /// through the enriched reconstruction.
    pub fn of_unified(u: &'a UnifiedSolution) -> SolutionView<'a> {
        match (&u.scheme, &u.companion_coeffs) {
            (Scheme::Projection(CompanionFlavor::StrongBubble), Some(comp)) => SolutionView {
                scheme: u.scheme.name(),
                strong_companion: true,
                face_flux: &u.face_flux,
                cell_means: &u.cell_means,
                coeffs: comp,
            },
            _ => SolutionView {
                scheme: u.scheme.name(),
                strong_companion: false,
                face_flux: &u.face_flux,
                cell_means: &u.cell_means,
                coeffs: &u.potential_coeffs,
            },
        }
    }
}

/// Names accepted in dump files.
const SCHEME_NAMES: [&str; 6] = [
    "primal",
    "mixed",
    "hybrid-primal",
    "hybrid-mixed",
    "condensed",
    "projection",
];

/// Computes every report field from raw coefficients.
pub fn report_for(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
    view: &SolutionView,
) -> Result<EquivalenceReport, AuditError> {
    let ops = LocalOperators::build(mesh, mobility, load)?;
    report_with_ops(mesh, mobility, load, &ops, view)
}

pub(crate) fn report_with_ops(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
    ops: &LocalOperators,
    view: &SolutionView,
) -> Result<EquivalenceReport, AuditError> {
    let n_cells = mesh.n_cells();
    let d = mesh.dim();
    check_len(view.face_flux.len(), mesh.n_faces(), "face_flux")?;
    check_len(view.cell_means.len(), n_cells, "cell_mean")?;
    check_len(view.coeffs.len(), n_cells, "cell_coeffs")?;
    if view.strong_companion && d != 2 {
        return Err(AuditError::Schema(
            "strong-bubble companions exist on triangles only".to_string(),
        ));
    }

    // Per-cell data: dofs of the potential, its projected gradient (the
    // certified flux), and the face-based flux in local coordinates.
    let mut companions = Vec::with_capacity(if view.strong_companion { n_cells } else { 0 });
    if view.strong_companion {
        for c in 0..n_cells {
            companions.push(CompanionSpace::new(
                mesh,
                c,
                mobility,
                CompanionFlavor::StrongBubble,
            )?);
        }
    }
    let mut pot_dofs = Vec::with_capacity(n_cells);
    let mut sigma_pot = Vec::with_capacity(n_cells);
    let mut sigma_faces = Vec::with_capacity(n_cells);
    for (c, coeffs) in view.coeffs.iter().enumerate() {
        check_len(coeffs.len(), d + 2, "cell_coeffs row")?;
        let cellops = ops.cell(c);
        let dofs = if view.strong_companion {
            // Strong companions carry their own basis; the certified flux
            // is the weighted projection of `b grad x`, evaluated through
            // cellwise quadrature moments. The weighted Gram matrix is
            // block diagonal (`|K| b` against the constant members, eta
            // against the radial one), so the linear block reduces to the
            // mean gradient and the radial coefficient to the radial
            // moment over eta. The dof-based moment formula computes the
            // same projection but through a cancelling difference that
            // strong anisotropy amplifies.
            let comp = &companions[c];
            let cell = mesh.cell(c);
            let xbar = cell.barycenter;
            let mut sigma = DVector::zeros(d + 1);
            for j in 0..d {
                sigma[j] = polyquad::integrate_cell(mesh, c, 3, |x| {
                    comp.gradient(coeffs, x)[j]
                })? / cell.volume;
            }
            sigma[d] = polyquad::integrate_cell(mesh, c, 3, |x| {
                comp.gradient(coeffs, x).dot(&(x - xbar))
            })? / cellops.flux.eta();
            sigma_pot.push(sigma);
            comp.dofs_of(coeffs)
        } else {
            // Enriched-basis coefficients: `b grad u` already lies in the
            // flux space, so the projection is the exact basis map.
            sigma_pot.push(cellops.potential.flux_coeffs(coeffs));
            cellops.potential.dofs_of(coeffs)
        };
        sigma_faces.push(flux_coeffs_from_face_values(
            mesh,
            ops,
            c,
            view.face_flux,
        )?);
        pot_dofs.push(dofs);
    }

    // Normal-trace jumps of the cellwise certified flux.
    let mut hdiv_jump_max = 0.0f64;
    for &f in mesh.interior_faces() {
        let (c0, c1) = (mesh.face(f).cells.0, mesh.face(f).cells.1.unwrap());
        let fi0 = schemes::local_face_index(mesh, c0, f);
        let fi1 = schemes::local_face_index(mesh, c1, f);
        let t0 = ops.cell(c0).flux.normal_trace(&sigma_pot[c0], fi0);
        let t1 = ops.cell(c1).flux.normal_trace(&sigma_pot[c1], fi1);
        hdiv_jump_max = hdiv_jump_max.max((t0 + t1).abs());
    }

    // Face-mean jumps of the potential; boundary faces contribute their
    // trace (homogeneous Dirichlet condition).
    let mut potential_jump_max = 0.0f64;
    for f in 0..mesh.n_faces() {
        let face = mesh.face(f);
        let c0 = face.cells.0;
        let fi0 = schemes::local_face_index(mesh, c0, f);
        let v0 = pot_dofs[c0][1 + fi0];
        let jump = match face.cells.1 {
            Some(c1) => {
                let fi1 = schemes::local_face_index(mesh, c1, f);
                v0 - pot_dofs[c1][1 + fi1]
            }
            None => v0,
        };
        potential_jump_max = potential_jump_max.max(jump.abs());
    }

    // Elementwise balance of the certified flux against the projected
    // load, and the norms. The per-cell flux keeps the balance sharp; any
    // divergence recomputed from the averaged face values would absorb the
    // surface-to-volume amplified trace jumps instead.
    let mut divergence_residual_max = 0.0f64;
    let mut constitutive_sq = 0.0;
    let mut flux_norm_sq = 0.0;
    let mut potential_norm_sq = 0.0;
    for c in 0..n_cells {
        let cellops = ops.cell(c);
        let div = cellops.flux.divergence(&sigma_pot[c]);
        divergence_residual_max = divergence_residual_max.max((div + ops.fbar(c)).abs());
        flux_norm_sq += quadratic_form(cellops.flux.gram_unweighted(), &sigma_faces[c]);
        if view.strong_companion {
            let b = *cellops.flux.mobility();
            let comp = &companions[c];
            let coeffs = &view.coeffs[c];
            let sf = &sigma_faces[c];
            constitutive_sq += polyquad::integrate_cell(mesh, c, 6, |x| {
                let sigma = cellops.flux.eval(sf, x);
                let bgrad = b * comp.gradient(coeffs, x);
                (sigma - bgrad).norm_squared()
            })?;
            potential_norm_sq +=
                polyquad::integrate_cell(mesh, c, 6, |x| comp.eval(coeffs, x).powi(2))?;
        } else {
            let diff = &sigma_faces[c] - cellops.potential.flux_coeffs(&view.coeffs[c]);
            constitutive_sq += quadratic_form(cellops.flux.gram_unweighted(), &diff);
            potential_norm_sq += cellops.potential.norm_l2_squared(mesh, &view.coeffs[c])?;
        }
    }

    let system_residual = system_residual(mesh, ops, view, &pot_dofs)?;

    Ok(EquivalenceReport {
        hdiv_jump_max,
        potential_jump_max,
        divergence_residual_max,
        constitutive_residual: constitutive_sq.max(0.0).sqrt(),
        system_residual,
        cross_scheme_flux_gap: 0.0,
        cross_scheme_mean_gap: 0.0,
        flux_norm: flux_norm_sq.max(0.0).sqrt(),
        potential_norm: potential_norm_sq.max(0.0).sqrt(),
        load_norm: load.norm_l2(mesh)?,
    })
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<(), AuditError> {
    if got != expected {
        return Err(AuditError::DimensionMismatch {
            what: what.to_string(),
            got,
            expected,
        });
    }
    Ok(())
}

fn quadratic_form(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(g * v))
}

/// Relative residual of the solution in its own scheme's global system.
fn system_residual(
    mesh: &Mesh,
    ops: &LocalOperators,
    view: &SolutionView,
    pot_dofs: &[DVector<f64>],
) -> Result<f64, AuditError> {
    let numbering = schemes::FaceNumbering::new(mesh);
    let (a, f, x) = match view.scheme {
        "mixed" | "hybrid-mixed" => {
            let (a, f) = schemes::mixed_system_from(mesh, ops)?;
            let mut x = DVector::zeros(a.nrows());
            for (i, &s) in view.face_flux.iter().enumerate() {
                x[i] = s;
            }
            for (c, &u) in view.cell_means.iter().enumerate() {
                x[mesh.n_faces() + c] = u;
            }
            (a, f, x)
        }
        "primal" | "hybrid-primal" | "condensed" | "projection" => {
            let sys = if view.scheme == "projection" {
                schemes::assemble_projection(mesh, ops, &numbering)
            } else {
                schemes::assemble_primal(mesh, ops, &numbering)
            };
            let (a, f) = sys.to_dense();
            let mut x = DVector::zeros(a.nrows());
            for (c, &u) in view.cell_means.iter().enumerate() {
                x[c] = u;
            }
            // Interior face means, averaged across the two incident cells'
            // potential dofs (they coincide up to certified jumps).
            for &fidx in mesh.interior_faces() {
                let k = numbering.interior_index(fidx).unwrap();
                let (c0, c1) = (mesh.face(fidx).cells.0, mesh.face(fidx).cells.1.unwrap());
                let fi0 = schemes::local_face_index(mesh, c0, fidx);
                let fi1 = schemes::local_face_index(mesh, c1, fidx);
                let d0 = pot_dofs[c0][1 + fi0];
                let d1 = pot_dofs[c1][1 + fi1];
                x[mesh.n_cells() + k] = 0.5 * (d0 + d1);
            }
            (a, f, x)
        }
        other => {
            return Err(AuditError::Schema(format!(
                "unknown scheme '{other}' (expected one of {SCHEME_NAMES:?})"
            )))
        }
    };
    let ax = &a * &x;
    let r = (&ax - &f).norm();
    let scale = f.norm().max(ax.norm()).max(SCALE_FLOOR);
    Ok(r / scale)
}

/// Builds the flux certified by a primal solution, `sigma = b grad u` and
/// `u = pi0(u)` cellwise, and reports every equivalence residual.
pub fn primal_to_mixed(
    primal: &PrimalSolution,
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
) -> Result<(MixedSolution, EquivalenceReport), AuditError> {
    let ops = LocalOperators::build(mesh, mobility, load)?;
    check_len(primal.cell_coeffs.len(), mesh.n_cells(), "cell_coeffs")?;
    let flux_coeffs: Vec<DVector<f64>> = (0..mesh.n_cells())
        .map(|c| ops.cell(c).potential.flux_coeffs(&primal.cell_coeffs[c]))
        .collect();
    let face_flux = schemes::face_flux_from_cells(mesh, &ops, &flux_coeffs);
    let cell_radial: Vec<f64> = flux_coeffs.iter().map(|c| c[mesh.dim()]).collect();
    let mixed = MixedSolution {
        face_flux,
        cell_radial,
        cell_means: primal.cell_means.clone(),
    };
    // Certify against the mixed formulation: the flux must be a legitimate
    // mixed solution, so the view is graded in the mixed system.
    let view = SolutionView {
        scheme: "mixed",
        strong_companion: false,
        face_flux: &mixed.face_flux,
        cell_means: &mixed.cell_means,
        coeffs: &primal.cell_coeffs,
    };
    let report = report_with_ops(mesh, mobility, load, &ops, &view)?;
    Ok((mixed, report))
}

/// Rebuilds the potential certified by a hybrid mixed solution: the unique
/// enriched member with the solved cell mean and face multiplier traces.
/// The report grades it in the primal system.
pub fn mixed_to_primal(
    hybrid: &HybridMixedSolution,
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
) -> Result<(PrimalSolution, EquivalenceReport), AuditError> {
    let ops = LocalOperators::build(mesh, mobility, load)?;
    check_len(hybrid.cell_flux_coeffs.len(), mesh.n_cells(), "flux coeffs")?;
    check_len(hybrid.face_potential.len(), mesh.n_faces(), "face potential")?;
    let mut cell_coeffs = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let lambda: Vec<f64> = mesh
            .cell(c)
            .faces
            .iter()
            .map(|fo| hybrid.face_potential[fo.face])
            .collect();
        cell_coeffs.push(schemes::potential_from_face_means(mesh, &ops, c, &lambda));
    }
    let primal = PrimalSolution {
        cell_coeffs,
        cell_means: hybrid.cell_means.clone(),
        face_means: hybrid.face_potential.clone(),
    };
    let face_flux = schemes::face_flux_from_cells(mesh, &ops, &hybrid.cell_flux_coeffs);
    let view = SolutionView {
        scheme: "primal",
        strong_companion: false,
        face_flux: &face_flux,
        cell_means: &primal.cell_means,
        coeffs: &primal.cell_coeffs,
    };
    let report = report_with_ops(mesh, mobility, load, &ops, &view)?;
    Ok((primal, report))
}

/// One pairwise comparison in the cross-scheme matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairGap {
    pub a: String,
    pub b: String,
    /// Relative broken-L2 distance of the fluxes.
    pub flux_gap: f64,
    /// Relative volume-weighted distance of the cell means.
    pub mean_gap: f64,
}

/// Outcome of solving every formulation on one problem and comparing.
#[derive(Debug, Clone)]
pub struct FourWayOutcome {
    /// Per-scheme conformity reports, in solve order.
    pub reports: Vec<(String, EquivalenceReport)>,
    /// All pairwise gaps.
    pub pairwise: Vec<PairGap>,
    pub flux_gap_max: f64,
    pub mean_gap_max: f64,
}

impl FourWayOutcome {
    /// True when every report and every gap is within tolerance.
    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.reports.iter().all(|(name, r)| {
            r.passes(tol, name == "projection-strong")
        }) && self.flux_gap_max <= tol.flux_gap_rel
            && self.mean_gap_max <= tol.mean_gap_rel
    }
}

/// Solves all formulations on the same problem and certifies the full
/// equivalence diagram: per-scheme conformity plus pairwise flux and mean
/// agreement.
pub fn four_way(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
) -> Result<FourWayOutcome, AuditError> {
    let projection_flavor = if mesh.dim() == 2 {
        CompanionFlavor::StrongBubble
    } else {
        CompanionFlavor::WeakBubble
    };
    let runs = [
        Scheme::Primal,
        Scheme::Mixed,
        Scheme::HybridPrimal,
        Scheme::HybridMixed,
        Scheme::Condensed,
        Scheme::Projection(projection_flavor),
    ];
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    let mut solutions = Vec::with_capacity(runs.len());
    let mut reports = Vec::with_capacity(runs.len());
    for scheme in runs {
        let sol = schemes::solve_unified(mesh, mobility, config, scheme)?;
        let label = match scheme {
            Scheme::Projection(CompanionFlavor::StrongBubble) => "projection-strong".to_string(),
            Scheme::Projection(CompanionFlavor::WeakBubble) => "projection-weak".to_string(),
            other => other.name().to_string(),
        };
        let report = report_with_ops(
            mesh,
            mobility,
            &config.load,
            &ops,
            &SolutionView::of_unified(&sol),
        )?;
        reports.push((label.clone(), report));
        solutions.push((label, sol));
    }

    let mut pairwise = Vec::new();
    let mut flux_gap_max = 0.0f64;
    let mut mean_gap_max = 0.0f64;
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let (ref la, ref sa) = solutions[i];
            let (ref lb, ref sb) = solutions[j];
            let flux_gap = flux_gap(mesh, &ops, sa, sb);
            let mean_gap = mean_gap(mesh, sa, sb);
            flux_gap_max = flux_gap_max.max(flux_gap);
            mean_gap_max = mean_gap_max.max(mean_gap);
            pairwise.push(PairGap {
                a: la.clone(),
                b: lb.clone(),
                flux_gap,
                mean_gap,
            });
        }
    }
    Ok(FourWayOutcome {
        reports,
        pairwise,
        flux_gap_max,
        mean_gap_max,
    })
}

/// Relative broken-L2 distance between the fluxes of two solutions.
fn flux_gap(mesh: &Mesh, ops: &LocalOperators, a: &UnifiedSolution, b: &UnifiedSolution) -> f64 {
    let mut diff_sq = 0.0;
    let mut norm_a_sq = 0.0;
    let mut norm_b_sq = 0.0;
    for c in 0..mesh.n_cells() {
        let g = ops.cell(c).flux.gram_unweighted();
        let d = &a.flux_coeffs[c] - &b.flux_coeffs[c];
        diff_sq += quadratic_form(g, &d);
        norm_a_sq += quadratic_form(g, &a.flux_coeffs[c]);
        norm_b_sq += quadratic_form(g, &b.flux_coeffs[c]);
    }
    let scale = norm_a_sq.max(norm_b_sq).sqrt().max(SCALE_FLOOR);
    diff_sq.max(0.0).sqrt() / scale
}

/// Relative volume-weighted distance between the cell means of two
/// solutions.
fn mean_gap(mesh: &Mesh, a: &UnifiedSolution, b: &UnifiedSolution) -> f64 {
    let mut diff_sq = 0.0;
    let mut norm_a_sq = 0.0;
    let mut norm_b_sq = 0.0;
    for c in 0..mesh.n_cells() {
        let vol = mesh.cell(c).volume;
        diff_sq += vol * (a.cell_means[c] - b.cell_means[c]).powi(2);
        norm_a_sq += vol * a.cell_means[c].powi(2);
        norm_b_sq += vol * b.cell_means[c].powi(2);
    }
    let scale = norm_a_sq.max(norm_b_sq).sqrt().max(SCALE_FLOOR);
    diff_sq.sqrt() / scale
}

/// Result of auditing a solution file.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub scheme: String,
    pub companion: Option<String>,
    pub report: EquivalenceReport,
}

/// Recomputes every report field from the raw coefficients in a dump file.
pub fn audit_solution_files(
    mesh_path: &Path,
    solution_path: &Path,
    mobility_path: Option<&Path>,
    load: &LoadField,
) -> Result<AuditOutcome, AuditError> {
    let mesh_text = read(mesh_path)?;
    let mesh = Mesh::from_json_str(&mesh_text)?;
    let mobility = match mobility_path {
        Some(p) => {
            let text = read(p)?;
            Mobility::from_json_str(&mesh, &text)?
        }
        None => Mobility::identity(&mesh),
    };
    let dump_text = read(solution_path)?;
    let dump: SolutionDump =
        serde_json::from_str(&dump_text).map_err(|e| AuditError::Schema(e.to_string()))?;
    audit_dump(&mesh, &mobility, load, &dump)
}

/// Audits an in-memory dump against a mesh and mobility.
pub fn audit_dump(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
    dump: &SolutionDump,
) -> Result<AuditOutcome, AuditError> {
    if !SCHEME_NAMES.contains(&dump.scheme.as_str()) {
        return Err(AuditError::Schema(format!(
            "unknown scheme '{}' (expected one of {SCHEME_NAMES:?})",
            dump.scheme
        )));
    }
    let strong = match dump.companion.as_deref() {
        None => false,
        Some("weak") => false,
        Some("strong") => true,
        Some(other) => {
            return Err(AuditError::Schema(format!(
                "unknown companion '{other}' (expected weak or strong)"
            )))
        }
    };
    if dump.companion.is_some() && dump.scheme != "projection" {
        return Err(AuditError::Schema(
            "companion applies to projection dumps only".to_string(),
        ));
    }
    let coeffs: Vec<DVector<f64>> = dump
        .cell_coeffs
        .iter()
        .map(|row| DVector::from_vec(row.clone()))
        .collect();
    let view = SolutionView {
        scheme: &dump.scheme,
        strong_companion: strong,
        face_flux: &dump.face_flux,
        cell_means: &dump.cell_mean,
        coeffs: &coeffs,
    };
    let report = report_for(mesh, mobility, load, &view)?;
    Ok(AuditOutcome {
        scheme: dump.scheme.clone(),
        companion: dump.companion.clone(),
        report,
    })
}

fn read(path: &Path) -> Result<String, AuditError> {
    std::fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.display().to_string(),
        source,
    })
}
