//! Manufactured-solution convergence studies and the command line interface.
//!
//! The harness closes the loop around the library: `solve` runs one
//! formulation and dumps a self-auditing solution file, `verify` runs every
//! formulation on the same problem and grades the full equivalence diagram,
//! `convergence` measures observed convergence orders against manufactured
//! solutions, and `audit` recomputes the residual report of a dump file
//! from its raw coefficients.
//!
//! All file output goes through a hand-rolled JSON writer that prints every
//! float as `{:.16e}` (17 significant digits, lossless for f64), so repeated
//! runs produce byte-identical files and readers recover the exact bits.
//!
//! Exit codes: 0 when every graded certificate passes, 1 when a residual or
//! gap exceeds its tolerance, 2 for input and usage errors.

use crate::equivalence::{
    self, AuditError, AuditOutcome, EquivalenceReport, FourWayOutcome, SolutionView, Tolerances,
};
use crate::local_spaces::{CompanionFlavor, LocalSpaceError, Mobility};
use crate::mesh::{Mesh, MeshError};
use crate::polyquad::{self, PolyError};
use crate::schemes::{
    LoadField, LocalOperators, Scheme, SchemeConfig, SchemeError, SolutionDump, SolverKind,
    UnifiedSolution,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, Vector3};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// Errors of the harness layer.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Local(#[from] LocalSpaceError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Quadrature(#[from] PolyError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("{0}")]
    Usage(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CaseKind {
    SinSin,
    Quadratic,
}

/// A manufactured solution on the unit square with uniform SPD mobility:
/// the exact potential, flux, and matching load are all known in closed
/// form, so discretization errors can be measured directly.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    kind: CaseKind,
    b11: f64,
    b12: f64,
    b22: f64,
}

impl ManufacturedCase {
    /// `u = sin(pi x) sin(pi y)` with identity mobility.
    pub fn sinsin() -> ManufacturedCase {
        ManufacturedCase {
            kind: CaseKind::SinSin,
            b11: 1.0,
            b12: 0.0,
            b22: 1.0,
        }
    }

    /// `u = x (1 - x) y (1 - y)` with identity mobility.
    pub fn quadratic() -> ManufacturedCase {
        ManufacturedCase {
            kind: CaseKind::Quadratic,
            b11: 1.0,
            b12: 0.0,
            b22: 1.0,
        }
    }

    /// Replaces the mobility by the uniform SPD matrix
    /// `[[b11, b12], [b12, b22]]`.
    pub fn with_uniform_mobility(
        mut self,
        b11: f64,
        b12: f64,
        b22: f64,
    ) -> Result<ManufacturedCase, HarnessError> {
        if !(b11 > 0.0 && b11 * b22 - b12 * b12 > 0.0) {
            return Err(HarnessError::Usage(
                "manufactured mobility must be symmetric positive definite".to_string(),
            ));
        }
        self.b11 = b11;
        self.b12 = b12;
        self.b22 = b22;
        Ok(self)
    }

    /// Name used in tables and CLI arguments.
    pub fn name(&self) -> &'static str {
        match self.kind {
            CaseKind::SinSin => "sinsin",
            CaseKind::Quadratic => "quadratic",
        }
    }

    /// Exact potential at `x`.
    pub fn exact_potential(&self, x: &Vector3<f64>) -> f64 {
        match self.kind {
            CaseKind::SinSin => {
                (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin()
            }
            CaseKind::Quadratic => x.x * (1.0 - x.x) * x.y * (1.0 - x.y),
        }
    }

    /// Exact gradient of the potential at `x`.
    pub fn exact_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let pi = std::f64::consts::PI;
        match self.kind {
            CaseKind::SinSin => Vector3::new(
                pi * (pi * x.x).cos() * (pi * x.y).sin(),
                pi * (pi * x.x).sin() * (pi * x.y).cos(),
                0.0,
            ),
            CaseKind::Quadratic => Vector3::new(
                (1.0 - 2.0 * x.x) * x.y * (1.0 - x.y),
                x.x * (1.0 - x.x) * (1.0 - 2.0 * x.y),
                0.0,
            ),
        }
    }

    /// Exact flux `sigma = b grad u` at `x`.
    pub fn exact_flux(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let g = self.exact_gradient(x);
        Vector3::new(
            self.b11 * g.x + self.b12 * g.y,
            self.b12 * g.x + self.b22 * g.y,
            0.0,
        )
    }

    /// Matching load `f = -div(b grad u)` at `x`.
    pub fn load_value(&self, x: &Vector3<f64>) -> f64 {
        let pi = std::f64::consts::PI;
        match self.kind {
            CaseKind::SinSin => {
                let ss = (pi * x.x).sin() * (pi * x.y).sin();
                let cc = (pi * x.x).cos() * (pi * x.y).cos();
                pi * pi * ((self.b11 + self.b22) * ss - 2.0 * self.b12 * cc)
            }
            CaseKind::Quadratic => {
                2.0 * self.b11 * x.y * (1.0 - x.y) + 2.0 * self.b22 * x.x * (1.0 - x.x)
                    - 2.0 * self.b12 * (1.0 - 2.0 * x.x) * (1.0 - 2.0 * x.y)
            }
        }
    }

    /// The load as a scheme input. Identity mobility `sinsin` reduces to
    /// the builtin `LoadField::SinSin` (scaled), so the closure is only
    /// needed for general mobility; using one uniformly keeps a single
    /// code path.
    pub fn load(&self) -> LoadField {
        let case = self.clone();
        LoadField::Custom(Arc::new(move |x| case.load_value(x)))
    }

    /// The uniform mobility as a per-mesh field.
    pub fn mobility(&self, mesh: &Mesh) -> Result<Mobility, LocalSpaceError> {
        let b = DMatrix::from_row_slice(2, 2, &[self.b11, self.b12, self.b12, self.b22]);
        Mobility::uniform(mesh, b)
    }
}

/// Broken L2 errors of one solve against a manufactured case.
#[derive(Debug, Clone, Copy)]
pub struct MeasuredErrors {
    /// `|| sigma_h - sigma ||` over the mesh.
    pub flux_error: f64,
    /// `( sum_K |K| (u_K - pi0_K u)^2 )^(1/2)`: cell means against the
    /// projected exact potential.
    pub mean_error: f64,
    /// `|| u_h - u ||` of the potential reconstruction.
    pub potential_error: f64,
}

/// Composite quadrature settings for error integrals: degree 6 on every
/// child after one midpoint refinement (four children per triangle). Exact
/// for the polynomial part; the trigonometric remainder integrates to
/// relative accuracy far below the observable error levels.
const ERROR_QUAD_DEGREE: usize = 6;
const ERROR_QUAD_LEVELS: usize = 1;

/// Measures broken L2 errors of a unified solution against a manufactured
/// case.
pub fn measure_errors(
    mesh: &Mesh,
    mobility: &Mobility,
    case: &ManufacturedCase,
    sol: &UnifiedSolution,
) -> Result<MeasuredErrors, HarnessError> {
    if mesh.dim() != 2 {
        return Err(HarnessError::Usage(
            "manufactured cases are posed on the unit square".to_string(),
        ));
    }
    let ops = LocalOperators::build(mesh, mobility, &case.load())?;
    let mut flux_sq = 0.0;
    let mut mean_sq = 0.0;
    let mut pot_sq = 0.0;
    for c in 0..mesh.n_cells() {
        let cell = mesh.cell(c);
        let flux = &ops.cell(c).flux;
        let pot = &ops.cell(c).potential;
        flux_sq += polyquad::integrate_cell_composite(
            mesh,
            c,
            ERROR_QUAD_DEGREE,
            ERROR_QUAD_LEVELS,
            &|x| (flux.eval(&sol.flux_coeffs[c], x) - case.exact_flux(x)).norm_squared(),
        )?;
        pot_sq += polyquad::integrate_cell_composite(
            mesh,
            c,
            ERROR_QUAD_DEGREE,
            ERROR_QUAD_LEVELS,
            &|x| (pot.eval(&sol.potential_coeffs[c], x) - case.exact_potential(x)).powi(2),
        )?;
        let mean_exact = polyquad::integrate_cell_composite(
            mesh,
            c,
            ERROR_QUAD_DEGREE,
            ERROR_QUAD_LEVELS,
            &|x| case.exact_potential(x),
        )? / cell.volume;
        mean_sq += cell.volume * (sol.cell_means[c] - mean_exact).powi(2);
    }
    Ok(MeasuredErrors {
        flux_error: flux_sq.max(0.0).sqrt(),
        mean_error: mean_sq.max(0.0).sqrt(),
        potential_error: pot_sq.max(0.0).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Convergence tables
// ---------------------------------------------------------------------------

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h_max: f64,
    pub flux_error: f64,
    pub mean_error: f64,
    pub potential_error: f64,
    /// Observed orders against the previous row, `log(e'/e) / log(h'/h)`.
    pub flux_eoc: Option<f64>,
    pub mean_eoc: Option<f64>,
    pub potential_eoc: Option<f64>,
}

/// A manufactured-solution convergence study of one scheme.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub case: String,
    pub scheme: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// The observed orders on the finest pair of levels.
    pub fn final_eocs(&self) -> Option<(f64, f64, f64)> {
        let last = self.rows.last()?;
        Some((last.flux_eoc?, last.mean_eoc?, last.potential_eoc?))
    }
}

fn eoc(e_prev: f64, e_cur: f64, h_prev: f64, h_cur: f64) -> Option<f64> {
    if e_prev > 0.0 && e_cur > 0.0 && h_prev > h_cur {
        Some((e_prev / e_cur).ln() / (h_prev / h_cur).ln())
    } else {
        None
    }
}

/// Runs `scheme` on structured `n x n` meshes for every requested `n` and
/// tabulates errors and observed orders. Needs at least three levels so
/// the table contains two consecutive order estimates.
pub fn run_convergence(
    case: &ManufacturedCase,
    scheme: Scheme,
    ns: &[usize],
    solver: SolverKind,
) -> Result<ConvergenceTable, HarnessError> {
    if ns.len() < 3 {
        return Err(HarnessError::Usage(
            "a convergence study needs at least 3 refinement levels".to_string(),
        ));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(HarnessError::Usage(
            "refinement levels must be strictly increasing and positive".to_string(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ns.len());
    for &n in ns {
        let mesh = Mesh::structured_triangulation(n)?;
        let mobility = case.mobility(&mesh)?;
        let config = SchemeConfig {
            solver,
            load: case.load(),
        };
        let sol = crate::schemes::solve_unified(&mesh, &mobility, &config, scheme)?;
        let errors = measure_errors(&mesh, &mobility, case, &sol)?;
        let h_max = (0..mesh.n_cells())
            .map(|c| mesh.cell(c).diameter)
            .fold(0.0f64, f64::max);
        let (flux_eoc, mean_eoc, potential_eoc) = match rows.last() {
            Some(p) => (
                eoc(p.flux_error, errors.flux_error, p.h_max, h_max),
                eoc(p.mean_error, errors.mean_error, p.h_max, h_max),
                eoc(p.potential_error, errors.potential_error, p.h_max, h_max),
            ),
            None => (None, None, None),
        };
        rows.push(ConvergenceRow {
            n,
            h_max,
            flux_error: errors.flux_error,
            mean_error: errors.mean_error,
            potential_error: errors.potential_error,
            flux_eoc,
            mean_eoc,
            potential_eoc,
        });
    }
    Ok(ConvergenceTable {
        case: case.name().to_string(),
        scheme: scheme.name().to_string(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Deterministic JSON output
// ---------------------------------------------------------------------------

/// Formats a float with 17 significant digits: lossless for f64 and
/// byte-identical across runs.
fn jf(x: f64) -> String {
    format!("{x:.16e}")
}

fn jf_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => jf(v),
        None => "null".to_string(),
    }
}

fn jarr(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| jf(x)).collect();
    format!("[{}]", items.join(","))
}

fn jstr(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Serializes a residual report with pinned field order and float format.
pub fn report_to_json(r: &EquivalenceReport) -> String {
    format!(
        "{{\"hdiv_jump_max\":{},\"potential_jump_max\":{},\"divergence_residual_max\":{},\
         \"constitutive_residual\":{},\"system_residual\":{},\"cross_scheme_flux_gap\":{},\
         \"cross_scheme_mean_gap\":{},\"flux_norm\":{},\"potential_norm\":{},\"load_norm\":{}}}",
        jf(r.hdiv_jump_max),
        jf(r.potential_jump_max),
        jf(r.divergence_residual_max),
        jf(r.constitutive_residual),
        jf(r.system_residual),
        jf(r.cross_scheme_flux_gap),
        jf(r.cross_scheme_mean_gap),
        jf(r.flux_norm),
        jf(r.potential_norm),
        jf(r.load_norm),
    )
}

/// Serializes a solution dump. The output parses back through serde into
/// bit-identical floats.
pub fn dump_to_json(d: &SolutionDump) -> String {
    let mut s = String::from("{");
    s.push_str(&format!("\"scheme\":{},", jstr(&d.scheme)));
    if let Some(c) = &d.companion {
        s.push_str(&format!("\"companion\":{},", jstr(c)));
    }
    s.push_str(&format!("\"face_flux\":{},", jarr(&d.face_flux)));
    s.push_str(&format!("\"cell_mean\":{},", jarr(&d.cell_mean)));
    let rows: Vec<String> = d.cell_coeffs.iter().map(|r| jarr(r)).collect();
    s.push_str(&format!("\"cell_coeffs\":[{}],", rows.join(",")));
    s.push_str(&format!("\"residuals\":{}", report_to_json(&d.residuals)));
    s.push('}');
    s
}

/// Serializes a convergence table.
pub fn table_to_json(t: &ConvergenceTable) -> String {
    let rows: Vec<String> = t
        .rows
        .iter()
        .map(|r| {
            format!(
                "{{\"n\":{},\"h_max\":{},\"flux_error\":{},\"mean_error\":{},\
                 \"potential_error\":{},\"flux_eoc\":{},\"mean_eoc\":{},\"potential_eoc\":{}}}",
                r.n,
                jf(r.h_max),
                jf(r.flux_error),
                jf(r.mean_error),
                jf(r.potential_error),
                jf_opt(r.flux_eoc),
                jf_opt(r.mean_eoc),
                jf_opt(r.potential_eoc),
            )
        })
        .collect();
    format!(
        "{{\"case\":{},\"scheme\":{},\"rows\":[{}]}}",
        jstr(&t.case),
        jstr(&t.scheme),
        rows.join(",")
    )
}

fn tolerances_to_json(t: &Tolerances) -> String {
    format!(
        "{{\"hdiv_rel\":{},\"potential_jump_rel\":{},\"divergence_rel\":{},\
         \"constitutive_rel\":{},\"system_rel\":{},\"flux_gap_rel\":{},\"mean_gap_rel\":{}}}",
        jf(t.hdiv_rel),
        jf(t.potential_jump_rel),
        jf(t.divergence_rel),
        jf(t.constitutive_rel),
        jf(t.system_rel),
        jf(t.flux_gap_rel),
        jf(t.mean_gap_rel),
    )
}

/// Serializes a cross-scheme verification outcome.
pub fn verify_to_json(o: &FourWayOutcome, tol: &Tolerances, pass: bool) -> String {
    let reports: Vec<String> = o
        .reports
        .iter()
        .map(|(name, r)| format!("{}:{}", jstr(name), report_to_json(r)))
        .collect();
    let pairs: Vec<String> = o
        .pairwise
        .iter()
        .map(|p| {
            format!(
                "{{\"a\":{},\"b\":{},\"flux_gap\":{},\"mean_gap\":{}}}",
                jstr(&p.a),
                jstr(&p.b),
                jf(p.flux_gap),
                jf(p.mean_gap)
            )
        })
        .collect();
    format!(
        "{{\"tolerances\":{},\"reports\":{{{}}},\"pairwise\":[{}],\
         \"flux_gap_max\":{},\"mean_gap_max\":{},\"pass\":{}}}",
        tolerances_to_json(tol),
        reports.join(","),
        pairs.join(","),
        jf(o.flux_gap_max),
        jf(o.mean_gap_max),
        pass,
    )
}

/// Serializes an audit outcome.
pub fn audit_to_json(o: &AuditOutcome, tol: &Tolerances, pass: bool) -> String {
    let companion = match &o.companion {
        Some(c) => jstr(c),
        None => "null".to_string(),
    };
    format!(
        "{{\"scheme\":{},\"companion\":{},\"tolerances\":{},\"report\":{},\"pass\":{}}}",
        jstr(&o.scheme),
        companion,
        tolerances_to_json(tol),
        report_to_json(&o.report),
        pass,
    )
}

// ---------------------------------------------------------------------------
// Command line interface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "equiflux",
    version,
    about = "Lowest-order simplicial schemes for anisotropic diffusion, \
             with machine-precision equivalence certificates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one formulation and print a solution dump with its residual
    /// report.
    Solve(SolveArgs),
    /// Solve every formulation on the same problem and grade the full
    /// equivalence diagram (or grade a single dump file with --solution).
    Verify(VerifyArgs),
    /// Run a manufactured-solution convergence study.
    Convergence(ConvergenceArgs),
    /// Recompute the residual report of a dump file from raw coefficients.
    Audit(AuditArgs),
}

/// Where the mesh comes from: a JSON file or a structured triangulation of
/// the unit square.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct MeshSource {
    /// Mesh JSON file: {"dim": d, "vertices": [[..]], "cells": [[..]]}.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Structured n x n triangulation of the unit square (2n^2 triangles).
    #[arg(long, value_name = "N")]
    structured: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Primal,
    Mixed,
    HybridPrimal,
    HybridMixed,
    Condensed,
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CompanionArg {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    /// Dense direct factorization (Cholesky or LU).
    Dense,
    /// Conjugate gradients; applies to the symmetric positive definite
    /// systems, saddle points always factorize directly.
    Cg,
}

impl SolverArg {
    fn to_kind(self) -> SolverKind {
        match self {
            SolverArg::Dense => SolverKind::DenseDirect,
            SolverArg::Cg => SolverKind::cg(),
        }
    }
}

impl SchemeArg {
    fn to_scheme(self, companion: CompanionArg, dim: usize) -> Result<Scheme, HarnessError> {
        Ok(match self {
            SchemeArg::Primal => Scheme::Primal,
            SchemeArg::Mixed => Scheme::Mixed,
            SchemeArg::HybridPrimal => Scheme::HybridPrimal,
            SchemeArg::HybridMixed => Scheme::HybridMixed,
            SchemeArg::Condensed => Scheme::Condensed,
            SchemeArg::Projection => match companion {
                CompanionArg::Weak => Scheme::Projection(CompanionFlavor::WeakBubble),
                CompanionArg::Strong => {
                    if dim != 2 {
                        return Err(HarnessError::Usage(
                            "the strong-bubble companion exists on triangles only; \
                             use --companion weak"
                                .to_string(),
                        ));
                    }
                    Scheme::Projection(CompanionFlavor::StrongBubble)
                }
            },
        })
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Formulation to solve.
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[command(flatten)]
    mesh: MeshSource,
    /// Mobility JSON file; identity when omitted.
    #[arg(long)]
    mobility: Option<PathBuf>,
    /// Load: constant:<c>, sinsin, or linear:a1,...,ad,b.
    #[arg(long, default_value = "constant:1")]
    load: String,
    /// Companion space for the projection scheme.
    #[arg(long, value_enum, default_value_t = CompanionArg::Strong)]
    companion: CompanionArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Dense)]
    solver: SolverArg,
    /// Also write the dump to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    mesh: MeshSource,
    /// Mobility JSON file; identity when omitted.
    #[arg(long)]
    mobility: Option<PathBuf>,
    /// Load: constant:<c>, sinsin, or linear:a1,...,ad,b.
    #[arg(long, default_value = "constant:1")]
    load: String,
    /// Grade this dump file instead of running the cross-scheme matrix.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SolverArg::Dense)]
    solver: SolverArg,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CaseArg {
    Sinsin,
    Quadratic,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    /// Manufactured solution to converge against.
    #[arg(long, value_enum, default_value_t = CaseArg::Sinsin)]
    case: CaseArg,
    /// Formulation to study.
    #[arg(long, value_enum, default_value_t = SchemeArg::Condensed)]
    scheme: SchemeArg,
    /// Companion space for the projection scheme.
    #[arg(long, value_enum, default_value_t = CompanionArg::Strong)]
    companion: CompanionArg,
    /// Number of refinement levels, n = 4, 8, 16, ... (at least 3).
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Dense)]
    solver: SolverArg,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    mesh: MeshSource,
    /// Solution dump file to audit.
    #[arg(long)]
    solution: PathBuf,
    /// Mobility JSON file; identity when omitted.
    #[arg(long)]
    mobility: Option<PathBuf>,
    /// Load: constant:<c>, sinsin, or linear:a1,...,ad,b.
    #[arg(long, default_value = "constant:1")]
    load: String,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_mesh(src: &MeshSource) -> Result<Mesh, HarnessError> {
    match (&src.mesh, src.structured) {
        (Some(path), None) => Ok(Mesh::from_json_str(&read_file(path)?)?),
        (None, Some(n)) => {
            if n == 0 {
                return Err(HarnessError::Usage(
                    "--structured needs n >= 1".to_string(),
                ));
            }
            Ok(Mesh::structured_triangulation(n)?)
        }
        _ => Err(HarnessError::Usage(
            "provide exactly one of --mesh or --structured".to_string(),
        )),
    }
}

fn load_mobility(mesh: &Mesh, path: &Option<PathBuf>) -> Result<Mobility, HarnessError> {
    match path {
        Some(p) => Ok(Mobility::from_json_str(mesh, &read_file(p)?)?),
        None => Ok(Mobility::identity(mesh)),
    }
}

fn parse_load(text: &str, dim: usize) -> Result<LoadField, HarnessError> {
    LoadField::parse(text, dim).map_err(HarnessError::Usage)
}

fn emit(out: &mut dyn Write, file: &Option<PathBuf>, text: &str) -> Result<(), HarnessError> {
    let line = format!("{text}\n");
    out.write_all(line.as_bytes())
        .map_err(|source| HarnessError::Io {
            path: "<stdout>".to_string(),
            source,
        })?;
    if let Some(path) = file {
        write_file(path, &line)?;
    }
    Ok(())
}

/// Builds the on-disk dump of a unified solution, including its residual
/// report. Strong-bubble projection dumps record companion coefficients
/// and mark the basis in `companion`.
pub fn dump_of(
    mesh: &Mesh,
    mobility: &Mobility,
    load: &LoadField,
    sol: &UnifiedSolution,
) -> Result<SolutionDump, HarnessError> {
    let view = SolutionView::of_unified(sol);
    let report = equivalence::report_for(mesh, mobility, load, &view)?;
    let companion = match sol.scheme {
        Scheme::Projection(CompanionFlavor::WeakBubble) => Some("weak".to_string()),
        Scheme::Projection(CompanionFlavor::StrongBubble) => Some("strong".to_string()),
        _ => None,
    };
    Ok(SolutionDump {
        scheme: sol.scheme.name().to_string(),
        companion,
        face_flux: view.face_flux.to_vec(),
        cell_mean: view.cell_means.to_vec(),
        cell_coeffs: view.coeffs.iter().map(|c| c.as_slice().to_vec()).collect(),
        residuals: report,
    })
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mesh = load_mesh(&args.mesh)?;
    let mobility = load_mobility(&mesh, &args.mobility)?;
    let load = parse_load(&args.load, mesh.dim())?;
    let scheme = args.scheme.to_scheme(args.companion, mesh.dim())?;
    let config = SchemeConfig {
        solver: args.solver.to_kind(),
        load,
    };
    let sol = crate::schemes::solve_unified(&mesh, &mobility, &config, scheme)?;
    let dump = dump_of(&mesh, &mobility, &config.load, &sol)?;
    emit(out, &args.out, &dump_to_json(&dump))?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mesh = load_mesh(&args.mesh)?;
    let mobility = load_mobility(&mesh, &args.mobility)?;
    let load = parse_load(&args.load, mesh.dim())?;
    let tol = Tolerances::default();
    if let Some(path) = &args.solution {
        let dump: SolutionDump = serde_json::from_str(&read_file(path)?)
            .map_err(|e| AuditError::Schema(e.to_string()))?;
        let outcome = equivalence::audit_dump(&mesh, &mobility, &load, &dump)?;
        let strong = outcome.companion.as_deref() == Some("strong");
        let pass = outcome.report.passes(&tol, strong);
        emit(out, &args.out, &audit_to_json(&outcome, &tol, pass))?;
        return Ok(if pass { 0 } else { 1 });
    }
    let config = SchemeConfig {
        solver: args.solver.to_kind(),
        load,
    };
    let outcome = equivalence::four_way(&mesh, &mobility, &config)?;
    let pass = outcome.passes(&tol);
    emit(out, &args.out, &verify_to_json(&outcome, &tol, pass))?;
    Ok(if pass { 0 } else { 1 })
}

fn cmd_convergence(args: &ConvergenceArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    if args.levels < 3 {
        return Err(HarnessError::Usage(
            "--levels must be at least 3".to_string(),
        ));
    }
    let case = match args.case {
        CaseArg::Sinsin => ManufacturedCase::sinsin(),
        CaseArg::Quadratic => ManufacturedCase::quadratic(),
    };
    let scheme = args.scheme.to_scheme(args.companion, 2)?;
    let ns: Vec<usize> = (0..args.levels).map(|i| 4usize << i).collect();
    let table = run_convergence(&case, scheme, &ns, args.solver.to_kind())?;
    emit(out, &args.out, &table_to_json(&table))?;
    Ok(0)
}

fn cmd_audit(args: &AuditArgs, out: &mut dyn Write) -> Result<i32, HarnessError> {
    let mesh = load_mesh(&args.mesh)?;
    let mobility = load_mobility(&mesh, &args.mobility)?;
    let load = parse_load(&args.load, mesh.dim())?;
    let dump: SolutionDump = serde_json::from_str(&read_file(&args.solution)?)
        .map_err(|e| AuditError::Schema(e.to_string()))?;
    let outcome = equivalence::audit_dump(&mesh, &mobility, &load, &dump)?;
    let tol = Tolerances::default();
    let strong = outcome.companion.as_deref() == Some("strong");
    let pass = outcome.report.passes(&tol, strong);
    emit(out, &args.out, &audit_to_json(&outcome, &tol, pass))?;
    Ok(if pass { 0 } else { 1 })
}

/// Runs the CLI against an explicit argument list (the first entry is the
/// binary name) and writes machine-readable output to `out`. Returns the
/// process exit code: 0 pass, 1 certificate failure, 2 usage or input
/// error.
pub fn cli_run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            eprintln!("{e}");
            return 2;
        }
    };
    let result = match &cli.cmd {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Convergence(a) => cmd_convergence(a, out),
        Command::Audit(a) => cmd_audit(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// CLI entry point against the process arguments and stdout.
pub fn cli_main() -> i32 {
    let mut stdout = std::io::stdout();
    cli_run(std::env::args_os(), &mut stdout)
}
