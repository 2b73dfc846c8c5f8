//! Global discrete formulations of the diffusion problem.
//!
//! Four formulations of the same lowest-order method are assembled and
//! solved here, together with two computational shortcuts:
//!
//! * [`solve_primal`]: the bubble-enriched nonconforming (Crouzeix-Raviart
//!   type) scheme posed on cell and face mean values of the potential;
//! * [`solve_mixed`]: the lowest-order Raviart-Thomas saddle-point scheme
//!   for the flux and the cellwise-constant potential;
//! * [`solve_hybrid_primal`]: the primal scheme with broken potentials and
//!   a face multiplier enforcing mean continuity;
//! * [`solve_hybrid_mixed`]: the mixed scheme with broken fluxes and a face
//!   multiplier (the discrete potential trace) restoring normal continuity;
//! * [`solve_condensed`]: static condensation of the primal scheme down to
//!   a Crouzeix-Raviart system in the face unknowns, followed by closed-form
//!   recovery of cell means, fluxes, and the full potential;
//! * [`solve_projection`]: the projection form of the primal scheme, which
//!   touches the potential space only through its degrees of freedom and so
//!   works verbatim with companion reconstructions.
//!
//! All formulations share one discrete load: the cellwise mean `pi0_K f`
//! computed by a single quadrature path ([`LoadField::cell_mean`]), so their
//! algebraic equivalence is exact rather than up to quadrature noise.
//! Homogeneous Dirichlet conditions are imposed by fixing boundary face
//! means (primal family) or boundary potential multipliers (hybrid mixed)
//! to zero; the mixed scheme needs no boundary handling.
//!
//! Assembly walks cells in index order and faces in their deterministic
//! mesh order, so identical inputs produce bit-identical matrices.

use crate::linalg::{self, CsrMatrix, LinalgError};
use crate::local_spaces::{
    CompanionFlavor, LocalFluxSpace, LocalPotentialSpace, LocalSpaceError, Mobility,
};
use crate::mesh::Mesh;
use crate::polyquad::{self, PolyError};
use nalgebra::{DMatrix, DVector, Vector3};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

mod condensed;
mod hybrid;
mod mixed;
mod primal;
mod projection;

pub use condensed::solve_condensed;
pub use hybrid::{solve_hybrid_mixed, solve_hybrid_primal};
pub use mixed::{mixed_system, solve_mixed};
pub use primal::{primal_system, solve_primal};
pub use projection::{projection_system, solve_projection, ProjectionSolution};

pub(crate) use mixed::mixed_system_from;
pub(crate) use primal::assemble_primal;
pub(crate) use projection::assemble_projection;

/// Polynomial degree of the enrichment family: `D(K) = P1 + span(psi_K)`.
pub const ENRICHMENT_ORDER: usize = 1;
/// Polynomial degree of the face traces (face means only).
pub const TRACE_ORDER: usize = 1;

/// Errors raised while assembling or solving a global scheme.
#[derive(Debug, Error)]
pub enum SchemeError {
    /// A cell-local space could not be constructed.
    #[error(transparent)]
    Local(#[from] LocalSpaceError),
    /// The linear solver failed.
    #[error(transparent)]
    Solver(#[from] LinalgError),
    /// Quadrature of the load failed.
    #[error(transparent)]
    Quadrature(#[from] PolyError),
    /// Supplied data does not match the mesh.
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: String,
        got: usize,
        expected: usize,
    },
}

/// Pointwise load callback for [`LoadField::Custom`].
pub type LoadFn = Arc<dyn Fn(&Vector3<f64>) -> f64 + Send + Sync>;

/// The load `f` of the continuous problem, evaluable pointwise.
///
/// Builtins cover the constant, trigonometric, and affine loads used on the
/// command line; `Custom` is the extension point for closed-form
/// manufactured right-hand sides.
#[derive(Clone)]
pub enum LoadField {
    /// `f(x) = c`.
    Constant(f64),
    /// `f(x) = sin(pi x_1) sin(pi x_2)`.
    SinSin,
    /// `f(x) = a . x + b`.
    Linear { a: Vector3<f64>, b: f64 },
    /// Arbitrary pointwise load.
    Custom(LoadFn),
}

impl fmt::Debug for LoadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadField::Constant(c) => write!(f, "Constant({c})"),
            LoadField::SinSin => write!(f, "SinSin"),
            LoadField::Linear { a, b } => write!(f, "Linear {{ a: {a:?}, b: {b} }}"),
            LoadField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl LoadField {
    /// Pointwise value of the load.
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        match self {
            LoadField::Constant(c) => *c,
            LoadField::SinSin => (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin(),
            LoadField::Linear { a, b } => a.dot(x) + b,
            LoadField::Custom(f) => f(x),
        }
    }

    /// The projected load `pi0_K f` on cell `c`.
    ///
    /// Every scheme and the auditor call this same routine, so the discrete
    /// load they see is bit-identical: constants and affine loads use exact
    /// closed forms, anything else a degree-6 rule on four sub-triangles
    /// (plain degree-6 on tetrahedra).
    pub fn cell_mean(&self, mesh: &Mesh, c: usize) -> Result<f64, PolyError> {
        match self {
            LoadField::Constant(v) => Ok(*v),
            LoadField::Linear { a, b } => Ok(a.dot(&mesh.cell(c).barycenter) + b),
            _ => {
                let vol = mesh.cell(c).volume;
                let integral = if mesh.dim() == 2 {
                    polyquad::integrate_cell_composite(mesh, c, 6, 1, &|x| self.eval(x))?
                } else {
                    polyquad::integrate_cell(mesh, c, 6, |x| self.eval(x))?
                };
                Ok(integral / vol)
            }
        }
    }

    /// Global L2 norm of the load, by the same quadrature as `cell_mean`.
    pub fn norm_l2(&self, mesh: &Mesh) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for c in 0..mesh.n_cells() {
            let sq = if mesh.dim() == 2 {
                polyquad::integrate_cell_composite(mesh, c, 6, 1, &|x| self.eval(x).powi(2))?
            } else {
                polyquad::integrate_cell(mesh, c, 6, |x| self.eval(x).powi(2))?
            };
            acc += sq;
        }
        Ok(acc.sqrt())
    }

    /// Parses the command-line spellings `constant:<c>`, `sinsin`, and
    /// `linear:a_1,...,a_d,b`.
    pub fn parse(text: &str, dim: usize) -> Result<LoadField, String> {
        if text == "sinsin" {
            return Ok(LoadField::SinSin);
        }
        if let Some(c) = text.strip_prefix("constant:") {
            let v: f64 = c
                .parse()
                .map_err(|_| format!("invalid constant load '{text}'"))?;
            return Ok(LoadField::Constant(v));
        }
        if let Some(rest) = text.strip_prefix("linear:") {
            let parts: Result<Vec<f64>, _> = rest.split(',').map(str::parse).collect();
            let parts = parts.map_err(|_| format!("invalid linear load '{text}'"))?;
            if parts.len() != dim + 1 {
                return Err(format!(
                    "linear load needs {} comma-separated numbers (a_1..a_{dim}, b), got {}",
                    dim + 1,
                    parts.len()
                ));
            }
            let mut a = Vector3::zeros();
            for k in 0..dim {
                a[k] = parts[k];
            }
            return Ok(LoadField::Linear { a, b: parts[dim] });
        }
        Err(format!(
            "unknown load '{text}' (expected constant:<c>, sinsin, or linear:a_1,...,b)"
        ))
    }

    /// Canonical spelling for reports.
    pub fn describe(&self) -> String {
        match self {
            LoadField::Constant(c) => format!("constant:{c}"),
            LoadField::SinSin => "sinsin".to_string(),
            LoadField::Linear { a, b } => format!("linear:{},{},{}", a.x, a.y, b),
            LoadField::Custom(_) => "custom".to_string(),
        }
    }
}

/// Linear solver selection.
///
/// Conjugate gradients are accepted only by the schemes whose global matrix
/// is symmetric positive definite (primal, condensed, projection); the
/// saddle-point formulations always factorize densely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Dense Cholesky (SPD systems) or LU with partial pivoting (saddle).
    DenseDirect,
    /// Unpreconditioned conjugate gradients on the sparse matrix.
    ConjugateGradient { tol: f64, max_iterations: usize },
}

impl SolverKind {
    /// A conjugate-gradient solver tight enough for equivalence testing.
    pub fn cg() -> SolverKind {
        SolverKind::ConjugateGradient {
            tol: 1e-13,
            max_iterations: 50_000,
        }
    }
}

/// Configuration shared by all solvers: the load and the linear solver.
///
/// The method order is fixed (lowest order, [`ENRICHMENT_ORDER`] and
/// [`TRACE_ORDER`]); the spatial dimension follows the mesh.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub solver: SolverKind,
    pub load: LoadField,
}

impl SchemeConfig {
    /// Dense direct solves with the given load.
    pub fn new(load: LoadField) -> SchemeConfig {
        SchemeConfig {
            solver: SolverKind::DenseDirect,
            load,
        }
    }

    /// Conjugate-gradient solves with the given load.
    pub fn with_cg(load: LoadField) -> SchemeConfig {
        SchemeConfig {
            solver: SolverKind::cg(),
            load,
        }
    }
}

impl Default for SchemeConfig {
    fn default() -> SchemeConfig {
        SchemeConfig::new(LoadField::Constant(1.0))
    }
}

/// Identifier of a discrete formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Primal,
    Mixed,
    HybridPrimal,
    HybridMixed,
    Condensed,
    Projection(CompanionFlavor),
}

impl Scheme {
    /// Command-line and dump-file name of the scheme.
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Primal => "primal",
            Scheme::Mixed => "mixed",
            Scheme::HybridPrimal => "hybrid-primal",
            Scheme::HybridMixed => "hybrid-mixed",
            Scheme::Condensed => "condensed",
            Scheme::Projection(_) => "projection",
        }
    }
}

/// Cell-local flux and potential spaces plus the projected load, built once
/// and shared by every formulation on the same (mesh, mobility, load).
pub struct LocalOperators {
    cells: Vec<CellOperators>,
    fbar: Vec<f64>,
}

/// The two local spaces of one cell.
pub struct CellOperators {
    pub flux: LocalFluxSpace,
    pub potential: LocalPotentialSpace,
}

impl LocalOperators {
    /// Builds all local operators in cell order.
    pub fn build(
        mesh: &Mesh,
        mobility: &Mobility,
        load: &LoadField,
    ) -> Result<LocalOperators, SchemeError> {
        let mut cells = Vec::with_capacity(mesh.n_cells());
        let mut fbar = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            cells.push(CellOperators {
                flux: LocalFluxSpace::new(mesh, c, mobility)?,
                potential: LocalPotentialSpace::new(mesh, c, mobility)?,
            });
            fbar.push(load.cell_mean(mesh, c)?);
        }
        Ok(LocalOperators { cells, fbar })
    }

    /// Operators of cell `c`.
    pub fn cell(&self, c: usize) -> &CellOperators {
        &self.cells[c]
    }

    /// Projected load `pi0_K f` on cell `c`.
    pub fn fbar(&self, c: usize) -> f64 {
        self.fbar[c]
    }

    /// All projected loads, in cell order.
    pub fn fbar_all(&self) -> &[f64] {
        &self.fbar
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// True if the mesh had no cells (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Numbering of interior-face unknowns. Boundary faces carry the Dirichlet
/// value zero and are excluded from every global system.
pub struct FaceNumbering {
    index: Vec<Option<usize>>,
    n_interior: usize,
}

impl FaceNumbering {
    /// Numbers interior faces in mesh face order.
    pub fn new(mesh: &Mesh) -> FaceNumbering {
        let mut index = vec![None; mesh.n_faces()];
        let mut next = 0;
        for (f, slot) in index.iter_mut().enumerate() {
            if !mesh.face(f).is_boundary() {
                *slot = Some(next);
                next += 1;
            }
        }
        FaceNumbering {
            index,
            n_interior: next,
        }
    }

    /// Unknown index of face `f`, or `None` on the boundary.
    pub fn interior_index(&self, f: usize) -> Option<usize> {
        self.index[f]
    }

    /// Spreads the interior unknowns `x[offset + k]` back over all faces;
    /// boundary faces keep the homogeneous Dirichlet value zero.
    pub fn scatter(&self, x: &DVector<f64>, offset: usize) -> Vec<f64> {
        self.index
            .iter()
            .map(|k| k.map_or(0.0, |k| x[offset + k]))
            .collect()
    }

    /// Number of interior faces.
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }
}

/// Triplet-based symmetric system assembled once, solvable either densely
/// or by conjugate gradients.
pub(crate) struct TripletSystem {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
    rhs: DVector<f64>,
}

impl TripletSystem {
    pub fn new(n: usize) -> TripletSystem {
        TripletSystem {
            n,
            triplets: Vec::new(),
            rhs: DVector::zeros(n),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.triplets.push((i, j, v));
    }

    pub fn add_rhs(&mut self, i: usize, v: f64) {
        self.rhs[i] += v;
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.triplets {
            a[(i, j)] += v;
        }
        (a, self.rhs.clone())
    }

    /// Solves the system, honoring the configured solver. Only meaningful
    /// for symmetric positive definite matrices.
    pub fn solve_spd(&self, solver: SolverKind) -> Result<DVector<f64>, SchemeError> {
        match solver {
            SolverKind::DenseDirect => {
                let (a, rhs) = self.to_dense();
                Ok(linalg::solve_spd_dense(&a, &rhs)?)
            }
            SolverKind::ConjugateGradient {
                tol,
                max_iterations,
            } => {
                let a = CsrMatrix::from_triplets(self.n, self.n, &self.triplets);
                Ok(linalg::conjugate_gradient(&a, &self.rhs, tol, max_iterations)?)
            }
        }
    }
}

/// Solution of the primal scheme: the potential lives in the broken
/// enriched space, glued weakly through shared face means.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    /// Coefficients of `u_K` per cell in the basis `{1, (x - xbar)_j, psi}`.
    pub cell_coeffs: Vec<DVector<f64>>,
    /// Cell mean values (the cell unknowns).
    pub cell_means: Vec<f64>,
    /// Face mean values per face; boundary entries are exactly zero.
    pub face_means: Vec<f64>,
}

/// Solution of the mixed (Raviart-Thomas) scheme.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    /// Normal flux through each face, oriented along the face normal `n_F`.
    pub face_flux: Vec<f64>,
    /// Coefficient of the radial field `(x - xbar)` per cell.
    pub cell_radial: Vec<f64>,
    /// Cellwise-constant potential.
    pub cell_means: Vec<f64>,
}

impl MixedSolution {
    /// Local coefficients of the flux on cell `c` in the Raviart-Thomas
    /// basis `{b e_j, (x - xbar)}`, recovered from the face fluxes.
    pub fn flux_coeffs_on(
        &self,
        mesh: &Mesh,
        ops: &LocalOperators,
        c: usize,
    ) -> Result<DVector<f64>, SchemeError> {
        flux_coeffs_from_face_values(mesh, ops, c, &self.face_flux)
    }
}

/// Solution of the hybridized primal scheme.
///
/// The multiplier is reported per (cell, face) pair against the cell's
/// outward normal, so the interface consistency condition reads
/// `multipliers[K+][F] + multipliers[K-][F] = 0` and holds exactly by
/// construction of the multiplier space.
#[derive(Debug, Clone)]
pub struct HybridPrimalSolution {
    /// Coefficients of the broken potential per cell (enriched basis).
    pub cell_coeffs: Vec<DVector<f64>>,
    /// Cell means, recovered during the back-substitution pass.
    pub cell_means: Vec<f64>,
    /// Multiplier per cell and local face, against the outward normal.
    pub multipliers: Vec<Vec<f64>>,
    /// The same multiplier collapsed to one value per face against `n_F`.
    pub face_flux: Vec<f64>,
}

/// Solution of the hybridized mixed scheme.
#[derive(Debug, Clone)]
pub struct HybridMixedSolution {
    /// Broken Raviart-Thomas coefficients per cell.
    pub cell_flux_coeffs: Vec<DVector<f64>>,
    /// Cellwise-constant potential.
    pub cell_means: Vec<f64>,
    /// Potential trace multiplier per face; boundary entries exactly zero.
    pub face_potential: Vec<f64>,
}

/// Local flux coefficients on cell `c` of the face-based global flux `s`
/// (one value per face against `n_F`).
pub fn flux_coeffs_from_face_values(
    mesh: &Mesh,
    ops: &LocalOperators,
    c: usize,
    s: &[f64],
) -> Result<DVector<f64>, SchemeError> {
    let cell = mesh.cell(c);
    let mut traces = DVector::zeros(cell.faces.len());
    for (fi, fo) in cell.faces.iter().enumerate() {
        traces[fi] = fo.orientation * s[fo.face];
    }
    Ok(ops.cell(c).flux.coeffs_from_traces(&traces)?)
}

/// One flux value per face against `n_F`, read from the owning cell's
/// normal trace of the cellwise flux `coeffs`.
pub fn face_flux_from_cells(
    mesh: &Mesh,
    ops: &LocalOperators,
    coeffs: &[DVector<f64>],
) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_faces()];
    for (f, value) in out.iter_mut().enumerate() {
        let owner = mesh.face(f).cells.0;
        let fi = local_face_index(mesh, owner, f);
        *value = ops.cell(owner).flux.normal_trace(&coeffs[owner], fi);
    }
    out
}

/// Index of global face `f` within cell `c`.
pub(crate) fn local_face_index(mesh: &Mesh, c: usize, f: usize) -> usize {
    mesh.cell(c)
        .faces
        .iter()
        .position(|fo| fo.face == f)
        .expect("face incidence is consistent by mesh construction")
}

/// The unique enriched-space member with `b grad u = sigma` and the given
/// cell mean: coefficient translation from a mixed pair to a potential.
pub fn potential_from_mixed(
    potential: &LocalPotentialSpace,
    flux_coeffs: &DVector<f64>,
    mean: f64,
) -> DVector<f64> {
    let d = potential.dim();
    let mut coeffs = DVector::zeros(d + 2);
    let radial = flux_coeffs[d];
    coeffs[0] = mean - radial * potential.psi_cell_mean();
    for j in 0..d {
        coeffs[1 + j] = flux_coeffs[j];
    }
    coeffs[d + 1] = radial;
    coeffs
}

/// The enriched-space member with the given local face means whose bubble
/// lifts the projected load.
///
/// This is the stable closed form for unpacking scheme solutions: every
/// discrete solution carries the bubble coefficient `-pi0_K f / d` exactly,
/// the linear part is the Crouzeix-Raviart interpolant of the face means,
/// and the constant restores the face means through the uniform bubble face
/// mean `c_K`. Inverting the dof matrix instead recovers the bubble from a
/// cancelling difference that strong anisotropy amplifies.
pub(crate) fn potential_from_face_means(
    mesh: &Mesh,
    ops: &LocalOperators,
    c: usize,
    lambda: &[f64],
) -> DVector<f64> {
    let d = mesh.dim();
    let cell = mesh.cell(c);
    let fbar = ops.fbar(c);
    let mut grad = Vector3::zeros();
    let mut mean_cr = 0.0;
    for (fi, fo) in cell.faces.iter().enumerate() {
        grad += fo.normal * (fo.measure * lambda[fi] / cell.volume);
        mean_cr += fo.measure * fo.distance * lambda[fi] / (d as f64 * cell.volume);
    }
    let c_k = ops.cell(c).potential.psi_face_mean_closed_form();
    let mut coeffs = DVector::zeros(d + 2);
    coeffs[0] = mean_cr + fbar / d as f64 * c_k;
    for j in 0..d {
        coeffs[1 + j] = grad[j];
    }
    coeffs[d + 1] = -fbar / d as f64;
    coeffs
}

/// A scheme-independent view of one solve, sufficient for dumping,
/// auditing, and cross-formulation comparison.
#[derive(Debug, Clone)]
pub struct UnifiedSolution {
    pub scheme: Scheme,
    /// One normal flux per face against `n_F`.
    pub face_flux: Vec<f64>,
    /// Cell mean potentials.
    pub cell_means: Vec<f64>,
    /// Raviart-Thomas coefficients of the flux per cell.
    pub flux_coeffs: Vec<DVector<f64>>,
    /// Enriched-basis coefficients of the potential per cell.
    pub potential_coeffs: Vec<DVector<f64>>,
    /// Strong-bubble companion coefficients, when the scheme produced them.
    pub companion_coeffs: Option<Vec<DVector<f64>>>,
}

/// Runs any scheme and normalizes its output.
pub fn solve_unified(
    mesh: &Mesh,
    mobility: &Mobility,
    config: &SchemeConfig,
    scheme: Scheme,
) -> Result<UnifiedSolution, SchemeError> {
    let ops = LocalOperators::build(mesh, mobility, &config.load)?;
    match scheme {
        Scheme::Primal => {
            let sol = solve_primal(mesh, mobility, config)?;
            let flux_coeffs: Vec<DVector<f64>> = (0..mesh.n_cells())
                .map(|c| ops.cell(c).potential.flux_coeffs(&sol.cell_coeffs[c]))
                .collect();
            let face_flux = face_flux_from_cells(mesh, &ops, &flux_coeffs);
            Ok(UnifiedSolution {
                scheme,
                face_flux,
                cell_means: sol.cell_means,
                flux_coeffs,
                potential_coeffs: sol.cell_coeffs,
                companion_coeffs: None,
            })
        }
        Scheme::Mixed => {
            let sol = solve_mixed(mesh, mobility, config)?;
            let mut flux_coeffs = Vec::with_capacity(mesh.n_cells());
            let mut potential_coeffs = Vec::with_capacity(mesh.n_cells());
            for c in 0..mesh.n_cells() {
                let fc = sol.flux_coeffs_on(mesh, &ops, c)?;
                potential_coeffs.push(potential_from_mixed(
                    &ops.cell(c).potential,
                    &fc,
                    sol.cell_means[c],
                ));
                flux_coeffs.push(fc);
            }
            Ok(UnifiedSolution {
                scheme,
                face_flux: sol.face_flux,
                cell_means: sol.cell_means,
                flux_coeffs,
                potential_coeffs,
                companion_coeffs: None,
            })
        }
        Scheme::HybridPrimal => {
            let sol = solve_hybrid_primal(mesh, mobility, config)?;
            let flux_coeffs: Vec<DVector<f64>> = (0..mesh.n_cells())
                .map(|c| ops.cell(c).potential.flux_coeffs(&sol.cell_coeffs[c]))
                .collect();
            Ok(UnifiedSolution {
                scheme,
                face_flux: sol.face_flux,
                cell_means: sol.cell_means,
                flux_coeffs,
                potential_coeffs: sol.cell_coeffs,
                companion_coeffs: None,
            })
        }
        Scheme::HybridMixed => {
            let sol = solve_hybrid_mixed(mesh, mobility, config)?;
            let face_flux = face_flux_from_cells(mesh, &ops, &sol.cell_flux_coeffs);
            let potential_coeffs: Vec<DVector<f64>> = (0..mesh.n_cells())
                .map(|c| {
                    potential_from_mixed(
                        &ops.cell(c).potential,
                        &sol.cell_flux_coeffs[c],
                        sol.cell_means[c],
                    )
                })
                .collect();
            Ok(UnifiedSolution {
                scheme,
                face_flux,
                cell_means: sol.cell_means,
                flux_coeffs: sol.cell_flux_coeffs,
                potential_coeffs,
                companion_coeffs: None,
            })
        }
        Scheme::Condensed => {
            let (primal, mixed) = solve_condensed(mesh, mobility, config)?;
            let flux_coeffs: Vec<DVector<f64>> = (0..mesh.n_cells())
                .map(|c| ops.cell(c).potential.flux_coeffs(&primal.cell_coeffs[c]))
                .collect();
            Ok(UnifiedSolution {
                scheme,
                face_flux: mixed.face_flux,
                cell_means: mixed.cell_means,
                flux_coeffs,
                potential_coeffs: primal.cell_coeffs,
                companion_coeffs: None,
            })
        }
        Scheme::Projection(flavor) => {
            let sol = solve_projection(mesh, mobility, config, flavor)?;
            let companion = match flavor {
                CompanionFlavor::WeakBubble => None,
                CompanionFlavor::StrongBubble => Some(sol.companion_coeffs.clone()),
            };
            Ok(UnifiedSolution {
                scheme,
                face_flux: sol.mixed.face_flux,
                cell_means: sol.mixed.cell_means,
                flux_coeffs: sol.flux_coeffs,
                potential_coeffs: sol.potential_coeffs,
                companion_coeffs: companion,
            })
        }
    }
}

/// On-disk solution dump.
///
/// `cell_coeffs` rows are the coefficients of the cellwise potential in the
/// enriched basis `{1, (x - xbar)_j, psi}` for every scheme except
/// strong-bubble projection dumps, which record the companion basis
/// `{1, (x - xbar)_1, (x - xbar)_2, l0 l1 l2}` and say so in `companion`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDump {
    pub scheme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub companion: Option<String>,
    pub face_flux: Vec<f64>,
    pub cell_mean: Vec<f64>,
    pub cell_coeffs: Vec<Vec<f64>>,
    pub residuals: crate::equivalence::EquivalenceReport,
}
