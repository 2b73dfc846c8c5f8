//! Local flux and potential spaces on a single simplex, and the
//! degree-of-freedom maps connecting them.
//!
//! With `b_K` the (constant, symmetric positive definite) mobility of cell
//! `K`, the local potential space is
//!
//! ```text
//!     D(K) = P^1(K) + span{ psi_K },
//!     psi_K(x) = 1/2 b_K^-1 (x - xbar_K) . (x - xbar_K),
//! ```
//!
//! a (d + 2)-dimensional space of quadratics whose degrees of freedom are the
//! cell mean and the d + 1 face means. The matching local flux space is its
//! image under `b grad`,
//!
//! ```text
//!     RT(K) = b_K grad D(K) = span{ b_K e_1, .., b_K e_d, (x - xbar_K) },
//! ```
//!
//! the lowest-order Raviart-Thomas space adapted to `b_K`: the radial member
//! `b_K grad psi_K = x - xbar_K` has constant divergence `d` and constant
//! normal trace `d_{K,F}` on each face. Two small facts carry most of the
//! equivalence theory implemented downstream and are verified here to
//! machine precision:
//!
//! * integration by parts against `RT(K)` only sees mean values:
//!   `(grad v, tau)_K = -(div tau) pi0_K(v) |K| + sum_F |F| (tau . n_{K,F}) pi0_F(v)`,
//! * `psi_K` has the same mean on every face of the simplex, namely
//!   `c_K = (2 + d) eta_K / (2 d |K|)` with
//!   `eta_K = int_K b_K^-1 (x - xbar_K) . (x - xbar_K) dx`.
//!
//! [`projected_gradient_from_dofs`] computes the `b^-1`-weighted L2
//! projection of `b grad v` onto `RT(K)` for any function `v` whose cell and
//! face means are known; on members of `D(K)` the projection is lossless.
//! [`CompanionSpace`] offers two flavors of potential reconstruction from
//! the same degrees of freedom (the space `D(K)` itself, or linears enriched
//! by the cubic barycentric bubble), between which the projected gradients
//! cannot distinguish.

use crate::linalg;
use crate::mesh::Mesh;
use crate::polyquad::{self, PolyError};
use nalgebra::{DMatrix, DVector, Dyn, Matrix3, Vector3, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

/// Quadrature degree used for all face and cell moment integrals of the
/// local spaces; exact for products of two quadratics with room to spare.
const MOMENT_DEGREE: usize = 6;

/// Failure modes of the local space constructions.
#[derive(Debug, Error)]
pub enum LocalSpaceError {
    /// A mobility matrix is not symmetric.
    #[error("mobility on cell {cell} is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { cell: usize, asymmetry: f64 },
    /// A mobility matrix is not positive definite.
    #[error("mobility on cell {cell} is not positive definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { cell: usize, eigenvalue: f64 },
    /// A mobility matrix has the wrong dimensions.
    #[error("mobility matrix on cell {cell} is {rows} x {cols}, expected {dim} x {dim}")]
    WrongShape {
        cell: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    /// A per-cell mobility list does not match the mesh.
    #[error("mobility lists {got} cells, mesh has {expected}")]
    WrongCellCount { got: usize, expected: usize },
    /// The mobility JSON did not match the schema.
    #[error("mobility schema error: {0}")]
    Schema(String),
    /// A degree-of-freedom matrix could not be factorized.
    #[error("degree-of-freedom map on cell {cell} is singular")]
    SingularDofMap { cell: usize },
    /// The normal trace map of the flux space is rank deficient.
    #[error("flux trace map on cell {cell} has rank {rank}, expected {expected}")]
    RankDeficient {
        cell: usize,
        rank: usize,
        expected: usize,
    },
    /// The requested companion flavor does not exist in this dimension.
    #[error("strong bubble companion is only available for triangles, not dim {dim}")]
    UnsupportedCompanion { dim: usize },
    /// Underlying quadrature failure.
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Cellwise-constant symmetric positive definite mobility field.
#[derive(Debug, Clone)]
pub struct Mobility {
    dim: usize,
    per_cell: Vec<Matrix3<f64>>,
    bounds: (f64, f64),
}

/// JSON schema for mobility files: exactly one of
/// `{"uniform": [[..]]}` or `{"per_cell": [[[..]], ..]}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MobilityFile {
    uniform: Option<Vec<Vec<f64>>>,
    per_cell: Option<Vec<Vec<Vec<f64>>>>,
}

impl Mobility {
    /// The identity mobility (isotropic, unit).
    pub fn identity(mesh: &Mesh) -> Mobility {
        Mobility {
            dim: mesh.dim(),
            per_cell: vec![Matrix3::identity(); mesh.n_cells()],
            bounds: (1.0, 1.0),
        }
    }

    /// One mobility matrix shared by every cell.
    pub fn uniform(mesh: &Mesh, b: DMatrix<f64>) -> Result<Mobility, LocalSpaceError> {
        let (padded, (lo, hi)) = validate_spd(mesh.dim(), 0, &b)?;
        Ok(Mobility {
            dim: mesh.dim(),
            per_cell: vec![padded; mesh.n_cells()],
            bounds: (lo, hi),
        })
    }

    /// Cell-by-cell mobility matrices, in cell order.
    pub fn per_cell(mesh: &Mesh, bs: Vec<DMatrix<f64>>) -> Result<Mobility, LocalSpaceError> {
        if bs.len() != mesh.n_cells() {
            return Err(LocalSpaceError::WrongCellCount {
                got: bs.len(),
                expected: mesh.n_cells(),
            });
        }
        let mut per_cell = Vec::with_capacity(bs.len());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (c, b) in bs.iter().enumerate() {
            let (padded, (l, h)) = validate_spd(mesh.dim(), c, b)?;
            per_cell.push(padded);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        Ok(Mobility {
            dim: mesh.dim(),
            per_cell,
            bounds: (lo, hi),
        })
    }

    /// Uniform mobility `R(angle) diag(eig_1, eig_2) R(angle)^T` on a 2d
    /// mesh, the standard rotated-anisotropy benchmark.
    pub fn rotated_anisotropic(
        mesh: &Mesh,
        eig_1: f64,
        eig_2: f64,
        angle_rad: f64,
    ) -> Result<Mobility, LocalSpaceError> {
        let (c, s) = (angle_rad.cos(), angle_rad.sin());
        let b = DMatrix::from_row_slice(
            2,
            2,
            &[
                c * c * eig_1 + s * s * eig_2,
                c * s * (eig_1 - eig_2),
                c * s * (eig_1 - eig_2),
                s * s * eig_1 + c * c * eig_2,
            ],
        );
        Mobility::uniform(mesh, b)
    }

    /// Per-cell random SPD mobility: eigenvalues log-uniform in
    /// `[eig_lo, eig_hi]`, random rotations, reproducible from the seed.
    pub fn random_spd_per_cell(
        mesh: &Mesh,
        seed: u64,
        eig_lo: f64,
        eig_hi: f64,
    ) -> Result<Mobility, LocalSpaceError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = mesh.dim();
        let mut bs = Vec::with_capacity(mesh.n_cells());
        for _ in 0..mesh.n_cells() {
            bs.push(random_spd_matrix(&mut rng, d, eig_lo, eig_hi));
        }
        Mobility::per_cell(mesh, bs)
    }

    /// Parses a mobility field from JSON against a given mesh.
    pub fn from_json_str(mesh: &Mesh, text: &str) -> Result<Mobility, LocalSpaceError> {
        let file: MobilityFile =
            serde_json::from_str(text).map_err(|e| LocalSpaceError::Schema(e.to_string()))?;
        match (file.uniform, file.per_cell) {
            (Some(rows), None) => Mobility::uniform(mesh, rows_to_matrix(&rows)?),
            (None, Some(cells)) => {
                let mut bs = Vec::with_capacity(cells.len());
                for rows in &cells {
                    bs.push(rows_to_matrix(rows)?);
                }
                Mobility::per_cell(mesh, bs)
            }
            _ => Err(LocalSpaceError::Schema(
                "expected exactly one of \"uniform\" or \"per_cell\"".to_string(),
            )),
        }
    }

    /// Spatial dimension the field was validated for.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mobility of cell `c`, padded to 3 x 3 (identity outside the
    /// physical block so the padded matrix stays invertible).
    pub fn cell_matrix(&self, c: usize) -> &Matrix3<f64> {
        &self.per_cell[c]
    }

    /// Global ellipticity bracket: the smallest and largest mobility
    /// eigenvalue over all cells.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

/// Random SPD matrix with log-uniform eigenvalues and a random rotation.
fn random_spd_matrix(rng: &mut ChaCha8Rng, dim: usize, eig_lo: f64, eig_hi: f64) -> DMatrix<f64> {
    let mut eigs = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let t: f64 = rng.gen_range(0.0..1.0);
        eigs[(k, k)] = (eig_lo.ln() + t * (eig_hi.ln() - eig_lo.ln())).exp();
    }
    let raw = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let b = &q * eigs * q.transpose();
    // Symmetrize exactly; QR roundoff would otherwise trip the validator.
    (&b + b.transpose()) * 0.5
}

/// Validates symmetry and positive definiteness and pads to 3 x 3.
fn validate_spd(
    dim: usize,
    cell: usize,
    b: &DMatrix<f64>,
) -> Result<(Matrix3<f64>, (f64, f64)), LocalSpaceError> {
    if b.nrows() != dim || b.ncols() != dim {
        return Err(LocalSpaceError::WrongShape {
            cell,
            rows: b.nrows(),
            cols: b.ncols(),
            dim,
        });
    }
    let scale = b.amax();
    let asymmetry = (b - b.transpose()).amax();
    if asymmetry > 1e-12 * scale {
        return Err(LocalSpaceError::NotSymmetric { cell, asymmetry });
    }
    let eig = b.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(LocalSpaceError::NotPositiveDefinite {
            cell,
            eigenvalue: lo,
        });
    }
    let mut padded = Matrix3::identity();
    for i in 0..dim {
        for j in 0..dim {
            padded[(i, j)] = b[(i, j)];
        }
    }
    Ok((padded, (lo, hi)))
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, LocalSpaceError> {
    let n = rows.len();
    for row in rows {
        if row.len() != n {
            return Err(LocalSpaceError::Schema(format!(
                "mobility rows must form a square matrix, got a row of length {} in a {} row matrix",
                row.len(),
                n
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// The local flux space `RT(K) = span{ b e_1, .., b e_d, x - xbar }` with its
/// Gram matrices and the normal trace map.
///
/// Coefficient vectors have length d + 1 in the basis order above; the last
/// entry is the radial coefficient.
#[derive(Debug, Clone)]
pub struct LocalFluxSpace {
    cell: usize,
    dim: usize,
    volume: f64,
    diameter: f64,
    barycenter: Vector3<f64>,
    b: Matrix3<f64>,
    b_inv: Matrix3<f64>,
    eta: f64,
    measures: Vec<f64>,
    distances: Vec<f64>,
    normals: Vec<Vector3<f64>>,
    trace: DMatrix<f64>,
    trace_lu: LU<f64, Dyn, Dyn>,
    gram_weighted: DMatrix<f64>,
    gram_unweighted: DMatrix<f64>,
}

impl LocalFluxSpace {
    /// Builds the flux space of cell `c`.
    pub fn new(mesh: &Mesh, c: usize, mobility: &Mobility) -> Result<LocalFluxSpace, LocalSpaceError> {
        let cell = mesh.cell(c);
        let d = mesh.dim();
        let b = *mobility.cell_matrix(c);
        let b_inv = b.try_inverse().ok_or(LocalSpaceError::SingularDofMap { cell: c })?;
        // eta = int_K b^-1 (x - xbar).(x - xbar) = tr(b^-1 M) with M the
        // second moment matrix; exact because second moments are closed form.
        let eta = (b_inv * cell.second_moment).trace();

        let measures: Vec<f64> = cell.faces.iter().map(|f| f.measure).collect();
        let distances: Vec<f64> = cell.faces.iter().map(|f| f.distance).collect();
        let normals: Vec<Vector3<f64>> = cell.faces.iter().map(|f| f.normal).collect();

        // Normal trace map: row F lists the constant values tau_j . n_{K,F}
        // of the basis members. The radial member has trace d_{K,F}.
        let mut trace = DMatrix::zeros(d + 1, d + 1);
        for (fi, n) in normals.iter().enumerate() {
            for j in 0..d {
                trace[(fi, j)] = b.column(j).dot(n);
            }
            trace[(fi, d)] = distances[fi];
        }
        let trace_lu = trace.clone().lu();

        // b^-1-weighted Gram matrix: the constant block gives |K| b, the
        // radial member is exactly orthogonal to it (first moments about the
        // barycenter vanish) and has weighted norm eta.
        let mut gram_weighted = DMatrix::zeros(d + 1, d + 1);
        let mut gram_unweighted = DMatrix::zeros(d + 1, d + 1);
        let b2 = b * b;
        for i in 0..d {
            for j in 0..d {
                gram_weighted[(i, j)] = cell.volume * b[(i, j)];
                gram_unweighted[(i, j)] = cell.volume * b2[(i, j)];
            }
        }
        gram_weighted[(d, d)] = eta;
        gram_unweighted[(d, d)] = cell.second_moment.trace();

        Ok(LocalFluxSpace {
            cell: c,
            dim: d,
            volume: cell.volume,
            diameter: cell.diameter,
            barycenter: cell.barycenter,
            b,
            b_inv,
            eta,
            measures,
            distances,
            normals,
            trace,
            trace_lu,
            gram_weighted,
            gram_unweighted,
        })
    }

    /// Cell index this space lives on.
    pub fn cell(&self) -> usize {
        self.cell
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell volume `|K|`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Cell diameter `h_K`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Cell barycenter.
    pub fn barycenter(&self) -> Vector3<f64> {
        self.barycenter
    }

    /// Cell mobility (padded to 3 x 3).
    pub fn mobility(&self) -> &Matrix3<f64> {
        &self.b
    }

    /// Inverse cell mobility (padded to 3 x 3).
    pub fn mobility_inv(&self) -> &Matrix3<f64> {
        &self.b_inv
    }

    /// The weighted second moment `eta_K = int_K b^-1 (x - xbar).(x - xbar)`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Face measures `|F|` in local face order.
    pub fn face_measures(&self) -> &[f64] {
        &self.measures
    }

    /// Barycenter-to-face distances `d_{K,F}` in local face order.
    pub fn face_distances(&self) -> &[f64] {
        &self.distances
    }

    /// Outward unit normals in local face order.
    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    /// The normal trace matrix: entry (F, j) is the constant value of
    /// `tau_j . n_{K,F}` on face F.
    pub fn trace_matrix(&self) -> &DMatrix<f64> {
        &self.trace
    }

    /// `b^-1`-weighted Gram matrix, block diagonal by construction.
    pub fn gram_weighted(&self) -> &DMatrix<f64> {
        &self.gram_weighted
    }

    /// Unweighted L2 Gram matrix (for flux norms).
    pub fn gram_unweighted(&self) -> &DMatrix<f64> {
        &self.gram_unweighted
    }

    /// Value of the flux with coefficients `c` at `x`.
    pub fn eval(&self, c: &DVector<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        let mut lin = Vector3::zeros();
        for j in 0..self.dim {
            lin[j] = c[j];
        }
        self.b * lin + c[self.dim] * (x - self.barycenter)
    }

    /// Pointwise divergence of the flux with coefficients `c` (constant).
    pub fn divergence(&self, c: &DVector<f64>) -> f64 {
        self.dim as f64 * c[self.dim]
    }

    /// Discrete divergence from the face traces,
    /// `(1/|K|) sum_F |F| (tau . n_{K,F})`; agrees with [`Self::divergence`]
    /// to roundoff and is the form used by the mixed schemes.
    pub fn discrete_divergence(&self, c: &DVector<f64>) -> f64 {
        let traces = &self.trace * c;
        let mut acc = 0.0;
        for (fi, &m) in self.measures.iter().enumerate() {
            acc += m * traces[fi];
        }
        acc / self.volume
    }

    /// Constant normal trace of the flux on local face `fi`.
    pub fn normal_trace(&self, c: &DVector<f64>, fi: usize) -> f64 {
        self.trace.row(fi).transpose().dot(c)
    }

    /// All normal traces as a vector in local face order.
    pub fn normal_traces(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.trace * c
    }

    /// Recovers the flux coefficients from prescribed normal traces
    /// (one constant per face): the inverse of the trace map.
    pub fn coeffs_from_traces(&self, traces: &DVector<f64>) -> Result<DVector<f64>, LocalSpaceError> {
        self.trace_lu
            .solve(traces)
            .ok_or(LocalSpaceError::SingularDofMap { cell: self.cell })
    }

    /// Squared L2 norm `int_K |tau|^2` of the flux with coefficients `c`.
    pub fn norm_l2_squared(&self, c: &DVector<f64>) -> f64 {
        (c.transpose() * &self.gram_unweighted * c)[(0, 0)]
    }
}

/// Result of [`flux_map_surjectivity_check`].
#[derive(Debug, Clone)]
pub struct SurjectivityReport {
    /// Rank of the normal trace map (always d + 1 when the check passes).
    pub rank: usize,
    /// Numerical surrogate for the norm of a right inverse of the trace map:
    /// the largest value of `(|tau|^2 + h^2 |div tau|^2)^(1/2)` over fluxes
    /// whose trace data has unit weighted norm `(h sum_F |F| t_F^2)^(1/2)`.
    /// Stays bounded under uniform refinement on shape-regular cells.
    pub right_inverse_constant: f64,
}

/// Certifies that prescribing one constant normal trace per face determines
/// exactly one flux in `RT(K)`, and measures how well-conditioned the
/// inversion is.
pub fn flux_map_surjectivity_check(
    flux: &LocalFluxSpace,
) -> Result<SurjectivityReport, LocalSpaceError> {
    let d = flux.dim();
    let rank = linalg::numerical_rank(flux.trace_matrix(), 1e-12);
    if rank < d + 1 {
        return Err(LocalSpaceError::RankDeficient {
            cell: flux.cell(),
            rank,
            expected: d + 1,
        });
    }
    // Rayleigh quotient sup_c (c^T N c) / (c^T D c) with
    //   N = int |tau|^2 + h^2 int (div tau)^2,
    //   D = h sum_F |F| (tau . n_F)^2  (trace Gram).
    let mut n = flux.gram_unweighted().clone();
    let h = flux.diameter();
    n[(d, d)] += h * h * flux.volume() * (d as f64).powi(2);
    let mut tw = DMatrix::zeros(d + 1, d + 1);
    for (fi, &m) in flux.face_measures().iter().enumerate() {
        tw[(fi, fi)] = h * m;
    }
    let dmat = flux.trace_matrix().transpose() * tw * flux.trace_matrix();
    let chol = dmat
        .cholesky()
        .ok_or(LocalSpaceError::RankDeficient {
            cell: flux.cell(),
            rank,
            expected: d + 1,
        })?;
    let l_inv = chol
        .l()
        .try_inverse()
        .expect("triangular factor of an SPD matrix is invertible");
    let whitened = &l_inv * n * l_inv.transpose();
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let lambda_max = sym.symmetric_eigen().eigenvalues.max();
    Ok(SurjectivityReport {
        rank,
        right_inverse_constant: lambda_max.sqrt(),
    })
}

/// The local potential space `D(K) = P^1 + span{psi_K}` in the coefficient
/// basis `{1, (x - xbar)_1, .., (x - xbar)_d, psi_K}`, with the
/// degree-of-freedom map to `(cell mean, face means)`.
#[derive(Debug, Clone)]
pub struct LocalPotentialSpace {
    cell: usize,
    dim: usize,
    volume: f64,
    barycenter: Vector3<f64>,
    b: Matrix3<f64>,
    b_inv: Matrix3<f64>,
    eta: f64,
    dof: DMatrix<f64>,
    dof_lu: LU<f64, Dyn, Dyn>,
    psi_face_means: Vec<f64>,
    dof_condition: f64,
}

impl LocalPotentialSpace {
    /// Builds the potential space of cell `c`. The face means of `psi_K`
    /// entering the degree-of-freedom matrix are computed by face
    /// quadrature; the closed form `c_K` is kept as an independent
    /// cross-check, see [`Self::psi_face_mean_closed_form`].
    pub fn new(
        mesh: &Mesh,
        c: usize,
        mobility: &Mobility,
    ) -> Result<LocalPotentialSpace, LocalSpaceError> {
        let cell = mesh.cell(c);
        let d = mesh.dim();
        let b = *mobility.cell_matrix(c);
        let b_inv = b.try_inverse().ok_or(LocalSpaceError::SingularDofMap { cell: c })?;
        let eta = (b_inv * cell.second_moment).trace();
        let barycenter = cell.barycenter;

        let psi = |x: &Vector3<f64>| {
            let r = x - barycenter;
            0.5 * (b_inv * r).dot(&r)
        };
        let mut psi_face_means = Vec::with_capacity(d + 1);
        for f in &cell.faces {
            psi_face_means.push(polyquad::face_mean(mesh, f.face, MOMENT_DEGREE, psi)?);
        }

        // Rows: cell mean then face means; columns: 1, (x - xbar)_j, psi.
        let mut dof = DMatrix::zeros(d + 2, d + 2);
        dof[(0, 0)] = 1.0;
        dof[(0, d + 1)] = eta / (2.0 * cell.volume);
        for (fi, f) in cell.faces.iter().enumerate() {
            let fbar = mesh.face(f.face).barycenter;
            dof[(1 + fi, 0)] = 1.0;
            for j in 0..d {
                dof[(1 + fi, 1 + j)] = fbar[j] - barycenter[j];
            }
            dof[(1 + fi, d + 1)] = psi_face_means[fi];
        }

        // Condition number of the column-equilibrated map; equilibration
        // removes the h powers the monomial basis members carry, leaving a
        // shape-dependent number that is stable under refinement.
        let mut equilibrated = dof.clone();
        for j in 0..(d + 2) {
            let norm = equilibrated.column(j).norm();
            equilibrated.column_mut(j).scale_mut(1.0 / norm);
        }
        let dof_condition = linalg::condition_number(&equilibrated);

        let dof_lu = dof.clone().lu();
        if dof_lu.determinant().abs() == 0.0 {
            return Err(LocalSpaceError::SingularDofMap { cell: c });
        }

        Ok(LocalPotentialSpace {
            cell: c,
            dim: d,
            volume: cell.volume,
            barycenter,
            b,
            b_inv,
            eta,
            dof,
            dof_lu,
            psi_face_means,
            dof_condition,
        })
    }

    /// Cell index this space lives on.
    pub fn cell(&self) -> usize {
        self.cell
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell volume.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// The weighted second moment `eta_K`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The degree-of-freedom matrix: row 0 is the cell mean, row 1 + i the
    /// mean on local face i, columns follow the coefficient basis.
    pub fn dof_matrix(&self) -> &DMatrix<f64> {
        &self.dof
    }

    /// Condition number of the column-equilibrated degree-of-freedom matrix.
    pub fn dof_condition(&self) -> f64 {
        self.dof_condition
    }

    /// Face means of `psi_K` (computed by quadrature, one per local face).
    pub fn psi_face_means(&self) -> &[f64] {
        &self.psi_face_means
    }

    /// The closed form `c_K = (2 + d) eta_K / (2 d |K|)` that all face means
    /// of `psi_K` equal on a simplex.
    pub fn psi_face_mean_closed_form(&self) -> f64 {
        (2.0 + self.dim as f64) * self.eta / (2.0 * self.dim as f64 * self.volume)
    }

    /// Cell mean of `psi_K`, `eta_K / (2 |K|)`.
    pub fn psi_cell_mean(&self) -> f64 {
        self.eta / (2.0 * self.volume)
    }

    /// Value of `psi_K` at `x`.
    pub fn psi(&self, x: &Vector3<f64>) -> f64 {
        let r = x - self.barycenter;
        0.5 * (self.b_inv * r).dot(&r)
    }

    /// Value of the potential with coefficients `c` at `x`.
    pub fn eval(&self, c: &DVector<f64>, x: &Vector3<f64>) -> f64 {
        let r = x - self.barycenter;
        let mut v = c[0] + c[self.dim + 1] * self.psi(x);
        for j in 0..self.dim {
            v += c[1 + j] * r[j];
        }
        v
    }

    /// Gradient of the potential with coefficients `c` at `x`.
    pub fn gradient(&self, c: &DVector<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        let mut g = c[self.dim + 1] * (self.b_inv * (x - self.barycenter));
        for j in 0..self.dim {
            g[j] += c[1 + j];
        }
        g
    }

    /// Coefficients of `b grad v` in the flux basis: the linear part maps to
    /// the constant block, `psi` to the radial member (`b grad psi = x - xbar`).
    pub fn flux_coeffs(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim + 1);
        for j in 0..self.dim {
            out[j] = c[1 + j];
        }
        out[self.dim] = c[self.dim + 1];
        out
    }

    /// Degrees of freedom (cell mean, face means) of the potential with
    /// coefficients `c`.
    pub fn dofs_of(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.dof * c
    }

    /// The unique member of `D(K)` with the prescribed cell and face means.
    pub fn potential_from_dofs(&self, dofs: &DVector<f64>) -> Result<DVector<f64>, LocalSpaceError> {
        self.dof_lu
            .solve(dofs)
            .ok_or(LocalSpaceError::SingularDofMap { cell: self.cell })
    }

    /// Local stiffness `int_K b grad v_i . grad v_j` in the coefficient
    /// basis: zero row/column for the constant, `|K| b` on the linear block,
    /// `eta_K` for `psi` (the cross terms vanish exactly).
    pub fn stiffness_monomial(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut a = DMatrix::zeros(d + 2, d + 2);
        for i in 0..d {
            for j in 0..d {
                a[(1 + i, 1 + j)] = self.volume * self.b[(i, j)];
            }
        }
        a[(d + 1, d + 1)] = self.eta;
        a
    }

    /// Local stiffness in the degree-of-freedom basis,
    /// `P^-T A P^-1` with `P` the dof matrix. Row/column order matches the
    /// dof order (cell mean first).
    pub fn stiffness_dof(&self) -> DMatrix<f64> {
        let n = self.dim + 2;
        let p_inv = self
            .dof_lu
            .solve(&DMatrix::identity(n, n))
            .expect("dof map invertibility was checked at construction");
        p_inv.transpose() * self.stiffness_monomial() * p_inv
    }

    /// Squared broken L2 norm `int_K v^2` of the potential with
    /// coefficients `c`, by quadrature (exact: the integrand is quartic).
    pub fn norm_l2_squared(&self, mesh: &Mesh, c: &DVector<f64>) -> Result<f64, LocalSpaceError> {
        Ok(polyquad::integrate_cell(mesh, self.cell, 4, |x| {
            self.eval(c, x).powi(2)
        })?)
    }
}

/// Moment matrix of a cell: maps the local dof vector
/// `(cell mean, face means)` of a function `v` to the right-hand side
/// moments of the projection problem for `b grad v`,
///
/// ```text
///     row j <= d:   sum_F |F| (b e_j . n_{K,F}) vbar_F,
///     radial row:   -d |K| vbar_K + sum_F |F| d_{K,F} vbar_F,
/// ```
///
/// i.e. the integration-by-parts values of `(b grad v, tau_i)_K` that only
/// involve mean values.
pub fn dof_moment_matrix(flux: &LocalFluxSpace) -> DMatrix<f64> {
    let d = flux.dim();
    let mut m = DMatrix::zeros(d + 1, d + 2);
    m[(d, 0)] = -(d as f64) * flux.volume();
    for (fi, &meas) in flux.face_measures().iter().enumerate() {
        for i in 0..=d {
            m[(i, 1 + fi)] = meas * flux.trace_matrix()[(fi, i)];
        }
    }
    m
}

/// The `b^-1`-weighted L2 projection of `b grad v` onto `RT(K)`, computed
/// from the cell and face means of `v` alone. `dofs` lists the cell mean
/// first, then the face means in local face order. Lossless on `D(K)`.
pub fn projected_gradient_from_dofs(
    flux: &LocalFluxSpace,
    dofs: &DVector<f64>,
) -> Result<DVector<f64>, LocalSpaceError> {
    let d = flux.dim();
    let moments = dof_moment_matrix(flux) * dofs;
    // The weighted Gram is block diagonal: solve the d x d block |K| b for
    // the constant part and divide by eta for the radial coefficient.
    let mut rhs = DVector::zeros(d);
    for j in 0..d {
        rhs[j] = moments[j] / flux.volume();
    }
    let mut lin = Vector3::zeros();
    for j in 0..d {
        lin[j] = rhs[j];
    }
    let sol = flux.mobility_inv() * lin;
    let mut c = DVector::zeros(d + 1);
    for j in 0..d {
        c[j] = sol[j];
    }
    c[d] = moments[d] / flux.eta();
    Ok(c)
}

/// Local projection stiffness `M^T G^-1 M` in dof coordinates: the bilinear
/// form `(b^-1 P(b grad v), P(b grad w))_K` of the projection scheme.
/// Independent of any companion choice, and equal to
/// [`LocalPotentialSpace::stiffness_dof`] to roundoff.
pub fn projection_stiffness_dof(flux: &LocalFluxSpace) -> DMatrix<f64> {
    let d = flux.dim();
    let m = dof_moment_matrix(flux);
    // G^-1 M column by column using the block-diagonal closed form.
    let mut ginv_m = DMatrix::zeros(d + 1, d + 2);
    for col in 0..(d + 2) {
        let mut lin = Vector3::zeros();
        for j in 0..d {
            lin[j] = m[(j, col)] / flux.volume();
        }
        let sol = flux.mobility_inv() * lin;
        for j in 0..d {
            ginv_m[(j, col)] = sol[j];
        }
        ginv_m[(d, col)] = m[(d, col)] / flux.eta();
    }
    m.transpose() * ginv_m
}

/// Integration-by-parts pairing: the value of `(grad v, tau)_K` computed
/// from mean values of `v` only,
///
/// ```text
///     -(div tau) pi0_K(v) |K| + sum_F |F| (tau . n_{K,F}) pi0_F(v).
/// ```
pub fn ibp_pairing(
    flux: &LocalFluxSpace,
    cell_mean: f64,
    face_means: &[f64],
    tau: &DVector<f64>,
) -> f64 {
    let traces = flux.normal_traces(tau);
    let mut acc = -flux.divergence(tau) * cell_mean * flux.volume();
    for (fi, &m) in flux.face_measures().iter().enumerate() {
        acc += m * traces[fi] * face_means[fi];
    }
    acc
}

/// Companion potential reconstructions sharing the dof interface of `D(K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompanionFlavor {
    /// The space `D(K)` itself; its bubble `psi_K` has nonzero divergence
    /// of `b grad`, so the reconstruction is "weak" (flux-conforming).
    WeakBubble,
    /// Linears enriched by the cubic barycentric bubble `l0 l1 l2`
    /// (triangles only); fully H1-looking, but `b grad` of it leaves RT(K).
    StrongBubble,
}

/// A local potential reconstruction space with the same degrees of freedom
/// as `D(K)`: the cell mean and the face means determine one member.
#[derive(Debug, Clone)]
pub struct CompanionSpace {
    flavor: CompanionFlavor,
    inner: CompanionInner,
}

#[derive(Debug, Clone)]
enum CompanionInner {
    Weak(LocalPotentialSpace),
    Strong {
        cell: usize,
        barycenter: Vector3<f64>,
        v0: Vector3<f64>,
        edge_inv: nalgebra::Matrix2<f64>,
        dof: DMatrix<f64>,
        dof_lu: LU<f64, Dyn, Dyn>,
    },
}

impl CompanionSpace {
    /// Builds the companion of the requested flavor on cell `c`.
    pub fn new(
        mesh: &Mesh,
        c: usize,
        mobility: &Mobility,
        flavor: CompanionFlavor,
    ) -> Result<CompanionSpace, LocalSpaceError> {
        match flavor {
            CompanionFlavor::WeakBubble => Ok(CompanionSpace {
                flavor,
                inner: CompanionInner::Weak(LocalPotentialSpace::new(mesh, c, mobility)?),
            }),
            CompanionFlavor::StrongBubble => {
                if mesh.dim() != 2 {
                    return Err(LocalSpaceError::UnsupportedCompanion { dim: mesh.dim() });
                }
                let cell = mesh.cell(c);
                let verts = mesh.cell_vertex_coords(c);
                let e1 = verts[1] - verts[0];
                let e2 = verts[2] - verts[0];
                let jac = nalgebra::Matrix2::new(e1.x, e2.x, e1.y, e2.y);
                let edge_inv = jac
                    .try_inverse()
                    .ok_or(LocalSpaceError::SingularDofMap { cell: c })?;
                // Columns: 1, (x - xbar)_1, (x - xbar)_2, bubble l0 l1 l2.
                // The bubble vanishes on every edge and has cell mean 1/60.
                let mut dof = DMatrix::zeros(4, 4);
                dof[(0, 0)] = 1.0;
                dof[(0, 3)] = 1.0 / 60.0;
                for (fi, f) in cell.faces.iter().enumerate() {
                    let fbar = mesh.face(f.face).barycenter;
                    dof[(1 + fi, 0)] = 1.0;
                    for j in 0..2 {
                        dof[(1 + fi, 1 + j)] = fbar[j] - cell.barycenter[j];
                    }
                }
                let dof_lu = dof.clone().lu();
                if dof_lu.determinant().abs() == 0.0 {
                    return Err(LocalSpaceError::SingularDofMap { cell: c });
                }
                Ok(CompanionSpace {
                    flavor,
                    inner: CompanionInner::Strong {
                        cell: c,
                        barycenter: cell.barycenter,
                        v0: verts[0],
                        edge_inv,
                        dof,
                        dof_lu,
                    },
                })
            }
        }
    }

    /// Flavor of the companion.
    pub fn flavor(&self) -> CompanionFlavor {
        self.flavor
    }

    /// Number of coefficients (always d + 2).
    pub fn len(&self) -> usize {
        match &self.inner {
            CompanionInner::Weak(p) => p.dim() + 2,
            CompanionInner::Strong { dof, .. } => dof.nrows(),
        }
    }

    /// True if the space is empty (never).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// The unique companion member with the prescribed cell and face means.
    pub fn potential_from_dofs(&self, dofs: &DVector<f64>) -> Result<DVector<f64>, LocalSpaceError> {
        match &self.inner {
            CompanionInner::Weak(p) => p.potential_from_dofs(dofs),
            CompanionInner::Strong { cell, dof_lu, .. } => dof_lu
                .solve(dofs)
                .ok_or(LocalSpaceError::SingularDofMap { cell: *cell }),
        }
    }

    /// Degrees of freedom of a companion member.
    pub fn dofs_of(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            CompanionInner::Weak(p) => p.dofs_of(coeffs),
            CompanionInner::Strong { dof, .. } => dof * coeffs,
        }
    }

    /// Value of the companion member at `x`.
    pub fn eval(&self, coeffs: &DVector<f64>, x: &Vector3<f64>) -> f64 {
        match &self.inner {
            CompanionInner::Weak(p) => p.eval(coeffs, x),
            CompanionInner::Strong {
                barycenter,
                v0,
                edge_inv,
                ..
            } => {
                let r = x - barycenter;
                let local = edge_inv * nalgebra::Vector2::new(x.x - v0.x, x.y - v0.y);
                let (l1, l2) = (local.x, local.y);
                let l0 = 1.0 - l1 - l2;
                coeffs[0] + coeffs[1] * r.x + coeffs[2] * r.y + coeffs[3] * l0 * l1 * l2
            }
        }
    }

    /// Gradient of the companion member at `x`.
    pub fn gradient(&self, coeffs: &DVector<f64>, x: &Vector3<f64>) -> Vector3<f64> {
        match &self.inner {
            CompanionInner::Weak(p) => p.gradient(coeffs, x),
            CompanionInner::Strong {
                v0, edge_inv, ..
            } => {
                let local = edge_inv * nalgebra::Vector2::new(x.x - v0.x, x.y - v0.y);
                let (l1, l2) = (local.x, local.y);
                let l0 = 1.0 - l1 - l2;
                let g1 = Vector3::new(edge_inv[(0, 0)], edge_inv[(0, 1)], 0.0);
                let g2 = Vector3::new(edge_inv[(1, 0)], edge_inv[(1, 1)], 0.0);
                let g0 = -g1 - g2;
                let bubble = g0 * (l1 * l2) + g1 * (l0 * l2) + g2 * (l0 * l1);
                Vector3::new(coeffs[1], coeffs[2], 0.0) + bubble * coeffs[3]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::Rng;

    fn reference_triangle() -> Mesh {
        Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap()
    }

    /// Mesh with a single random non-degenerate simplex.
    fn random_simplex(rng: &mut ChaCha8Rng, dim: usize) -> Mesh {
        loop {
            let n = dim + 1;
            let verts: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    let mut v = Vector3::zeros();
                    for k in 0..dim {
                        v[k] = rng.gen_range(-1.0..1.0);
                    }
                    v
                })
                .collect();
            if let Ok(mesh) = Mesh::build(dim, verts, vec![(0..n).collect()]) {
                // Reject very flat cells so tolerances stay meaningful.
                let cell = mesh.cell(0);
                if cell.volume > 0.05 * cell.diameter.powi(dim as i32) {
                    return mesh;
                }
            }
        }
    }

    fn random_mobility(rng: &mut ChaCha8Rng, mesh: &Mesh, hi: f64) -> Mobility {
        let b = random_spd_matrix(rng, mesh.dim(), 1.0, hi);
        Mobility::uniform(mesh, b).unwrap()
    }

    #[test]
    fn mobility_validation_and_bounds() {
        let mesh = reference_triangle();
        let id = Mobility::identity(&mesh);
        assert_eq!(id.bounds(), (1.0, 1.0));

        let aniso = Mobility::rotated_anisotropic(&mesh, 1.0, 1e3, 0.5).unwrap();
        let (lo, hi) = aniso.bounds();
        assert_relative_eq!(lo, 1.0, max_relative = 1e-12);
        assert_relative_eq!(hi, 1e3, max_relative = 1e-12);

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            Mobility::uniform(&mesh, asym),
            Err(LocalSpaceError::NotSymmetric { .. })
        ));

        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Mobility::uniform(&mesh, indef),
            Err(LocalSpaceError::NotPositiveDefinite { .. })
        ));

        let wrong = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            Mobility::uniform(&mesh, wrong),
            Err(LocalSpaceError::WrongShape { .. })
        ));

        assert!(matches!(
            Mobility::per_cell(&mesh, vec![]),
            Err(LocalSpaceError::WrongCellCount { got: 0, expected: 1 })
        ));
    }

    #[test]
    fn mobility_json_parsing() {
        let mesh = Mesh::structured_triangulation(1).unwrap();
        let uni = Mobility::from_json_str(&mesh, r#"{"uniform": [[2.0, 0.5], [0.5, 1.0]]}"#).unwrap();
        assert_relative_eq!(uni.cell_matrix(0)[(0, 1)], 0.5);

        let per = Mobility::from_json_str(
            &mesh,
            r#"{"per_cell": [[[1.0, 0.0], [0.0, 1.0]], [[3.0, 0.0], [0.0, 3.0]]]}"#,
        )
        .unwrap();
        assert_relative_eq!(per.cell_matrix(1)[(0, 0)], 3.0);

        for bad in [
            r#"{}"#,
            r#"{"uniform": [[1,0],[0,1]], "per_cell": [[[1,0],[0,1]],[[1,0],[0,1]]]}"#,
            r#"{"uniform": [[1,0],[0,1]], "extra": 0}"#,
            r#"{"uniform": [[1,0,0],[0,1,0]]}"#,
        ] {
            assert!(
                matches!(Mobility::from_json_str(&mesh, bad), Err(LocalSpaceError::Schema(_))),
                "expected schema error for {bad}"
            );
        }
    }

    #[test]
    fn eta_on_reference_triangle_matches_quadrature_oracle() {
        let mesh = reference_triangle();
        let flux = LocalFluxSpace::new(&mesh, 0, &Mobility::identity(&mesh)).unwrap();
        // Closed form vs the independent quadrature path.
        assert_relative_eq!(flux.eta(), 1.0 / 18.0, epsilon = 1e-15);
        let bary = mesh.cell(0).barycenter;
        let quad =
            polyquad::integrate_cell(&mesh, 0, 2, |x| (x - bary).norm_squared()).unwrap();
        assert_relative_eq!(flux.eta(), quad, epsilon = 1e-15);
    }

    #[test]
    fn radial_member_divergence_and_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for dim in [2usize, 3] {
            for _ in 0..20 {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
                let d = dim as f64;
                // Radial member: coefficients (0, .., 0, 1).
                let mut radial = DVector::zeros(dim + 1);
                radial[dim] = 1.0;
                assert_relative_eq!(flux.divergence(&radial), d);
                assert_relative_eq!(flux.discrete_divergence(&radial), d, max_relative = 1e-13);
                // Its normal traces are the barycenter-face distances, also
                // recoverable by independent face quadrature.
                for (fi, &dist) in flux.face_distances().iter().enumerate() {
                    assert_relative_eq!(flux.normal_trace(&radial, fi), dist, epsilon = 1e-15);
                    let f_idx = mesh.cell(0).faces[fi].face;
                    let n = flux.face_normals()[fi];
                    let bary = flux.barycenter();
                    let by_quad =
                        polyquad::face_mean(&mesh, f_idx, 2, |x| (x - bary).dot(&n)).unwrap();
                    assert_relative_eq!(by_quad, dist, max_relative = 1e-13, epsilon = 1e-15);
                }
                // Constant members are divergence free.
                let mut constant = DVector::zeros(dim + 1);
                constant[0] = 1.0;
                assert_relative_eq!(flux.divergence(&constant), 0.0);
                assert_relative_eq!(
                    flux.discrete_divergence(&constant),
                    0.0,
                    epsilon = 1e-12 * flux.mobility().amax()
                );
            }
        }
    }

    #[test]
    fn gram_matrices_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2usize, 3] {
            let mesh = random_simplex(&mut rng, dim);
            let mobility = random_mobility(&mut rng, &mesh, 100.0);
            let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
            let b_inv = *flux.mobility_inv();
            let n = dim + 1;
            for i in 0..n {
                for j in 0..n {
                    let mut ei = DVector::zeros(n);
                    ei[i] = 1.0;
                    let mut ej = DVector::zeros(n);
                    ej[j] = 1.0;
                    let weighted = polyquad::integrate_cell(&mesh, 0, 2, |x| {
                        (b_inv * flux.eval(&ei, x)).dot(&flux.eval(&ej, x))
                    })
                    .unwrap();
                    let unweighted = polyquad::integrate_cell(&mesh, 0, 2, |x| {
                        flux.eval(&ei, x).dot(&flux.eval(&ej, x))
                    })
                    .unwrap();
                    let scale_w = flux.gram_weighted().amax();
                    let scale_u = flux.gram_unweighted().amax();
                    assert!((weighted - flux.gram_weighted()[(i, j)]).abs() <= 1e-13 * scale_w);
                    assert!((unweighted - flux.gram_unweighted()[(i, j)]).abs() <= 1e-13 * scale_u);
                }
            }
        }
    }

    #[test]
    fn psi_face_means_all_equal_the_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for dim in [2usize, 3] {
            for _ in 0..25 {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
                let ck = pot.psi_face_mean_closed_form();
                for &m in pot.psi_face_means() {
                    assert_relative_eq!(m, ck, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn reference_triangle_psi_constants() {
        let mesh = reference_triangle();
        let pot = LocalPotentialSpace::new(&mesh, 0, &Mobility::identity(&mesh)).unwrap();
        assert_relative_eq!(pot.eta(), 1.0 / 18.0, epsilon = 1e-15);
        assert_relative_eq!(pot.psi_cell_mean(), 1.0 / 18.0, epsilon = 1e-15);
        // c_K = (2 + d) eta / (2 d |K|) = 4 * (1/18) / 2 = 1/9.
        assert_relative_eq!(pot.psi_face_mean_closed_form(), 1.0 / 9.0, epsilon = 1e-14);
        for &m in pot.psi_face_means() {
            assert_relative_eq!(m, 1.0 / 9.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dof_map_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2usize, 3] {
            for _ in 0..10 {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
                let coeffs = DVector::from_fn(dim + 2, |_, _| rng.gen_range(-1.0..1.0));
                let dofs = pot.dofs_of(&coeffs);
                let back = pot.potential_from_dofs(&dofs).unwrap();
                assert!((&coeffs - &back).amax() <= 1e-11 * coeffs.amax().max(1.0));

                // Dofs determine the function: meaning the dofs themselves
                // round trip as well.
                let dofs2 = pot.dofs_of(&back);
                assert!((&dofs - &dofs2).amax() <= 1e-11 * dofs.amax().max(1.0));
            }
        }
    }

    #[test]
    fn paper_basis_member_has_zero_weighted_divergence() {
        // The face-attached basis members of D(K) with unit mean on one face
        // are the linear (nonconforming) nodal functions: prescribing the
        // cell mean they induce, the psi coefficient must vanish, so
        // div(b grad) of them is zero.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for dim in [2usize, 3] {
            let mesh = random_simplex(&mut rng, dim);
            let mobility = random_mobility(&mut rng, &mesh, 10.0);
            let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
            let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
            let cell = mesh.cell(0);
            for fi in 0..=dim {
                let mut dofs = DVector::zeros(dim + 2);
                // Cell mean of the linear with face means delta_{F,F'}:
                // |F| d_{K,F} / (d |K|).
                let f = &cell.faces[fi];
                dofs[0] = f.measure * f.distance / (dim as f64 * cell.volume);
                dofs[1 + fi] = 1.0;
                let coeffs = pot.potential_from_dofs(&dofs).unwrap();
                assert!(coeffs[dim + 1].abs() <= 1e-12, "psi coefficient {:e}", coeffs[dim + 1]);
                let grad_flux = pot.flux_coeffs(&coeffs);
                assert!(flux.divergence(&grad_flux).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn ibp_pairing_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let mut worst: f64 = 0.0;
        for (dim, count) in [(2usize, 50usize), (3, 5)] {
            for _ in 0..count {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
                let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
                let v = DVector::from_fn(dim + 2, |_, _| rng.gen_range(-1.0..1.0));
                let tau = DVector::from_fn(dim + 1, |_, _| rng.gen_range(-1.0..1.0));

                let lhs = polyquad::integrate_cell(&mesh, 0, 3, |x| {
                    pot.gradient(&v, x).dot(&flux.eval(&tau, x))
                })
                .unwrap();
                let dofs = pot.dofs_of(&v);
                let rhs = ibp_pairing(&flux, dofs[0], dofs.as_slice()[1..].as_ref(), &tau);
                let scale = lhs.abs().max(flux.volume() * flux.mobility().amax());
                worst = worst.max((lhs - rhs).abs() / scale);
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * scale,
                    "ibp mismatch {:.3e} vs {:.3e} (dim {dim})",
                    lhs,
                    rhs
                );
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn projected_gradient_is_lossless_on_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for dim in [2usize, 3] {
            for _ in 0..10 {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
                let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();

                // A linear with gradient g projects to the flux b g.
                let mut lin = DVector::zeros(dim + 2);
                lin[0] = 0.3;
                for j in 0..dim {
                    lin[1 + j] = rng.gen_range(-1.0..1.0);
                }
                let proj = projected_gradient_from_dofs(&flux, &pot.dofs_of(&lin)).unwrap();
                for j in 0..dim {
                    assert_relative_eq!(proj[j], lin[1 + j], max_relative = 1e-12, epsilon = 1e-13);
                }
                assert!(proj[dim].abs() <= 1e-12 * lin.amax());

                // psi projects to the radial member with coefficient one.
                let mut psi = DVector::zeros(dim + 2);
                psi[dim + 1] = 1.0;
                let proj = projected_gradient_from_dofs(&flux, &pot.dofs_of(&psi)).unwrap();
                for j in 0..dim {
                    assert!(proj[j].abs() <= 1e-12);
                }
                assert_relative_eq!(proj[dim], 1.0, max_relative = 1e-12);

                // A general member projects to exactly its own b grad.
                let v = DVector::from_fn(dim + 2, |_, _| rng.gen_range(-1.0..1.0));
                let proj = projected_gradient_from_dofs(&flux, &pot.dofs_of(&v)).unwrap();
                let direct = pot.flux_coeffs(&v);
                assert!((&proj - &direct).amax() <= 1e-11 * direct.amax().max(1.0));
            }
        }
    }

    #[test]
    fn projection_stiffness_equals_potential_stiffness() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for dim in [2usize, 3] {
            for _ in 0..10 {
                let mesh = random_simplex(&mut rng, dim);
                let mobility = random_mobility(&mut rng, &mesh, 1e3);
                let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
                let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
                let a_primal = pot.stiffness_dof();
                let a_proj = projection_stiffness_dof(&flux);
                let scale = a_primal.amax();
                assert!(
                    (&a_primal - &a_proj).amax() <= 1e-12 * scale,
                    "stiffness mismatch {:.3e}",
                    (&a_primal - &a_proj).amax() / scale
                );
            }
        }
    }

    #[test]
    fn dof_conditioning_is_stable_under_refinement() {
        let mut mesh = Mesh::structured_triangulation(1).unwrap();
        let mut conds = Vec::new();
        for _ in 0..4 {
            let mobility = Mobility::identity(&mesh);
            let pot = LocalPotentialSpace::new(&mesh, 0, &mobility).unwrap();
            conds.push(pot.dof_condition());
            mesh = mesh.uniform_refine().unwrap();
        }
        let lo = conds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = conds.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo <= 4.0, "dof conditioning drifted: {conds:?}");
    }

    #[test]
    fn surjectivity_check_flags_needle_cells() {
        let mesh = reference_triangle();
        let flux = LocalFluxSpace::new(&mesh, 0, &Mobility::identity(&mesh)).unwrap();
        let report = flux_map_surjectivity_check(&flux).unwrap();
        assert_eq!(report.rank, 3);
        assert!(report.right_inverse_constant.is_finite());

        // Needle of aspect ratio 1e4.
        let needle = Mesh::build(
            2,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.5, 1e-4, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let needle_flux = LocalFluxSpace::new(&needle, 0, &Mobility::identity(&needle)).unwrap();
        match flux_map_surjectivity_check(&needle_flux) {
            // Either outcome is a flag: rank collapse under the tolerance,
            // or a right inverse orders of magnitude worse than reference.
            Ok(needle_report) => {
                assert!(
                    needle_report.right_inverse_constant > 10.0 * report.right_inverse_constant,
                    "needle constant {:.3e} vs reference {:.3e}",
                    needle_report.right_inverse_constant,
                    report.right_inverse_constant
                );
            }
            Err(err) => assert!(matches!(err, LocalSpaceError::RankDeficient { .. })),
        }
    }

    #[test]
    fn surjectivity_constant_stable_under_refinement() {
        let mut mesh = Mesh::structured_triangulation(1).unwrap();
        let mut constants = Vec::new();
        for _ in 0..4 {
            let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 50.0, 0.4).unwrap();
            let flux = LocalFluxSpace::new(&mesh, 0, &mobility).unwrap();
            constants.push(flux_map_surjectivity_check(&flux).unwrap().right_inverse_constant);
            mesh = mesh.uniform_refine().unwrap();
        }
        let lo = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = constants.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo <= 4.0, "right inverse constants drifted: {constants:?}");
    }

    #[test]
    fn companions_share_dofs_but_differ_pointwise() {
        let mesh = reference_triangle();
        let mobility = Mobility::rotated_anisotropic(&mesh, 1.0, 100.0, 0.3).unwrap();
        let weak = CompanionSpace::new(&mesh, 0, &mobility, CompanionFlavor::WeakBubble).unwrap();
        let strong = CompanionSpace::new(&mesh, 0, &mobility, CompanionFlavor::StrongBubble).unwrap();

        let dofs = DVector::from_vec(vec![0.7, -0.2, 0.4, 0.1]);
        let cw = weak.potential_from_dofs(&dofs).unwrap();
        let cs = strong.potential_from_dofs(&dofs).unwrap();

        // Same degrees of freedom by construction.
        assert!((weak.dofs_of(&cw) - &dofs).amax() <= 1e-12);
        assert!((strong.dofs_of(&cs) - &dofs).amax() <= 1e-12);

        // Different functions pointwise (the bubbles differ).
        let probe = Vector3::new(0.21, 0.17, 0.0);
        assert!((weak.eval(&cw, &probe) - strong.eval(&cs, &probe)).abs() > 1e-6);
    }

    #[test]
    fn strong_companion_rejects_tetrahedra() {
        let mesh = Mesh::build(
            3,
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let err = CompanionSpace::new(
            &mesh,
            0,
            &Mobility::identity(&mesh),
            CompanionFlavor::StrongBubble,
        )
        .unwrap_err();
        assert!(matches!(err, LocalSpaceError::UnsupportedCompanion { dim: 3 }));
    }

    #[test]
    fn strong_bubble_mean_is_one_sixtieth() {
        // int_K l0 l1 l2 = |K| / 60 via the quadrature path, matching the
        // constant wired into the companion dof matrix.
        let mesh = reference_triangle();
        let strong = CompanionSpace::new(
            &mesh,
            0,
            &Mobility::identity(&mesh),
            CompanionFlavor::StrongBubble,
        )
        .unwrap();
        let coeffs = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let mean = polyquad::cell_mean(&mesh, 0, 3, |x| strong.eval(&coeffs, x)).unwrap();
        assert_relative_eq!(mean, 1.0 / 60.0, epsilon = 1e-15);
        // And its face means vanish.
        for f in 0..mesh.n_faces() {
            let fm = polyquad::face_mean(&mesh, f, 3, |x| strong.eval(&coeffs, x)).unwrap();
            assert!(fm.abs() <= 1e-15);
        }
    }
}
