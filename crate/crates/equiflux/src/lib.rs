//! Simplicial finite elements for the cellwise-constant anisotropic diffusion
//! problem
//!
//! ```text
//!     b^-1 sigma - grad u = 0        in Omega,
//!     -div sigma          = f        in Omega,
//!     u                   = 0        on the boundary,
//! ```
//!
//! with a symmetric positive definite mobility `b` that is constant on every
//! cell of a matching simplicial mesh (triangles or tetrahedra).
//!
//! The crate implements, at lowest order, four discrete formulations of this
//! problem and certifies numerically that they produce the same face fluxes
//! and cell means:
//!
//! * a primal scheme posed on a nonconforming space of cellwise quadratics
//!   (linears enriched by the mobility-adapted bubble `psi_K`),
//! * the mixed Raviart-Thomas scheme of lowest order,
//! * hybridized versions of both, with Lagrange multipliers on the faces,
//! * a projection scheme that only sees cell and face mean values and is
//!   independent of the companion space used to reconstruct a potential.
//!
//! On top of the solvers, [`equivalence`] turns the textbook identities that
//! connect the formulations into executable certificates (flux conformity,
//! potential conformity, divergence balance, cross-scheme gaps), and
//! [`harness`] drives manufactured-solution convergence studies and the
//! command line interface.
//!
//! The modules are layered bottom up:
//!
//! * [`mesh`]: matching simplicial meshes with deterministic face enumeration
//!   and exact orientation bookkeeping,
//! * [`polyquad`]: simplex quadrature and monomial bases with L2 projectors,
//! * [`local_spaces`]: the local flux space `RT(K) = b grad D(K)`, the local
//!   potential space `D(K)`, degree-of-freedom maps and companion spaces,
//! * [`schemes`]: global assembly and the six solve entry points,
//! * [`equivalence`]: residual reports and scheme-to-scheme conversions,
//! * [`harness`]: manufactured cases, convergence tables, CLI.

pub mod equivalence;
pub mod harness;
pub mod linalg;
pub mod local_spaces;
pub mod mesh;
pub mod polyquad;
pub mod schemes;
