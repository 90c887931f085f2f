//! Dense semidefinite programming.
//!
//! Problems are stated in standard primal form over a block-diagonal cone
//!
//! ```text
//!   min/max  ⟨C, X⟩   s.t.  ⟨A_k, X⟩ = b_k,  k = 1..m,   X ⪰ 0
//! ```
//!
//! with dual `max b^T y  s.t.  Z = C − Σ y_k A_k ⪰ 0` (for the minimization
//! sense). [`solve`] runs an infeasible-start primal-dual path-following method
//! with Nesterov–Todd scaling and a Mehrotra predictor-corrector.
//!
//! Most callers build problems through [`LmiProgram`], which states an SDP in
//! inequality form over free decision variables and maps it onto the dual side
//! of the standard form. Complex Hermitian blocks are handled by the real
//! embedding in [`crate::linalg::embed_hermitian`].

mod dump;
mod lmi;
mod problem;
mod solver;

pub use dump::{read_sparse, write_sparse};
pub use lmi::{HermitianVar, LmiBlockBuilder, LmiProgram, LmiSolution};
pub use problem::{Constraint, Sense, SdpProblem};
pub use solver::{solve, solve_with, IterateRecord, SdpSolution, SdpStatus, SolverSettings};

pub use crate::linalg::{embed_hermitian, extract_hermitian};
