//! Robust sliding-mode controller synthesis for `σ̇ = B u` with `B` in a
//! polytope: relay (VSC) and unit-vector (UVC) laws, LMI conditions solved
//! by a built-in interior-point SDP solver, independent certification,
//! reaching-time bounds and closed-loop simulation.

pub mod error;
pub mod lmi;
pub mod matkernel;
pub mod polytope;
pub mod sdp;
pub mod sim;
pub mod synthesis;
pub mod tol;

pub use error::{Error, Result};
pub use matkernel::{Matrix, SymMatrix};
pub use polytope::{PolytopicSystem, SimplexPoint};
pub use synthesis::{ControlLaw, Design, SlidingModeDesign, UvcDesign, VscDesign};
