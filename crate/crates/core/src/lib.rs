//! Simulation of Lindbladian dynamics with partial loss of quantum jumps.
//!
//! When every jump of a channel is watched by a detector of efficiency `η`
//! and records with a click are thrown away, the surviving ensemble obeys a
//! nonlinear Lindblad master equation (NLME)
//!
//! ```text
//! dρ/dt = −i[H,ρ] + Σ_μ γ_μ ( −½{L†L, ρ} + (1−η_μ) L ρ L† + η_μ ⟨L†L⟩ ρ )
//! ```
//!
//! which interpolates between the ordinary Lindblad equation (`η = 0`) and
//! normalized non-Hermitian evolution (`η = 1`). The crate provides three
//! engines for it and the analysis used on a free-fermion chain whose
//! postselected steady state piles particles onto one edge:
//!
//! * [`master_eq`]: density-matrix integration (RK4) and exact Liouvillian
//!   propagation for few-level systems;
//! * [`trajectory`]: Monte Carlo wave-function ensembles over the exact Fock
//!   space, both discard-on-detection (QT1) and reweighted (QT2);
//! * [`gaussian`]: Slater-determinant trajectories for quadratic fermion
//!   chains of hundreds of sites;
//! * [`analysis`]: tanh profile fits, entanglement statistics and
//!   steady-state detection.

pub mod analysis;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod master_eq;
pub mod model;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use model::{JumpChannel, OpenSystemSpec};
