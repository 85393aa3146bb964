//! Pseudo-spectral toolkit for the regularized (`d + d*`) Hamiltonian form of
//! the nonlinear Laplace equation on the 3-torus.
//!
//! Modules follow the layers of the construction:
//!
//! * [`algebra`]: the Clifford generators `J_i`, the forms `ω^{J_i}`, `θ_i`, `ξ`.
//! * [`field`]: periodic fields on a uniform grid, transforms and snapshots.
//! * [`spectral`]: `J_∂`, `K_∂`, `Δ` as Fourier multipliers and symbol analysis.
//! * [`hamiltonian`]: `H_t(Z) = ½|Z^odd|² + W_t(q,p)`, its cutoff and derivatives.
//! * [`action`]: the action functionals and the residual of `J_∂Z = ∇H(Z)`.
//! * [`solvers`]: Newton–Krylov search for periodic solutions, Morse flow and
//!   the adiabatic residual.
//! * [`floer`]: space-time least-squares Floer curves and the `C⁰` monitor.

pub mod action;
pub mod algebra;
pub mod error;
pub mod field;
pub mod floer;
pub mod hamiltonian;
pub mod solvers;
pub mod spectral;

pub use error::{BftError, Result};
pub use field::{family_distance, FieldState, Grid, SpectralField};
pub use hamiltonian::{HamiltonianSpec, PotentialSpec, TimeProfile};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
