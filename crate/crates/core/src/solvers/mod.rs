//! Periodic-solution search, the Morse flow and the adiabatic residual.

mod krylov;
mod morse;
mod newton;

pub use krylov::{gmres, GmresOutcome, KrylovConfig};
pub use morse::{
    adiabatic_residual, adiabatic_step_residuals, morse_energy, morse_flow, o_ij_means, q_means, slow_manifold_lift,
    FlowConfig, FlowScheme, Trajectory,
};
pub use newton::{
    cutoff_orbit_coincidence, cutoff_radius, deflated_search, generate_seeds, l2_bound_rows, newton_iterate,
    newton_solve, verify_laplace_correspondence, CoincidenceReport, LaplaceReport, SearchReport, SeedConfig,
    SolutionRecord, SolverConfig, C_SOB,
};
