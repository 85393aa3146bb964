//! JSON run configuration.

use std::fs;
use std::path::Path;

use bft_core::floer::FloerConfig;
use bft_core::solvers::{FlowConfig, SolverConfig};
use bft_core::{FieldState, Grid, HamiltonianSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub floer: FloerConfig,
    #[serde(default)]
    pub initial: InitialState,
}

/// Start of a Morse flow: constant `q` per block plus a band-limited
/// perturbation on every channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub grid: [usize; 3],
    /// One value for all blocks, or one per block.
    pub q: Vec<f64>,
    pub amplitude: f64,
    pub kmax: usize,
    pub rng_seed: u64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self { grid: [8, 8, 8], q: vec![0.25], amplitude: 0.1, kmax: 2, rng_seed: 0 }
    }
}

impl InitialState {
    pub fn field(&self, d: usize) -> Result<FieldState, Failure> {
        let grid = Grid::new(self.grid)?;
        let mut point = vec![0.0; 8 * d];
        for (a, chunk) in point.chunks_mut(8).enumerate() {
            chunk[0] = if self.q.len() == 1 { self.q[0] } else { self.q[a] };
        }
        let base = FieldState::constant(d, grid, &point);
        if self.amplitude == 0.0 {
            return Ok(base);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        Ok(base.add(&FieldState::random_band_limited(d, grid, self.kmax, self.amplitude, &mut rng)))
    }

    fn validate(&self, d: usize) -> Result<(), Failure> {
        Grid::new(self.grid)?;
        if self.q.len() != 1 && self.q.len() != d {
            return Err(Failure::Input(format!("initial.q needs 1 or {d} entries, got {}", self.q.len())));
        }
        if self.q.iter().any(|x| !x.is_finite()) || !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Failure::Input("initial.q must be finite and initial.amplitude nonnegative".into()));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        self.hamiltonian.validate()?;
        self.solver.validate()?;
        self.flow.validate()?;
        self.floer.validate()?;
        self.initial.validate(self.hamiltonian.d)
    }
}

pub fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    config.validate().map_err(|e| match e {
        Failure::Input(m) | Failure::Runtime(m) => Failure::Input(format!("{}: {m}", path.display())),
    })?;
    Ok(config)
}
