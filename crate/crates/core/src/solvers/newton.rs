//! Newton–Krylov search for periodic solutions of `J_∂Z = ∇H_t(Z)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::krylov::{gmres, KrylovConfig};
use crate::action::{action_h, equation_residuals, l2_gradient};
use crate::algebra::{CHANNELS, O123, ODD, O_IJ, Q};
use crate::error::{BftError, Result};
use crate::field::{family_distance, FieldState, Grid};
use crate::hamiltonian::HamiltonianSpec;
use crate::spectral::{apply_jdel, apply_shifted_inverse, laplacian};

/// How initial guesses are produced: a constant seed at every point of the
/// lattice `q ∈ values^d`, plus `random_per_point` perturbed copies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub lattice: Vec<f64>,
    pub random_per_point: usize,
    pub amplitude: f64,
    /// Largest wave number used in the perturbations.
    pub kmax: usize,
    pub rng_seed: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { lattice: vec![0.0, 0.5], random_per_point: 8, amplitude: 0.1, kmax: 2, rng_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: [usize; 3],
    pub tol_residual: f64,
    pub max_newton: usize,
    pub krylov: KrylovConfig,
    /// Records closer than this in `family_distance` are one family.
    pub deflation_radius: f64,
    /// Fractions of the target potential solved in turn, warm-starting Newton.
    pub continuation: Vec<f64>,
    /// Residual tolerance at the intermediate continuation levels.
    pub continuation_tol: f64,
    pub seeds: SeedConfig,
    /// Action cap `a` for reporting `P_a(H)`.
    pub action_cap: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid: [16, 16, 16],
            tol_residual: 1e-10,
            max_newton: 50,
            krylov: KrylovConfig::default(),
            deflation_radius: 1e-6,
            continuation: vec![0.25, 0.5, 0.75, 1.0],
            continuation_tol: 1e-6,
            seeds: SeedConfig::default(),
            action_cap: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_residual, self.krylov.tol, self.deflation_radius, self.continuation_tol];
        if positive.iter().any(|&x| !(x > 0.0)) {
            return Err(BftError::Config("tolerances and deflation radius must be positive".into()));
        }
        if self.max_newton == 0 || self.krylov.max_iter == 0 {
            return Err(BftError::Config("iteration limits must be positive".into()));
        }
        if self.seeds.lattice.is_empty() {
            return Err(BftError::Config("seed lattice must be nonempty".into()));
        }
        if self.continuation.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(BftError::Config("continuation levels must lie in (0, 1]".into()));
        }
        Grid::new(self.grid)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid)
    }
}

/// A converged periodic solution.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionRecord {
    pub field: FieldState,
    pub action_value: f64,
    pub residual: f64,
    pub odd_l2: f64,
    pub family_id: usize,
    /// Largest variance over the `o_ij` channels.
    pub o_ij_variance: f64,
    pub sup_odd: f64,
}

impl SolutionRecord {
    pub fn from_field(field: FieldState, spec: &HamiltonianSpec) -> Result<Self> {
        let residual = l2_gradient(&field, spec)?.l2_norm();
        let action_value = action_h(&field, spec)?;
        let (_, odd) = field.even_odd_split()?;
        let o_ij_variance = (0..field.d())
            .flat_map(|a| O_IJ.iter().map(move |&c| (a, c)))
            .map(|(a, c)| field.channel_variance(a, c))
            .fold(0.0, f64::max);
        Ok(Self {
            action_value,
            residual,
            odd_l2: odd.l2_norm(),
            family_id: 0,
            o_ij_variance,
            sup_odd: field.sup_odd(),
            field,
        })
    }
}

/// The linearization `v ↦ J_∂v − ∇²H(Z)v`.
fn jacobian_apply(z: &FieldState, spec: &HamiltonianSpec, v: &FieldState) -> Result<FieldState> {
    Ok(apply_jdel(v)?.sub(&spec.hess_field(z, v)))
}

/// Plain Newton–Krylov iteration at a fixed Hamiltonian; returns the iterate
/// and its residual. Fails when the iteration budget runs out or the
/// Krylov/line-search step stops reducing the residual.
pub fn newton_iterate(
    seed: &FieldState,
    spec: &HamiltonianSpec,
    tol: f64,
    max_newton: usize,
    krylov: &KrylovConfig,
) -> Result<(FieldState, f64)> {
    let np = seed.grid().points();
    let scale = (np as f64).sqrt();
    let mut z = seed.clone();
    let mut f = l2_gradient(&z, spec)?;
    let mut res = f.l2_norm();
    for _ in 0..max_newton {
        if res <= tol {
            return Ok((z, res));
        }
        let rhs: Vec<f64> = f.values().iter().map(|x| -x).collect();
        let target = (krylov.tol * res).max(0.1 * tol) * scale;
        let lin = gmres(
            |x| jacobian_apply(&z, spec, &z.like(x.to_vec())).expect("shape fixed").into_values(),
            |x| apply_shifted_inverse(&z.like(x.to_vec())).expect("shape fixed").into_values(),
            &rhs,
            target,
            krylov.restart,
            krylov.max_iter,
        );
        if lin.residual >= 0.9 * res * scale {
            return Err(BftError::SolverFailure(format!("Krylov stagnation at residual {res:.3e}")));
        }
        let step = z.like(lin.x);
        let mut lambda = 1.0;
        loop {
            let trial = z.axpy(lambda, &step);
            let ft = l2_gradient(&trial, spec)?;
            let rt = ft.l2_norm();
            if rt <= (1.0 - 1e-4 * lambda) * res || (rt < res && lambda < 1.0 / 64.0) {
                z = trial;
                f = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                return Err(BftError::SolverFailure(format!("line search failed at residual {res:.3e}")));
            }
        }
    }
    if res <= tol {
        Ok((z, res))
    } else {
        Err(BftError::SolverFailure(format!("no convergence in {max_newton} Newton steps, best residual {res:.3e}")))
    }
}

/// Newton–Krylov with amplitude continuation. On success the record's field
/// is canonicalized and satisfies `residual ≤ tol_residual`.
pub fn newton_solve(seed: &FieldState, spec: &HamiltonianSpec, config: &SolverConfig) -> Result<SolutionRecord> {
    if seed.d() != spec.d {
        return Err(BftError::ShapeMismatch(format!("seed has d = {}, Hamiltonian has d = {}", seed.d(), spec.d)));
    }
    let mut z = seed.clone();
    let levels: Vec<f64> = if spec.potential.is_zero() { vec![1.0] } else { config.continuation.clone() };
    for (i, &level) in levels.iter().enumerate() {
        let last = i + 1 == levels.len();
        let staged = if level == 1.0 { spec.clone() } else { spec.scaled(level) };
        let tol = if last { config.tol_residual } else { config.continuation_tol.max(config.tol_residual) };
        z = newton_iterate(&z, &staged, tol, config.max_newton, &config.krylov)?.0;
    }
    if levels.last() != Some(&1.0) {
        z = newton_iterate(&z, spec, config.tol_residual, config.max_newton, &config.krylov)?.0;
    }
    z.canonicalize();
    SolutionRecord::from_field(z, spec)
}

/// All seeds described by `config.seeds` for `d` blocks.
pub fn generate_seeds(d: usize, config: &SolverConfig) -> Result<Vec<FieldState>> {
    let grid = config.grid()?;
    let lattice = &config.seeds.lattice;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.rng_seed);
    let mut seeds = Vec::new();
    let count = lattice.len().pow(d as u32);
    for mut code in 0..count {
        let mut point = vec![0.0; CHANNELS * d];
        for alpha in 0..d {
            point[alpha * CHANNELS + Q] = lattice[code % lattice.len()];
            code /= lattice.len();
        }
        let base = FieldState::constant(d, grid, &point);
        for _ in 0..config.seeds.random_per_point {
            let pert = FieldState::random_band_limited(d, grid, config.seeds.kmax, config.seeds.amplitude, &mut rng);
            seeds.push(base.add(&pert));
        }
        seeds.push(base);
    }
    Ok(seeds)
}

/// Result of a multi-seed search, one record per family.
#[derive(Clone, Debug)]
pub struct SearchReport {
    pub records: Vec<SolutionRecord>,
    pub seeds_tried: usize,
    pub seeds_failed: usize,
    /// Lower bound `d + 1` on the number of families.
    pub expected_min: usize,
    /// Set when every constant is a solution (zero potential): the constants
    /// form a continuum and are reported as a single family.
    pub degenerate: bool,
}

impl SearchReport {
    pub fn meets_lower_bound(&self) -> bool {
        self.records.len() >= self.expected_min
    }
}

/// Runs [`newton_solve`] from every seed (in parallel), merges records into
/// families under `family_distance < deflation_radius` in seed order and
/// sorts by `(action, family_id)`.
pub fn deflated_search(spec: &HamiltonianSpec, config: &SolverConfig) -> Result<SearchReport> {
    config.validate()?;
    spec.validate()?;
    let seeds = generate_seeds(spec.d, config)?;
    let outcomes: Vec<Result<SolutionRecord>> = seeds.par_iter().map(|s| newton_solve(s, spec, config)).collect();
    let seeds_tried = outcomes.len();
    let mut families: Vec<SolutionRecord> = Vec::new();
    let mut seeds_failed = 0;
    for outcome in outcomes {
        let Ok(mut rec) = outcome else {
            seeds_failed += 1;
            continue;
        };
        let mut known = false;
        for fam in &families {
            if family_distance(&fam.field, &rec.field)? < config.deflation_radius {
                known = true;
                break;
            }
        }
        if !known {
            rec.family_id = families.len();
            families.push(rec);
        }
    }
    let degenerate = spec.potential.is_zero() && !families.is_empty();
    if degenerate {
        families.truncate(1);
    }
    families.sort_by(|a, b| a.action_value.total_cmp(&b.action_value).then(a.family_id.cmp(&b.family_id)));
    Ok(SearchReport { records: families, seeds_tried, seeds_failed, expected_min: spec.d + 1, degenerate })
}

/// Checks that a solution of a `p`-independent Hamiltonian is a solution of
/// the nonlinear Laplace system.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceReport {
    /// `max_α ‖Δq^α + ∂_{q^α}W‖_{L²}`.
    pub laplace_residual: f64,
    /// Largest `o_ij` channel variance.
    pub o_ij_variance: f64,
    /// `‖p − (∇q + curl-type terms)‖` from the P rows.
    pub p_reconstruction: f64,
    /// `‖o123 − (∂₁o23 + ∂₂o31 + ∂₃o12)‖` from the O123 row.
    pub o123_reconstruction: f64,
    /// Channelwise residuals of the eight equations.
    pub equations: [f64; 8],
}

impl LaplaceReport {
    pub fn passed(&self) -> bool {
        self.laplace_residual < 1e-8
            && self.o_ij_variance < 1e-12
            && self.p_reconstruction < 1e-8
            && self.o123_reconstruction < 1e-8
            && self.equations.iter().all(|&e| e < 1e-8)
    }
}

pub fn verify_laplace_correspondence(record: &SolutionRecord, spec: &HamiltonianSpec) -> Result<LaplaceReport> {
    if spec.potential.depends_on_p() {
        return Err(BftError::Unsupported("Laplace correspondence needs a p-independent potential".into()));
    }
    let z = &record.field;
    let d = z.d();
    let lap = laplacian(z);
    let force = spec.without_cutoff().potential_force(z);
    let mut laplace_residual = 0.0f64;
    let mut o_ij_variance = 0.0f64;
    for a in 0..d {
        let r: f64 = lap
            .channel(a, Q)
            .iter()
            .zip(force.channel(a, Q))
            .map(|(x, y)| (x + y).powi(2))
            .sum::<f64>()
            / z.grid().points() as f64;
        laplace_residual = laplace_residual.max(r.sqrt());
        for &c in &O_IJ {
            o_ij_variance = o_ij_variance.max(z.channel_variance(a, c));
        }
    }
    // The odd part predicted from the even part is (J_∂ Z^even)^odd.
    let (even, odd) = z.even_odd_split()?;
    let lifted = apply_jdel(&even)?;
    let mut p_err = 0.0f64;
    let mut o123_err = 0.0f64;
    for a in 0..d {
        for &c in &ODD {
            let e: f64 = lifted
                .channel(a, c)
                .iter()
                .zip(odd.channel(a, c))
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / z.grid().points() as f64;
            if c == O123 {
                o123_err = o123_err.max(e.sqrt());
            } else {
                p_err = p_err.max(e.sqrt());
            }
        }
    }
    Ok(LaplaceReport {
        laplace_residual,
        o_ij_variance,
        p_reconstruction: p_err,
        o123_reconstruction: o123_err,
        equations: equation_residuals(z, spec)?,
    })
}

/// `(family_id, action, h0‖Z^odd‖² − h1)` for records with action `≤ a`;
/// the lower bound must not exceed `a`.
pub fn l2_bound_rows(records: &[SolutionRecord], spec: &HamiltonianSpec, a: f64) -> Result<Vec<(usize, f64, f64)>> {
    let (h0, h1) = spec.l2_bound_constants()?;
    Ok(records
        .iter()
        .filter(|r| r.action_value <= a)
        .map(|r| (r.family_id, r.action_value, h0 * r.odd_l2 * r.odd_l2 - h1))
        .collect())
}

/// Outcome of comparing the searches with and without the cutoff.
#[derive(Clone, Debug)]
pub struct CoincidenceReport {
    pub a: f64,
    pub rho: f64,
    pub c_sob: f64,
    pub h0: f64,
    pub h1: f64,
    pub plain: Vec<SolutionRecord>,
    pub cut: Vec<SolutionRecord>,
    /// `(plain family, cutoff family, distance)` for families below the cap.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Largest `sup|Z^odd|` over the cutoff records.
    pub max_sup_odd: f64,
    pub matched: bool,
}

/// Margin multiplying the `L²` radius when choosing `ρ`.
pub const C_SOB: f64 = 2.0;

/// `ρ = 1 + sqrt((a + h1)/h0) · C_sob`, with the square root floored at 1 so
/// that `ρ > 1` even when `a + h1 ≤ 0`.
pub fn cutoff_radius(spec: &HamiltonianSpec, a: f64) -> Result<f64> {
    let (h0, h1) = spec.l2_bound_constants()?;
    Ok(1.0 + ((a + h1).max(0.0) / h0).sqrt().max(1.0) * C_SOB)
}

pub fn cutoff_orbit_coincidence(spec: &HamiltonianSpec, a: f64, config: &SolverConfig) -> Result<CoincidenceReport> {
    let plain_spec = spec.without_cutoff();
    let (h0, h1) = plain_spec.l2_bound_constants()?;
    let rho = cutoff_radius(&plain_spec, a)?;
    let cut_spec = plain_spec.clone().with_rho(Some(rho))?;
    let plain: Vec<SolutionRecord> =
        deflated_search(&plain_spec, config)?.records.into_iter().filter(|r| r.action_value <= a).collect();
    let cut: Vec<SolutionRecord> =
        deflated_search(&cut_spec, config)?.records.into_iter().filter(|r| r.action_value <= a).collect();
    let mut pairs = Vec::new();
    let mut used = vec![false; cut.len()];
    let mut matched = plain.len() == cut.len();
    for p in &plain {
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in cut.iter().enumerate() {
            let dist = family_distance(&p.field, &c.field)?;
            if !used[j] && dist < config.deflation_radius && best.is_none_or(|(_, b)| dist < b) {
                best = Some((j, dist));
            }
        }
        match best {
            Some((j, dist)) => {
                used[j] = true;
                pairs.push((p.family_id, cut[j].family_id, dist));
            }
            None => matched = false,
        }
    }
    let max_sup_odd = cut.iter().map(|r| r.sup_odd).fold(0.0, f64::max);
    Ok(CoincidenceReport { a, rho, c_sob: C_SOB, h0, h1, plain, cut, pairs, max_sup_odd, matched })
}
