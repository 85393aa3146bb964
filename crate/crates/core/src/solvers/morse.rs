//! Parabolic Morse flow of `f(q, o) = ½∫|∇q|² + ½Σ∫|∇o_ij|² − ∫V(q)` and the
//! slow-manifold residual of its `ε`-deformation.

use serde::{Deserialize, Serialize};

use crate::algebra::{CHANNELS, EVEN, ODD, O_IJ, Q};
use crate::error::{BftError, Result};
use crate::field::{forward_channels, inverse_channels, FieldState};
use crate::hamiltonian::HamiltonianSpec;
use crate::spectral::{apply_jdel, derivative};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowScheme {
    /// `(1 − hΔ) u^{n+1} = u^n + h V′(q^n)` solved exactly in Fourier space.
    #[default]
    SemiImplicitSpectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub scheme: FlowScheme,
    pub h: f64,
    pub epsilon: f64,
    pub s_max: f64,
    /// Stop once `‖(u^{n+1} − u^n)/h‖_{L²}` falls below this.
    pub convergence_tol: f64,
    /// Step size below which halving gives up.
    pub min_step: f64,
    /// Allowed energy increase per accepted step.
    pub energy_slack: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: FlowScheme::SemiImplicitSpectral,
            h: 0.1,
            epsilon: 0.0,
            s_max: 50.0,
            convergence_tol: 1e-10,
            min_step: 1e-6,
            energy_slack: 1e-9,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.s_max > 0.0) || !(self.min_step > 0.0) || !(self.convergence_tol > 0.0) {
            return Err(BftError::Config("flow step, horizon and tolerances must be positive".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(BftError::Config("epsilon must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Accepted states of a Morse flow run; only the even channels are populated.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub s: Vec<f64>,
    pub states: Vec<FieldState>,
    pub energy: Vec<f64>,
    pub converged: bool,
    pub halvings: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectory has the initial state")
    }

    /// Largest energy increase between consecutive accepted states.
    pub fn max_energy_increase(&self) -> f64 {
        self.energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn require_laplace_type(spec: &HamiltonianSpec) -> Result<()> {
    if spec.potential.depends_on_p() {
        return Err(BftError::Unsupported("Morse flow needs a potential independent of p".into()));
    }
    Ok(())
}

/// `f(q, o)` with `V` read from `W` at `p = 0`.
pub fn morse_energy(z: &FieldState, spec: &HamiltonianSpec) -> Result<f64> {
    require_laplace_type(spec)?;
    let grid = z.grid();
    let np = grid.points();
    let mut grad2 = 0.0;
    for axis in 0..3 {
        let dz = derivative(z, axis);
        for a in 0..z.d() {
            for &c in &EVEN {
                grad2 += dz.channel(a, c).iter().map(|x| x * x).sum::<f64>();
            }
        }
    }
    let plain = spec.without_cutoff();
    let mut v = 0.0;
    for idx in 0..np {
        let mut pt = z.point(idx);
        for b in pt.chunks_mut(CHANNELS) {
            for &c in &ODD {
                b[c] = 0.0;
            }
        }
        v += plain.w(grid.coords(idx), &pt);
    }
    Ok(0.5 * grad2 / np as f64 - v / np as f64)
}

fn even_part(z: &FieldState) -> Result<FieldState> {
    Ok(z.even_odd_split()?.0)
}

/// One semi-implicit step of size `h`.
fn step(z: &FieldState, spec: &HamiltonianSpec, h: f64) -> FieldState {
    let grid = z.grid();
    let np = grid.points();
    let force = spec.potential_force(z);
    let rhs = z.axpy(h, &force);
    let mut coeffs = forward_channels(grid, rhs.values());
    for ch in coeffs.chunks_mut(np) {
        for (idx, c) in ch.iter_mut().enumerate() {
            let k = grid.kappa(idx);
            *c /= 1.0 + h * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        }
    }
    z.like(inverse_channels(grid, coeffs))
}

/// Runs the flow `∂_s q = Δq + V′(q)`, `∂_s o_ij = Δo_ij` from the even part
/// of `initial` until the update rate drops below `convergence_tol` or
/// `s_max` is reached. A step that raises `f` by more than the slack is
/// retried at half the size; reaching `min_step` is a failure.
pub fn morse_flow(initial: &FieldState, spec: &HamiltonianSpec, flow: &FlowConfig) -> Result<Trajectory> {
    flow.validate()?;
    require_laplace_type(spec)?;
    if initial.d() != spec.d || initial.block() != CHANNELS {
        return Err(BftError::ShapeMismatch("initial data must be an 8-channel field with the Hamiltonian's d".into()));
    }
    let plain = spec.without_cutoff();
    let mut z = even_part(initial)?;
    let mut energy = morse_energy(&z, &plain)?;
    let mut traj = Trajectory { s: vec![0.0], states: vec![z.clone()], energy: vec![energy], converged: false, halvings: 0 };
    let mut h = flow.h;
    let mut s = 0.0;
    while s < flow.s_max - 1e-12 {
        let hs = h.min(flow.s_max - s);
        let next = step(&z, &plain, hs);
        let e_next = morse_energy(&next, &plain)?;
        if e_next > energy + flow.energy_slack {
            h *= 0.5;
            traj.halvings += 1;
            if h < flow.min_step {
                return Err(BftError::SolverFailure(format!("Morse flow step fell below {:.1e} at s = {s}", flow.min_step)));
            }
            continue;
        }
        let rate = next.sub(&z).l2_norm() / hs;
        s += hs;
        z = next;
        energy = e_next;
        traj.s.push(s);
        traj.states.push(z.clone());
        traj.energy.push(energy);
        if rate < flow.convergence_tol {
            traj.converged = true;
            break;
        }
    }
    Ok(traj)
}

/// Slow-manifold lift: `p` from the P rows and `o123` from the O123 row with
/// `∂W/∂p = 0`, i.e. the odd part `(J_∂ Z^even)^odd`.
pub fn slow_manifold_lift(z: &FieldState) -> Result<FieldState> {
    let even = even_part(z)?;
    let j = apply_jdel(&even)?;
    let (_, odd) = j.even_odd_split()?;
    Ok(even.add(&odd))
}

/// Residual of the `ε`-deformed system on the lifted trajectory, rows
/// ordered as the eight equations, at each step `n → n+1`.
///
/// The time derivative is the forward difference over the step, spatial
/// terms are taken at `n+1` and `V′` at `n`, matching the flow's own
/// discretization; with `ε = 0` the rows reduce to the flow equations.
pub fn adiabatic_step_residuals(traj: &Trajectory, spec: &HamiltonianSpec, eps: f64) -> Result<Vec<f64>> {
    require_laplace_type(spec)?;
    if !(eps >= 0.0) {
        return Err(BftError::InvalidArgument("epsilon must be nonnegative".into()));
    }
    let plain = spec.without_cutoff();
    let lifts: Vec<FieldState> = traj.states.iter().map(slow_manifold_lift).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(lifts.len().saturating_sub(1));
    for n in 0..lifts.len().saturating_sub(1) {
        let h = traj.s[n + 1] - traj.s[n];
        let (zn, zn1) = (&lifts[n], &lifts[n + 1]);
        let mut ds = zn1.sub(zn).scale(1.0 / h);
        for a in 0..zn.d() {
            for &c in &ODD {
                ds.channel_mut(a, c).iter_mut().for_each(|x| *x *= eps);
            }
        }
        // ∇H with V′ explicit and the kinetic term implicit.
        let mut grad = plain.potential_force(zn);
        let (_, odd1) = zn1.even_odd_split()?;
        grad = grad.add(&odd1);
        let r = ds.add(&apply_jdel(zn1)?).sub(&grad);
        out.push(r.l2_norm());
    }
    Ok(out)
}

/// `max_s ‖residual‖ / ε`, or the unscaled maximum when `ε = 0`.
pub fn adiabatic_residual(traj: &Trajectory, spec: &HamiltonianSpec, eps: f64) -> Result<f64> {
    let rows = adiabatic_step_residuals(traj, spec, eps)?;
    let max = rows.into_iter().fold(0.0, f64::max);
    Ok(if eps == 0.0 { max } else { max / eps })
}

/// Mean of every `o_ij` channel, flattened `α`-major.
pub fn o_ij_means(z: &FieldState) -> Vec<f64> {
    (0..z.d()).flat_map(|a| O_IJ.iter().map(move |&c| z.channel_mean(a, c))).collect()
}

/// Mean `q` of each block.
pub fn q_means(z: &FieldState) -> Vec<f64> {
    (0..z.d()).map(|a| z.channel_mean(a, Q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::hamiltonian::PotentialSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cosine() -> HamiltonianSpec {
        HamiltonianSpec::new(1, PotentialSpec::cosine(vec![1.0])).unwrap()
    }

    fn constant_q(q: f64) -> FieldState {
        let mut pt = [0.0; 8];
        pt[Q] = q;
        FieldState::constant(1, Grid::cube(8).unwrap(), &pt)
    }

    fn perturbed(seed: u64) -> FieldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::cube(8).unwrap();
        constant_q(0.25).add(&FieldState::random_band_limited(1, grid, 2, 0.1, &mut rng))
    }

    /// RK4 for the constant-mode equation `dq/ds = V′(q) = −sin(2πq)/2π`.
    fn rk4(q0: f64, s: f64, steps: usize) -> f64 {
        let f = |q: f64| -(2.0 * PI * q).sin() / (2.0 * PI);
        let h = s / steps as f64;
        let mut q = q0;
        for _ in 0..steps {
            let k1 = f(q);
            let k2 = f(q + 0.5 * h * k1);
            let k3 = f(q + 0.5 * h * k2);
            let k4 = f(q + h * k3);
            q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        q
    }

    #[test]
    fn quarter_flows_to_zero() {
        let traj = morse_flow(&constant_q(0.25), &cosine(), &FlowConfig::default()).unwrap();
        assert!(traj.converged);
        assert!(traj.last().channel_mean(0, Q).abs() < 1e-9);
        assert!(traj.max_energy_increase() <= 1e-9);
    }

    #[test]
    fn constant_mode_tracks_ode_oracle() {
        let flow = FlowConfig { h: 0.01, s_max: 3.0, ..FlowConfig::default() };
        let traj = morse_flow(&constant_q(0.25), &cosine(), &flow).unwrap();
        for (s, z) in traj.s.iter().zip(&traj.states).step_by(50) {
            let want = rk4(0.25, *s, 1000);
            // forward Euler in the constant mode: first-order accurate
            assert!((z.channel_mean(0, Q) - want).abs() < 5e-3 * (1.0 + s), "s = {s}");
        }
    }

    #[test]
    fn critical_data_is_stationary() {
        let traj = morse_flow(&constant_q(0.5), &cosine(), &FlowConfig::default()).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.states.len(), 2);
        assert!((traj.last().channel_mean(0, Q) - 0.5).abs() < 1e-15);
        assert!(adiabatic_residual(&traj, &cosine(), 1e-2).unwrap() < 1e-12);
    }

    #[test]
    fn o_ij_heat_flow_preserves_mean() {
        let z0 = perturbed(3);
        let means0 = o_ij_means(&z0);
        let traj = morse_flow(&z0, &cosine(), &FlowConfig::default()).unwrap();
        let last = traj.last();
        for (m0, m1) in means0.iter().zip(o_ij_means(last)) {
            assert!((m0 - m1).abs() < 1e-12);
        }
        for &c in &O_IJ {
            assert!(last.channel_variance(0, c) < 1e-20);
        }
        assert!(traj.max_energy_increase() <= 1e-9);
    }

    #[test]
    fn adiabatic_ratio_is_stable_in_eps() {
        let traj = morse_flow(&perturbed(5), &cosine(), &FlowConfig::default()).unwrap();
        assert!(adiabatic_residual(&traj, &cosine(), 0.0).unwrap() < 1e-8);
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&e| adiabatic_residual(&traj, &cosine(), e).unwrap()).collect();
        assert!(ratios[0] > 1e-6, "{ratios:?}");
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi < 2.0 * lo, "{ratios:?}");
    }

    #[test]
    fn lift_solves_p_rows() {
        let z = slow_manifold_lift(&perturbed(8)).unwrap();
        let (even, odd) = z.even_odd_split().unwrap();
        let j = apply_jdel(&even).unwrap();
        let (_, jodd) = j.even_odd_split().unwrap();
        assert!(jodd.sub(&odd).l2_norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pq = HamiltonianSpec::new(
            1,
            PotentialSpec::CosinePq { amplitudes: vec![1.0], phases: vec![0.0], coupling: 0.2, support: 1.0 },
        )
        .unwrap();
        assert!(morse_flow(&constant_q(0.25), &pq, &FlowConfig::default()).is_err());
        let bad = FlowConfig { h: 0.0, ..FlowConfig::default() };
        assert!(morse_flow(&constant_q(0.25), &cosine(), &bad).is_err());
        let bad = FlowConfig { epsilon: -1.0, ..FlowConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn oversized_step_is_halved() {
        // A very steep potential makes the explicit part overshoot at h = 1.
        let steep = HamiltonianSpec::new(1, PotentialSpec::cosine(vec![40.0])).unwrap();
        let flow = FlowConfig { h: 1.0, s_max: 5.0, ..FlowConfig::default() };
        let traj = morse_flow(&constant_q(0.2), &steep, &flow).unwrap();
        assert!(traj.halvings > 0);
        assert!(traj.max_energy_increase() <= 1e-9);
    }
}
