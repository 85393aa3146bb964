//! `H_t(Z) = ½|Z^odd|² + W_t(q, p)` with a small library of bounded
//! potentials, the cutoff `H̄^ρ`, and closed-form derivatives.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::algebra::{CHANNELS, ODD, P1, Q};
use crate::error::{BftError, Result};
use crate::field::FieldState;
use rayon::prelude::*;

/// Bounded potentials `W(q, p)`, periodic in `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    /// `V(q) = Σ_α (A_α / 4π²) cos(2π q^α + φ_α)`.
    Cosine { amplitudes: Vec<f64>, phases: Vec<f64> },
    /// The cosine potential plus `B cos(2π q¹) s(p₁¹)` with the compact bump
    /// `s(x) = (1 − (x/R)²)³` on `|x| < R`.
    CosinePq {
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
        coupling: f64,
        #[serde(default = "default_support")]
        support: f64,
    },
}

fn default_support() -> f64 {
    1.0
}

impl PotentialSpec {
    /// Single-block cosine with the given amplitude and zero phase.
    pub fn cosine(amplitudes: Vec<f64>) -> Self {
        let phases = vec![0.0; amplitudes.len()];
        Self::Cosine { amplitudes, phases }
    }

    fn cosine_parts(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Self::Zero => None,
            Self::Cosine { amplitudes, phases } | Self::CosinePq { amplitudes, phases, .. } => {
                Some((amplitudes, phases))
            }
        }
    }

    /// Same potential with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Zero => Self::Zero,
            Self::Cosine { amplitudes, phases } => Self::Cosine {
                amplitudes: amplitudes.iter().map(|a| a * factor).collect(),
                phases: phases.clone(),
            },
            Self::CosinePq { amplitudes, phases, coupling, support } => Self::CosinePq {
                amplitudes: amplitudes.iter().map(|a| a * factor).collect(),
                phases: phases.clone(),
                coupling: coupling * factor,
                support: *support,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Cosine { amplitudes, .. } => amplitudes.iter().all(|&a| a == 0.0),
            Self::CosinePq { amplitudes, coupling, .. } => amplitudes.iter().all(|&a| a == 0.0) && *coupling == 0.0,
        }
    }

    /// True when `W` depends on `p` (excluded from the Laplace correspondence).
    pub fn depends_on_p(&self) -> bool {
        matches!(self, Self::CosinePq { coupling, .. } if *coupling != 0.0)
    }
}

/// Multiplicative profile `τ(t)` on `W`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    #[default]
    Constant,
    /// `τ(t) = 1 + amplitude · cos(2π k·t)`.
    Cosine { amplitude: f64, k: [i64; 3] },
}

impl TimeProfile {
    pub fn value(&self, t: [f64; 3]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Cosine { amplitude, k } => {
                let phase = 2.0 * PI * (k[0] as f64 * t[0] + k[1] as f64 * t[1] + k[2] as f64 * t[2]);
                1.0 + amplitude * phase.cos()
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Cosine { amplitude, .. } => 1.0 + amplitude.abs(),
        }
    }
}

/// Quintic smoothstep `σ(x) = 6x⁵ − 15x⁴ + 10x³` clamped to `[0, 1]`, with
/// its first two derivatives.
fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x3 * (10.0 + x * (-15.0 + 6.0 * x)),
            30.0 * x2 * (x - 1.0) * (x - 1.0),
            60.0 * x * (2.0 * x - 1.0) * (x - 1.0),
        )
    }
}

/// `χ_ρ(s)`: one on `[0, ρ−1]`, zero on `[ρ, ∞)`, `C²` in between.
pub fn cutoff_chi(rho: f64, s: f64) -> f64 {
    cutoff_chi_derivs(rho, s).0
}

/// `(χ_ρ, χ_ρ', χ_ρ'')` at `s`.
pub fn cutoff_chi_derivs(rho: f64, s: f64) -> (f64, f64, f64) {
    let (v, d1, d2) = smoothstep(s - rho + 1.0);
    (1.0 - v, -d1, -d2)
}

/// Bump `s(x) = (1 − (x/R)²)³` and its first two derivatives.
fn bump(x: f64, r: f64) -> (f64, f64, f64) {
    let u2 = (x / r).powi(2);
    if u2 >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let w = 1.0 - u2;
    let r2 = r * r;
    (w * w * w, -6.0 * x / r2 * w * w, -6.0 / r2 * w * w + 24.0 * x * x / (r2 * r2) * w)
}

/// `sup |s'|` of the bump, attained at `|x| = R/√5`.
fn bump_slope_max(r: f64) -> f64 {
    96.0 / (25.0 * 5f64.sqrt() * r)
}

/// `sup |s''|` of the bump, attained at `x = 0`.
fn bump_curvature_max(r: f64) -> f64 {
    6.0 / (r * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub d: usize,
    pub potential: PotentialSpec,
    /// Cutoff radius; when present `H̄^ρ` is used.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub time_profile: TimeProfile,
}

impl HamiltonianSpec {
    pub fn new(d: usize, potential: PotentialSpec) -> Result<Self> {
        let spec = Self { d, potential, rho: None, time_profile: TimeProfile::Constant };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_rho(mut self, rho: Option<f64>) -> Result<Self> {
        self.rho = rho;
        self.validate()?;
        Ok(self)
    }

    pub fn with_time_profile(mut self, profile: TimeProfile) -> Self {
        self.time_profile = profile;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(BftError::Config("d must be positive".into()));
        }
        if let Some((amps, phases)) = self.potential.cosine_parts() {
            if amps.len() != self.d || phases.len() != self.d {
                return Err(BftError::Config(format!(
                    "potential needs {} amplitudes and phases, got {} and {}",
                    self.d,
                    amps.len(),
                    phases.len()
                )));
            }
            if amps.iter().chain(phases).any(|x| !x.is_finite()) {
                return Err(BftError::Config("potential parameters must be finite".into()));
            }
        }
        if let PotentialSpec::CosinePq { support, coupling, .. } = &self.potential {
            if !(*support > 0.0) || !coupling.is_finite() {
                return Err(BftError::Config("cosine_pq needs finite coupling and support > 0".into()));
            }
        }
        if let Some(rho) = self.rho {
            if !(rho > 1.0) {
                return Err(BftError::Config(format!("cutoff radius must exceed 1, got {rho}")));
            }
        }
        Ok(())
    }

    /// Same Hamiltonian with the potential scaled (continuation parameter).
    pub fn scaled(&self, factor: f64) -> Self {
        Self { potential: self.potential.scaled(factor), ..self.clone() }
    }

    pub fn without_cutoff(&self) -> Self {
        Self { rho: None, ..self.clone() }
    }

    fn check_point(&self, z: &[f64]) {
        debug_assert_eq!(z.len(), CHANNELS * self.d, "point has wrong length");
    }

    /// `W_t(q, p)`.
    pub fn w(&self, t: [f64; 3], z: &[f64]) -> f64 {
        self.check_point(z);
        let tau = self.time_profile.value(t);
        let mut w = 0.0;
        if let Some((amps, phases)) = self.potential.cosine_parts() {
            for (alpha, (a, ph)) in amps.iter().zip(phases).enumerate() {
                w += a / (4.0 * PI * PI) * (2.0 * PI * z[alpha * CHANNELS + Q] + ph).cos();
            }
        }
        if let PotentialSpec::CosinePq { coupling, support, .. } = &self.potential {
            w += coupling * (2.0 * PI * z[Q]).cos() * bump(z[P1], *support).0;
        }
        tau * w
    }

    /// `∇W` as a full `8d` vector (zero in the `o` channels).
    pub fn w_grad(&self, t: [f64; 3], z: &[f64]) -> Vec<f64> {
        self.check_point(z);
        let tau = self.time_profile.value(t);
        let mut g = vec![0.0; z.len()];
        if let Some((amps, phases)) = self.potential.cosine_parts() {
            for (alpha, (a, ph)) in amps.iter().zip(phases).enumerate() {
                g[alpha * CHANNELS + Q] = -a / (2.0 * PI) * (2.0 * PI * z[alpha * CHANNELS + Q] + ph).sin();
            }
        }
        if let PotentialSpec::CosinePq { coupling, support, .. } = &self.potential {
            let (s, ds, _) = bump(z[P1], *support);
            let th = 2.0 * PI * z[Q];
            g[Q] += -2.0 * PI * coupling * th.sin() * s;
            g[P1] += coupling * th.cos() * ds;
        }
        g.iter_mut().for_each(|x| *x *= tau);
        g
    }

    /// `∇²W · v`.
    pub fn w_hess_apply(&self, t: [f64; 3], z: &[f64], v: &[f64]) -> Vec<f64> {
        self.check_point(z);
        let tau = self.time_profile.value(t);
        let mut out = vec![0.0; z.len()];
        if let Some((amps, phases)) = self.potential.cosine_parts() {
            for (alpha, (a, ph)) in amps.iter().zip(phases).enumerate() {
                let i = alpha * CHANNELS + Q;
                out[i] = -a * (2.0 * PI * z[i] + ph).cos() * v[i];
            }
        }
        if let PotentialSpec::CosinePq { coupling, support, .. } = &self.potential {
            let (s, ds, dds) = bump(z[P1], *support);
            let th = 2.0 * PI * z[Q];
            let (sin, cos) = th.sin_cos();
            let qq = -4.0 * PI * PI * coupling * cos * s;
            let qp = -2.0 * PI * coupling * sin * ds;
            let pp = coupling * cos * dds;
            out[Q] += qq * v[Q] + qp * v[P1];
            out[P1] += qp * v[Q] + pp * v[P1];
        }
        out.iter_mut().for_each(|x| *x *= tau);
        out
    }

    fn odd_norm(z: &[f64]) -> f64 {
        z.chunks(CHANNELS).flat_map(|b| ODD.iter().map(move |&c| b[c] * b[c])).sum::<f64>().sqrt()
    }

    fn chi(&self, r: f64) -> (f64, f64, f64) {
        match self.rho {
            Some(rho) => cutoff_chi_derivs(rho, r),
            None => (1.0, 0.0, 0.0),
        }
    }

    /// `H_t(Z)`, or `H̄^ρ_t(Z)` when a cutoff radius is set.
    pub fn eval(&self, t: [f64; 3], z: &[f64]) -> f64 {
        let r = Self::odd_norm(z);
        let (chi, _, _) = self.chi(r);
        let w = if chi == 0.0 { 0.0 } else { chi * self.w(t, z) };
        0.5 * r * r + w
    }

    /// `∇H_t(Z)`.
    pub fn grad(&self, t: [f64; 3], z: &[f64]) -> Vec<f64> {
        let r = Self::odd_norm(z);
        let (chi, dchi, _) = self.chi(r);
        let mut g = if chi == 0.0 {
            vec![0.0; z.len()]
        } else {
            let mut wg = self.w_grad(t, z);
            wg.iter_mut().for_each(|x| *x *= chi);
            wg
        };
        let w_scaled = if dchi != 0.0 { dchi * self.w(t, z) / r } else { 0.0 };
        for (gb, zb) in g.chunks_mut(CHANNELS).zip(z.chunks(CHANNELS)) {
            for &c in &ODD {
                gb[c] += zb[c] * (1.0 + w_scaled);
            }
        }
        g
    }

    /// `∇²H_t(Z) · v`.
    pub fn hess_apply(&self, t: [f64; 3], z: &[f64], v: &[f64]) -> Vec<f64> {
        let r = Self::odd_norm(z);
        let (chi, dchi, ddchi) = self.chi(r);
        let mut out = if chi == 0.0 {
            vec![0.0; z.len()]
        } else {
            let mut h = self.w_hess_apply(t, z, v);
            h.iter_mut().for_each(|x| *x *= chi);
            h
        };
        for (ob, vb) in out.chunks_mut(CHANNELS).zip(v.chunks(CHANNELS)) {
            for &c in &ODD {
                ob[c] += vb[c];
            }
        }
        if dchi != 0.0 || ddchi != 0.0 {
            // Terms from differentiating χ(|Z^odd|); only active inside the
            // transition band, where r ≥ ρ − 1 > 0.
            let w = self.w(t, z);
            let wg = self.w_grad(t, z);
            let dot_odd: f64 = z
                .chunks(CHANNELS)
                .zip(v.chunks(CHANNELS))
                .flat_map(|(zb, vb)| ODD.iter().map(move |&c| zb[c] * vb[c]))
                .sum();
            let dr = dot_odd / r;
            let dw: f64 = wg.iter().zip(v).map(|(a, b)| a * b).sum();
            for (i, o) in out.iter_mut().enumerate() {
                *o += dchi * dr * wg[i];
            }
            for ((ob, zb), vb) in out.chunks_mut(CHANNELS).zip(z.chunks(CHANNELS)).zip(v.chunks(CHANNELS)) {
                for &c in &ODD {
                    let u = zb[c] / r;
                    ob[c] += ddchi * dr * w * u + dchi * dw * u + dchi * w * (vb[c] - u * dr) / r;
                }
            }
        }
        out
    }

    /// `(sup|W|, sup|∇W|)` in closed form (an upper bound for `cosine_pq`).
    pub fn w_sup_bounds(&self) -> (f64, f64) {
        let tau = self.time_profile.sup();
        let (amps, coupling, support) = match &self.potential {
            PotentialSpec::Zero => return (0.0, 0.0),
            PotentialSpec::Cosine { amplitudes, .. } => (amplitudes, 0.0, 1.0),
            PotentialSpec::CosinePq { amplitudes, coupling, support, .. } => (amplitudes, *coupling, *support),
        };
        let sup_w = amps.iter().map(|a| a.abs()).sum::<f64>() / (4.0 * PI * PI) + coupling.abs();
        let mut grad2: f64 = amps
            .iter()
            .enumerate()
            .map(|(alpha, a)| {
                let extra = if alpha == 0 { 2.0 * PI * coupling.abs() } else { 0.0 };
                (a.abs() / (2.0 * PI) + extra).powi(2)
            })
            .sum();
        grad2 += (coupling.abs() * bump_slope_max(support)).powi(2);
        (tau * sup_w, tau * grad2.sqrt())
    }

    /// `‖W‖_{C¹} = max(sup|W|, sup|∇W|)`.
    pub fn c1_norm(&self) -> f64 {
        let (w, g) = self.w_sup_bounds();
        w.max(g)
    }

    /// `‖W‖_{C²}` bound: `C¹` norm together with the largest Hessian norm.
    pub fn c2_norm(&self) -> f64 {
        let tau = self.time_profile.sup();
        let hess = match &self.potential {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Cosine { amplitudes, .. } => amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs())),
            PotentialSpec::CosinePq { amplitudes, coupling, support, .. } => {
                let b = coupling.abs();
                let qq = amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs())) + 4.0 * PI * PI * b;
                let qp = 2.0 * PI * b * bump_slope_max(*support);
                let pp = b * bump_curvature_max(*support);
                // Frobenius bound on the coupled (q¹, p₁¹) block.
                (qq * qq + 2.0 * qp * qp + pp * pp).sqrt()
            }
        };
        self.c1_norm().max(tau * hess)
    }

    /// Constants `(h0, h1) = (¼, c² + c)` with `c = ‖W‖_{C¹}` such that
    /// `dH(ξ) − H ≥ h0|Z^odd|² − h1` pointwise.
    pub fn l2_bound_constants(&self) -> Result<(f64, f64)> {
        let c = self.c1_norm();
        if !c.is_finite() {
            return Err(BftError::Unsupported("potential has unbounded C¹-norm".into()));
        }
        Ok((0.25, c * c + c))
    }

    /// `dH(ξ) − H` at a point, the integrand controlling the action from below.
    pub fn xi_excess(&self, t: [f64; 3], z: &[f64]) -> f64 {
        let g = self.grad(t, z);
        let dh_xi: f64 = z
            .chunks(CHANNELS)
            .zip(g.chunks(CHANNELS))
            .flat_map(|(zb, gb)| ODD.iter().map(move |&c| zb[c] * gb[c]))
            .sum();
        dh_xi - self.eval(t, z)
    }
}

/// Pointwise map `Z(t) ↦ f(t, Z(t))` assembled into a field of the same shape.
fn map_points(z: &FieldState, f: impl Fn([f64; 3], &[f64], usize) -> Vec<f64> + Sync) -> FieldState {
    let grid = z.grid();
    let np = grid.points();
    let cols: Vec<Vec<f64>> = (0..np).into_par_iter().map(|idx| f(grid.coords(idx), &z.point(idx), idx)).collect();
    let mut out = FieldState::zeros(z.d(), grid);
    for (idx, col) in cols.iter().enumerate() {
        out.set_point(idx, col);
    }
    out
}

impl HamiltonianSpec {
    /// `∫_{T³} H_t(Z(t)) dV` by the grid's trapezoidal rule.
    pub fn integral(&self, z: &FieldState) -> f64 {
        let grid = z.grid();
        let np = grid.points();
        // Summed sequentially so the result does not depend on the thread count.
        let vals: Vec<f64> = (0..np).into_par_iter().map(|idx| self.eval(grid.coords(idx), &z.point(idx))).collect();
        vals.iter().sum::<f64>() / np as f64
    }

    /// The field `t ↦ ∇H_t(Z(t))`.
    pub fn grad_field(&self, z: &FieldState) -> FieldState {
        map_points(z, |t, p, _| self.grad(t, p))
    }

    /// The field `t ↦ ∇²H_t(Z(t)) · V(t)`.
    pub fn hess_field(&self, z: &FieldState, v: &FieldState) -> FieldState {
        map_points(z, |t, p, idx| self.hess_apply(t, p, &v.point(idx)))
    }

    /// The field `t ↦ ∂W/∂q(t, Z(t))` restricted to the `q` channels, other
    /// channels zero.
    pub fn potential_force(&self, z: &FieldState) -> FieldState {
        map_points(z, |t, p, _| {
            let mut g = self.w_grad(t, p);
            for b in g.chunks_mut(CHANNELS) {
                let keep = b[Q];
                b.fill(0.0);
                b[Q] = keep;
            }
            g
        })
    }
}
