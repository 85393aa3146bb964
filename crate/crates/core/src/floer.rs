//! Floer curves `∂_sZ̃ + J_∂Z̃ = ∇H̄^ρ_t(Z̃)` on `[−S, S] × T³` as a
//! least-squares boundary value problem, and the `C⁰` monitor.

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{action_h, l2_gradient};
use crate::algebra::ODD;
use crate::error::{BftError, Result};
use crate::field::{forward_channels, inverse_channels, FieldState, Grid};
use crate::hamiltonian::HamiltonianSpec;
use crate::spectral::{apply_jdel, laplacian};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloerConfig {
    /// Half-length `S` of the `s`-interval.
    pub s_half: f64,
    /// Number of `s`-slices including both clamped ends.
    pub ns: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
    /// Stop when the objective improves by less than `stall_rtol` (relative)
    /// over this many iterations.
    pub stall_window: usize,
    pub stall_rtol: f64,
}

impl Default for FloerConfig {
    fn default() -> Self {
        Self { s_half: 4.0, ns: 32, tol: 1e-10, max_iter: 2000, memory: 12, stall_window: 50, stall_rtol: 1e-6 }
    }
}

impl FloerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_half > 0.0) || !(self.tol > 0.0) {
            return Err(BftError::Config("S and tol must be positive".into()));
        }
        if self.ns < 6 {
            return Err(BftError::Config("need at least 6 s-slices for the fourth-order stencils".into()));
        }
        if self.memory == 0 || self.stall_window == 0 {
            return Err(BftError::Config("memory and stall window must be positive".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.s_half / (self.ns - 1) as f64
    }
}

/// A discretized curve `s ↦ Z̃(s, ·)`; `slices[0]` and `slices[ns−1]` are
/// the clamped endpoints.
#[derive(Clone, Debug)]
pub struct FloerCurve {
    pub s_half: f64,
    pub slices: Vec<FieldState>,
    pub rho: f64,
    /// `‖R‖` over the interior slices.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FloerCurve {
    pub fn ns(&self) -> usize {
        self.slices.len()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.s_half / (self.ns() - 1) as f64
    }

    pub fn s(&self, j: usize) -> f64 {
        -self.s_half + j as f64 * self.step()
    }

    pub fn grid(&self) -> Grid {
        self.slices[0].grid()
    }

    /// Curve that is constant in `s`.
    pub fn stationary(z: &FieldState, s_half: f64, ns: usize, rho: f64) -> Self {
        Self { s_half, slices: vec![z.clone(); ns], rho, residual: f64::NAN, converged: false, iterations: 0 }
    }
}

/// Stencil `(offset index, weight·12h)` for `∂_s` at slice `j` of `ns`.
fn ds_stencil(j: usize, ns: usize) -> Vec<(usize, f64)> {
    const END: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const NEAR: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    if j == 0 {
        END.iter().enumerate().map(|(i, &w)| (i, w)).collect()
    } else if j == 1 {
        NEAR.iter().enumerate().map(|(i, &w)| (i, w)).collect()
    } else if j == ns - 1 {
        END.iter().enumerate().map(|(i, &w)| (ns - 1 - i, -w)).collect()
    } else if j == ns - 2 {
        NEAR.iter().enumerate().map(|(i, &w)| (ns - 1 - i, -w)).collect()
    } else {
        CENTRAL.iter().enumerate().map(|(i, &w)| (j + i - 2, w)).collect()
    }
}

/// Stencil `(index, weight·12h²)` for `∂_s²` at slice `j`.
fn dss_stencil(j: usize, ns: usize) -> Vec<(usize, f64)> {
    const END: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    const NEAR: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];
    const CENTRAL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
    if j == 0 {
        END.iter().enumerate().map(|(i, &w)| (i, w)).collect()
    } else if j == 1 {
        NEAR.iter().enumerate().map(|(i, &w)| (i, w)).collect()
    } else if j == ns - 1 {
        END.iter().enumerate().map(|(i, &w)| (ns - 1 - i, w)).collect()
    } else if j == ns - 2 {
        NEAR.iter().enumerate().map(|(i, &w)| (ns - 1 - i, w)).collect()
    } else {
        CENTRAL.iter().enumerate().map(|(i, &w)| (j + i - 2, w)).collect()
    }
}

fn ds_at(slices: &[FieldState], j: usize, h: f64) -> FieldState {
    let ns = slices.len();
    let mut out = vec![0.0; slices[0].values().len()];
    for (i, w) in ds_stencil(j, ns) {
        if w != 0.0 {
            let c = w / (12.0 * h);
            out.iter_mut().zip(slices[i].values()).for_each(|(o, x)| *o += c * x);
        }
    }
    slices[0].like(out)
}

fn require_rho(spec: &HamiltonianSpec) -> Result<f64> {
    spec.rho.ok_or_else(|| BftError::Config("Floer curves need a cutoff radius rho".into()))
}

/// Per-slice residual `R_j = ∂_sZ̃ + J_∂Z̃ − ∇H̄^ρ(Z̃)` for every slice
/// (one-sided stencils at the ends) and the interior norm
/// `(Σ_{interior} h‖R_j‖²)^{1/2}`.
pub fn floer_residual(curve: &FloerCurve, spec: &HamiltonianSpec) -> Result<(Vec<FieldState>, f64)> {
    require_rho(spec)?;
    let h = curve.step();
    let ns = curve.ns();
    let res: Vec<FieldState> = (0..ns)
        .into_par_iter()
        .map(|j| Ok(ds_at(&curve.slices, j, h).add(&l2_gradient(&curve.slices[j], spec)?)))
        .collect::<Result<_>>()?;
    let norm = (1..ns - 1).map(|j| h * res[j].inner(&res[j])).sum::<f64>().sqrt();
    Ok((res, norm))
}

/// Objective `½ Σ_{interior} h ‖R_j‖²` and its `L²` gradient with respect to
/// the interior slices.
fn objective(slices: &[FieldState], spec: &HamiltonianSpec, h: f64) -> Result<(f64, Vec<FieldState>)> {
    let ns = slices.len();
    let res: Vec<FieldState> = (1..ns - 1)
        .into_par_iter()
        .map(|j| Ok(ds_at(slices, j, h).add(&l2_gradient(&slices[j], spec)?)))
        .collect::<Result<_>>()?;
    let phi = 0.5 * h * res.iter().map(|r| r.inner(r)).sum::<f64>();
    let len = slices[0].values().len();
    let mut grad: Vec<Vec<f64>> = vec![vec![0.0; len]; ns - 2];
    for j in 1..ns - 1 {
        for (i, w) in ds_stencil(j, ns) {
            if w == 0.0 || i == 0 || i == ns - 1 {
                continue;
            }
            let c = h * w / (12.0 * h);
            grad[i - 1].iter_mut().zip(res[j - 1].values()).for_each(|(g, r)| *g += c * r);
        }
    }
    let local: Vec<FieldState> = (1..ns - 1)
        .into_par_iter()
        .map(|m| {
            let r = &res[m - 1];
            Ok(apply_jdel(r)?.sub(&spec.hess_field(&slices[m], r)).scale(h))
        })
        .collect::<Result<_>>()?;
    let grad = grad
        .into_iter()
        .zip(local)
        .map(|(g, l)| {
            let f = l.like(g);
            f.add(&l)
        })
        .collect();
    Ok((phi, grad))
}

/// `(1/h)(−δ_s² + |κ|² + 1)⁻¹` with homogeneous Dirichlet data at the
/// clamped ends, solved mode by mode with the Thomas algorithm.
fn precondition(g: &[FieldState], h: f64) -> Vec<FieldState> {
    let m = g.len();
    let grid = g[0].grid();
    let np = grid.points();
    let coeffs: Vec<Vec<Complex64>> = g.par_iter().map(|f| forward_channels(grid, f.values())).collect();
    let total = coeffs[0].len();
    let k2: Vec<f64> = (0..np).map(|idx| grid.kappa(idx).iter().map(|k| k * k).sum()).collect();
    let off = -1.0 / (h * h);
    // Column-wise solves over the s index, parallel over (channel, mode).
    let solved: Vec<Vec<Complex64>> = (0..total)
        .into_par_iter()
        .map(|pos| {
            let diag = 2.0 / (h * h) + k2[pos % np] + 1.0;
            let mut cp = vec![0.0; m];
            let mut dp = vec![Complex64::new(0.0, 0.0); m];
            for j in 0..m {
                let rhs = coeffs[j][pos] / h;
                if j == 0 {
                    cp[0] = off / diag;
                    dp[0] = rhs / diag;
                } else {
                    let den = diag - off * cp[j - 1];
                    cp[j] = off / den;
                    dp[j] = (rhs - off * dp[j - 1]) / den;
                }
            }
            for j in (0..m - 1).rev() {
                dp[j] = dp[j] - cp[j] * dp[j + 1];
            }
            dp
        })
        .collect();
    (0..m)
        .into_par_iter()
        .map(|j| {
            let col: Vec<Complex64> = solved.iter().map(|v| v[j]).collect();
            g[j].like(inverse_channels(grid, col))
        })
        .collect()
}

fn dot(a: &[FieldState], b: &[FieldState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y)).sum()
}

fn axpy(a: &[FieldState], s: f64, b: &[FieldState]) -> Vec<FieldState> {
    a.iter().zip(b).map(|(x, y)| x.axpy(s, y)).collect()
}

/// Minimizes `‖R‖²` over the interior slices with preconditioned L-BFGS,
/// starting from the straight-line interpolation between the endpoints.
/// A curve whose residual stalls above `tol` is returned with
/// `converged = false`.
pub fn solve_floer_curve(
    from: &FieldState,
    to: &FieldState,
    spec: &HamiltonianSpec,
    config: &FloerConfig,
) -> Result<FloerCurve> {
    config.validate()?;
    let rho = require_rho(spec)?;
    from.same_shape(to)?;
    for (name, z) in [("start", from), ("end", to)] {
        let sup = z.sup_odd();
        if sup > rho - 1.0 {
            return Err(BftError::InvalidArgument(format!("{name} endpoint has sup|Z^odd| = {sup} > rho − 1")));
        }
    }
    let ns = config.ns;
    let slices: Vec<FieldState> = (0..ns)
        .map(|j| {
            let t = j as f64 / (ns - 1) as f64;
            from.scale(1.0 - t).add(&to.scale(t))
        })
        .collect();
    let curve = FloerCurve { s_half: config.s_half, slices, rho, residual: f64::NAN, converged: false, iterations: 0 };
    minimize(curve, spec, config)
}

/// Runs the minimizer from an arbitrary initial curve (endpoints kept).
pub fn minimize(mut curve: FloerCurve, spec: &HamiltonianSpec, config: &FloerConfig) -> Result<FloerCurve> {
    config.validate()?;
    require_rho(spec)?;
    let ns = curve.ns();
    let h = curve.step();
    let interior = |c: &FloerCurve| c.slices[1..ns - 1].to_vec();
    let assemble = |c: &FloerCurve, x: Vec<FieldState>| {
        let mut slices = Vec::with_capacity(ns);
        slices.push(c.slices[0].clone());
        slices.extend(x);
        slices.push(c.slices[ns - 1].clone());
        slices
    };
    let mut x = interior(&curve);
    let (mut phi, mut g) = objective(&curve.slices, spec, h)?;
    let mut history: VecDeque<(Vec<FieldState>, Vec<FieldState>, f64)> = VecDeque::new();
    let mut recent: VecDeque<f64> = VecDeque::new();
    let target = 0.5 * config.tol * config.tol;
    let mut iterations = 0;
    while phi > target && iterations < config.max_iter {
        iterations += 1;
        // Two-loop recursion with the spectral preconditioner as H₀.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho_k) in history.iter().rev() {
            let a = rho_k * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        let mut r = precondition(&q, h);
        for ((s, y, rho_k), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho_k * dot(y, &r);
            r = axpy(&r, a - b, s);
        }
        let dir: Vec<FieldState> = r.iter().map(|f| f.scale(-1.0)).collect();
        let mut slope = dot(&g, &dir);
        let dir = if slope >= 0.0 {
            history.clear();
            let p: Vec<FieldState> = precondition(&g, h).iter().map(|f| f.scale(-1.0)).collect();
            slope = dot(&g, &p);
            p
        } else {
            dir
        };
        let mut step = 1.0;
        let accepted = loop {
            let trial = axpy(&x, step, &dir);
            let slices = assemble(&curve, trial.clone());
            let (phi_t, g_t) = objective(&slices, spec, h)?;
            if phi_t <= phi + 1e-4 * step * slope {
                break Some((trial, phi_t, g_t));
            }
            step *= 0.5;
            if step < 1e-10 {
                break None;
            }
        };
        let Some((x_new, phi_new, g_new)) = accepted else {
            break;
        };
        let s_vec: Vec<FieldState> = x_new.iter().zip(&x).map(|(a, b)| a.sub(b)).collect();
        let y_vec: Vec<FieldState> = g_new.iter().zip(&g).map(|(a, b)| a.sub(b)).collect();
        let sy = dot(&s_vec, &y_vec);
        if sy > 1e-14 * dot(&s_vec, &s_vec).sqrt() * dot(&y_vec, &y_vec).sqrt() && sy > 0.0 {
            history.push_back((s_vec, y_vec, 1.0 / sy));
            if history.len() > config.memory {
                history.pop_front();
            }
        }
        x = x_new;
        phi = phi_new;
        g = g_new;
        recent.push_back(phi);
        if recent.len() > config.stall_window {
            let old = recent.pop_front().expect("nonempty window");
            if old - phi <= config.stall_rtol * old {
                break;
            }
        }
    }
    curve.slices = assemble(&curve, x);
    let (_, norm) = floer_residual(&curve, spec)?;
    curve.residual = norm;
    curve.converged = norm <= config.tol;
    curve.iterations = iterations;
    Ok(curve)
}

/// Per-slice diagnostics and the three monitor checks.
#[derive(Clone, Debug)]
pub struct MonitorReport {
    pub rho: f64,
    pub s: Vec<f64>,
    pub action: Vec<f64>,
    pub sup_odd: Vec<f64>,
    pub residual_slice: Vec<f64>,
    pub ds_norm: Vec<f64>,
    /// `max |Z̃^odd|` over the whole curve.
    pub sup_odd_max: f64,
    /// Points of the curve with `|Z̃^odd| > ρ`.
    pub region_points: usize,
    /// Smallest value of `(∂_s² + Δ)φ − ∂_sφ` over that region.
    pub subsolution_min: Option<f64>,
    /// Largest `A(s_{j+1}) − A(s_j)`.
    pub max_action_increase: f64,
    /// Largest excess of an action increment over its allowed slack.
    pub action_slack_excess: f64,
    pub residual: f64,
}

impl MonitorReport {
    pub fn c0_bound_holds(&self) -> bool {
        self.sup_odd_max <= self.rho + 1e-6
    }

    pub fn subsolution_holds(&self) -> bool {
        self.subsolution_min.is_none_or(|m| m >= -1e-6)
    }

    pub fn action_monotone(&self) -> bool {
        self.action_slack_excess <= 0.0
    }

    pub fn passed(&self) -> bool {
        self.c0_bound_holds() && self.subsolution_holds() && self.action_monotone()
    }
}

/// Evaluates the `C⁰` bound, the subsolution inequality for
/// `φ = ½|Z̃^odd|²` on `{|Z̃^odd| > ρ}`, and the action profile.
///
/// An action increment between neighbouring slices is allowed up to
/// `h·r̄(ḡ + r̄) + 1e−6(1 + ‖R‖)`, where `r̄` and `ḡ` are the larger of the
/// two slices' `‖R_j‖` and `‖∂_sZ̃‖`.
pub fn max_principle_monitor(curve: &FloerCurve, spec: &HamiltonianSpec) -> Result<MonitorReport> {
    let spec = spec.clone().with_rho(Some(curve.rho))?;
    let ns = curve.ns();
    let h = curve.step();
    let grid = curve.grid();
    let np = grid.points();
    let (res, residual) = floer_residual(curve, &spec)?;
    let residual_slice: Vec<f64> = res.iter().map(|r| r.l2_norm()).collect();
    let ds_norm: Vec<f64> = (0..ns).map(|j| ds_at(&curve.slices, j, h).l2_norm()).collect();
    let action: Vec<f64> = curve.slices.par_iter().map(|z| action_h(z, &spec)).collect::<Result<_>>()?;
    let sup_odd: Vec<f64> = curve.slices.iter().map(|z| z.sup_odd()).collect();
    let sup_odd_max = sup_odd.iter().cloned().fold(0.0, f64::max);

    // φ on every slice, as a one-channel field.
    let phi: Vec<FieldState> = curve
        .slices
        .iter()
        .map(|z| {
            let vals: Vec<f64> = (0..np)
                .map(|idx| {
                    0.5 * (0..z.d()).flat_map(|a| ODD.iter().map(move |&c| (a, c))).map(|(a, c)| z.channel(a, c)[idx].powi(2)).sum::<f64>()
                })
                .collect();
            FieldState::from_values_with_block(1, 1, grid, vals).expect("finite φ")
        })
        .collect();
    let rho = curve.rho;
    let mut region_points = 0;
    let mut subsolution_min: Option<f64> = None;
    for j in 0..ns {
        let above: Vec<usize> = (0..np).filter(|&idx| (2.0 * phi[j].values()[idx]).sqrt() > rho).collect();
        if above.is_empty() {
            continue;
        }
        region_points += above.len();
        let lap = laplacian(&phi[j]);
        let mut dss = vec![0.0; np];
        for (i, w) in dss_stencil(j, ns) {
            let c = w / (12.0 * h * h);
            dss.iter_mut().zip(phi[i].values()).for_each(|(o, x)| *o += c * x);
        }
        let ds = ds_at(&phi, j, h);
        for idx in above {
            let v = dss[idx] + lap.values()[idx] - ds.values()[idx];
            subsolution_min = Some(subsolution_min.map_or(v, |m: f64| m.min(v)));
        }
    }
    let mut max_action_increase = f64::NEG_INFINITY;
    let mut action_slack_excess = f64::NEG_INFINITY;
    for j in 0..ns - 1 {
        let inc = action[j + 1] - action[j];
        let r = residual_slice[j].max(residual_slice[j + 1]);
        let g = ds_norm[j].max(ds_norm[j + 1]);
        let slack = h * r * (g + r) + 1e-6 * (1.0 + residual);
        max_action_increase = max_action_increase.max(inc);
        action_slack_excess = action_slack_excess.max(inc - slack);
    }
    Ok(MonitorReport {
        rho,
        s: (0..ns).map(|j| curve.s(j)).collect(),
        action,
        sup_odd,
        residual_slice,
        ds_norm,
        sup_odd_max,
        region_points,
        subsolution_min,
        max_action_increase,
        action_slack_excess,
        residual,
    })
}
