use bft_core::solvers::{adiabatic_residual, morse_flow, o_ij_means, q_means, Trajectory};
use clap::Args;
use serde_json::json;

use super::ConfigArgs;
use crate::config::{load, RunConfig};
use crate::output::{real, Check, Run, Table};
use crate::{Failure, Global};

fn flow(cfg: &RunConfig) -> Result<Trajectory, Failure> {
    let start = cfg.initial.field(cfg.hamiltonian.d)?;
    Ok(morse_flow(&start, &cfg.hamiltonian, &cfg.flow)?)
}

fn trajectory_table(traj: &Trajectory, d: usize) -> Table {
    let mut header = vec!["s".to_string(), "energy".to_string()];
    header.extend((1..=d).map(|a| format!("q_mean_{a}")));
    let mut t = Table::new(&header);
    for ((s, e), z) in traj.s.iter().zip(&traj.energy).zip(&traj.states) {
        let mut row = vec![real(*s), real(*e)];
        row.extend(q_means(z).into_iter().map(real));
        t.push(row);
    }
    t
}

fn flow_checks(traj: &Trajectory, slack: f64) -> Vec<Check> {
    let first = o_ij_means(&traj.states[0]);
    let drift = o_ij_means(traj.last()).iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rise = traj.max_energy_increase();
    vec![
        Check::new(
            "converged",
            traj.converged,
            format!("s = {:.3} after {} steps, {} halvings", traj.s.last().copied().unwrap_or(0.0), traj.s.len() - 1, traj.halvings),
        ),
        Check::new("energy_monotone", traj.s.len() < 2 || rise <= slack, format!("max energy increase {rise:.3e}")),
        Check::new("o_ij_means_conserved", drift <= 1e-12, format!("max drift {drift:.3e}")),
    ]
}

pub fn run_morse(global: &Global, args: &ConfigArgs) -> Result<Vec<Check>, Failure> {
    let cfg = load(&args.config)?;
    let mut run = Run::new(global, "morse-flow", json!({ "config": cfg }))?;
    run.seed(cfg.initial.rng_seed);
    let traj = flow(&cfg)?;
    run.table("trajectory", &trajectory_table(&traj, cfg.hamiltonian.d))?;
    run.snapshot("final.bft", traj.last())?;
    let checks = flow_checks(&traj, cfg.flow.energy_slack);
    run.finish(checks)
}

#[derive(Args, Debug)]
pub struct AdiabaticArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Values of ε at which the scaled residual is evaluated.
    #[arg(long, num_args = 1.., default_values_t = [1e-1, 1e-2, 1e-3])]
    pub eps: Vec<f64>,
}

pub fn run_adiabatic(global: &Global, args: &AdiabaticArgs) -> Result<Vec<Check>, Failure> {
    if args.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Failure::Input("every --eps must be positive".into()));
    }
    let cfg = load(&args.config)?;
    let mut run = Run::new(global, "adiabatic", json!({ "config": cfg, "eps": args.eps }))?;
    run.seed(cfg.initial.rng_seed);
    let traj = flow(&cfg)?;
    let spec = &cfg.hamiltonian;
    let r0 = adiabatic_residual(&traj, spec, 0.0)?;
    let mut table = Table::new(&["eps", "max_residual", "ratio"]);
    table.push(vec![real(0.0), real(r0), real(f64::NAN)]);
    let mut ratios = Vec::new();
    for &eps in &args.eps {
        let ratio = adiabatic_residual(&traj, spec, eps)?;
        table.push(vec![real(eps), real(ratio * eps), real(ratio)]);
        ratios.push(ratio);
    }
    run.table("adiabatic", &table)?;
    run.table("trajectory", &trajectory_table(&traj, spec.d))?;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let mut checks = flow_checks(&traj, cfg.flow.energy_slack);
    checks.push(Check::new("zero_eps_is_flow", r0 < 1e-8, format!("residual at eps = 0: {r0:.3e}")));
    checks.push(Check::new(
        "ratio_bounded",
        hi <= 2.0 * lo,
        format!("residual/eps in [{lo:.4e}, {hi:.4e}] over {} values of eps", ratios.len()),
    ));
    run.finish(checks)
}
