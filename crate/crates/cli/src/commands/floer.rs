use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bft_core::action::action_h;
use bft_core::floer::{max_principle_monitor, solve_floer_curve};
use bft_core::solvers::cutoff_radius;
use bft_core::FieldState;
use clap::Args;
use serde_json::json;

use crate::config::load;
use crate::output::{real, sha256_hex, Check, Run, Table};
use crate::{Failure, Global};

#[derive(Args, Debug)]
pub struct FloerArgs {
    /// Configuration supplying the Hamiltonian and solver settings.
    #[arg(long)]
    pub config: PathBuf,
    /// Snapshot at s = −S.
    #[arg(long)]
    pub from: PathBuf,
    /// Snapshot at s = +S.
    #[arg(long)]
    pub to: PathBuf,
    /// Half-length of the s-interval (overrides `floer.s_half`).
    #[arg(long = "S")]
    pub s_half: Option<f64>,
    /// Number of s-slices (overrides `floer.ns`).
    #[arg(long = "Ns")]
    pub ns: Option<usize>,
    /// Also fail when the minimizer stops above tolerance.
    #[arg(long)]
    pub require_convergence: bool,
}

fn read_snapshot(path: &Path) -> Result<(FieldState, String), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let field = FieldState::read_bft1(BufReader::new(file))
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok((field, sha256_hex(&bytes)))
}

pub fn run(global: &Global, args: &FloerArgs) -> Result<Vec<Check>, Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(s) = args.s_half {
        cfg.floer.s_half = s;
    }
    if let Some(ns) = args.ns {
        cfg.floer.ns = ns;
    }
    cfg.floer.validate()?;
    let (from, from_hash) = read_snapshot(&args.from)?;
    let (to, to_hash) = read_snapshot(&args.to)?;
    if from.d() != cfg.hamiltonian.d {
        return Err(Failure::Input(format!("snapshots have d = {}, Hamiltonian has d = {}", from.d(), cfg.hamiltonian.d)));
    }
    from.same_shape(&to).map_err(|e| Failure::Input(e.to_string()))?;

    // Without an explicit radius, size the cutoff for the larger endpoint action.
    let plain = cfg.hamiltonian.without_cutoff();
    let rho = match cfg.hamiltonian.rho {
        Some(rho) => rho,
        None => {
            let a = match cfg.solver.action_cap {
                Some(a) => a,
                None => action_h(&from, &plain)?.max(action_h(&to, &plain)?),
            };
            cutoff_radius(&plain, a)?
        }
    };
    let spec = plain.with_rho(Some(rho))?;
    let mut run = Run::new(
        global,
        "floer",
        json!({ "config": cfg, "from_sha256": from_hash, "to_sha256": to_hash, "rho": rho }),
    )?;

    let curve = solve_floer_curve(&from, &to, &spec, &cfg.floer)?;
    let mon = max_principle_monitor(&curve, &spec)?;
    for (j, z) in curve.slices.iter().enumerate() {
        run.snapshot(&format!("slice_{j:03}.bft"), z)?;
    }
    let mut report = Table::new(&["s", "action", "sup_odd", "residual_slice"]);
    for j in 0..curve.ns() {
        report.push(vec![real(mon.s[j]), real(mon.action[j]), real(mon.sup_odd[j]), real(mon.residual_slice[j])]);
    }
    run.table("floer_report", &report)?;
    let mut summary = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("rho", rho),
        ("residual", curve.residual),
        ("iterations", curve.iterations as f64),
        ("converged", if curve.converged { 1.0 } else { 0.0 }),
        ("sup_odd_max", mon.sup_odd_max),
        ("region_points", mon.region_points as f64),
        ("subsolution_min", mon.subsolution_min.unwrap_or(f64::NAN)),
        ("max_action_increase", mon.max_action_increase),
        ("action_slack_excess", mon.action_slack_excess),
    ] {
        summary.push(vec![k.into(), real(v)]);
    }
    run.table("floer_summary", &summary)?;
    println!(
        "curve residual {:.3e} after {} iterations (converged: {})",
        curve.residual, curve.iterations, curve.converged
    );

    let mut checks = vec![
        Check::new(
            "c0_bound",
            mon.c0_bound_holds(),
            format!("sup|Z^odd| {:.4e} <= rho {rho:.4}", mon.sup_odd_max),
        ),
        Check::new(
            "subsolution",
            mon.subsolution_holds(),
            match mon.subsolution_min {
                Some(m) => format!("min over {} points above rho: {m:.3e}", mon.region_points),
                None => "no point with |Z^odd| > rho".to_string(),
            },
        ),
        Check::new(
            "action_monotone",
            mon.action_monotone(),
            format!("max increase {:.3e}, excess over slack {:.3e}", mon.max_action_increase, mon.action_slack_excess),
        ),
    ];
    if args.require_convergence {
        checks.push(Check::new("converged", curve.converged, format!("residual {:.3e}", curve.residual)));
    }
    run.finish(checks)
}
