use std::path::PathBuf;

use bft_core::solvers::{cutoff_orbit_coincidence, deflated_search, l2_bound_rows, verify_laplace_correspondence, SolutionRecord};
use bft_core::action::EQUATION_NAMES;
use clap::Args;
use serde_json::json;

use super::ConfigArgs;
use crate::config::load;
use crate::output::{real, Check, Run, Table};
use crate::{Failure, Global};

fn solutions_table(records: &[SolutionRecord]) -> Table {
    let mut t = Table::new(&["family_id", "action", "residual", "odd_l2", "o_ij_variance"]);
    for r in records {
        t.push(vec![
            r.family_id.to_string(),
            real(r.action_value),
            real(r.residual),
            real(r.odd_l2),
            real(r.o_ij_variance),
        ]);
    }
    t
}

pub fn run_solve(global: &Global, args: &ConfigArgs) -> Result<Vec<Check>, Failure> {
    let cfg = load(&args.config)?;
    let spec = &cfg.hamiltonian;
    let mut run = Run::new(global, "solve", json!({ "config": cfg }))?;
    run.seed(cfg.solver.seeds.rng_seed);
    let report = deflated_search(spec, &cfg.solver)?;
    let records = &report.records;
    run.table("solutions", &solutions_table(records))?;
    for r in records {
        run.snapshot(&format!("family_{:03}.bft", r.family_id), &r.field)?;
    }
    println!(
        "{} families from {} seeds ({} failed)",
        records.len(),
        report.seeds_tried,
        report.seeds_failed
    );

    let mut checks = Vec::new();
    checks.push(if report.degenerate {
        Check::new("family_count", true, "zero potential: the constants form one degenerate family")
    } else {
        Check::new(
            "family_count",
            report.meets_lower_bound(),
            format!("{} families, lower bound {}", records.len(), report.expected_min),
        )
    });
    let worst = records.iter().map(|r| r.residual).fold(0.0, f64::max);
    checks.push(Check::new(
        "residual",
        !records.is_empty() && worst <= cfg.solver.tol_residual,
        format!("max residual {worst:.3e}"),
    ));

    if !spec.potential.depends_on_p() {
        let mut header = vec!["family_id", "laplace_residual", "o_ij_variance", "p_reconstruction", "o123_reconstruction"];
        header.extend(EQUATION_NAMES);
        let mut t = Table::new(&header);
        let mut all = true;
        for r in records {
            let l = verify_laplace_correspondence(r, spec)?;
            all &= l.passed();
            let mut row = vec![
                r.family_id.to_string(),
                real(l.laplace_residual),
                real(l.o_ij_variance),
                real(l.p_reconstruction),
                real(l.o123_reconstruction),
            ];
            row.extend(l.equations.iter().map(|&e| real(e)));
            t.push(row);
        }
        run.table("laplace", &t)?;
        checks.push(Check::new("laplace_correspondence", all, "every family solves the nonlinear Laplace system"));
    }

    let cap = cfg
        .solver
        .action_cap
        .unwrap_or_else(|| records.iter().map(|r| r.action_value).fold(f64::NEG_INFINITY, f64::max));
    if cap.is_finite() {
        let rows = l2_bound_rows(records, spec, cap)?;
        let mut t = Table::new(&["family_id", "action", "lower_bound", "cap"]);
        let mut holds = true;
        for &(id, action, lower) in &rows {
            holds &= lower <= cap;
            t.push(vec![id.to_string(), real(action), real(lower), real(cap)]);
        }
        run.table("l2_bound", &t)?;
        checks.push(Check::new(
            "l2_bound",
            holds,
            format!("h0|Z^odd|^2 - h1 <= a = {cap:.6e} on {} families", rows.len()),
        ));
    }
    run.finish(checks)
}

#[derive(Args, Debug)]
pub struct CutoffArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Action cap; defaults to `solver.action_cap`.
    #[arg(long)]
    pub a: Option<f64>,
}

pub fn run_cutoff(global: &Global, args: &CutoffArgs) -> Result<Vec<Check>, Failure> {
    let cfg = load(&args.config)?;
    let a = args
        .a
        .or(cfg.solver.action_cap)
        .ok_or_else(|| Failure::Input("cutoff needs --a or solver.action_cap".into()))?;
    if !a.is_finite() {
        return Err(Failure::Input("action cap must be finite".into()));
    }
    let mut run = Run::new(global, "cutoff", json!({ "config": cfg, "a": a }))?;
    run.seed(cfg.solver.seeds.rng_seed);
    let report = cutoff_orbit_coincidence(&cfg.hamiltonian, a, &cfg.solver)?;

    let mut summary = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("a", report.a),
        ("rho", report.rho),
        ("c_sob", report.c_sob),
        ("h0", report.h0),
        ("h1", report.h1),
        ("max_sup_odd", report.max_sup_odd),
    ] {
        summary.push(vec![k.into(), real(v)]);
    }
    run.table("cutoff_summary", &summary)?;
    let mut families = Table::new(&["search", "family_id", "action", "sup_odd"]);
    for (name, recs) in [("plain", &report.plain), ("cutoff", &report.cut)] {
        for r in recs.iter() {
            families.push(vec![name.into(), r.family_id.to_string(), real(r.action_value), real(r.sup_odd)]);
        }
    }
    run.table("cutoff_families", &families)?;
    let mut pairs = Table::new(&["plain_family", "cutoff_family", "distance"]);
    for &(p, c, dist) in &report.pairs {
        pairs.push(vec![p.to_string(), c.to_string(), real(dist)]);
    }
    run.table("cutoff_pairs", &pairs)?;

    let checks = vec![
        Check::new(
            "families_match",
            report.matched,
            format!("{} plain vs {} cutoff families below a = {a}", report.plain.len(), report.cut.len()),
        ),
        Check::new(
            "cutoff_inactive",
            report.max_sup_odd < report.rho - 1.0,
            format!("max sup|Z^odd| {:.3e} < rho - 1 = {:.4}", report.max_sup_odd, report.rho - 1.0),
        ),
    ];
    run.finish(checks)
}
