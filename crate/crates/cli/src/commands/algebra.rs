use bft_core::algebra::{printed_j3, CliffordSystem};
use bft_core::spectral::{k_matches_printed, symbol_nullity, SymbolOperator};
use clap::Args;
use serde_json::json;

use crate::output::{Check, Run, Table};
use crate::{Failure, Global};

#[derive(Args, Debug)]
pub struct AlgebraArgs {
    /// Number of generators.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Fail unless every identity holds exactly.
    #[arg(long)]
    pub verify: bool,
    /// Write each J_i as an integer CSV.
    #[arg(long)]
    pub dump_matrices: bool,
}

pub fn run_algebra(global: &Global, args: &AlgebraArgs) -> Result<Vec<Check>, Failure> {
    let system = CliffordSystem::new(args.n, 1)?;
    let mut run = Run::new(
        global,
        "algebra",
        json!({ "n": args.n, "verify": args.verify, "dump_matrices": args.dump_matrices }),
    )?;
    let report = system.check_clifford();
    let mut table = Table::new(&["identity", "max_deviation"]);
    for (name, dev) in [
        ("square", report.square),
        ("anticommutation", report.anticommutation),
        ("antisymmetry", report.antisymmetry),
        ("complex_structures", report.complex_structures),
        ("parity", report.parity),
    ] {
        println!("{name:>20}  {dev}");
        table.push(vec![name.to_string(), dev.to_string()]);
    }
    run.table("identities", &table)?;

    if args.dump_matrices {
        let labels: Vec<String> = system.basis().iter().map(|b| b.to_string()).collect();
        for (i, m) in system.matrices().iter().enumerate() {
            let mut t = Table::new(&labels);
            for r in 0..m.size() {
                t.push(m.row(r).iter().map(|x| x.to_string()).collect());
            }
            run.table(&format!("j_{}", i + 1), &t)?;
        }
    }

    let mut checks = Vec::new();
    if args.verify {
        checks.push(Check::new(
            "clifford_identities",
            report.passed(),
            format!("n = {}, {} x {} integer generators", args.n, system.block(), system.block()),
        ));
        if args.n == 3 {
            let printed = printed_j3();
            let same = system.matrices().iter().zip(printed.iter()).all(|(a, b)| a == b);
            checks.push(Check::new("printed_j_tables", same, "generated J_1, J_2, J_3 against the reference tables"));
            checks.push(Check::new("printed_k_tables", k_matches_printed(), "K_1, K_2, K_3 against the reference tables"));
        }
    }
    run.finish(checks)
}

#[derive(Args, Debug)]
pub struct SymbolArgs {
    /// Operator whose symbol is tabulated: J or K.
    #[arg(long, default_value = "K")]
    pub op: SymbolOperator,
    #[arg(long, default_value_t = 8)]
    pub kmax: i64,
    /// Fail unless K is degenerate and J invertible at every k ≠ 0.
    #[arg(long)]
    pub verify: bool,
}

pub fn run_symbol(global: &Global, args: &SymbolArgs) -> Result<Vec<Check>, Failure> {
    if args.kmax < 1 {
        return Err(Failure::Input("kmax must be at least 1".into()));
    }
    let name = match args.op {
        SymbolOperator::J => "J",
        SymbolOperator::K => "K",
    };
    let mut run = Run::new(global, "symbol", json!({ "op": name, "kmax": args.kmax, "verify": args.verify }))?;
    let mut table = Table::new(&["k1", "k2", "k3", "nullity"]);
    let (mut lo, mut hi) = (usize::MAX, 0);
    let r = args.kmax;
    for k1 in -r..=r {
        for k2 in -r..=r {
            for k3 in -r..=r {
                let nullity = symbol_nullity(args.op, [k1, k2, k3]);
                if (k1, k2, k3) != (0, 0, 0) {
                    lo = lo.min(nullity);
                    hi = hi.max(nullity);
                }
                table.push(vec![k1.to_string(), k2.to_string(), k3.to_string(), nullity.to_string()]);
            }
        }
    }
    run.table(&format!("symbol_{name}"), &table)?;
    println!("{name}: nullity over 0 < |k|_inf <= {r} ranges over [{lo}, {hi}]");
    let mut checks = Vec::new();
    if args.verify {
        checks.push(match args.op {
            SymbolOperator::K => Check::new("k_symbol_degenerate", lo >= 2, format!("min nullity {lo}")),
            SymbolOperator::J => Check::new("j_symbol_invertible", hi == 0, format!("max nullity {hi}")),
        });
    }
    run.finish(checks)
}
