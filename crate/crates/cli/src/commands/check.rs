use bft_core::action::{action_h, l2_gradient};
use bft_core::spectral::{apply_jdel, hk_identity_check, parity_leak, verify_square};
use bft_core::{FieldState, Grid, HamiltonianSpec, PotentialSpec, TimeProfile};
use clap::Args;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::output::{real, Check, Run, Table};
use crate::{Failure, Global};

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Random field pairs per suite.
    #[arg(long, default_value_t = 20)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A `p`-dependent, time-dependent Hamiltonian so every term of the gradient
/// is exercised.
fn test_hamiltonian(d: usize) -> Result<HamiltonianSpec, Failure> {
    let potential = PotentialSpec::CosinePq {
        amplitudes: (0..d).map(|a| 1.0 + 0.5 * a as f64).collect(),
        phases: (0..d).map(|a| 0.3 * a as f64).collect(),
        coupling: 0.4,
        support: 1.5,
    };
    Ok(HamiltonianSpec::new(d, potential)?.with_time_profile(TimeProfile::Cosine { amplitude: 0.3, k: [1, 0, 1] }))
}

struct Suite {
    name: &'static str,
    tolerance: f64,
    worst: f64,
}

pub fn run(global: &Global, args: &CheckArgs) -> Result<Vec<Check>, Failure> {
    if args.grid < 4 || args.d == 0 || args.samples == 0 {
        return Err(Failure::Input("need grid >= 4, d >= 1 and samples >= 1".into()));
    }
    let grid = Grid::cube(args.grid)?;
    let spec = test_hamiltonian(args.d)?;
    let mut run = Run::new(
        global,
        "check",
        json!({ "grid": args.grid, "d": args.d, "samples": args.samples, "seed": args.seed, "hamiltonian": spec }),
    )?;
    run.seed(args.seed);
    let mut suites = vec![
        Suite { name: "gradient_fd", tolerance: 1e-7, worst: 0.0 },
        Suite { name: "hessian_fd", tolerance: 1e-6, worst: 0.0 },
        Suite { name: "square_identity", tolerance: 1e-10, worst: 0.0 },
        Suite { name: "hk_identity", tolerance: 1e-9, worst: 0.0 },
        Suite { name: "self_adjoint", tolerance: 1e-10, worst: 0.0 },
        Suite { name: "parity", tolerance: 1e-12, worst: 0.0 },
    ];
    let kmax = args.grid / 2 - 1;
    let eps = 1e-5;
    for i in 0..args.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i));
        let z = FieldState::random_band_limited(args.d, grid, kmax, 0.8, &mut rng);
        let y = FieldState::random_band_limited(args.d, grid, kmax, 1.0, &mut rng);

        let grad = l2_gradient(&z, &spec)?;
        let fd = (action_h(&z.axpy(eps, &y), &spec)? - action_h(&z.axpy(-eps, &y), &spec)?) / (2.0 * eps);
        let errs = [
            (fd - grad.inner(&y)).abs() / (grad.l2_norm() * y.l2_norm()),
            {
                let lin = apply_jdel(&y)?.sub(&spec.hess_field(&z, &y));
                let fd = l2_gradient(&z.axpy(eps, &y), &spec)?.sub(&l2_gradient(&z.axpy(-eps, &y), &spec)?).scale(0.5 / eps);
                fd.sub(&lin).l2_norm() / lin.l2_norm()
            },
            verify_square(&z)? / z.l2_norm(),
            (0..=3)
                .map(|k| hk_identity_check(&z, k).map(|(l, r)| (l.sqrt() - r.sqrt()).abs() / r.sqrt()))
                .collect::<bft_core::Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max),
            {
                let (jz, jy) = (apply_jdel(&z)?, apply_jdel(&y)?);
                (jz.inner(&y) - z.inner(&jy)).abs() / (z.l2_norm() * jy.l2_norm())
            },
            parity_leak(&z)? / z.l2_norm(),
        ];
        for (suite, err) in suites.iter_mut().zip(errs) {
            suite.worst = suite.worst.max(err);
        }
    }
    let mut table = Table::new(&["check", "samples", "max_error", "tolerance", "pass"]);
    let mut checks = Vec::new();
    for s in &suites {
        let pass = s.worst <= s.tolerance;
        table.push(vec![s.name.into(), args.samples.to_string(), real(s.worst), real(s.tolerance), pass.to_string()]);
        checks.push(Check::new(s.name, pass, format!("max relative error {:.3e} (tolerance {:.0e})", s.worst, s.tolerance)));
    }
    run.table("check", &table)?;
    run.finish(checks)
}
