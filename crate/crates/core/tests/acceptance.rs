//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stderr (bypassing output capture) before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use bft_core::action::{action_h, l2_gradient};
use bft_core::algebra::{check_clifford, generate_j, printed_j3, printed_k3, CliffordSystem, Q};
use bft_core::floer::{max_principle_monitor, solve_floer_curve, FloerConfig};
use bft_core::solvers::{
    adiabatic_residual, cutoff_orbit_coincidence, cutoff_radius, deflated_search, l2_bound_rows, morse_flow,
    newton_solve, verify_laplace_correspondence, FlowConfig, SearchReport, SolverConfig,
};
use bft_core::spectral::{
    apply_jdel, apply_kdel, hk_identity_check, k_kernel_witnesses, symbol_nullity, verify_square, SymbolOperator,
};
use bft_core::{FieldState, Grid, HamiltonianSpec, PotentialSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance {id}] {verdict} {name}: {detail} ({:.2}s)\n",
        started.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn cosine(d: usize) -> HamiltonianSpec {
    HamiltonianSpec::new(d, PotentialSpec::cosine(vec![1.0; d])).unwrap()
}

fn random_field(d: usize, n: usize, seed: u64, kmax: usize) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FieldState::random_band_limited(d, Grid::cube(n).unwrap(), kmax, 1.0, &mut rng)
}

fn constant_q(q: f64, n: usize) -> FieldState {
    let mut pt = [0.0; 8];
    pt[Q] = q;
    FieldState::constant(1, Grid::cube(n).unwrap(), &pt)
}

#[test]
fn criterion_1_algebra_exactness() {
    let started = Instant::now();
    let mut worst = 0i64;
    let mut all = true;
    for n in 1..=5 {
        let rep = check_clifford(&generate_j(n).unwrap());
        worst = worst.max(rep.square).max(rep.anticommutation).max(rep.antisymmetry);
        all &= rep.passed();
    }
    let j3 = generate_j(3).unwrap();
    let j_match = j3.iter().zip(printed_j3().iter()).all(|(a, b)| a == b);
    let k3 = CliffordSystem::new(3, 1).unwrap().extract_k().unwrap();
    let k_match = k3.iter().zip(printed_k3().iter()).all(|(a, b)| a == b);
    let pass = all && j_match && k_match && started.elapsed().as_secs_f64() < 1.0;
    report(
        1,
        "Clifford identities n=1..5, J and K tables",
        pass,
        &format!("max integer deviation {worst}, J table match {j_match}, K table match {k_match}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_2_operator_identities() {
    let started = Instant::now();
    let (mut sq, mut hk, mut adj) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let z = random_field(1, 16, 1000 + seed, 6);
        let y = random_field(1, 16, 2000 + seed, 6);
        sq = sq.max(verify_square(&z).unwrap() / z.l2_norm());
        for k in 0..=1 {
            let (lhs, rhs) = hk_identity_check(&z, k).unwrap();
            hk = hk.max((lhs.sqrt() - rhs.sqrt()).abs() / rhs.sqrt());
        }
        let jz = apply_jdel(&z).unwrap();
        let jy = apply_jdel(&y).unwrap();
        let scale = z.l2_norm() * jy.l2_norm();
        adj = adj.max((jz.inner(&y) - z.inner(&jy)).abs() / scale);
    }
    let pass = sq < 1e-10 && hk < 1e-9 && adj < 1e-10 && started.elapsed().as_secs_f64() < 10.0;
    report(
        2,
        "J_del^2 = -Laplacian, H^k identity, self-adjointness",
        pass,
        &format!("square {sq:.2e}, H^k {hk:.2e}, pairing {adj:.2e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_3_kernel_pathology() {
    let started = Instant::now();
    let mut k_min = usize::MAX;
    let mut j_max = 0;
    for k1 in -8i64..=8 {
        for k2 in -8i64..=8 {
            for k3 in -8i64..=8 {
                if (k1, k2, k3) == (0, 0, 0) {
                    continue;
                }
                k_min = k_min.min(symbol_nullity(SymbolOperator::K, [k1, k2, k3]));
                j_max = j_max.max(symbol_nullity(SymbolOperator::J, [k1, k2, k3]));
            }
        }
    }
    let grid = Grid::cube(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scalar = FieldState::random_band_limited(1, grid, 4, 1.0, &mut rng);
    let psi = FieldState::from_values_with_block(1, 1, grid, scalar.channel(0, 0).to_vec()).unwrap();
    let mut witness = 0.0f64;
    for w in k_kernel_witnesses(&psi).unwrap() {
        let kw = apply_kdel(&w).unwrap();
        witness = witness.max(kw.values().iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    let pass = k_min >= 2 && j_max == 0 && witness < 1e-12 && started.elapsed().as_secs_f64() < 5.0;
    report(
        3,
        "K symbol degenerate, J symbol invertible, witnesses in ker K_del",
        pass,
        &format!("min nullity(K) {k_min}, max nullity(J) {j_max}, witness sup {witness:.2e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_4_variational_structure() {
    let started = Instant::now();
    let spec = cosine(1);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let grid = Grid::cube(8).unwrap();
        let z = FieldState::random_band_limited(1, grid, 3, 0.8, &mut rng);
        let y = FieldState::random_band_limited(1, grid, 3, 1.0, &mut rng);
        let eps = 1e-5;
        let fd = (action_h(&z.axpy(eps, &y), &spec).unwrap() - action_h(&z.axpy(-eps, &y), &spec).unwrap()) / (2.0 * eps);
        let an = l2_gradient(&z, &spec).unwrap().inner(&y);
        worst = worst.max((fd - an).abs() / an.abs());
    }
    let pass = worst < 1e-6 && started.elapsed().as_secs_f64() < 10.0;
    report(4, "FD directional derivative of A_H vs L2 gradient", pass, &format!("max relative gap {worst:.2e}"), started);
    assert!(pass);
}

fn search_config() -> SolverConfig {
    SolverConfig { grid: [16, 16, 16], ..SolverConfig::default() }
}

struct Searches {
    d1: SearchReport,
    d2: SearchReport,
    seconds: f64,
}

fn searches() -> &'static Searches {
    static CELL: OnceLock<Searches> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let d1 = deflated_search(&cosine(1), &search_config()).unwrap();
        let d2 = deflated_search(&cosine(2), &search_config()).unwrap();
        Searches { d1, d2, seconds: started.elapsed().as_secs_f64() }
    })
}

#[test]
fn criterion_5_family_count() {
    let started = Instant::now();
    let s = searches();
    let mut laplace = 0.0f64;
    let mut variance = 0.0f64;
    let mut residual = 0.0f64;
    let mut checks = true;
    for (rep, d) in [(&s.d1, 1), (&s.d2, 2)] {
        for rec in &rep.records {
            residual = residual.max(rec.residual);
            let lap = verify_laplace_correspondence(rec, &cosine(d)).unwrap();
            laplace = laplace.max(lap.laplace_residual);
            variance = variance.max(lap.o_ij_variance);
            checks &= lap.passed();
        }
    }
    let (n1, n2) = (s.d1.records.len(), s.d2.records.len());
    let pass = n1 >= 2
        && n2 >= 3
        && residual < 1e-10
        && laplace < 1e-8
        && variance < 1e-12
        && checks
        && s.seconds < 120.0;
    report(
        5,
        "family count and Laplace correspondence",
        pass,
        &format!(
            "d=1: {n1} families (bound 2), d=2: {n2} families (bound 3); max residual {residual:.2e}, \
             Laplace {laplace:.2e}, o_ij variance {variance:.2e}, search time {:.1}s",
            s.seconds
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_6_l2_bound() {
    let started = Instant::now();
    let s = searches();
    let mut rows = 0;
    let mut worst_margin = f64::INFINITY;
    for (rep, d) in [(&s.d1, 1), (&s.d2, 2)] {
        let spec = cosine(d);
        let max_action = rep.records.iter().map(|r| r.action_value).fold(f64::NEG_INFINITY, f64::max);
        for a in [0.0, 1.0, max_action] {
            for (_, _, lower) in l2_bound_rows(&rep.records, &spec, a).unwrap() {
                rows += 1;
                worst_margin = worst_margin.min(a - lower);
            }
        }
    }
    let pass = rows > 0 && worst_margin >= 0.0;
    report(
        6,
        "a >= h0 |Z^odd|^2 - h1 on records below the cap",
        pass,
        &format!("{rows} record/cap pairs, smallest margin {worst_margin:.3e}"),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_7_cutoff_coincidence() {
    let started = Instant::now();
    let a = 1.0;
    let rep = cutoff_orbit_coincidence(&cosine(1), a, &search_config()).unwrap();
    let pass = rep.matched
        && !rep.plain.is_empty()
        && rep.max_sup_odd < rep.rho - 1.0
        && started.elapsed().as_secs_f64() < 240.0;
    report(
        7,
        "searches with H and cutoff H agree below the action cap",
        pass,
        &format!(
            "a = {a}, rho = {:.4} (C_sob {}), {} vs {} families, {} matched pairs, max sup|Z^odd| {:.2e}",
            rep.rho,
            rep.c_sob,
            rep.plain.len(),
            rep.cut.len(),
            rep.pairs.len(),
            rep.max_sup_odd
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_8_floer_monitor() {
    let started = Instant::now();
    let plain = cosine(1);
    let rho = cutoff_radius(&plain, 1.0).unwrap();
    let spec = plain.clone().with_rho(Some(rho)).unwrap();
    let cfg = SolverConfig { grid: [8, 8, 8], ..SolverConfig::default() };
    let low = newton_solve(&constant_q(0.0, 8), &plain, &cfg).unwrap();
    let high = newton_solve(&constant_q(0.5, 8), &plain, &cfg).unwrap();
    let floer = FloerConfig { s_half: 4.0, ns: 32, ..FloerConfig::default() };

    let stationary = solve_floer_curve(&low.field, &low.field, &spec, &floer).unwrap();
    let connecting = solve_floer_curve(&high.field, &low.field, &spec, &floer).unwrap();
    let mut pass = stationary.converged;
    let mut details = Vec::new();
    for (name, curve) in [("stationary", &stationary), ("connecting", &connecting)] {
        let mon = max_principle_monitor(curve, &spec).unwrap();
        pass &= mon.c0_bound_holds() && mon.action_monotone() && mon.subsolution_holds();
        details.push(format!(
            "{name}: converged {}, residual {:.2e}, sup|Z^odd| {:.3e} <= rho {:.3}, max action increase {:.2e} \
             (excess over slack {:.2e})",
            curve.converged,
            curve.residual,
            mon.sup_odd_max,
            rho,
            mon.max_action_increase,
            mon.action_slack_excess
        ));
    }
    pass &= started.elapsed().as_secs_f64() < 300.0;
    report(8, "Floer C0 bound and action monotonicity", pass, &details.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_9_morse_and_adiabatic() {
    let started = Instant::now();
    let spec = cosine(1);
    let flow = FlowConfig::default();
    let traj = morse_flow(&constant_q(0.25, 8), &spec, &flow).unwrap();
    let q_end = traj.last().channel_mean(0, Q);
    let monotone = traj.max_energy_increase() <= 1e-9;

    // A nonconstant start so that the lifted momenta are not identically zero.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let grid = Grid::cube(8).unwrap();
    let start = constant_q(0.25, 8).add(&FieldState::random_band_limited(1, grid, 2, 0.1, &mut rng));
    let wavy = morse_flow(&start, &spec, &flow).unwrap();
    let r0 = adiabatic_residual(&wavy, &spec, 0.0).unwrap();
    let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&e| adiabatic_residual(&wavy, &spec, e).unwrap()).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let pass = traj.converged
        && q_end.abs() < 1e-8
        && monotone
        && wavy.converged
        && wavy.max_energy_increase() <= 1e-9
        && r0 < 1e-8
        && lo > 0.0
        && hi < 2.0 * lo
        && started.elapsed().as_secs_f64() < 60.0;
    report(
        9,
        "Morse flow to the stable constant, O(eps) adiabatic residual",
        pass,
        &format!(
            "q(s_end) = {q_end:.2e} at s = {:.1}, f monotone {monotone}; eps=0 residual {r0:.2e}, \
             ratios {:.4e} {:.4e} {:.4e}",
            traj.s.last().unwrap(),
            ratios[0],
            ratios[1],
            ratios[2]
        ),
        started,
    );
    assert!(pass);
}
