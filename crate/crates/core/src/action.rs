//! Action functionals and the residual of `J_∂Z = ∇H_t(Z)`.

use rayon::prelude::*;

use crate::algebra::{theta3, CHANNELS};
use crate::error::{BftError, Result};
use crate::field::FieldState;
use crate::hamiltonian::HamiltonianSpec;
use crate::spectral::{apply_jdel, derivative};

/// Equation labels, indexed by the channel whose row they occupy.
pub const EQUATION_NAMES: [&str; 8] = ["Q", "P1", "P2", "P3", "O23", "O31", "O12", "O123"];

fn require_full(z: &FieldState) -> Result<()> {
    if z.block() != CHANNELS {
        return Err(BftError::Unsupported("action needs the full 8-channel fiber".into()));
    }
    Ok(())
}

/// `𝒜(Z) = Σ_i ∫ θ_i(∂_i Z) dV`.
pub fn action(z: &FieldState) -> Result<f64> {
    require_full(z)?;
    let np = z.grid().points();
    let dz: Vec<FieldState> = (0..3).map(|axis| derivative(z, axis)).collect();
    let vals: Vec<f64> = (0..np)
        .into_par_iter()
        .map(|idx| {
            let base = z.point(idx);
            (0..3).map(|i| theta3(i + 1, &base, &dz[i].point(idx))).sum::<f64>()
        })
        .collect();
    Ok(vals.iter().sum::<f64>() / np as f64)
}

/// `𝒜_H(Z) = 𝒜(Z) − ∫ H_t(Z(t)) dV`.
pub fn action_h(z: &FieldState, spec: &HamiltonianSpec) -> Result<f64> {
    check_spec(z, spec)?;
    Ok(action(z)? - spec.integral(z))
}

fn check_spec(z: &FieldState, spec: &HamiltonianSpec) -> Result<()> {
    require_full(z)?;
    if z.d() != spec.d {
        return Err(BftError::ShapeMismatch(format!("field has d = {}, Hamiltonian has d = {}", z.d(), spec.d)));
    }
    Ok(())
}

/// `L²` gradient of `𝒜_H`: the field `J_∂Z − ∇H(Z)`.
pub fn l2_gradient(z: &FieldState, spec: &HamiltonianSpec) -> Result<FieldState> {
    check_spec(z, spec)?;
    Ok(apply_jdel(z)?.sub(&spec.grad_field(z)))
}

pub fn residual_norm(z: &FieldState, spec: &HamiltonianSpec) -> Result<f64> {
    Ok(l2_gradient(z, spec)?.l2_norm())
}

/// `L²` norm of each of the eight equations (maximum over the `d` blocks),
/// ordered as [`EQUATION_NAMES`].
pub fn equation_residuals(z: &FieldState, spec: &HamiltonianSpec) -> Result<[f64; 8]> {
    let r = l2_gradient(z, spec)?;
    let mut out = [0.0; 8];
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = (0..z.d()).map(|a| r.channel_l2(a, c)).fold(0.0, f64::max);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{O12, O123, O23, O31, P1, P2, P3, Q};
    use crate::field::Grid;
    use crate::hamiltonian::PotentialSpec;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cosine(d: usize) -> HamiltonianSpec {
        HamiltonianSpec::new(d, PotentialSpec::cosine(vec![1.0; d])).unwrap()
    }

    fn random(d: usize, n: usize, seed: u64, amp: f64) -> FieldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FieldState::random_band_limited(d, Grid::cube(n).unwrap(), 3, amp, &mut rng)
    }

    /// `½⟨Z, J_∂Z⟩` assembled mode by mode from the Fourier symbol written
    /// out by hand (no use of the Clifford generator code).
    fn quadratic_form_oracle(z: &FieldState) -> f64 {
        let grid = z.grid();
        let np = grid.points();
        let s = z.to_spectral();
        let c = s.coeffs();
        let mut total = 0.0;
        for alpha in 0..z.d() {
            let ch = |k: usize| &c[(alpha * 8 + k) * np..(alpha * 8 + k + 1) * np];
            for idx in 0..np {
                let [k1, k2, k3] = grid.kappa(idx);
                let i = Complex64::new(0.0, 1.0);
                let (q, p1, p2, p3) = (ch(Q)[idx], ch(P1)[idx], ch(P2)[idx], ch(P3)[idx]);
                let (o23, o31, o12, o123) = (ch(O23)[idx], ch(O31)[idx], ch(O12)[idx], ch(O123)[idx]);
                // Rows of the symbol of d + d* acting on (q, p, o, o123).
                let jq = -(k1 * p1 + k2 * p2 + k3 * p3);
                let jp1 = k1 * q + k2 * o12 - k3 * o31;
                let jp2 = k2 * q - k1 * o12 + k3 * o23;
                let jp3 = k3 * q + k1 * o31 - k2 * o23;
                let jo23 = k2 * p3 - k3 * p2 - k1 * o123;
                let jo31 = k3 * p1 - k1 * p3 - k2 * o123;
                let jo12 = k1 * p2 - k2 * p1 - k3 * o123;
                let jo123 = k1 * o23 + k2 * o31 + k3 * o12;
                let pairs = [(q, jq), (p1, jp1), (p2, jp2), (p3, jp3), (o23, jo23), (o31, jo31), (o12, jo12), (o123, jo123)];
                for (a, b) in pairs {
                    total += (a.conj() * i * b).re;
                }
            }
        }
        0.5 * total
    }

    #[test]
    fn oracle_symbol_matches_jdel() {
        // Sanity check that the hand-written symbol is the same operator.
        let z = random(1, 8, 4, 1.0);
        let jz = apply_jdel(&z).unwrap();
        let direct = 0.5 * z.inner(&jz);
        assert!((direct - quadratic_form_oracle(&z)).abs() < 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn constant_field_has_zero_action() {
        let z = FieldState::constant(1, Grid::cube(8).unwrap(), &[0.3, 1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 4.0]);
        assert_eq!(action(&z).unwrap(), 0.0);
    }

    #[test]
    fn sine_cosine_action_is_pi() {
        let z = FieldState::from_fn(1, Grid::cube(8).unwrap(), |t| {
            let mut v = vec![0.0; 8];
            v[Q] = (2.0 * PI * t[0]).sin();
            v[P1] = (2.0 * PI * t[0]).cos();
            v
        });
        assert!((action(&z).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn action_invariant_under_o_shift() {
        let mut z = random(2, 8, 11, 1.0);
        let a0 = action(&z).unwrap();
        for (alpha, c, s) in [(0, O23, 0.37), (1, O31, -1.2), (1, O12, 5.0)] {
            z.channel_mut(alpha, c).iter_mut().for_each(|x| *x += s);
        }
        assert!((action(&z).unwrap() - a0).abs() < 1e-12);
    }

    #[test]
    fn action_h_examples() {
        let grid = Grid::cube(8).unwrap();
        let z = FieldState::constant(1, grid, &[0.0; 8]);
        assert!((action_h(&z, &cosine(1)).unwrap() + 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        let zero = HamiltonianSpec::new(1, PotentialSpec::Zero).unwrap();
        let z = FieldState::constant(1, grid, &[0.4, 0.0, 0.0, 0.0, 0.2, 0.1, 0.7, 0.0]);
        assert_eq!(action_h(&z, &zero).unwrap(), 0.0);
        // With W = 0 and Z^odd = 0 the integrand of H vanishes and 𝒜_H = 𝒜.
        let (even, _) = random(1, 8, 3, 0.5).even_odd_split().unwrap();
        assert!((action_h(&even, &zero).unwrap() - action(&even).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn residual_at_constant_critical_points() {
        let grid = Grid::cube(8).unwrap();
        for q in [0.0, 0.5, 1.0, -0.5] {
            let z = FieldState::constant(1, grid, &[q, 0.0, 0.0, 0.0, 0.3, -0.2, 0.9, 0.0]);
            assert!(residual_norm(&z, &cosine(1)).unwrap() < 1e-12);
            assert!(equation_residuals(&z, &cosine(1)).unwrap().iter().all(|&r| r < 1e-12));
        }
        let zero = HamiltonianSpec::new(1, PotentialSpec::Zero).unwrap();
        let z = FieldState::constant(1, grid, &[0.23, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0]);
        assert_eq!(residual_norm(&z, &zero).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let z = random(2, 8, 1, 1.0);
        assert!(action_h(&z, &cosine(1)).is_err());
        let u = FieldState::zeros_with_block(1, 4, Grid::cube(8).unwrap());
        assert!(action(&u).is_err());
    }

    #[test]
    fn action_matches_quadratic_form() {
        // With an even part that is a genuine periodic field the integration
        // by parts is exact: Σ θ_i(∂_iZ) integrates to ½⟨Z, J_∂Z⟩.
        for seed in 0..5 {
            let z = random(2, 8, 100 + seed, 1.0);
            let a = action(&z).unwrap();
            let oracle = quadratic_form_oracle(&z);
            assert!((a - oracle).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {oracle}");
        }
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        let specs = [
            cosine(1),
            HamiltonianSpec::new(
                1,
                PotentialSpec::CosinePq { amplitudes: vec![0.7], phases: vec![0.2], coupling: 0.3, support: 1.5 },
            )
            .unwrap(),
        ];
        for spec in &specs {
            for seed in 0..6 {
                let z = random(1, 8, 2 * seed, 0.8);
                let y = random(1, 8, 2 * seed + 1, 1.0);
                let g = l2_gradient(&z, spec).unwrap();
                let want = g.inner(&y);
                let eps = 1e-5;
                let fd = (action_h(&z.axpy(eps, &y), spec).unwrap() - action_h(&z.axpy(-eps, &y), spec).unwrap()) / (2.0 * eps);
                assert!((fd - want).abs() <= 1e-6 * want.abs().max(1.0), "{fd} vs {want}");
            }
        }
    }

    #[test]
    fn equation_rows_for_linear_q() {
        // q = ε sin(2πt₂) with W = 0: only the P2 row is nonzero.
        let zero = HamiltonianSpec::new(1, PotentialSpec::Zero).unwrap();
        let z = FieldState::from_fn(1, Grid::cube(8).unwrap(), |t| {
            let mut v = vec![0.0; 8];
            v[Q] = 0.1 * (2.0 * PI * t[1]).sin();
            v
        });
        let r = equation_residuals(&z, &zero).unwrap();
        for (c, x) in r.iter().enumerate() {
            if c == P2 {
                assert!((x - 0.2 * PI / 2f64.sqrt()).abs() < 1e-12);
            } else {
                assert!(*x < 1e-14, "{} row: {x}", EQUATION_NAMES[c]);
            }
        }
    }
}
