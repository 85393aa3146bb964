//! Fourier-multiplier implementations of `J_∂`, `K_∂`, `Δ` and the symbol
//! analysis that separates the elliptic operator from the degenerate one.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{generate_j, printed_k3, IntMatrix, CHANNELS, EVEN, ODD};
use crate::error::{BftError, Result};
use crate::field::{forward_channels, inverse_channels, FieldState};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn j3() -> &'static [IntMatrix] {
    static J: OnceLock<Vec<IntMatrix>> = OnceLock::new();
    J.get_or_init(|| generate_j(3).expect("n = 3 is in range"))
}

pub(crate) fn k3() -> &'static [IntMatrix] {
    static K: OnceLock<Vec<IntMatrix>> = OnceLock::new();
    K.get_or_init(|| j3().iter().map(|j| j.minor(4)).collect())
}

#[inline]
fn times_i(kappa: f64, c: Complex64) -> Complex64 {
    Complex64::new(-kappa * c.im, kappa * c.re)
}

/// Spectral `∂_axis` (axis 0, 1, 2 for `t1, t2, t3`).
pub fn derivative(z: &FieldState, axis: usize) -> FieldState {
    let grid = z.grid();
    let np = grid.points();
    let mut coeffs = forward_channels(grid, z.values());
    for ch in coeffs.chunks_mut(np) {
        for (idx, c) in ch.iter_mut().enumerate() {
            *c = times_i(grid.kappa(idx)[axis], *c);
        }
    }
    z.like(inverse_channels(grid, coeffs))
}

/// `Σ_i (Id_d ⊗ M_i) ∂_i z` for square integer matrices of the field's block size.
pub fn apply_first_order(z: &FieldState, mats: &[IntMatrix]) -> FieldState {
    let grid = z.grid();
    let np = grid.points();
    let block = z.block();
    assert!(mats.iter().all(|m| m.size() == block), "matrix size must match block");
    let coeffs = forward_channels(grid, z.values());
    let mut out = vec![Complex64::new(0.0, 0.0); coeffs.len()];
    let kappas: Vec<[f64; 3]> = (0..np).map(|idx| grid.kappa(idx)).collect();
    for alpha in 0..z.d() {
        let base = alpha * block * np;
        for (axis, m) in mats.iter().enumerate() {
            for r in 0..block {
                for c in 0..block {
                    let e = m.get(r, c);
                    if e == 0 {
                        continue;
                    }
                    let e = e as f64;
                    let (src, dst) = (base + c * np, base + r * np);
                    for idx in 0..np {
                        out[dst + idx] += times_i(e * kappas[idx][axis], coeffs[src + idx]);
                    }
                }
            }
        }
    }
    z.like(inverse_channels(grid, out))
}

/// `J_∂ Z = Σ_i (Id_d ⊗ J_i) ∂_i Z`.
pub fn apply_jdel(z: &FieldState) -> Result<FieldState> {
    if z.block() != CHANNELS {
        return Err(BftError::Unsupported("J_∂ acts on 8-channel fields".into()));
    }
    Ok(apply_first_order(z, j3()))
}

/// `K_∂ u = Σ_i (Id_d ⊗ K_i) ∂_i u` on `(q, p1, p2, p3)` fields.
pub fn apply_kdel(u: &FieldState) -> Result<FieldState> {
    if u.block() != 4 {
        return Err(BftError::Unsupported("K_∂ acts on 4-channel fields".into()));
    }
    Ok(apply_first_order(u, k3()))
}

/// `Δ = Σ_i ∂_i²` with the same Nyquist-zeroed derivative as `J_∂`.
pub fn laplacian(z: &FieldState) -> FieldState {
    let grid = z.grid();
    let np = grid.points();
    let mut coeffs = forward_channels(grid, z.values());
    for ch in coeffs.chunks_mut(np) {
        for (idx, c) in ch.iter_mut().enumerate() {
            let k = grid.kappa(idx);
            *c *= -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        }
    }
    z.like(inverse_channels(grid, coeffs))
}

/// `‖J_∂(J_∂Z) + ΔZ‖_{L²}`.
pub fn verify_square(z: &FieldState) -> Result<f64> {
    let jj = apply_jdel(&apply_jdel(z)?)?;
    Ok(jj.add(&laplacian(z)).l2_norm())
}

/// `A(κ)v` for the real matrix `A(κ) = Σ_i κ_i J_i`; `J_∂` acts on the mode
/// with wave vector `κ` as `iA(κ)`.
pub(crate) fn symbol_apply(kappa: [f64; 3], v: &[Complex64], out: &mut [Complex64]) {
    out.fill(Complex64::new(0.0, 0.0));
    for (m, &k) in j3().iter().zip(&kappa) {
        if k == 0.0 {
            continue;
        }
        for (r, o) in out.iter_mut().enumerate() {
            for (c, &e) in m.row(r).iter().enumerate() {
                if e != 0 {
                    *o += v[c] * (e as f64 * k);
                }
            }
        }
    }
}

/// Applies `(J_∂ − P_odd)⁻¹` mode by mode, `P_odd` the projection onto odd
/// channels (the linearization at `W = 0`).
///
/// In `(even, odd)` blocks the mode matrix is `[[0, C], [C*, −I]]` with
/// `CC* = |κ|²`, so `x_e = (r_e + iA r_o)/|κ|²` and `x_o = iA x_e − r_o`.
/// Modes with `κ = 0` are singular on the even block; there the even part is
/// passed through unchanged and the odd part negated.
pub fn apply_shifted_inverse(r: &FieldState) -> Result<FieldState> {
    if r.block() != CHANNELS {
        return Err(BftError::Unsupported("shifted inverse acts on 8-channel fields".into()));
    }
    let grid = r.grid();
    let np = grid.points();
    let mut coeffs = forward_channels(grid, r.values());
    let i = Complex64::new(0.0, 1.0);
    for block in coeffs.chunks_mut(CHANNELS * np) {
        let mut v = [Complex64::new(0.0, 0.0); CHANNELS];
        let mut w = [Complex64::new(0.0, 0.0); CHANNELS];
        for idx in 0..np {
            for c in 0..CHANNELS {
                v[c] = block[c * np + idx];
            }
            let kappa = grid.kappa(idx);
            let k2 = kappa.iter().map(|k| k * k).sum::<f64>();
            if k2 == 0.0 {
                for &c in &ODD {
                    v[c] = -v[c];
                }
            } else {
                let mut ro = [Complex64::new(0.0, 0.0); CHANNELS];
                for &c in &ODD {
                    ro[c] = v[c];
                }
                symbol_apply(kappa, &ro, &mut w);
                let mut xe = [Complex64::new(0.0, 0.0); CHANNELS];
                for &c in &EVEN {
                    xe[c] = (v[c] + i * w[c]) / k2;
                }
                symbol_apply(kappa, &xe, &mut w);
                for &c in &EVEN {
                    v[c] = xe[c];
                }
                for &c in &ODD {
                    v[c] = i * w[c] - ro[c];
                }
            }
            for c in 0..CHANNELS {
                block[c * np + idx] = v[c];
            }
        }
    }
    Ok(r.like(inverse_channels(grid, coeffs)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolOperator {
    J,
    K,
}

impl std::str::FromStr for SymbolOperator {
    type Err = BftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "J" | "j" => Ok(Self::J),
            "K" | "k" => Ok(Self::K),
            other => Err(BftError::InvalidArgument(format!("unknown operator {other:?}, expected J or K"))),
        }
    }
}

/// The real matrix `Σ_i M_i k_i`.
pub fn symbol_matrix(op: SymbolOperator, k: [i64; 3]) -> DMatrix<f64> {
    let (mats, size) = match op {
        SymbolOperator::J => (j3(), 8),
        SymbolOperator::K => (k3(), 4),
    };
    DMatrix::from_fn(size, size, |r, c| mats.iter().zip(k).map(|(m, ki)| m.get(r, c) as f64 * ki as f64).sum())
}

/// Nullity of the principal symbol at integer wavevector `k`.
pub fn symbol_nullity(op: SymbolOperator, k: [i64; 3]) -> usize {
    let m = symbol_matrix(op, k);
    let size = m.nrows();
    let sv = m.singular_values();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return size;
    }
    sv.iter().filter(|&&s| s <= RANK_TOL * largest).count()
}

/// Returns `(‖J_∂Z‖²_{H^k}, ‖∇Z‖²_{H^k})`, each assembled from its own spectral
/// quadrature: the left side from the transform of `J_∂Z`, the right side from
/// the transforms of the three partial derivatives.
pub fn hk_identity_check(z: &FieldState, k: u32) -> Result<(f64, f64)> {
    let grid = z.grid();
    let np = grid.points();
    let weight = |idx: usize| {
        let kap = grid.kappa(idx);
        let s = kap[0] * kap[0] + kap[1] * kap[1] + kap[2] * kap[2];
        (0..=k).map(|j| s.powi(j as i32)).sum::<f64>()
    };
    let weighted = |f: &FieldState| -> f64 {
        forward_channels(grid, f.values())
            .chunks(np)
            .map(|ch| ch.iter().enumerate().map(|(idx, c)| weight(idx) * c.norm_sqr()).sum::<f64>())
            .sum()
    };
    let lhs = weighted(&apply_jdel(z)?);
    let rhs = (0..3).map(|axis| weighted(&derivative(z, axis))).sum();
    Ok((lhs, rhs))
}

/// Checks that even output channels of `J_∂Z` depend only on odd input
/// channels and vice versa: returns the largest output leak when one parity of
/// the input is zeroed.
pub fn parity_leak(z: &FieldState) -> Result<f64> {
    let (even, odd) = z.even_odd_split()?;
    let from_even = apply_jdel(&even)?;
    let from_odd = apply_jdel(&odd)?;
    // J_∂(even) must be odd-only and J_∂(odd) even-only.
    let (leak_e, _) = from_even.even_odd_split()?;
    let (_, leak_o) = from_odd.even_odd_split()?;
    let sup = |f: &FieldState| f.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(sup(&leak_e).max(sup(&leak_o)))
}

/// Kernel witnesses `(0, ∂₂ψ, −∂₁ψ, 0)` and `(0, ∂₃ψ, 0, −∂₁ψ)` of `K_∂`.
pub fn k_kernel_witnesses(psi: &FieldState) -> Result<[FieldState; 2]> {
    if psi.block() != 1 || psi.d() != 1 {
        return Err(BftError::InvalidArgument("ψ must be a single scalar channel".into()));
    }
    let grid = psi.grid();
    let d1 = derivative(psi, 0);
    let d2 = derivative(psi, 1);
    let d3 = derivative(psi, 2);
    let assemble = |chans: [Option<(&FieldState, f64)>; 4]| {
        let mut u = FieldState::zeros_with_block(1, 4, grid);
        for (c, slot) in chans.iter().enumerate() {
            if let Some((f, s)) = slot {
                for (dst, src) in u.channel_mut(0, c).iter_mut().zip(f.values()) {
                    *dst = s * src;
                }
            }
        }
        u
    };
    Ok([
        assemble([None, Some((&d2, 1.0)), Some((&d1, -1.0)), None]),
        assemble([None, Some((&d3, 1.0)), None, Some((&d1, -1.0))]),
    ])
}

/// Checks the extracted `K_i` against the printed first-order matrices.
pub fn k_matches_printed() -> bool {
    k3().iter().zip(printed_k3().iter()).all(|(a, b)| a == b)
}
