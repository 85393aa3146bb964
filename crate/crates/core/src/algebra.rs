//! Clifford generators of `d + d*` on the total exterior algebra of `(R^n)*`.
//!
//! The operator `d + d*` acting on a `Λ(R^n)*`-valued map decomposes as
//! `Σ_i J_i ∂_i` where `J_i = ε_i − ι_i` (wedge with `dt_i` minus contraction
//! with `∂_i`). Matrices are exact signed integers; every identity check runs
//! in integer arithmetic.

use std::fmt;

use crate::error::{BftError, Result};

/// Channel indices of one `α`-block for `n = 3`.
pub const Q: usize = 0;
pub const P1: usize = 1;
pub const P2: usize = 2;
pub const P3: usize = 3;
pub const O23: usize = 4;
pub const O31: usize = 5;
pub const O12: usize = 6;
pub const O123: usize = 7;

/// Channels per `α`-block for `n = 3`.
pub const CHANNELS: usize = 8;
/// Even-degree channels `(q, o23, o31, o12)`.
pub const EVEN: [usize; 4] = [Q, O23, O31, O12];
/// Odd-degree channels `(p1, p2, p3, o123)`.
pub const ODD: [usize; 4] = [P1, P2, P3, O123];
/// Torus-valued `o_ij` channels.
pub const O_IJ: [usize; 3] = [O23, O31, O12];

pub const CHANNEL_NAMES: [&str; 8] = ["q", "p1", "p2", "p3", "o23", "o31", "o12", "o123"];

pub const MAX_N: usize = 8;

/// Returns true if the channel carries an even-degree form.
pub fn is_even(channel: usize) -> bool {
    matches!(channel, Q | O23 | O31 | O12)
}

/// A basis form `sign · dt_{i_1} ∧ … ∧ dt_{i_k}` with `i_1 < … < i_k` encoded
/// as a bitmask (bit `i-1` set for `dt_i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisForm {
    pub mask: u32,
    pub sign: i32,
}

impl BasisForm {
    pub fn degree(&self) -> u32 {
        self.mask.count_ones()
    }
}

impl fmt::Display for BasisForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mask == 0 {
            return write!(f, "1");
        }
        let mut idx: Vec<u32> = (0..32).filter(|b| self.mask >> b & 1 == 1).map(|b| b + 1).collect();
        if self.sign < 0 {
            // only used for the oriented 2-forms, e.g. dt3∧dt1
            idx.reverse();
        }
        let parts: Vec<String> = idx.iter().map(|i| format!("dt{i}")).collect();
        write!(f, "{}", parts.join("∧"))
    }
}

/// Fixed ordering of `Λ(R^n)*`: degree-major, lexicographic within degree.
/// For `n = 3` the 2-forms follow the Hodge-dual order `(23, 31, 12)`, so the
/// coordinates read `(q, p1, p2, p3, o23, o31, o12, o123)`.
pub fn basis_order(n: usize) -> Vec<BasisForm> {
    if n == 3 {
        return vec![
            BasisForm { mask: 0b000, sign: 1 },
            BasisForm { mask: 0b001, sign: 1 },
            BasisForm { mask: 0b010, sign: 1 },
            BasisForm { mask: 0b100, sign: 1 },
            BasisForm { mask: 0b110, sign: 1 },
            BasisForm { mask: 0b101, sign: -1 },
            BasisForm { mask: 0b011, sign: 1 },
            BasisForm { mask: 0b111, sign: 1 },
        ];
    }
    let mut masks: Vec<u32> = (0..(1u32 << n)).collect();
    masks.sort_by_key(|&m| (m.count_ones(), lex_key(m, n)));
    masks.into_iter().map(|mask| BasisForm { mask, sign: 1 }).collect()
}

fn lex_key(mask: u32, n: usize) -> Vec<u32> {
    (0..n as u32).filter(|b| mask >> b & 1 == 1).collect()
}

/// Dense square matrix of small signed integers, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    size: usize,
    entries: Vec<i32>,
}

impl IntMatrix {
    pub fn zeros(size: usize) -> Self {
        Self { size, entries: vec![0; size * size] }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[&[i32]]) -> Self {
        let size = rows.len();
        let mut m = Self::zeros(size);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), size, "matrix must be square");
            m.entries[r * size..(r + 1) * size].copy_from_slice(row);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.entries[r * self.size + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: i32) {
        self.entries[r * self.size + c] = v;
    }

    pub fn row(&self, r: usize) -> &[i32] {
        &self.entries[r * self.size..(r + 1) * self.size]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.size);
        for r in 0..self.size {
            for c in 0..self.size {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Product skipping zero entries of `self`; the generators have one
    /// nonzero per column so this stays cheap up to `n = 8`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.size, other.size);
        let n = self.size;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.entries[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.size, other.size);
        Self {
            size: self.size,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Self { size: self.size, entries: self.entries.iter().map(|a| -a).collect() }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> i64 {
        assert_eq!(self.size, other.size);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (*a as i64 - *b as i64).abs())
            .max()
            .unwrap_or(0)
    }

    /// Top-left `k × k` block.
    pub fn minor(&self, k: usize) -> Self {
        let mut m = Self::zeros(k);
        for r in 0..k {
            for c in 0..k {
                m.set(r, c, self.get(r, c));
            }
        }
        m
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }
}

/// Sign and target of wedging `dt_i` (bit `b`) onto the sorted form `mask`.
fn wedge(mask: u32, b: u32) -> Option<(u32, i32)> {
    if mask >> b & 1 == 1 {
        return None;
    }
    let before = (mask & ((1u32 << b) - 1)).count_ones();
    Some((mask | 1 << b, if before % 2 == 0 { 1 } else { -1 }))
}

/// Sign and target of contracting `∂_i` (bit `b`) into the sorted form `mask`.
fn contract(mask: u32, b: u32) -> Option<(u32, i32)> {
    if mask >> b & 1 == 0 {
        return None;
    }
    let before = (mask & ((1u32 << b) - 1)).count_ones();
    Some((mask & !(1 << b), if before % 2 == 0 { 1 } else { -1 }))
}

/// Builds `J_1 … J_n` with `(d + d*) Z = Σ_i J_i ∂_i Z` in [`basis_order`].
pub fn generate_j(n: usize) -> Result<Vec<IntMatrix>> {
    if n == 0 || n > MAX_N {
        return Err(BftError::InvalidArgument(format!("n must lie in 1..={MAX_N}, got {n}")));
    }
    let basis = basis_order(n);
    let size = basis.len();
    let row_of = |mask: u32| basis.iter().position(|f| f.mask == mask).expect("mask in basis");
    let mut out = Vec::with_capacity(n);
    for axis in 0..n as u32 {
        let mut j = IntMatrix::zeros(size);
        for (c, col) in basis.iter().enumerate() {
            // d contributes +ε_i, d* contributes −ι_i on flat space.
            if let Some((target, s)) = wedge(col.mask, axis) {
                let r = row_of(target);
                j.set(r, c, j.get(r, c) + s * col.sign * basis[r].sign);
            }
            if let Some((target, s)) = contract(col.mask, axis) {
                let r = row_of(target);
                j.set(r, c, j.get(r, c) - s * col.sign * basis[r].sign);
            }
        }
        out.push(j);
    }
    Ok(out)
}

/// The generators `J_i` together with target dimension `d`.
#[derive(Clone, Debug)]
pub struct CliffordSystem {
    n: usize,
    d: usize,
    j: Vec<IntMatrix>,
    basis: Vec<BasisForm>,
}

impl CliffordSystem {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(BftError::InvalidArgument("target dimension d must be positive".into()));
        }
        let j = generate_j(n)?;
        Ok(Self { n, d, j, basis: basis_order(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `m = 2^{n-1} d`, the number of even (and of odd) coordinates.
    pub fn m(&self) -> usize {
        (1 << (self.n - 1)) * self.d
    }

    /// Size of one `α`-block, `2^n`.
    pub fn block(&self) -> usize {
        1 << self.n
    }

    /// Dimension of the fiber, `2^n d`.
    pub fn dim(&self) -> usize {
        self.block() * self.d
    }

    pub fn basis(&self) -> &[BasisForm] {
        &self.basis
    }

    pub fn matrices(&self) -> &[IntMatrix] {
        &self.j
    }

    /// `J_i` for `1 ≤ i ≤ n`.
    pub fn j(&self, i: usize) -> Result<&IntMatrix> {
        self.check_index(i)?;
        Ok(&self.j[i - 1])
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(BftError::InvalidArgument(format!(
                "generator index {i} outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }

    /// `(Id_d ⊗ J_i) w`.
    pub fn apply(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        self.check_len(w.len())?;
        let j = &self.j[i - 1];
        let b = self.block();
        let mut out = vec![0.0; w.len()];
        for (src, dst) in w.chunks(b).zip(out.chunks_mut(b)) {
            for (r, o) in dst.iter_mut().enumerate() {
                *o = j.row(r).iter().zip(src).map(|(&e, &x)| e as f64 * x).sum();
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(BftError::ShapeMismatch(format!(
                "expected a vector of length {}, got {len}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Extracts the polysymplectic `K_i` as the top-left 4×4 blocks (n = 3).
    pub fn extract_k(&self) -> Result<Vec<IntMatrix>> {
        if self.n != 3 {
            return Err(BftError::Unsupported(format!("K_i are defined for n = 3, got n = {}", self.n)));
        }
        Ok(self.j.iter().map(|j| j.minor(4)).collect())
    }

    /// `ω^{J_i}(v, w) = ⟨v, (Id_d ⊗ J_i) w⟩`.
    pub fn omega(&self, i: usize, v: &[f64], w: &[f64]) -> Result<f64> {
        self.check_len(v.len())?;
        let jw = self.apply(i, w)?;
        Ok(v.iter().zip(&jw).map(|(a, b)| a * b).sum())
    }

    /// `θ_i` evaluated on `pt.vector` at `pt.base`, from the explicit primitives
    /// of `ω^{J_i}` (n = 3 only).
    pub fn theta(&self, i: usize, pt: &PointTangent) -> Result<f64> {
        if self.n != 3 {
            return Err(BftError::Unsupported("theta is implemented for n = 3".into()));
        }
        self.check_index(i)?;
        self.check_len(pt.base.len())?;
        self.check_len(pt.vector.len())?;
        Ok(theta3(i, &pt.base, &pt.vector))
    }

    /// Verifies `J_i² = −Id`, `J_iJ_j + J_jJ_i = 0` and `J_iᵀ = −J_i` exactly.
    pub fn check_clifford(&self) -> CliffordReport {
        check_clifford(&self.j)
    }
}

/// Sum over `α` of the explicit `θ_i` for n = 3.
pub(crate) fn theta3(i: usize, base: &[f64], tangent: &[f64]) -> f64 {
    base.chunks(CHANNELS)
        .zip(tangent.chunks(CHANNELS))
        .map(|(z, w)| match i {
            1 => z[P1] * w[Q] + z[P3] * w[O31] - z[P2] * w[O12] + z[O123] * w[O23],
            2 => z[P2] * w[Q] - z[P3] * w[O23] + z[P1] * w[O12] + z[O123] * w[O31],
            3 => z[P3] * w[Q] + z[P2] * w[O23] - z[P1] * w[O31] + z[O123] * w[O12],
            _ => unreachable!("theta index checked by caller"),
        })
        .sum()
}

/// Base point and tangent vector in the fiber (`8d` reals each for n = 3).
#[derive(Clone, Debug, PartialEq)]
pub struct PointTangent {
    pub base: Vec<f64>,
    pub vector: Vec<f64>,
}

impl PointTangent {
    pub fn new(base: Vec<f64>, vector: Vec<f64>) -> Result<Self> {
        if base.len() != vector.len() {
            return Err(BftError::ShapeMismatch("base and tangent lengths differ".into()));
        }
        if base.iter().chain(&vector).any(|x| !x.is_finite()) {
            return Err(BftError::InvalidArgument("non-finite entry".into()));
        }
        Ok(Self { base, vector })
    }
}

/// The field `ξ = Σ p_i ∂_{p_i} + o123 ∂_{o123}`; `ι_ξ ω^{J_i} = θ_i`.
pub fn xi(base: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; base.len()];
    for (src, dst) in base.chunks(CHANNELS).zip(out.chunks_mut(CHANNELS)) {
        for &c in &ODD {
            dst[c] = src[c];
        }
    }
    out
}

/// Maximum absolute deviation per identity family.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CliffordReport {
    pub n: usize,
    pub square: i64,
    pub anticommutation: i64,
    pub antisymmetry: i64,
    /// `(J_iJ_j)² = −Id` for `i < j`.
    pub complex_structures: i64,
    /// `J_i` maps even degrees to odd degrees and back.
    pub parity: i64,
}

impl CliffordReport {
    pub fn passed(&self) -> bool {
        self.square == 0
            && self.anticommutation == 0
            && self.antisymmetry == 0
            && self.complex_structures == 0
            && self.parity == 0
    }
}

pub fn check_clifford(j: &[IntMatrix]) -> CliffordReport {
    let n = j.len();
    let size = j.first().map_or(0, IntMatrix::size);
    let id = IntMatrix::identity(size);
    let minus_id = id.neg();
    let zero = IntMatrix::zeros(size);
    let basis = basis_order(n);
    let mut report = CliffordReport { n, ..Default::default() };
    for (a, ja) in j.iter().enumerate() {
        report.square = report.square.max(ja.mul(ja).max_abs_diff(&minus_id));
        report.antisymmetry = report.antisymmetry.max(ja.transpose().max_abs_diff(&ja.neg()));
        for r in 0..size {
            for c in 0..size {
                if ja.get(r, c) != 0 && basis[r].degree() % 2 == basis[c].degree() % 2 {
                    report.parity = report.parity.max(ja.get(r, c).abs() as i64);
                }
            }
        }
        for jb in &j[a + 1..] {
            let anti = ja.mul(jb).add(&jb.mul(ja));
            report.anticommutation = report.anticommutation.max(anti.max_abs_diff(&zero));
            let cs = ja.mul(jb);
            report.complex_structures = report.complex_structures.max(cs.mul(&cs).max_abs_diff(&minus_id));
        }
    }
    report
}

/// Reference table of the n = 3 generators.
pub fn printed_j3() -> [IntMatrix; 3] {
    [
        IntMatrix::from_rows(&[
            &[0, -1, 0, 0, 0, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, -1, 0],
            &[0, 0, 0, 0, 0, 1, 0, 0],
            &[0, 0, 0, 0, 0, 0, 0, -1],
            &[0, 0, 0, -1, 0, 0, 0, 0],
            &[0, 0, 1, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 1, 0, 0, 0],
        ]),
        IntMatrix::from_rows(&[
            &[0, 0, -1, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, 1, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, -1, 0, 0, 0],
            &[0, 0, 0, 1, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, 0, -1],
            &[0, -1, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 1, 0, 0],
        ]),
        IntMatrix::from_rows(&[
            &[0, 0, 0, -1, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, -1, 0, 0],
            &[0, 0, 0, 0, 1, 0, 0, 0],
            &[1, 0, 0, 0, 0, 0, 0, 0],
            &[0, 0, -1, 0, 0, 0, 0, 0],
            &[0, 1, 0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0, 0, -1],
            &[0, 0, 0, 0, 0, 0, 1, 0],
        ]),
    ]
}

/// The polysymplectic matrices of the first-order (degenerate) formalism.
pub fn printed_k3() -> [IntMatrix; 3] {
    [
        IntMatrix::from_rows(&[&[0, -1, 0, 0], &[1, 0, 0, 0], &[0, 0, 0, 0], &[0, 0, 0, 0]]),
        IntMatrix::from_rows(&[&[0, 0, -1, 0], &[0, 0, 0, 0], &[1, 0, 0, 0], &[0, 0, 0, 0]]),
        IntMatrix::from_rows(&[&[0, 0, 0, -1], &[0, 0, 0, 0], &[0, 0, 0, 0], &[1, 0, 0, 0]]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn n1_is_standard_complex_structure() {
        let j = generate_j(1).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j[0], IntMatrix::from_rows(&[&[0, -1], &[1, 0]]));
        assert!(check_clifford(&j).passed());
    }

    #[test]
    fn n3_matches_printed_matrices() {
        let j = generate_j(3).unwrap();
        for (got, want) in j.iter().zip(printed_j3().iter()) {
            assert_eq!(got, want);
        }
    }

    #[test]
    fn d_of_zero_form_lands_in_p1() {
        let j = generate_j(3).unwrap();
        let col: Vec<i32> = (0..8).map(|r| j[0].get(r, Q)).collect();
        assert_eq!(col, vec![0, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn out_of_range_n_rejected() {
        assert!(matches!(generate_j(0), Err(BftError::InvalidArgument(_))));
        assert!(matches!(generate_j(9), Err(BftError::InvalidArgument(_))));
    }

    #[test]
    fn clifford_identities_hold_exactly() {
        for n in 1..=MAX_N {
            let report = check_clifford(&generate_j(n).unwrap());
            assert!(report.passed(), "n = {n}: {report:?}");
        }
    }

    #[test]
    fn k_matrices() {
        let sys = CliffordSystem::new(3, 1).unwrap();
        let k = sys.extract_k().unwrap();
        for (got, want) in k.iter().zip(printed_k3().iter()) {
            assert_eq!(got, want);
        }
        assert_eq!(k[0].row(0), &[0, -1, 0, 0]);
        for ki in &k {
            assert_eq!(ki.add(&ki.transpose()), IntMatrix::zeros(4));
        }
        // K_1² = -diag(1,1,0,0): rank 2, not -Id.
        let sq = k[0].mul(&k[0]);
        let expected = IntMatrix::from_rows(&[&[-1, 0, 0, 0], &[0, -1, 0, 0], &[0, 0, 0, 0], &[0, 0, 0, 0]]);
        assert_eq!(sq, expected);
        assert!(matches!(CliffordSystem::new(2, 1).unwrap().extract_k(), Err(BftError::Unsupported(_))));
    }

    #[test]
    fn omega_examples() {
        let sys = CliffordSystem::new(3, 1).unwrap();
        let e = |c: usize| {
            let mut v = vec![0.0; 8];
            v[c] = 1.0;
            v
        };
        assert_eq!(sys.omega(1, &e(Q), &e(P1)).unwrap(), -1.0);
        assert_eq!(sys.omega(1, &e(P1), &e(Q)).unwrap(), 1.0);
        assert_eq!(sys.omega(2, &e(O123), &e(O31)).unwrap(), 1.0);
        assert_eq!(sys.omega(3, &e(P2), &e(P2)).unwrap(), 0.0);
        assert!(sys.omega(4, &e(Q), &e(Q)).is_err());
        assert!(sys.omega(0, &e(Q), &e(Q)).is_err());
    }

    #[test]
    fn theta_examples() {
        let sys = CliffordSystem::new(3, 1).unwrap();
        let mut base = vec![0.0; 8];
        base[P1] = 2.0;
        let mut t = vec![0.0; 8];
        t[Q] = 1.0;
        assert_eq!(sys.theta(1, &PointTangent::new(base.clone(), t.clone()).unwrap()).unwrap(), 2.0);

        let mut base = vec![0.0; 8];
        base[O123] = 5.0;
        let mut t = vec![0.0; 8];
        t[O23] = 1.0;
        assert_eq!(sys.theta(1, &PointTangent::new(base, t).unwrap()).unwrap(), 5.0);

        let mut even_only = vec![0.0; 8];
        even_only[Q] = 0.3;
        even_only[O12] = -1.2;
        for i in 1..=3 {
            let pt = PointTangent::new(even_only.clone(), vec![1.0; 8]).unwrap();
            assert_eq!(sys.theta(i, &pt).unwrap(), 0.0);
        }
    }

    #[test]
    fn xi_reads_odd_coordinates() {
        let mut base = vec![0.0; 8];
        base[Q] = 9.0;
        base[O31] = 3.0;
        assert!(xi(&base).iter().all(|&x| x == 0.0));
        base[P1] = 1.0;
        base[P2] = 2.0;
        base[P3] = 3.0;
        base[O123] = 4.0;
        assert_eq!(xi(&base), vec![0.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 4.0]);
    }

    proptest! {
        #[test]
        fn omega_antisymmetric_and_theta_is_contraction(
            v in prop::collection::vec(-3.0f64..3.0, 16),
            w in prop::collection::vec(-3.0f64..3.0, 16),
            base in prop::collection::vec(-3.0f64..3.0, 16),
            i in 1usize..=3,
        ) {
            let sys = CliffordSystem::new(3, 2).unwrap();
            let a = sys.omega(i, &v, &w).unwrap();
            let b = sys.omega(i, &w, &v).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
            let via_xi = sys.omega(i, &xi(&base), &w).unwrap();
            let direct = sys.theta(i, &PointTangent::new(base.clone(), w.clone()).unwrap()).unwrap();
            prop_assert!((via_xi - direct).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }
}
