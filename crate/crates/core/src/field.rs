//! Discretized periodic maps `Z: T³ → B` and their Fourier representation.
//!
//! Values are stored component-major as `(α, channel, t1, t2, t3)` with `t3`
//! fastest. Even coordinates are kept as single-valued real lifts of torus
//! values (unit period), which is exactly the null-homotopic class.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::algebra::{CHANNELS, CHANNEL_NAMES, EVEN, ODD, O_IJ, Q};
use crate::error::{BftError, Result};

/// Uniform grid on the unit 3-torus; every size must be positive and even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: [usize; 3],
}

impl Grid {
    pub fn new(n: [usize; 3]) -> Result<Self> {
        if n.iter().any(|&k| k == 0 || k % 2 == 1) {
            return Err(BftError::InvalidArgument(format!(
                "grid sizes must be positive and even, got {n:?}"
            )));
        }
        Ok(Self { n })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 3])
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.n
    }

    pub fn points(&self) -> usize {
        self.n.iter().product()
    }

    /// Coordinates of grid point `idx` in `[0,1)³`.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let [_, n2, n3] = self.n;
        let i3 = idx % n3;
        let i2 = (idx / n3) % n2;
        let i1 = idx / (n2 * n3);
        [
            i1 as f64 / self.n[0] as f64,
            i2 as f64 / self.n[1] as f64,
            i3 as f64 / self.n[2] as f64,
        ]
    }

    /// Integer wavenumber of FFT index `i` along `axis`, in `[-N/2, N/2)`.
    pub fn wavenumber(&self, axis: usize, i: usize) -> i64 {
        let n = self.n[axis];
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Angular wavenumber `2πk` used for differentiation; Nyquist is zeroed.
    pub fn deriv_wavenumber(&self, axis: usize, i: usize) -> f64 {
        if i == self.n[axis] / 2 {
            0.0
        } else {
            2.0 * PI * self.wavenumber(axis, i) as f64
        }
    }

    /// Spectral index triple of flat index `idx`.
    pub fn split(&self, idx: usize) -> [usize; 3] {
        let [_, n2, n3] = self.n;
        [idx / (n2 * n3), (idx / n3) % n2, idx % n3]
    }

    /// Differentiation wavevector `(κ1, κ2, κ3)` of flat spectral index `idx`.
    pub fn kappa(&self, idx: usize) -> [f64; 3] {
        let s = self.split(idx);
        [
            self.deriv_wavenumber(0, s[0]),
            self.deriv_wavenumber(1, s[1]),
            self.deriv_wavenumber(2, s[2]),
        ]
    }

    /// Integer wavevector of flat spectral index `idx`.
    pub fn k(&self, idx: usize) -> [i64; 3] {
        let s = self.split(idx);
        [self.wavenumber(0, s[0]), self.wavenumber(1, s[1]), self.wavenumber(2, s[2])]
    }

    /// Flat spectral index of an integer wavevector (must satisfy `|k_j| ≤ N_j/2`).
    pub fn index_of(&self, k: [i64; 3]) -> usize {
        let wrap = |kk: i64, n: usize| kk.rem_euclid(n as i64) as usize;
        let [_, n2, n3] = self.n;
        (wrap(k[0], self.n[0]) * n2 + wrap(k[1], n2)) * n3 + wrap(k[2], n3)
    }
}

/// Per-axis FFT plans for one grid.
pub(crate) struct Fft3 {
    n: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.sizes();
        Self {
            n,
            forward: [0, 1, 2].map(|a| planner.plan_fft_forward(n[a])),
            inverse: [0, 1, 2].map(|a| planner.plan_fft_inverse(n[a])),
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let [n1, n2, n3] = self.n;
        plans[2].process(buf);
        let mut line = vec![Complex64::new(0.0, 0.0); n1.max(n2)];
        for i1 in 0..n1 {
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    line[i2] = buf[(i1 * n2 + i2) * n3 + i3];
                }
                plans[1].process(&mut line[..n2]);
                for i2 in 0..n2 {
                    buf[(i1 * n2 + i2) * n3 + i3] = line[i2];
                }
            }
        }
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                for i1 in 0..n1 {
                    line[i1] = buf[(i1 * n2 + i2) * n3 + i3];
                }
                plans[0].process(&mut line[..n1]);
                for i1 in 0..n1 {
                    buf[(i1 * n2 + i2) * n3 + i3] = line[i1];
                }
            }
        }
    }
}

pub(crate) fn plans(grid: Grid) -> Arc<Fft3> {
    static CACHE: OnceLock<Mutex<HashMap<Grid, Arc<Fft3>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft cache poisoned");
    guard.entry(grid).or_insert_with(|| Arc::new(Fft3::new(grid))).clone()
}

/// Forward transform of a stack of real channels; coefficients are normalized
/// so that the `k = 0` entry is the spatial mean.
pub(crate) fn forward_channels(grid: Grid, values: &[f64]) -> Vec<Complex64> {
    let np = grid.points();
    let fft = plans(grid);
    let scale = 1.0 / np as f64;
    let mut out: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    out.par_chunks_mut(np).for_each(|ch| {
        fft.run(ch, false);
        for c in ch.iter_mut() {
            *c *= scale;
        }
    });
    out
}

/// Inverse of [`forward_channels`], keeping the real part.
pub(crate) fn inverse_channels(grid: Grid, coeffs: Vec<Complex64>) -> Vec<f64> {
    let np = grid.points();
    let fft = plans(grid);
    let mut buf = coeffs;
    buf.par_chunks_mut(np).for_each(|ch| fft.run(ch, true));
    buf.into_iter().map(|c| c.re).collect()
}

/// A discretized map `T³ → B` (block = 8) or, for the degenerate formalism,
/// a `(q, p)`-valued map (block = 4).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    d: usize,
    block: usize,
    grid: Grid,
    values: Vec<f64>,
}

impl FieldState {
    pub fn zeros(d: usize, grid: Grid) -> Self {
        Self::zeros_with_block(d, CHANNELS, grid)
    }

    pub fn zeros_with_block(d: usize, block: usize, grid: Grid) -> Self {
        Self { d, block, grid, values: vec![0.0; d * block * grid.points()] }
    }

    pub fn from_values(d: usize, grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::from_values_with_block(d, CHANNELS, grid, values)
    }

    pub fn from_values_with_block(d: usize, block: usize, grid: Grid, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(BftError::InvalidArgument("d must be positive".into()));
        }
        if values.len() != d * block * grid.points() {
            return Err(BftError::ShapeMismatch(format!(
                "expected {} values, got {}",
                d * block * grid.points(),
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(BftError::InvalidArgument("field contains non-finite entries".into()));
        }
        Ok(Self { d, block, grid, values })
    }

    /// Field whose value at every grid point is `f(t)`, a vector of `block·d` reals.
    pub fn from_fn(d: usize, grid: Grid, f: impl Fn([f64; 3]) -> Vec<f64>) -> Self {
        let mut z = Self::zeros(d, grid);
        let np = grid.points();
        for idx in 0..np {
            let v = f(grid.coords(idx));
            assert_eq!(v.len(), z.channels(), "point function has wrong length");
            for (ch, x) in v.into_iter().enumerate() {
                z.values[ch * np + idx] = x;
            }
        }
        z
    }

    /// Constant field equal to `point` (length `8d`) everywhere.
    pub fn constant(d: usize, grid: Grid, point: &[f64]) -> Self {
        let owned = point.to_vec();
        Self::from_fn(d, grid, move |_| owned.clone())
    }

    /// Random real field built from Fourier modes with `|k_j| ≤ kmax` (strictly
    /// below Nyquist), scaled so that its sup norm equals `amplitude`.
    pub fn random_band_limited<R: Rng + ?Sized>(
        d: usize,
        grid: Grid,
        kmax: usize,
        amplitude: f64,
        rng: &mut R,
    ) -> Self {
        let kmax = grid.sizes().iter().map(|&n| n / 2 - 1).fold(kmax, usize::min) as i64;
        let np = grid.points();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); d * CHANNELS * np];
        for ch in coeffs.chunks_mut(np) {
            for k1 in -kmax..=kmax {
                for k2 in -kmax..=kmax {
                    for k3 in -kmax..=kmax {
                        // one representative of each ±k pair
                        if (k1, k2, k3) < (0, 0, 0) {
                            continue;
                        }
                        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        let c = if (k1, k2, k3) == (0, 0, 0) { Complex64::new(c.re, 0.0) } else { c };
                        ch[grid.index_of([k1, k2, k3])] = c;
                        ch[grid.index_of([-k1, -k2, -k3])] = c.conj();
                    }
                }
            }
        }
        let mut values = inverse_channels(grid, coeffs);
        let sup = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if sup > 0.0 {
            values.iter_mut().for_each(|x| *x *= amplitude / sup);
        }
        Self { d, block: CHANNELS, grid, values }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.d * self.block
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Samples of channel `c` of block `alpha`.
    pub fn channel(&self, alpha: usize, c: usize) -> &[f64] {
        let np = self.grid.points();
        let ch = alpha * self.block + c;
        &self.values[ch * np..(ch + 1) * np]
    }

    pub fn channel_mut(&mut self, alpha: usize, c: usize) -> &mut [f64] {
        let np = self.grid.points();
        let ch = alpha * self.block + c;
        &mut self.values[ch * np..(ch + 1) * np]
    }

    /// Fiber vector at grid point `idx` (length `block·d`).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let np = self.grid.points();
        (0..self.channels()).map(|ch| self.values[ch * np + idx]).collect()
    }

    pub fn set_point(&mut self, idx: usize, v: &[f64]) {
        let np = self.grid.points();
        for (ch, &x) in v.iter().enumerate() {
            self.values[ch * np + idx] = x;
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.d != other.d || self.block != other.block || self.grid != other.grid {
            return Err(BftError::ShapeMismatch(format!(
                "fields differ in shape: (d={}, block={}, {:?}) vs (d={}, block={}, {:?})",
                self.d,
                self.block,
                self.grid.sizes(),
                other.d,
                other.block,
                other.grid.sizes()
            )));
        }
        Ok(())
    }

    pub(crate) fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { d: self.d, block: self.block, grid: self.grid, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.like(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.like(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.like(self.values.iter().map(|a| a * s).collect())
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.like(self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect())
    }

    /// `L²` inner product over the unit-volume torus.
    pub fn inner(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / self.grid.points() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `L²` norm of a single channel.
    pub fn channel_l2(&self, alpha: usize, c: usize) -> f64 {
        let ch = self.channel(alpha, c);
        (ch.iter().map(|x| x * x).sum::<f64>() / ch.len() as f64).sqrt()
    }

    pub fn channel_mean(&self, alpha: usize, c: usize) -> f64 {
        let ch = self.channel(alpha, c);
        ch.iter().sum::<f64>() / ch.len() as f64
    }

    pub fn channel_variance(&self, alpha: usize, c: usize) -> f64 {
        let mean = self.channel_mean(alpha, c);
        let ch = self.channel(alpha, c);
        ch.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ch.len() as f64
    }

    /// Largest pointwise `|Z^odd|`.
    pub fn sup_odd(&self) -> f64 {
        let np = self.grid.points();
        (0..np)
            .map(|idx| {
                (0..self.d)
                    .flat_map(|a| ODD.iter().map(move |&c| (a, c)))
                    .map(|(a, c)| self.channel(a, c)[idx].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn require_full(&self) -> Result<()> {
        if self.block != CHANNELS {
            return Err(BftError::Unsupported("operation needs the full 8-channel fiber".into()));
        }
        Ok(())
    }

    /// Splits into `(even, odd)` parts, each full-shaped with the complementary
    /// channels zero; `even + odd` reproduces `self`.
    pub fn even_odd_split(&self) -> Result<(Self, Self)> {
        self.require_full()?;
        let mut even = self.clone();
        let mut odd = self.clone();
        for a in 0..self.d {
            for &c in &ODD {
                even.channel_mut(a, c).fill(0.0);
            }
            for &c in &EVEN {
                odd.channel_mut(a, c).fill(0.0);
            }
        }
        Ok((even, odd))
    }

    /// Shifts each even channel by an integer so its mean lies in `[−¼, ¾)`,
    /// which keeps both `0` and `½` away from the wrap point.
    pub fn canonicalize(&mut self) {
        if self.block != CHANNELS {
            return;
        }
        for a in 0..self.d {
            for &c in &EVEN {
                let shift = (self.channel_mean(a, c) + 0.25).floor();
                if shift != 0.0 {
                    self.channel_mut(a, c).iter_mut().for_each(|x| *x -= shift);
                }
            }
        }
    }

    pub fn to_spectral(&self) -> SpectralField {
        SpectralField {
            d: self.d,
            block: self.block,
            grid: self.grid,
            coeffs: forward_channels(self.grid, &self.values),
        }
    }

    pub fn from_spectral(s: &SpectralField) -> Self {
        Self { d: s.d, block: s.block, grid: s.grid, values: inverse_channels(s.grid, s.coeffs.clone()) }
    }

    /// Writes the `BFT1` snapshot: ASCII header then little-endian `f64`s.
    pub fn write_bft1<W: Write>(&self, mut w: W) -> Result<()> {
        self.require_full()?;
        let [n1, n2, n3] = self.grid.sizes();
        write!(w, "BFT1 {} {} {} {}\n", self.d, n1, n2, n3)?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for x in &self.values {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_bft1<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.trim_end_matches('\n').split(' ').collect();
        if parts.len() != 5 || parts[0] != "BFT1" {
            return Err(BftError::Format(format!("bad header {header:?}")));
        }
        let nums: Vec<usize> = parts[1..]
            .iter()
            .map(|p| p.parse::<usize>().map_err(|e| BftError::Format(format!("bad header field {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        let grid = Grid::new([nums[1], nums[2], nums[3]])?;
        let count = CHANNELS * nums[0] * grid.points();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(BftError::Format(format!("expected {} payload bytes, got {}", count * 8, bytes.len())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_values(nums[0], grid, values)
    }

    /// CSV of one channel: header `t1,t2,t3,<name>` then one row per point.
    pub fn write_channel_csv<W: Write>(&self, mut w: W, alpha: usize, c: usize) -> Result<()> {
        let name = if self.block == CHANNELS { CHANNEL_NAMES[c].to_string() } else { format!("u{c}") };
        writeln!(w, "t1,t2,t3,{name}_{}", alpha + 1)?;
        for (idx, x) in self.channel(alpha, c).iter().enumerate() {
            let t = self.grid.coords(idx);
            writeln!(w, "{},{},{},{}", fmt17(t[0]), fmt17(t[1]), fmt17(t[2]), fmt17(*x))?;
        }
        Ok(())
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Fourier coefficients of a [`FieldState`], normalized so `k = 0` is the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    d: usize,
    block: usize,
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of channel `c` in block `alpha` at wavevector `k`.
    pub fn coefficient(&self, alpha: usize, c: usize, k: [i64; 3]) -> Complex64 {
        let np = self.grid.points();
        self.coeffs[(alpha * self.block + c) * np + self.grid.index_of(k)]
    }

    /// Largest violation of `ĉ(−k) = conj(ĉ(k))` (indices taken mod `N`).
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let np = self.grid.points();
        let mut worst = 0.0f64;
        for ch in self.coeffs.chunks(np) {
            for idx in 0..np {
                let k = self.grid.k(idx);
                let neg = self.grid.index_of([-k[0], -k[1], -k[2]]);
                worst = worst.max((ch[idx] - ch[neg].conj()).norm());
            }
        }
        worst
    }

    /// `Σ_k |ĉ_k|²`, equal to the `L²` norm squared of the field.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `L²` distance between the `T^{3d}`-families of two fields: `q` compared
/// modulo integer shifts, `o_ij` modulo constants, `p` and `o123` directly.
pub fn family_distance(a: &FieldState, b: &FieldState) -> Result<f64> {
    a.same_shape(b)?;
    a.require_full()?;
    let np = a.grid.points() as f64;
    let mut total = 0.0;
    for alpha in 0..a.d {
        for c in 0..CHANNELS {
            let x = a.channel(alpha, c);
            let y = b.channel(alpha, c);
            let diff_mean = x.iter().zip(y).map(|(u, v)| u - v).sum::<f64>() / np;
            let shift = if c == Q {
                diff_mean.round()
            } else if O_IJ.contains(&c) {
                diff_mean
            } else {
                0.0
            };
            total += x.iter().zip(y).map(|(u, v)| (u - v - shift).powi(2)).sum::<f64>() / np;
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{O23, P1};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn odd_grid_rejected() {
        assert!(Grid::new([8, 7, 8]).is_err());
        assert!(Grid::new([0, 8, 8]).is_err());
    }

    #[test]
    fn constant_field_has_only_mean_mode() {
        let grid = Grid::cube(8).unwrap();
        let mut pt = vec![0.0; 8];
        pt[Q] = 0.7;
        let s = FieldState::constant(1, grid, &pt).to_spectral();
        let np = grid.points();
        for (idx, c) in s.coeffs()[..np].iter().enumerate() {
            if idx == 0 {
                assert!((c.re - 0.7).abs() < 1e-15 && c.im.abs() < 1e-15);
            } else {
                assert!(c.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_tone_coefficients() {
        let grid = Grid::cube(8).unwrap();
        let z = FieldState::from_fn(1, grid, |t| {
            let mut v = vec![0.0; 8];
            v[Q] = (2.0 * PI * t[0]).sin();
            v
        });
        let s = z.to_spectral();
        let plus = s.coefficient(0, Q, [1, 0, 0]);
        let minus = s.coefficient(0, Q, [-1, 0, 0]);
        assert!((plus - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((minus - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn round_trip_16_cubed() {
        let grid = Grid::cube(16).unwrap();
        let z = FieldState::random_band_limited(1, grid, 5, 1.0, &mut rng(3));
        let s = z.to_spectral();
        assert!(s.conjugate_symmetry_defect() < 1e-14);
        assert!((s.energy() - z.inner(&z)).abs() < 1e-12 * z.inner(&z));
        let back = FieldState::from_spectral(&s);
        let err = back.values().iter().zip(z.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn even_odd_split_examples() {
        let grid = Grid::cube(4).unwrap();
        let mut pt = vec![0.0; 8];
        pt[Q] = 2.0;
        let (even, odd) = FieldState::constant(1, grid, &pt).even_odd_split().unwrap();
        assert!(odd.values().iter().all(|&x| x == 0.0));
        assert_eq!(even.channel(0, Q)[5], 2.0);

        let mut pt = vec![0.0; 8];
        pt[P1] = 1.0;
        let (_, odd) = FieldState::constant(1, grid, &pt).even_odd_split().unwrap();
        assert!((odd.l2_norm() - 1.0).abs() < 1e-15);

        let z = FieldState::random_band_limited(2, grid, 1, 1.0, &mut rng(1));
        let (even, odd) = z.even_odd_split().unwrap();
        assert_eq!(even.add(&odd), z);
        for idx in 0..grid.points() {
            let n2 = |f: &FieldState| f.point(idx).iter().map(|x| x * x).sum::<f64>();
            assert!((n2(&z) - n2(&even) - n2(&odd)).abs() < 1e-14);
        }
    }

    #[test]
    fn family_distance_examples() {
        let grid = Grid::cube(4).unwrap();
        let z = FieldState::random_band_limited(1, grid, 1, 0.5, &mut rng(7));
        let mut shifted = z.clone();
        shifted.channel_mut(0, O23).iter_mut().for_each(|x| *x += 0.37);
        assert!(family_distance(&z, &shifted).unwrap() < 1e-14);

        let mut wrapped = z.clone();
        wrapped.channel_mut(0, Q).iter_mut().for_each(|x| *x += 1.0);
        assert!(family_distance(&z, &wrapped).unwrap() < 1e-14);

        let a = FieldState::zeros(1, grid);
        let mut pt = vec![0.0; 8];
        pt[Q] = 0.5;
        let b = FieldState::constant(1, grid, &pt);
        assert!((family_distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);

        let other = FieldState::zeros(1, Grid::cube(6).unwrap());
        assert!(matches!(family_distance(&a, &other), Err(BftError::ShapeMismatch(_))));
    }

    #[test]
    fn canonicalize_keeps_derivatives() {
        let grid = Grid::cube(4).unwrap();
        let mut z = FieldState::random_band_limited(1, grid, 1, 0.3, &mut rng(11));
        z.channel_mut(0, Q).iter_mut().for_each(|x| *x += 3.25);
        z.channel_mut(0, O23).iter_mut().for_each(|x| *x -= 1.5);
        let before = z.clone();
        z.canonicalize();
        for a in [Q, O23] {
            let m = z.channel_mean(0, a);
            assert!((-0.25..0.75).contains(&m));
            let fd = |f: &FieldState| -> Vec<f64> {
                let ch = f.channel(0, a);
                ch.windows(2).map(|w| w[1] - w[0]).collect()
            };
            for (x, y) in fd(&z).iter().zip(fd(&before)) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bft1_round_trip_and_header() {
        let grid = Grid::new([4, 2, 6]).unwrap();
        let z = FieldState::random_band_limited(2, grid, 1, 1.0, &mut rng(5));
        let mut buf = Vec::new();
        z.write_bft1(&mut buf).unwrap();
        assert!(buf.starts_with(b"BFT1 2 4 2 6\n"));
        assert_eq!(buf.len(), "BFT1 2 4 2 6\n".len() + 8 * 16 * 48);
        let back = FieldState::read_bft1(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, z);
        assert!(FieldState::read_bft1(std::io::Cursor::new(b"BFT2 1 2 2 2\n".to_vec())).is_err());
        assert!(FieldState::read_bft1(std::io::Cursor::new(b"BFT1 1 2 2 2\n\x00".to_vec())).is_err());
    }

    #[test]
    fn channel_csv_has_header() {
        let grid = Grid::cube(2).unwrap();
        let z = FieldState::zeros(1, grid);
        let mut buf = Vec::new();
        z.write_channel_csv(&mut buf, 0, Q).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t1,t2,t3,q_1");
        assert_eq!(lines.len(), 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn family_distance_is_pseudometric(seed in 0u64..10_000) {
            let grid = Grid::cube(4).unwrap();
            let mut r = rng(seed);
            let mut f = || {
                let mut z = FieldState::random_band_limited(1, grid, 1, 0.8, &mut r);
                let shift = (seed % 5) as f64 - 2.0;
                z.channel_mut(0, Q).iter_mut().for_each(|x| *x += shift);
                z
            };
            let (a, b, c) = (f(), f(), f());
            let ab = family_distance(&a, &b).unwrap();
            let ba = family_distance(&b, &a).unwrap();
            let bc = family_distance(&b, &c).unwrap();
            let ac = family_distance(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-10);
            prop_assert!(family_distance(&a, &a).unwrap() < 1e-14);
        }

        #[test]
        fn spectral_round_trip(seed in 0u64..10_000) {
            let grid = Grid::new([4, 6, 8]).unwrap();
            let z = FieldState::random_band_limited(1, grid, 2, 1.0, &mut rng(seed));
            let back = FieldState::from_spectral(&z.to_spectral());
            for (a, b) in back.values().iter().zip(z.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
