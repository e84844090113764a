//! Frequency grid, spectral fields, transforms, norms, and field file I/O.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! - Periodic box `[-L/2, L/2)` sampled at `x_j = -L/2 + j dx`, `dx = L/n`,
//!   `n` a power of two.
//! - Modes `k ∈ {-n/2, ..., n/2 - 1}` with frequencies `ξ_k = k dξ`,
//!   `dξ = 2π/L`. Coefficient storage is ascending in `k`.
//! - Transform pair (the box discretization of `v̂(ξ) = ∫ v e^{-ixξ} dx`):
//!   `v̂_k = dx Σ_j v_j e^{-i x_j ξ_k}` and `v_j = (1/L) Σ_k v̂_k e^{i x_j ξ_k}`.
//!   With this pairing, sums over frequencies discretize `∫ dξ/2π` as
//!   `Σ_k (1/L)`.
//! - `‖v‖_{H^s}² = Σ_k ⟨ξ_k⟩^{2s} |v̂_k|² / L`, `⟨ξ⟩ = (1+ξ²)^{1/2}`.
//! - Free propagator `S(t) = exp(it ∂xx)` acts as `v̂_k ↦ e^{-i ξ_k² t} v̂_k`.
//!
//! Pointwise products are evaluated on a zero-padded fine grid (factor 3),
//! which is alias-free for products of up to five fields on the asymmetric
//! mode range above; see [`SpectralField::to_physical_padded`].

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::fmt::Write as _;
use std::sync::Arc;

/// Zero-padding factor used for all dealiased pointwise products.
///
/// For quintic products the worst output mode from in-range inputs is
/// `5(n/2 - 1) < 3n - n/2` on the positive side and `-5n/2 > -(3n)/2 - n`
/// wrapped on the negative side, so with factor 3 no alias lands back in
/// `[-n/2, n/2)`.
pub const PAD_FACTOR: usize = 3;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], forward: bool) {
    let fft: Arc<dyn rustfft::Fft<f64>> = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(buf.len())
        } else {
            p.plan_fft_inverse(buf.len())
        }
    });
    fft.process(buf);
}

/// Uniform frequency grid on a periodic box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    n: usize,
    l: f64,
}

impl FrequencyGrid {
    /// Creates a grid with `n` modes on a box of length `l`.
    ///
    /// Panics unless `n` is a power of two with `n >= 4` and `l` is positive
    /// and finite; grid construction errors are programming errors here, not
    /// recoverable conditions.
    pub fn new(n: usize, l: f64) -> Self {
        assert!(n >= 4 && n.is_power_of_two(), "grid size must be a power of two >= 4, got {n}");
        assert!(l.is_finite() && l > 0.0, "box length must be positive and finite, got {l}");
        Self { n, l }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.l
    }

    /// Frequency spacing `dξ = 2π/L`.
    pub fn dxi(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    /// Sample spacing `dx = L/n`.
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Mode index range `-n/2 ..= n/2 - 1`, ascending.
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let h = self.n as i64 / 2;
        -h..h
    }

    /// Frequency of mode `k`.
    pub fn xi(&self, k: i64) -> f64 {
        k as f64 * self.dxi()
    }

    /// Largest mode magnitude on the positive side, `n/2 - 1`.
    pub fn max_mode(&self) -> i64 {
        self.n as i64 / 2 - 1
    }

    /// True if mode `k` is representable on this grid.
    pub fn contains_mode(&self, k: i64) -> bool {
        let h = self.n as i64 / 2;
        (-h..h).contains(&k)
    }

    /// Storage index of mode `k` (ascending layout).
    pub fn index_of(&self, k: i64) -> usize {
        debug_assert!(self.contains_mode(k));
        (k + self.n as i64 / 2) as usize
    }

    /// Physical sample points `x_j = -L/2 + j dx`.
    pub fn points_x(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        let l = self.l;
        (0..self.n).map(move |j| -l / 2.0 + j as f64 * dx)
    }
}

/// A field stored by its spectral coefficients, ascending in mode index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: FrequencyGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zero(grid: FrequencyGrid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.n()] }
    }

    /// Wraps a coefficient vector already in ascending-mode order.
    pub fn from_coeffs(grid: FrequencyGrid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.n(), "coefficient count must match the grid");
        Self { grid, coeffs }
    }

    /// Transforms physical samples (at the grid's `x_j`) into a field.
    pub fn from_physical(grid: FrequencyGrid, samples: &[Complex64]) -> Self {
        assert_eq!(samples.len(), grid.n(), "sample count must match the grid");
        let n = grid.n();
        let mut buf = samples.to_vec();
        fft_in_place(&mut buf, true);
        // v̂_k = dx (-1)^k DFT_k, unshifted DFT index k mod n.
        let dx = grid.dx();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        for k in grid.modes() {
            let kk = k.rem_euclid(n as i64) as usize;
            let sign = if k & 1 == 0 { 1.0 } else { -1.0 };
            coeffs[grid.index_of(k)] = buf[kk] * (dx * sign);
        }
        Self { grid, coeffs }
    }

    /// Builds a field by evaluating `f(x)` at the grid points.
    pub fn from_fn_physical(grid: FrequencyGrid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let samples: Vec<Complex64> = grid.points_x().map(&mut f).collect();
        Self::from_physical(grid, &samples)
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of mode `k`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        self.coeffs[self.grid.index_of(k)]
    }

    pub fn coeff_mut(&mut self, k: i64) -> &mut Complex64 {
        let i = self.grid.index_of(k);
        &mut self.coeffs[i]
    }

    /// Physical samples at the grid's `x_j`.
    pub fn to_physical(&self) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in self.grid.modes() {
            let kk = k.rem_euclid(n as i64) as usize;
            let sign = if k & 1 == 0 { 1.0 } else { -1.0 };
            buf[kk] = self.coeffs[self.grid.index_of(k)] * sign;
        }
        fft_in_place(&mut buf, false);
        let inv_l = 1.0 / self.grid.box_length();
        for c in &mut buf {
            *c *= inv_l;
        }
        buf
    }

    /// Physical samples on the `PAD_FACTOR`-times finer grid (same box, same
    /// `dξ`, modes beyond `[-n/2, n/2)` zero). Layout: `3n` samples at
    /// `x_j = -L/2 + j L/(3n)`.
    pub fn to_physical_padded(&self) -> Vec<Complex64> {
        let n = self.grid.n();
        let m = PAD_FACTOR * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for k in self.grid.modes() {
            let kk = k.rem_euclid(m as i64) as usize;
            let sign = if k & 1 == 0 { 1.0 } else { -1.0 };
            buf[kk] = self.coeffs[self.grid.index_of(k)] * sign;
        }
        fft_in_place(&mut buf, false);
        let inv_l = 1.0 / self.grid.box_length();
        for c in &mut buf {
            *c *= inv_l;
        }
        buf
    }

    /// Inverse of [`to_physical_padded`](Self::to_physical_padded):
    /// transforms `3n` fine-grid samples and truncates to the grid's modes.
    pub fn from_physical_padded(grid: FrequencyGrid, samples: &[Complex64]) -> Self {
        let n = grid.n();
        let m = PAD_FACTOR * n;
        assert_eq!(samples.len(), m, "padded sample count must be {m}");
        let mut buf = samples.to_vec();
        fft_in_place(&mut buf, true);
        let dx_fine = grid.box_length() / m as f64;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        for k in grid.modes() {
            let kk = k.rem_euclid(m as i64) as usize;
            let sign = if k & 1 == 0 { 1.0 } else { -1.0 };
            coeffs[grid.index_of(k)] = buf[kk] * (dx_fine * sign);
        }
        Self { grid, coeffs }
    }

    /// Sobolev norm `(Σ_k ⟨ξ_k⟩^{2s} |v̂_k|² / L)^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for k in self.grid.modes() {
            let xi = self.grid.xi(k);
            let w = (1.0 + xi * xi).powf(s);
            acc += w * self.coeffs[self.grid.index_of(k)].norm_sqr();
        }
        (acc / self.grid.box_length()).sqrt()
    }

    /// `L²` norm; equals `hs_norm(0)` without the weight evaluation.
    pub fn l2_norm(&self) -> f64 {
        let acc: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (acc / self.grid.box_length()).sqrt()
    }

    /// Applies the free propagator `S(t)`: `v̂_k ↦ e^{-i ξ_k² t} v̂_k`.
    pub fn free_propagate(&mut self, t: f64) {
        for k in self.grid.modes() {
            let xi = self.grid.xi(k);
            let ph = Complex64::from_polar(1.0, -xi * xi * t);
            self.coeffs[self.grid.index_of(k)] *= ph;
        }
    }

    /// Returns `S(t)` applied to this field.
    pub fn propagated(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.free_propagate(t);
        out
    }

    /// Spectral derivative `∂x`: `v̂_k ↦ i ξ_k v̂_k`.
    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        for k in self.grid.modes() {
            let xi = self.grid.xi(k);
            out.coeffs[self.grid.index_of(k)] *= Complex64::new(0.0, xi);
        }
        out
    }

    pub fn scale(&mut self, a: Complex64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// `self += a * other`. Grids must match.
    pub fn axpy(&mut self, a: Complex64, other: &Self) {
        assert_eq!(self.grid, other.grid, "grid mismatch in axpy");
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.axpy(Complex64::new(1.0, 0.0), other);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }
}

/// Errors from reading a field file.
#[derive(Debug, thiserror::Error)]
pub enum FieldFileError {
    #[error("line {0}: {1}")]
    Parse(usize, String),
    #[error("missing grid header line '# n=<n> L=<L>'")]
    MissingHeader,
    #[error("expected {expected} coefficient rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("row {0}: expected mode {1}, found {2}")]
    ModeOrder(usize, i64, i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serializes a field to the text format used by the CLI:
///
/// ```text
/// # nfr-lab spectral field
/// # n=32 L=20
/// k,re,im
/// -16,0,0
/// ...
/// ```
///
/// Floats are written with Rust's shortest round-trip formatting, so
/// `write → read` reproduces every coefficient bit-for-bit.
pub fn write_field(field: &SpectralField) -> String {
    let g = field.grid();
    let mut out = String::new();
    out.push_str("# nfr-lab spectral field\n");
    let _ = writeln!(out, "# n={} L={}", g.n(), g.box_length());
    out.push_str("k,re,im\n");
    for k in g.modes() {
        let c = field.coeff(k);
        let _ = writeln!(out, "{},{},{}", k, c.re, c.im);
    }
    out
}

/// Parses the format written by [`write_field`].
pub fn read_field(text: &str) -> Result<SpectralField, FieldFileError> {
    let mut n: Option<usize> = None;
    let mut l: Option<f64> = None;
    let mut rows: Vec<(i64, Complex64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("n=") {
                    n = Some(v.parse().map_err(|e| {
                        FieldFileError::Parse(lineno + 1, format!("bad n: {e}"))
                    })?);
                } else if let Some(v) = tok.strip_prefix("L=") {
                    l = Some(v.parse().map_err(|e| {
                        FieldFileError::Parse(lineno + 1, format!("bad L: {e}"))
                    })?);
                }
            }
            continue;
        }
        if line == "k,re,im" {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| {
            parts
                .next()
                .ok_or_else(|| FieldFileError::Parse(lineno + 1, format!("missing {what}")))
        };
        let k: i64 = next("k")?
            .trim()
            .parse()
            .map_err(|e| FieldFileError::Parse(lineno + 1, format!("bad k: {e}")))?;
        let re: f64 = next("re")?
            .trim()
            .parse()
            .map_err(|e| FieldFileError::Parse(lineno + 1, format!("bad re: {e}")))?;
        let im: f64 = next("im")?
            .trim()
            .parse()
            .map_err(|e| FieldFileError::Parse(lineno + 1, format!("bad im: {e}")))?;
        rows.push((k, Complex64::new(re, im)));
    }
    let (n, l) = match (n, l) {
        (Some(n), Some(l)) => (n, l),
        _ => return Err(FieldFileError::MissingHeader),
    };
    if rows.len() != n {
        return Err(FieldFileError::RowCount { expected: n, found: rows.len() });
    }
    let grid = FrequencyGrid::new(n, l);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for (i, (k, c)) in rows.iter().enumerate() {
        let expect = i as i64 - n as i64 / 2;
        if *k != expect {
            return Err(FieldFileError::ModeOrder(i, expect, *k));
        }
        coeffs[i] = *c;
    }
    Ok(SpectralField::from_coeffs(grid, coeffs))
}

pub fn write_field_to(path: &std::path::Path, field: &SpectralField) -> Result<(), FieldFileError> {
    std::fs::write(path, write_field(field))?;
    Ok(())
}

pub fn read_field_from(path: &std::path::Path) -> Result<SpectralField, FieldFileError> {
    let text = std::fs::read_to_string(path)?;
    read_field(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_field_is_pure_zero_mode() {
        let grid = FrequencyGrid::new(32, 10.0);
        let v = SpectralField::from_fn_physical(grid, |_| c(2.5, -1.0));
        for k in grid.modes() {
            let want = if k == 0 { c(2.5, -1.0) * grid.box_length() } else { c(0.0, 0.0) };
            let got = v.coeff(k);
            assert!((got - want).norm() < 1e-12, "mode {k}: {got} vs {want}");
        }
    }

    #[test]
    fn single_exponential_hits_one_mode_with_weight_l() {
        let grid = FrequencyGrid::new(64, 2.0 * PI);
        let xi5 = grid.xi(5);
        let v = SpectralField::from_fn_physical(grid, |x| Complex64::from_polar(1.0, xi5 * x));
        for k in grid.modes() {
            let want = if k == 5 { grid.box_length() } else { 0.0 };
            assert!(
                (v.coeff(k) - c(want, 0.0)).norm() < 1e-12,
                "mode {k} off: {}",
                v.coeff(k)
            );
        }
    }

    #[test]
    fn physical_spectral_roundtrip_is_tight() {
        let grid = FrequencyGrid::new(128, 17.0);
        let samples: Vec<Complex64> = (0..128)
            .map(|j| c((j as f64 * 0.37).sin(), (j as f64 * 0.11).cos()))
            .collect();
        let v = SpectralField::from_physical(grid, &samples);
        let back = v.to_physical();
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_transform_matches_closed_form() {
        // exp(-x^2/2) has transform sqrt(2π) exp(-ξ^2/2) under v̂ = ∫ v e^{-ixξ}.
        let grid = FrequencyGrid::new(256, 16.0 * PI);
        let v = SpectralField::from_fn_physical(grid, |x| c((-x * x / 2.0).exp(), 0.0));
        let amp = (2.0 * PI).sqrt();
        for k in grid.modes() {
            let xi = grid.xi(k);
            let want = amp * (-xi * xi / 2.0).exp();
            assert!(
                (v.coeff(k) - c(want, 0.0)).norm() < 1e-12,
                "ξ={xi}: {} vs {want}",
                v.coeff(k)
            );
        }
    }

    #[test]
    fn plancherel_ties_physical_and_spectral_l2() {
        let grid = FrequencyGrid::new(64, 11.0);
        let samples: Vec<Complex64> =
            (0..64).map(|j| c((0.3 * j as f64).sin(), (0.7 * j as f64).sin())).collect();
        let v = SpectralField::from_physical(grid, &samples);
        let phys_l2 = (samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx()).sqrt();
        assert!((v.l2_norm() - phys_l2).abs() < 1e-12 * phys_l2.max(1.0));
    }

    #[test]
    fn hs_norm_of_sharp_indicator_matches_frozen_sum() {
        // Unit coefficients on |ξ| <= 1, dξ = 1/64. Frozen with 30-digit
        // arithmetic: sqrt(Σ_{|k|<=64} (1+(k/64)^2)^0.6 / (64 · 2π)).
        let grid = FrequencyGrid::new(8192, 128.0 * PI);
        let mut v = SpectralField::zero(grid);
        for k in -64i64..=64 {
            *v.coeff_mut(k) = c(1.0, 0.0);
        }
        let want = 0.6163429619331356;
        assert!((v.hs_norm(0.6) - want).abs() < 1e-13, "{} vs {want}", v.hs_norm(0.6));
    }

    #[test]
    fn hs_norm_of_sampled_gaussian_matches_frozen_value() {
        // 0.1 exp(-x^2/4) on the solver grid; profile decays below 1e-11 at
        // the mode boundary so sampling equals the closed form to 1e-10.
        let grid = FrequencyGrid::new(32, 20.0);
        let v = SpectralField::from_fn_physical(grid, |x| c(0.1 * (-x * x / 4.0).exp(), 0.0));
        let want_h = 0.16864072511988177;
        let want_l2 = 0.15832334870861595;
        assert!((v.hs_norm(0.6) - want_h).abs() < 1e-10, "{}", v.hs_norm(0.6));
        assert!((v.l2_norm() - want_l2).abs() < 1e-10, "{}", v.l2_norm());
    }

    #[test]
    fn free_propagator_is_unitary_and_reversible() {
        let grid = FrequencyGrid::new(64, 9.0);
        let samples: Vec<Complex64> =
            (0..64).map(|j| c((0.9 * j as f64).cos(), (1.3 * j as f64).sin())).collect();
        let v = SpectralField::from_physical(grid, &samples);
        let mut w = v.clone();
        w.free_propagate(0.7);
        assert!((w.hs_norm(0.83) - v.hs_norm(0.83)).abs() < 1e-12);
        w.free_propagate(-0.7);
        for k in grid.modes() {
            assert!((w.coeff(k) - v.coeff(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn propagator_solves_the_free_equation_on_one_mode() {
        // On mode k, i ∂t v + ∂xx v = 0 forces v̂(t) = e^{-i ξ² t} v̂(0).
        let grid = FrequencyGrid::new(16, 2.0 * PI);
        let mut v = SpectralField::zero(grid);
        *v.coeff_mut(3) = c(1.0, 0.0);
        let t = 0.21;
        let w = v.propagated(t);
        let xi = grid.xi(3);
        let want = Complex64::from_polar(1.0, -xi * xi * t);
        assert!((w.coeff(3) - want).norm() < 1e-15);
    }

    #[test]
    fn padded_roundtrip_preserves_in_range_modes() {
        let grid = FrequencyGrid::new(32, 5.0);
        let samples: Vec<Complex64> =
            (0..32).map(|j| c((0.5 * j as f64).sin(), (0.2 * j as f64).cos())).collect();
        let v = SpectralField::from_physical(grid, &samples);
        let fine = v.to_physical_padded();
        assert_eq!(fine.len(), PAD_FACTOR * 32);
        let back = SpectralField::from_physical_padded(grid, &fine);
        for k in grid.modes() {
            assert!((back.coeff(k) - v.coeff(k)).norm() < 1e-12, "mode {k}");
        }
    }

    #[test]
    fn padded_product_of_two_modes_lands_on_their_sum() {
        // e^{i ξ_a x} · e^{i ξ_b x} = e^{i ξ_{a+b} x}; with padding the
        // product is exact even when a+b is outside the coarse range (then it
        // truncates to zero rather than aliasing back in).
        let grid = FrequencyGrid::new(16, 2.0 * PI);
        let mut u = SpectralField::zero(grid);
        let mut w = SpectralField::zero(grid);
        *u.coeff_mut(5) = c(1.0, 0.0);
        *w.coeff_mut(-2) = c(1.0, 0.0);
        let pu = u.to_physical_padded();
        let pw = w.to_physical_padded();
        let prod: Vec<Complex64> = pu.iter().zip(&pw).map(|(a, b)| a * b).collect();
        let got = SpectralField::from_physical_padded(grid, &prod);
        for k in grid.modes() {
            // Unit coefficients give u = e^{iξ_5 x}/L, so the product is
            // e^{iξ_3 x}/L² and its coefficient at mode 3 is 1/L.
            let want = if k == 3 { 1.0 / grid.box_length() } else { 0.0 };
            assert!((got.coeff(k) - c(want, 0.0)).norm() < 1e-9, "mode {k}: {}", got.coeff(k));
        }
        // Push the product out of range: 5 + 5 = 10 > 7 must truncate, not alias.
        let prod2: Vec<Complex64> = pu.iter().zip(&pu).map(|(a, b)| a * b).collect();
        let got2 = SpectralField::from_physical_padded(grid, &prod2);
        for k in grid.modes() {
            assert!(got2.coeff(k).norm() < 1e-10, "aliased energy at mode {k}");
        }
    }

    #[test]
    fn field_file_roundtrip_is_bit_exact() {
        let grid = FrequencyGrid::new(32, 6.911503837897545);
        let samples: Vec<Complex64> = (0..32)
            .map(|j| c((1.1 * j as f64).sin() * 0.031, (2.3 * j as f64).cos() * 7.0))
            .collect();
        let v = SpectralField::from_physical(grid, &samples);
        let text = write_field(&v);
        let back = read_field(&text).expect("roundtrip parse");
        assert_eq!(back.grid(), v.grid());
        for k in grid.modes() {
            assert_eq!(back.coeff(k), v.coeff(k), "mode {k} not bit-exact");
        }
    }

    #[test]
    fn field_file_reader_rejects_malformed_input() {
        assert!(matches!(read_field("k,re,im\n0,1,2\n"), Err(FieldFileError::MissingHeader)));
        let short = "# n=8 L=1\nk,re,im\n-4,0,0\n";
        assert!(matches!(read_field(short), Err(FieldFileError::RowCount { .. })));
        let bad = "# n=4 L=1\nk,re,im\n-2,0,0\n0,0,0\n-1,0,0\n1,0,0\n";
        assert!(matches!(read_field(bad), Err(FieldFileError::ModeOrder(..))));
    }

    #[test]
    fn derivative_multiplies_by_i_xi() {
        let grid = FrequencyGrid::new(16, 4.0);
        let mut v = SpectralField::zero(grid);
        *v.coeff_mut(3) = c(2.0, 1.0);
        let d = v.derivative();
        let want = c(2.0, 1.0) * Complex64::new(0.0, grid.xi(3));
        assert!((d.coeff(3) - want).norm() < 1e-15);
    }
}
