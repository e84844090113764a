//! Gauge transformation between the raw field `u` and the gauged field `w`.
//!
//! `w(x) = exp(-i G(x)) u(x)` with `G(x) = ∫_{x0}^{x} |u(y)|² dy`, removing
//! the worst derivative cubic from the flow of `u`. On the periodized box the
//! lower limit is the left endpoint `x0 = -L/2`; fields are expected to decay
//! below ~1e-10 there so the box primitive approximates `∫_{-∞}^x`. The
//! primitive is the trapezoidal rule on the grid points with `G(x0) = 0`;
//! a spectral antiderivative is not available because the cumulative phase is
//! not periodic.
//!
//! Because the transform is a pointwise unit phase, `|w(x_j)| = |u(x_j)|`
//! exactly, and the inverse can recompute the same primitive from `|w|²`.

use crate::grid::SpectralField;
use num_complex::Complex64;

/// Trapezoidal primitive of `|samples|²` from the left endpoint, `g[0] = 0`.
fn cumulative_mass(samples: &[Complex64], dx: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    g.push(0.0);
    for j in 1..samples.len() {
        acc += 0.5 * dx * (samples[j - 1].norm_sqr() + samples[j].norm_sqr());
        g.push(acc);
    }
    g
}

fn apply_phase(field: &SpectralField, sign: f64) -> SpectralField {
    let grid = field.grid();
    let samples = field.to_physical();
    let g = cumulative_mass(&samples, grid.dx());
    let out: Vec<Complex64> = samples
        .iter()
        .zip(&g)
        .map(|(u, gj)| u * Complex64::from_polar(1.0, sign * gj))
        .collect();
    SpectralField::from_physical(grid, &out)
}

/// `u ↦ w = exp(-i ∫_{x0}^x |u|²) u`.
pub fn gauge_forward(u: &SpectralField) -> SpectralField {
    apply_phase(u, -1.0)
}

/// `w ↦ u = exp(+i ∫_{x0}^x |w|²) w`; inverse of [`gauge_forward`] because
/// the transform preserves the modulus the primitive is built from.
pub fn gauge_inverse(w: &SpectralField) -> SpectralField {
    apply_phase(w, 1.0)
}
