//! Trilinear frequency-domain maps: the oscillatory derivative kernel and
//! its bounded/weak companions.
//!
//! All three share the convolution geometry `ξ = ξ1 - ξ2 + ξ3` with the
//! middle slot conjugated and the modulation
//!
//! ```text
//! Φ(ξ̄) = ξ² - ξ1² + ξ2² - ξ3² = 2(ξ2-ξ1)(ξ2-ξ3)
//! ```
//!
//! (the factored form is canonical; on integer-spaced grids it is exact).
//! The output coefficient at ξ is
//!
//! ```text
//! out(ξ) = Σ_{ξ1,ξ2} m(ξ̄) v̂1(ξ1) conj(v̂2(ξ2)) v̂3(ξ3) · (1/L²),
//! ```
//!
//! `ξ3 = ξ - ξ1 + ξ2` dropped when it falls off the grid (truncation, not
//! wraparound: aliasing would inject spurious resonances into Φ). The factor
//! `1/L²` discretizes the two `dξ/2π` integrals. Multipliers:
//!
//! - raw: `e^{iΦt} ξ2` (the derivative cubic in interaction variables)
//! - weighted: `|ξ2| / ⟨Φ⟩^{1/2}` (modulation-smoothed, time-independent)
//! - weak: `1_{|Φ|>M} |ξ2| / ⟨Φ⟩` (high-modulation tail, full smoothing)
//!
//! Cost is O(n³). The double sum runs in a fixed (ξ1 outer, ξ2 inner) order
//! per output mode; parallelism is over output modes only, so results are
//! identical for every thread count.

use crate::grid::SpectralField;
use num_complex::Complex64;
use rayon::prelude::*;

/// Multiplier choice for [`eval_trilinear`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrilinearKernel {
    /// `e^{iΦt} ξ2`.
    Raw { t: f64 },
    /// `|ξ2| / ⟨Φ⟩^{1/2}`.
    Weighted,
    /// `1_{|Φ|>M} |ξ2| / ⟨Φ⟩`, cutoff `M >= 1`, strict inequality.
    Weak { m: f64 },
}

impl TrilinearKernel {
    /// Scalar multiplier at one frequency tuple.
    pub fn multiplier(&self, xi1: f64, xi2: f64, xi3: f64) -> Complex64 {
        let phi = 2.0 * (xi2 - xi1) * (xi2 - xi3);
        match *self {
            TrilinearKernel::Raw { t } => Complex64::from_polar(1.0, phi * t) * xi2,
            TrilinearKernel::Weighted => {
                Complex64::new(xi2.abs() / (1.0 + phi * phi).sqrt().sqrt(), 0.0)
            }
            TrilinearKernel::Weak { m } => {
                debug_assert!(m >= 1.0, "weak cutoff must be >= 1");
                if phi.abs() > m {
                    Complex64::new(xi2.abs() / (1.0 + phi * phi).sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
        }
    }
}

/// Evaluates the trilinear map with the given kernel. Fields must share one
/// grid. The middle input enters conjugated.
pub fn eval_trilinear(
    kernel: TrilinearKernel,
    v1: &SpectralField,
    v2: &SpectralField,
    v3: &SpectralField,
) -> SpectralField {
    let grid = v1.grid();
    assert_eq!(grid, v2.grid(), "trilinear inputs must share a grid");
    assert_eq!(grid, v3.grid(), "trilinear inputs must share a grid");
    if let TrilinearKernel::Weak { m } = kernel {
        assert!(m >= 1.0, "weak cutoff must be >= 1, got {m}");
    }
    let n = grid.n() as i64;
    let h = n / 2;
    let dxi = grid.dxi();
    let c1 = v1.coeffs();
    let c2 = v2.coeffs();
    let c3 = v3.coeffs();
    let inv_l2 = 1.0 / (grid.box_length() * grid.box_length());
    let out: Vec<Complex64> = (-h..h)
        .into_par_iter()
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k1 in -h..h {
                let a1 = c1[(k1 + h) as usize];
                if a1.re == 0.0 && a1.im == 0.0 {
                    continue;
                }
                for k2 in -h..h {
                    let k3 = k - k1 + k2;
                    if k3 < -h || k3 >= h {
                        continue;
                    }
                    let a2 = c2[(k2 + h) as usize];
                    let a3 = c3[(k3 + h) as usize];
                    let m = kernel.multiplier(k1 as f64 * dxi, k2 as f64 * dxi, k3 as f64 * dxi);
                    acc += m * a1 * a2.conj() * a3;
                }
            }
            acc * inv_l2
        })
        .collect();
    SpectralField::from_coeffs(grid, out)
}
