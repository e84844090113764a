//! The cubic and quintic nonlinearities of the interaction-picture flow,
//! their high/low modulation split, and the iterated tree maps built from
//! the bounded trilinear kernels.
//!
//! With `W = S(t)v` the two right-hand-side operators are
//!
//! ```text
//! eval_quintic(v,t) = S(-t)[ -(1/2)|W|^4 W ]
//! eval_cubic_t(v,t) = S(-t)[ -i W^2 ∂x conj(W) ]
//! ```
//!
//! and the evolution the solvers integrate is `∂t v = -i (Q + T)` in these
//! operators (the `-i` makes both terms norm-neutral: the quintic pairing
//! `⟨|W|^4 W, W⟩` is real and `∫ |W|² W ∂x conj(W)` is purely imaginary, so
//! the discrete mass is conserved by the continuum flow).
//!
//! `eval_cubic_t` has two routes that must agree: the O(n³) frequency sum
//! `-eval_trilinear(Raw{t}, v, v, v)` (the sign is what the `-i` and the
//! derivative landing on the conjugate produce after unfolding the
//! convolution), and the O(n log n) pseudospectral route through the padded
//! grid. The frequency route is the semantic definition; the physical route
//! is what the reference solver steps.

use crate::grid::SpectralField;
use crate::kernels::{eval_trilinear, TrilinearKernel};
use crate::schedule::ThresholdSchedule;
use crate::trees::OrderedTree;
use num_complex::Complex64;
use rayon::prelude::*;

/// `S(-t)[ -(1/2) |S(t)v|^4 S(t)v ]`, dealiased on the padded grid.
pub fn eval_quintic(v: &SpectralField, t: f64) -> SpectralField {
    let w = v.propagated(t);
    let wf = w.to_physical_padded();
    let prod: Vec<Complex64> = wf
        .iter()
        .map(|z| {
            let m2 = z.norm_sqr();
            -0.5 * m2 * m2 * z
        })
        .collect();
    let mut out = SpectralField::from_physical_padded(v.grid(), &prod);
    out.free_propagate(-t);
    out
}

/// `S(-t)[ -i (S(t)v)^2 ∂x conj(S(t)v) ]` by the frequency route: the
/// negated raw trilinear sum.
pub fn eval_cubic_t(v: &SpectralField, t: f64) -> SpectralField {
    let mut out = eval_trilinear(TrilinearKernel::Raw { t }, v, v, v);
    out.scale(Complex64::new(-1.0, 0.0));
    out
}

/// Same operator by the pseudospectral route: `∂x conj(W) = conj(∂x W)`
/// pointwise, products on the padded grid, truncate, unwind the propagator.
pub fn eval_cubic_t_physical(v: &SpectralField, t: f64) -> SpectralField {
    let w = v.propagated(t);
    let wf = w.to_physical_padded();
    let df = w.derivative().to_physical_padded();
    let minus_i = Complex64::new(0.0, -1.0);
    let prod: Vec<Complex64> =
        wf.iter().zip(&df).map(|(z, d)| minus_i * z * z * d.conj()).collect();
    let mut out = SpectralField::from_physical_padded(v.grid(), &prod);
    out.free_propagate(-t);
    out
}

/// The full interaction-picture right-hand side `-i (Q(v) + T(v))` in one
/// pass (one propagated field, one padded transform each for `W` and
/// `∂x W`). Algebraically `S(-t)[ (i/2)|W|^4 W - W^2 conj(∂x W) ]`.
pub fn interaction_rhs(v: &SpectralField, t: f64) -> SpectralField {
    let w = v.propagated(t);
    let wf = w.to_physical_padded();
    let df = w.derivative().to_physical_padded();
    let half_i = Complex64::new(0.0, 0.5);
    let prod: Vec<Complex64> = wf
        .iter()
        .zip(&df)
        .map(|(z, d)| {
            let m2 = z.norm_sqr();
            half_i * (m2 * m2) * z - z * z * d.conj()
        })
        .collect();
    let mut out = SpectralField::from_physical_padded(v.grid(), &prod);
    out.free_propagate(-t);
    out
}

/// Splits the derivative cubic at modulation `N`: the returned pair is
/// (almost-resonant `|Φ| <= N`, high-modulation `|Φ| > N`, both including
/// the operator's sign). The high part is a restricted pass in the canonical
/// summation order; the low part is defined by subtraction, so reassembly
/// `T1 + T2 = eval_cubic_t` holds to one final rounding per coefficient.
pub fn split_cubic(v: &SpectralField, t: f64, n_cutoff: f64) -> (SpectralField, SpectralField) {
    assert!(n_cutoff > 1.0, "split cutoff must exceed 1, got {n_cutoff}");
    let grid = v.grid();
    let n = grid.n() as i64;
    let h = n / 2;
    let dxi = grid.dxi();
    let coeffs = v.coeffs();
    let inv_l2 = 1.0 / (grid.box_length() * grid.box_length());
    let t2: Vec<Complex64> = (-h..h)
        .into_par_iter()
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k1 in -h..h {
                let a1 = coeffs[(k1 + h) as usize];
                if a1.re == 0.0 && a1.im == 0.0 {
                    continue;
                }
                for k2 in -h..h {
                    let k3 = k - k1 + k2;
                    if k3 < -h || k3 >= h {
                        continue;
                    }
                    let xi1 = k1 as f64 * dxi;
                    let xi2 = k2 as f64 * dxi;
                    let xi3 = k3 as f64 * dxi;
                    let phi = 2.0 * (xi2 - xi1) * (xi2 - xi3);
                    if phi.abs() <= n_cutoff {
                        continue;
                    }
                    let m = Complex64::from_polar(1.0, phi * t) * xi2;
                    acc += m * a1 * coeffs[(k2 + h) as usize].conj() * coeffs[(k3 + h) as usize];
                }
            }
            // The operator carries an overall -1 relative to the bare kernel.
            acc * (-inv_l2)
        })
        .collect();
    let t2 = SpectralField::from_coeffs(grid, t2);
    let t1 = eval_cubic_t(v, t).sub(&t2);
    (t1, t2)
}

/// Bottom-up tree evaluation with the modulation-weighted kernel at every
/// parental node. Inputs are matched to terminal nodes in depth-first order;
/// slot-2 conjugation happens inside the kernel, so nested conjugation
/// follows the tree parity automatically.
pub fn iterated_map_s(tree: &OrderedTree, inputs: &[SpectralField]) -> SpectralField {
    iterated_map_impl(tree, inputs, &|_| TrilinearKernel::Weighted)
}

/// As [`iterated_map_s`] but the node expanded at step g carries the weak
/// kernel with cutoff `b_g N / 2` from the schedule.
pub fn iterated_map_s_weak(
    tree: &OrderedTree,
    inputs: &[SpectralField],
    schedule: &ThresholdSchedule,
) -> SpectralField {
    iterated_map_impl(tree, inputs, &|g| TrilinearKernel::Weak { m: schedule.weak_cutoff(g) })
}

fn iterated_map_impl(
    tree: &OrderedTree,
    inputs: &[SpectralField],
    kernel_at: &dyn Fn(usize) -> TrilinearKernel,
) -> SpectralField {
    let arity = 2 * tree.generation() + 1;
    assert_eq!(inputs.len(), arity, "tree of generation {} needs {arity} inputs", tree.generation());
    let grid = inputs[0].grid();
    for f in inputs {
        assert_eq!(f.grid(), grid, "iterated map inputs must share a grid");
    }
    let mut leaf_pos = vec![usize::MAX; tree.nodes().len()];
    for (i, id) in tree.terminals_dfs().into_iter().enumerate() {
        leaf_pos[id] = i;
    }
    eval_subtree(tree, 0, inputs, &leaf_pos, kernel_at)
}

fn eval_subtree(
    tree: &OrderedTree,
    id: usize,
    inputs: &[SpectralField],
    leaf_pos: &[usize],
    kernel_at: &dyn Fn(usize) -> TrilinearKernel,
) -> SpectralField {
    match tree.node(id).children {
        None => inputs[leaf_pos[id]].clone(),
        Some([a, b, c]) => {
            let fa = eval_subtree(tree, a, inputs, leaf_pos, kernel_at);
            let fb = eval_subtree(tree, b, inputs, leaf_pos, kernel_at);
            let fc = eval_subtree(tree, c, inputs, leaf_pos, kernel_at);
            let g = tree.expansion_step(id).expect("parental node");
            eval_trilinear(kernel_at(g), &fa, &fb, &fc)
        }
    }
}

/// `‖v1 · ∂x conj(v2) · v3‖_{H^{s-1}} / Π ‖v_j‖_{H^s}` with the numerator
/// computed dealiased. Panics on zero-norm inputs.
pub fn cubic_derivative_weaknorm_ratio(
    v1: &SpectralField,
    v2: &SpectralField,
    v3: &SpectralField,
    s: f64,
) -> f64 {
    assert!(s > 0.5, "regularity must exceed 1/2");
    let denom = v1.hs_norm(s) * v2.hs_norm(s) * v3.hs_norm(s);
    assert!(denom > 0.0, "weak-norm ratio needs nonzero inputs");
    let p1 = v1.to_physical_padded();
    let d2 = v2.derivative().to_physical_padded();
    let p3 = v3.to_physical_padded();
    let prod: Vec<Complex64> =
        p1.iter().zip(&d2).zip(&p3).map(|((a, d), c)| a * d.conj() * c).collect();
    let num = SpectralField::from_physical_padded(v1.grid(), &prod);
    num.hs_norm(s - 1.0) / denom
}

/// `‖Q(v) + T(v)‖_{H^{s-1}} / (‖v‖³_{H^s} + ‖v‖⁵_{H^s})`; the time
/// derivative of the interaction unknown differs from the numerator by a
/// unit-modulus factor, so this ratio is the derivative-size probe. Panics
/// on the zero field.
pub fn dt_v_norm_check(v: &SpectralField, t: f64, s: f64) -> f64 {
    let nv = v.hs_norm(s);
    assert!(nv > 0.0, "derivative-size probe needs a nonzero field");
    let mut rhs = eval_quintic(v, t);
    rhs.add_assign(&eval_cubic_t_physical(v, t));
    rhs.hs_norm(s - 1.0) / (nv.powi(3) + nv.powi(5))
}
