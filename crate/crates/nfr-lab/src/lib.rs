//! Numerical laboratory for normal-form reduction (NFR) of the gauged
//! derivative nonlinear Schrödinger equation in the interaction picture.
//!
//! The object of study is the evolution `∂t v = -i (Q(v) + T(v))` on a
//! periodic box, where `v(t) = S(-t) w(t)` is the interaction-picture
//! unknown, `S(t) = exp(it ∂xx)` the free propagator, and, with
//! `W = S(t) v`,
//!
//! ```text
//! Q(v) = S(-t) [ -(1/2) |W|^4 W ]          (quintic)
//! T(v) = S(-t) [ -i W^2 ∂x conj(W) ]       (derivative cubic)
//! ```
//!
//! The cubic term splits at a modulation cutoff N into a bounded piece and a
//! high-modulation piece; iterating Duhamel on the high piece J times yields
//! the normal-form families `T0` (boundary), `TQ` (quintic substitution),
//! `TT1` (low-modulation flow) and a remainder `TT` whose size decays in N.
//! The crate provides the combinatorics (ordered ternary trees, frequency
//! assignments, modulation algebra), the operator evaluators (direct nested
//! sums plus cross-checked fast paths), two solvers (a dealiased reference
//! integrator and the truncated Picard iteration), and a reproducible
//! experiment harness with slope-fit reports.
//!
//! Layout:
//! - [`grid`]: frequency grid, spectral fields, transforms, norms, field I/O
//! - [`gauge`]: gauge transform between the raw and derivative-free frames
//! - [`trees`]: ordered ternary expansion trees, frequency assignments,
//!   modulation algebra
//! - [`kernels`]: trilinear frequency-domain maps (raw, weighted, weak)
//! - [`operators`]: quintic/cubic evaluators, cubic split, iterated maps
//! - [`schedule`]: admissibility threshold schedules
//! - [`terms`]: normal-form term families and their fast evaluators
//! - [`solver`]: reference integrator, Picard iteration, cross-validation
//! - [`ensemble`]: seeded random fields and derived per-case streams
//! - [`suite`]: experiment configs, JSON reports, slope fits, replay

pub mod ensemble;
pub mod gauge;
pub mod grid;
pub mod kernels;
pub mod operators;
pub mod schedule;
pub mod solver;
pub mod suite;
pub mod terms;
pub mod trees;

pub use grid::{FrequencyGrid, SpectralField};
pub use num_complex::Complex64;
