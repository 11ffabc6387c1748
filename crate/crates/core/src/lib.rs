//! Numerical toolkit for Caputo fractional differential equations.
//!
//! | module | contents |
//! |---|---|
//! | [`mlf`] | Mittag-Leffler functions of scalar and matrix argument |
//! | [`fraccalc`] | Riemann-Liouville integrals and Caputo derivatives of sampled data |
//! | [`solver`] | predictor-corrector integration of Caputo initial value problems |
//! | [`stability`] | linearisation, Lyapunov certificates and decay diagnostics |

pub mod field;
pub mod fraccalc;
pub mod halton;
pub mod mesh;
pub mod mlf;
pub mod quad;
pub mod solver;
pub mod special;
pub mod stability;
