//! Centralized numerical tolerances.
//!
//! Every threshold that a solver enforces or a test asserts is named here,
//! so that contracts and their checks cannot drift apart.

/// Direct sparse solve: `‖Ax − b‖∞ ≤ SOLVE_RESIDUAL · (1 + ‖b‖∞)`.
pub const SOLVE_RESIDUAL: f64 = 1e-10;

/// Discrete mass conservation: `‖Bq − f‖∞ ≤ CONSERVATION · (1 + ‖f‖∞)`.
pub const CONSERVATION: f64 = 1e-10;

/// Kernel-map outputs: `‖B(S₀r)‖∞ ≤ KERNEL · (1 + ‖S₀r‖∞)`.
pub const KERNEL: f64 = 1e-12;

/// Right-inverse law for tree solvers, single and averaged.
pub const RIGHT_INVERSE: f64 = 1e-12;

/// Eigenpair residual of the symmetric eigendecomposition, relative to `‖G‖`.
pub const EIG_RESIDUAL: f64 = 1e-9;

/// Orthonormality defect of eigenvectors and reduced bases.
pub const ORTHONORMALITY: f64 = 1e-10;

/// Smallest admissible eigenvalue ratio `λₙ/λ₁` for a retained basis mode.
pub const POD_RANK: f64 = 1e-14;

/// Relative defect of the truncation-energy identity.
pub const POD_ENERGY: f64 = 1e-8;

/// Nonlinear flux iteration: guaranteed relative increment and residual.
pub const PICARD: f64 = 1e-8;

/// Internal drive target of the nonlinear iteration. Pressure recovery
/// through the tree adjoint amplifies the frozen-coefficient lag, so the
/// iteration pushes well past the guaranteed tolerance when it can.
pub const PICARD_TIGHT: f64 = 1e-12;

/// Iteration cap for the nonlinear flux solver.
pub const PICARD_MAX_ITER: usize = 200;

/// Pressure recovery from an exact flux, relative error.
pub const PRESSURE_IDENTITY: f64 = 1e-9;

/// Gradients of network outputs against central finite differences.
pub const GRAD_FD_NET: f64 = 1e-5;

/// Gradients of full losses against central finite differences.
pub const GRAD_FD_LOSS: f64 = 1e-4;
