//! Numerical contract tolerances, collected in one place.

/// Relative eigen-residual and orthonormality bound for the Jacobi solver.
pub const EIG_RESIDUAL: f64 = 1e-10;

/// Sweep cap for cyclic Jacobi before reporting non-convergence.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative Frobenius residual accepted for `A_mᵀP + PA_m + Q = 0`.
pub const LYAPUNOV_RESIDUAL: f64 = 1e-10;

/// Pivot magnitude (relative to the largest entry) treated as singular in LU.
pub const LU_PIVOT: f64 = 1e-14;

/// Eigenvalue band slack for the information matrix, `0 ≤ Ω ≤ I`.
pub const OMEGA_BAND: f64 = 1e-9;

/// Eigenvalue band slack for the learning rate, `Γ_min ≤ Γ ≤ Γ_max`.
pub const GAMMA_BAND: f64 = 1e-6;

/// Allowed excursion of `f_j(θ_j)` above 1.
pub const THETA_LEVEL: f64 = 1e-6;

/// Gram matrices whose smallest eigenvalue is below this fraction of their
/// largest one are reported as rank deficient (not exciting).
pub const EXCITATION_RANK: f64 = 1e-12;

/// Relative slack on the exponential envelope, scaled by `1 + V(t3)`.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// Grid alignment tolerance, as a fraction of the sample spacing.
pub const GRID_ALIGN: f64 = 1e-6;
