//! Numerical thresholds shared by the pipeline.
//!
//! Every value here is an implementation choice. The CLI reads overrides for
//! any subset of keys from the `tolerances` object of a run config.

use serde::{Deserialize, Serialize};

/// Thresholds used across the library, with their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Coefficient equality, 1e-10.
    pub coeff: f64,
    /// Pointwise evaluation agreement, 1e-8.
    pub eval: f64,
    /// |det| below this on the sample circle means a singular loop, 1e-12.
    pub singular_det: f64,
    /// Relative spread of det g on the circle tolerated by the Iwasawa splitting, 1e-6.
    pub det_constancy: f64,
    /// Reconstruction residual accepted from a factorization, 1e-8.
    pub factorization_residual: f64,
    /// Condition number above which a Birkhoff solve reports the big cell boundary, 1e12.
    pub big_cell_condition: f64,
    /// Minimum distance between a grid node or path and a pole, 1e-3.
    pub pole_margin: f64,
    /// Target ODE error per unit path length, 1e-10.
    pub ode_per_length: f64,
    /// Relative |Psi_z|^2 level (against the grid median) flagged as a branch point, 1e-8.
    pub degenerate_metric: f64,
    /// Residual for polished polynomial roots, 1e-10.
    pub root_polish: f64,
    /// Unitarity of chi, 1e-8.
    pub chi_unitarity: f64,
    /// Spread of chi candidates over probe nodes, 1e-4.
    pub chi_z_independence: f64,
    /// Metric transformation law at probe nodes, 1e-6.
    pub metric_law: f64,
    /// Hopf differential transformation law at probe nodes, 1e-6.
    pub hopf_law: f64,
    /// Unitary gauge condition, 1e-6.
    pub gauge: f64,
    /// Interpolated isometry-law checks on sampled immersions, 1e-4.
    pub isometry_interp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            coeff: 1e-10,
            eval: 1e-8,
            singular_det: 1e-12,
            det_constancy: 1e-6,
            factorization_residual: 1e-8,
            big_cell_condition: 1e12,
            pole_margin: 1e-3,
            ode_per_length: 1e-10,
            degenerate_metric: 1e-8,
            root_polish: 1e-10,
            chi_unitarity: 1e-8,
            chi_z_independence: 1e-4,
            metric_law: 1e-6,
            hopf_law: 1e-6,
            gauge: 1e-6,
            isometry_interp: 1e-4,
        }
    }
}
