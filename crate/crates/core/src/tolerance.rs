/// Numerical tolerances used across the pressure and L-function solvers.
///
/// `scaled` multiplies every threshold by the same factor (CLI `--tol`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative residual at which power iteration stops.
    pub eigen_residual: f64,
    /// Accepted `|P_base(theta F - p r)|` at the flow-pressure root.
    pub pressure_root: f64,
    /// Agreement of the two routes to the flow mean.
    pub mean_agreement: f64,
    /// Relative agreement of the variance stencil at `delta` and `delta/2`.
    pub richardson: f64,
    /// Variance below this is treated as zero (cohomologous to a constant).
    pub degeneracy: f64,
    /// `|det(I - M)|` accepted at a pole.
    pub pole_residual: f64,
    /// `|det(I - M)|` below which `l_det` reports a pole.
    pub pole_flag: f64,
    /// Distance from an integer accepted for a contour winding number.
    pub winding: f64,
    /// Half-width of the flow-pressure bracket search.
    pub bracket: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eigen_residual: 1e-13,
            pressure_root: 1e-12,
            mean_agreement: 1e-6,
            richardson: 1e-5,
            degeneracy: 1e-7,
            pole_residual: 1e-11,
            pole_flag: 1e-12,
            winding: 1e-3,
            bracket: 1e6,
        }
    }
}

impl Tolerances {
    pub fn scaled(factor: f64) -> Self {
        let d = Self::default();
        Self {
            eigen_residual: d.eigen_residual * factor,
            pressure_root: d.pressure_root * factor,
            mean_agreement: d.mean_agreement * factor,
            richardson: d.richardson * factor,
            degeneracy: d.degeneracy * factor,
            pole_residual: d.pole_residual * factor,
            pole_flag: d.pole_flag * factor,
            winding: d.winding * factor,
            bracket: d.bracket,
        }
    }
}
