use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// Nelder–Mead settings for the outer node search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    /// Initial simplex edge in log-gap coordinates.
    pub simplex_scale: f64,
    /// Stop when the spread of simplex energies falls below this.
    pub energy_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            simplex_scale: 0.2,
            energy_tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Elements across `[0, r_max]`; annuli inherit the element density.
    pub grid: usize,
    /// Last/first element length ratio on each annulus.
    pub stretch: f64,
    /// Convergence threshold on `sup|residual| / ‖u‖^{p-1}`.
    pub grad_tol: f64,
    /// Iterations continue past `grad_tol` down to this level while they make progress.
    pub refine_tol: f64,
    /// Threshold on `|⟨J'(u),u⟩| / ‖u‖^p`.
    pub nehari_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
    /// Amplitude of the seeded perturbation of the initial bump.
    pub noise: f64,
    pub nelder_mead: NelderMeadConfig,
    /// Refine nodes by balancing boundary fluxes after the simplex search.
    pub flux_polish: bool,
    /// Half-width of the certificate window `[1 - τ, 1 + τ]`.
    pub tau: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid: 2000,
            stretch: 1.0,
            grad_tol: 1e-8,
            refine_tol: 1e-13,
            nehari_tol: 1e-10,
            max_iter: 20000,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            noise: 1e-3,
            nelder_mead: NelderMeadConfig::default(),
            flux_polish: true,
            tau: 0.5,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("refine_tol", self.refine_tol),
            ("nehari_tol", self.nehari_tol),
            ("armijo_c", self.armijo_c),
            ("initial_step", self.initial_step),
            ("stretch", self.stretch),
            ("tau", self.tau),
            ("simplex_scale", self.nelder_mead.simplex_scale),
            ("energy_tol", self.nelder_mead.energy_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(SolverError::InvalidArgument("armijo_shrink must lie in (0, 1)".into()));
        }
        if self.tau >= 1.0 {
            return Err(SolverError::InvalidArgument("tau must be below 1".into()));
        }
        if self.grid < 8 {
            return Err(SolverError::InvalidArgument("grid needs at least 8 elements".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(SolverError::InvalidArgument("noise must be nonnegative".into()));
        }
        Ok(())
    }

    /// Target element length for a problem truncated at `r_max`.
    pub fn element_length(&self, r_max: f64) -> f64 {
        r_max / self.grid as f64
    }

    /// Smallest admissible annulus width: four elements.
    pub fn min_gap(&self, r_max: f64) -> f64 {
        4.0 * self.element_length(r_max)
    }
}
