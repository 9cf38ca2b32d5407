//! One-signed Nehari ground states on a single annulus `[ρ, σ]`.
//!
//! Iterates live in the cone `±u ≥ 0` on the Nehari set. Each step takes a
//! preconditioned gradient direction, clamps the wrong-signed part, projects
//! back onto the Nehari set and accepts by Armijo backtracking on the energy.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SolverConfig;
use crate::discretization::{RadialFunction, RadialGrid};
use crate::error::{Result, SolverError};
use crate::nehari::{project_values, Ray};
use crate::problem::{ProblemSpec, Sign};

/// Smallest step tried by the line search before declaring stagnation.
const MIN_STEP: f64 = 1e-12;
/// Cold starts on grids with at least this many elements go through a coarser grid.
const COARSE_THRESHOLD: usize = 400;
const COARSE_TOL: f64 = 1e-6;
/// Relative residual below which full Newton steps are tried.
const NEWTON_SWITCH: f64 = 1e-5;
const NEWTON_LENGTH_RATIO: f64 = 100.0;
/// Row-wise relative residual target.
const LOCAL_TOL: f64 = 1e-8;
const TAIL_PATIENCE: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct AnnulusSolution {
    pub rho: f64,
    pub sigma: f64,
    pub sign: Sign,
    #[serde(skip)]
    pub profile: RadialFunction,
    pub energy: f64,
    /// `|⟨J'(u), u⟩| / ‖u‖^p`.
    pub nehari_residual: f64,
    /// `sup|residual| / ‖u‖^{p-1}`.
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl AnnulusSolution {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.profile.grid()
    }

    /// `‖u‖` in `W^{1,p}` on the annulus.
    pub fn norm(&self, spec: &ProblemSpec) -> f64 {
        self.grid().norm_p_values(spec.p(), self.profile.values()).powf(1.0 / spec.p())
    }

    /// Smallest value of `sign·u` over the unconstrained nodes.
    pub fn interior_min(&self) -> f64 {
        let grid = self.grid();
        let s = self.sign.value();
        self.profile
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !grid.is_constrained(*i))
            .map(|(_, v)| s * v)
            .fold(f64::INFINITY, f64::min)
    }

    /// Radial fluxes `r^{N-1}|u'|^{p-2}u'` at `ρ` and at `σ`, read off the
    /// constrained rows of the weak-form gradient.
    pub fn boundary_fluxes(&self, spec: &ProblemSpec) -> (f64, f64) {
        let raw = self.grid().raw_residual_values(spec, self.profile.values());
        (-raw[0], raw[raw.len() - 1])
    }

    /// Turns a non-converged result into [`SolverError::MaxIterations`].
    pub fn require_converged(self, config: &SolverConfig) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SolverError::MaxIterations {
                cap: config.max_iter,
                residual: self.grad_residual,
            })
        }
    }
}

/// Uniform-density grid on `[rho, sigma]` matching the global element length.
pub fn annulus_grid(spec: &ProblemSpec, rho: f64, sigma: f64, config: &SolverConfig) -> Result<Arc<RadialGrid>> {
    let m = element_count(spec, rho, sigma, config)?;
    Ok(Arc::new(RadialGrid::build(spec.dim(), rho, sigma, m, config.stretch)?))
}

pub(crate) fn element_count(spec: &ProblemSpec, rho: f64, sigma: f64, config: &SolverConfig) -> Result<usize> {
    if !(rho >= 0.0 && sigma > rho && sigma <= spec.r_max() * (1.0 + 1e-12)) {
        return Err(SolverError::InvalidArgument(format!(
            "annulus [{rho}, {sigma}] outside [0, {}]",
            spec.r_max()
        )));
    }
    let h = config.element_length(spec.r_max());
    let width = sigma - rho;
    if width < 4.0 * h * (1.0 - 1e-9) {
        return Err(SolverError::DegenerateAnnulus {
            rho,
            sigma,
            min_elements: 4,
        });
    }
    Ok(((width / h - 1e-9).ceil() as usize).max(4))
}

/// Ground state of `J^sign` on `[rho, sigma]` from the seeded bump.
pub fn solve_ground_state(
    spec: &ProblemSpec,
    rho: f64,
    sigma: f64,
    sign: Sign,
    config: &SolverConfig,
) -> Result<AnnulusSolution> {
    config.validate()?;
    let grid = annulus_grid(spec, rho, sigma, config)?;
    solve_on_grid(spec, grid, sign, config, None)
}

/// Seeded initial bump: `sin` for two Dirichlet ends, a quarter `cos` when the
/// left end is natural, modulated by multiplicative noise and scaled to unit
/// norm.
pub fn initial_guess(grid: &RadialGrid, p: f64, sign: Sign, noise: f64, seed: u64) -> Vec<f64> {
    let (rho, sigma) = (grid.rho(), grid.sigma());
    let width = sigma - rho;
    let natural_left = !grid.left_dirichlet();
    let mut u: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| {
            let x = (r - rho) / width;
            let bump = if natural_left {
                (0.5 * std::f64::consts::PI * x).cos()
            } else {
                (std::f64::consts::PI * x).sin()
            };
            bump.max(0.0)
        })
        .collect();
    perturb(&mut u, noise, seed);
    grid.constrain(&mut u);
    let norm = grid.norm_p_values(p, &u).powf(1.0 / p);
    let s = sign.value() / norm;
    u.iter_mut().for_each(|v| *v *= s);
    u
}

/// Multiplies each value by `1 + noise·ε` with seeded `ε ∈ [-1, 1]`.
fn perturb(u: &mut [f64], noise: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in u.iter_mut() {
        let eps: f64 = rng.gen_range(-1.0..=1.0);
        *v *= 1.0 + noise * eps;
    }
}

fn clamp_sign(u: &mut [f64], sign: Sign) {
    match sign {
        Sign::Plus => u.iter_mut().for_each(|v| *v = v.max(0.0)),
        Sign::Minus => u.iter_mut().for_each(|v| *v = v.min(0.0)),
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Iterate {
    u: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
    /// `sup|g| / ‖u‖^{p-1}`.
    rel: f64,
    /// `max_i |g_i| / scale_i`: convergence of each row against its own terms,
    /// which keeps exponentially small tails accurate.
    local: f64,
}

impl Iterate {
    fn new(grid: &RadialGrid, spec: &ProblemSpec, u: Vec<f64>) -> Self {
        let p = spec.p();
        let energy = grid.energy_values(spec, &u);
        let grad = grid.residual_values(spec, &u);
        let scale = grid.norm_p_values(p, &u).powf((p - 1.0) / p);
        let rel = sup(&grad) / scale;
        let local = grid
            .residual_scale_values(spec, &u)
            .iter()
            .zip(&grad)
            .filter(|(s, _)| **s > 0.0)
            .map(|(s, g)| g.abs() / s)
            .fold(0.0, f64::max);
        Iterate {
            u,
            energy,
            grad,
            rel,
            local,
        }
    }

    fn done(&self, config: &SolverConfig) -> bool {
        self.rel <= config.refine_tol && self.local <= LOCAL_TOL
    }
}

/// Clamp and project; `None` when the clamped profile is numerically zero.
fn admissible(grid: &RadialGrid, spec: &ProblemSpec, mut v: Vec<f64>, sign: Sign) -> Result<Option<Vec<f64>>> {
    clamp_sign(&mut v, sign);
    grid.constrain(&mut v);
    match project_values(grid, spec, &v) {
        Ok((_, projected)) => Ok(Some(projected)),
        Err(SolverError::ZeroInput { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full Newton step near convergence. Rejected when it is much longer than
/// the preconditioned step (a near-singular Hessian, e.g. the almost free
/// translation of a wide one-dimensional bump) or fails to halve the residual.
fn newton_step(
    grid: &RadialGrid,
    spec: &ProblemSpec,
    it: &Iterate,
    precond_dir: &[f64],
    sign: Sign,
    energy_floor: f64,
) -> Result<Option<(Iterate, bool)>> {
    let hess = grid.hessian_values(spec, &it.u, false);
    let Some(delta) = hess.solve(&it.grad) else {
        return Ok(None);
    };
    let len = sup(&delta);
    if !len.is_finite() || len > NEWTON_LENGTH_RATIO * sup(precond_dir) {
        return Ok(None);
    }
    let trial: Vec<f64> = it.u.iter().zip(&delta).map(|(u, d)| u - d).collect();
    let Some(v) = admissible(grid, spec, trial, sign)? else {
        return Ok(None);
    };
    let next = Iterate::new(grid, spec, v);
    let residual_progress =
        next.rel < 0.5 * it.rel || (next.rel <= it.rel.max(1e-15) * 2.0 && next.local < 0.5 * it.local);
    let floor = energy_floor * it.energy.abs();
    if residual_progress && next.energy <= it.energy + floor {
        return Ok(Some((next, true)));
    }
    // a clear energy decrease still moves the slow modes; the peak is cleaned up by descent
    if next.energy < it.energy - 1e3 * floor {
        return Ok(Some((next, false)));
    }
    Ok(None)
}

/// Core solver on a prepared grid, optionally warm-started from nodal values
/// on the same grid.
pub fn solve_on_grid(
    spec: &ProblemSpec,
    grid: Arc<RadialGrid>,
    sign: Sign,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<AnnulusSolution> {
    let g = grid.as_ref();
    let start = match warm {
        Some(w) if w.len() == g.len() && w.iter().any(|v| sign.value() * v > 0.0) => w.to_vec(),
        _ => coarse_start(spec, g, sign, config)?,
    };
    let start = admissible(g, spec, start, sign)?
        .ok_or(SolverError::ZeroInput { norm: 0.0 })?;
    let mut it = Iterate::new(g, spec, start);
    let mut iterations = 0;
    let energy_floor = 64.0 * f64::EPSILON;

    // iterations spent past the global tolerance chasing the row-wise one
    let mut tail_budget = TAIL_PATIENCE;
    let mut previous: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut after_newton = false;
    while iterations < config.max_iter && !it.done(config) {
        if it.rel <= config.refine_tol {
            if tail_budget == 0 {
                break;
            }
            tail_budget -= 1;
        }
        let precond = g.hessian_values(spec, &it.u, true);
        let mut z = precond.solve(&it.grad).unwrap_or_else(|| it.grad.clone());
        if !(dot(&it.grad, &z) > 0.0) {
            z = it.grad.clone();
        }
        let gz = dot(&it.grad, &z);
        if it.rel < NEWTON_SWITCH && !after_newton {
            if let Some((next, clean)) = newton_step(g, spec, &it, &z, sign, energy_floor)? {
                it = next;
                iterations += 1;
                previous = None;
                after_newton = !clean;
                continue;
            }
        }
        after_newton = false;
        // preconditioned Polak-Ribière+ conjugation
        let mut dir = z.clone();
        if let Some((z_prev, d_prev, gz_prev)) = &previous {
            let num = gz - dot(&it.grad, z_prev);
            let beta = (num / gz_prev).max(0.0);
            if beta.is_finite() && beta > 0.0 {
                for (d, dp) in dir.iter_mut().zip(d_prev) {
                    *d += beta * dp;
                }
            }
        }
        let mut slope = dot(&it.grad, &dir);
        if !(slope > 0.0) || !slope.is_finite() {
            dir = z.clone();
            slope = gz;
        }
        let mut alpha = config.initial_step;
        let mut accepted = None;
        while alpha >= MIN_STEP {
            let trial: Vec<f64> = it.u.iter().zip(&dir).map(|(u, d)| u - alpha * d).collect();
            if let Some(v) = admissible(g, spec, trial, sign)? {
                let next = Iterate::new(g, spec, v);
                let decrease = it.energy - next.energy;
                let sufficient = decrease >= config.armijo_c * alpha * slope;
                // below roundoff in J, fall back to a decrease of the residual
                let flat = decrease.abs() <= energy_floor * it.energy.abs()
                    && (next.rel < it.rel || (next.rel <= 2.0 * it.rel && next.local < it.local));
                if sufficient || flat {
                    accepted = Some(next);
                    break;
                }
            }
            alpha *= config.armijo_shrink;
        }
        match accepted {
            Some(next) => {
                previous = Some((z, dir, gz));
                it = next;
                iterations += 1;
            }
            None if previous.is_some() => previous = None,
            None => break,
        }
    }

    let p = spec.p();
    let norm_p = g.norm_p_values(p, &it.u);
    let nehari_residual = Ray::new(g, spec, &it.u)?.phi(1.0).abs() / norm_p;
    let converged = it.rel <= config.grad_tol && nehari_residual <= config.nehari_tol;
    if !converged {
        log::warn!(
            "annulus [{}, {}] {sign}: residual {:.3e} after {iterations} iterations",
            g.rho(),
            g.sigma(),
            it.rel
        );
    }
    Ok(AnnulusSolution {
        rho: g.rho(),
        sigma: g.sigma(),
        sign,
        profile: RadialFunction::new(grid.clone(), it.u)?,
        energy: it.energy,
        nehari_residual,
        grad_residual: it.rel,
        iterations,
        converged,
    })
}

/// Cold start: the seeded bump on small grids, otherwise a loose noise-free
/// solve on a grid with a quarter of the elements, interpolated and perturbed.
fn coarse_start(spec: &ProblemSpec, grid: &RadialGrid, sign: Sign, config: &SolverConfig) -> Result<Vec<f64>> {
    let m = grid.elements();
    if m < COARSE_THRESHOLD {
        return Ok(initial_guess(grid, spec.p(), sign, config.noise, config.seed));
    }
    let coarse = RadialGrid::build(spec.dim(), grid.rho(), grid.sigma(), m / 4, config.stretch)?
        .with_boundary(grid.left_dirichlet(), grid.right_dirichlet());
    let loose = SolverConfig {
        refine_tol: COARSE_TOL,
        noise: 0.0,
        ..config.clone()
    };
    let sol = solve_on_grid(spec, Arc::new(coarse), sign, &loose, None)?;
    let mut u: Vec<f64> = grid.nodes().iter().map(|&r| sol.profile.interpolate(r)).collect();
    perturb(&mut u, config.noise, config.seed);
    Ok(u)
}

/// `c^sign(rho, sigma)` without memoization.
pub fn energy_map(spec: &ProblemSpec, rho: f64, sigma: f64, sign: Sign, config: &SolverConfig) -> Result<f64> {
    Ok(solve_ground_state(spec, rho, sigma, sign, config)?.energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CacheKey {
    rho: i64,
    sigma: i64,
    sign: Sign,
    elements: usize,
}

impl CacheKey {
    fn new(rho: f64, sigma: f64, sign: Sign, elements: usize) -> Self {
        CacheKey {
            rho: (rho * 1e12).round() as i64,
            sigma: (sigma * 1e12).round() as i64,
            sign,
            elements,
        }
    }
}

/// Thread-safe memo of annulus solves keyed on rounded radii.
#[derive(Debug, Default)]
pub struct AnnulusCache {
    map: Mutex<HashMap<CacheKey, Arc<AnnulusSolution>>>,
}

impl AnnulusCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached solve; a miss is warm-started from `warm` interpolated onto the
    /// new grid (shifted and stretched to the new annulus).
    pub fn solve(
        &self,
        spec: &ProblemSpec,
        rho: f64,
        sigma: f64,
        sign: Sign,
        config: &SolverConfig,
        warm: Option<&AnnulusSolution>,
    ) -> Result<Arc<AnnulusSolution>> {
        let m = element_count(spec, rho, sigma, config)?;
        self.solve_with_elements(spec, rho, sigma, sign, m, config, warm)
    }

    /// Like [`AnnulusCache::solve`] with a prescribed element count.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_with_elements(
        &self,
        spec: &ProblemSpec,
        rho: f64,
        sigma: f64,
        sign: Sign,
        m: usize,
        config: &SolverConfig,
        warm: Option<&AnnulusSolution>,
    ) -> Result<Arc<AnnulusSolution>> {
        let key = CacheKey::new(rho, sigma, sign, m);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let grid = Arc::new(RadialGrid::build(spec.dim(), rho, sigma, m, config.stretch)?);
        let start = warm.filter(|w| w.sign == sign).map(|w| transplant(w, &grid));
        let sol = Arc::new(solve_on_grid(spec, grid, sign, config, start.as_deref())?);
        self.map.lock().unwrap().insert(key, sol.clone());
        Ok(sol)
    }

    pub fn energy(&self, spec: &ProblemSpec, rho: f64, sigma: f64, sign: Sign, config: &SolverConfig) -> Result<f64> {
        Ok(self.solve(spec, rho, sigma, sign, config, None)?.energy)
    }
}

/// Maps a profile on `[ρ, σ]` affinely onto another grid's interval.
fn transplant(from: &AnnulusSolution, to: &RadialGrid) -> Vec<f64> {
    let (a, b) = (from.rho, from.sigma);
    let (c, d) = (to.rho(), to.sigma());
    to.nodes()
        .iter()
        .map(|&r| from.profile.interpolate(a + (r - c) * (b - a) / (d - c)))
        .collect()
}

/// Empirical Nehari lower-bound data for one annulus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    /// `‖u‖^p / Σ_i ∫ λ_i |u|^{q_i} r^{N-1} dr`.
    pub ratio: f64,
    /// `δ = ‖u‖`.
    pub delta: f64,
    /// `δ` fell below 10% of the running minimum supplied by the caller.
    pub collapse: bool,
}

pub fn delta_lower_bound(
    spec: &ProblemSpec,
    solution: &AnnulusSolution,
    running_min: Option<f64>,
) -> Result<DeltaReport> {
    let grid = solution.grid();
    let u = solution.profile.values();
    let ray = Ray::new(grid, spec, u)?;
    let moments: f64 = spec
        .terms()
        .iter()
        .map(|t| grid.moment_values(t.q, u, |r| t.coefficient(r)))
        .sum();
    let delta = ray.norm_p().powf(1.0 / spec.p());
    Ok(DeltaReport {
        ratio: ray.norm_p() / moments,
        delta,
        collapse: running_min.is_some_and(|m| delta < 0.1 * m),
    })
}
