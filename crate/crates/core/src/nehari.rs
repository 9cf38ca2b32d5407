//! Projection of a ray `{t u : t > 0}` onto the Nehari set `⟨J'(v), v⟩ = 0`.
//!
//! Along the ray, `φ(t) = ⟨J'(t u), u⟩` is positive for small `t` and negative
//! for large `t` when `f` is superlinear; its unique positive root `t*` is the
//! maximizer of `t ↦ J(t u)`.

use serde::Serialize;

use crate::discretization::{RadialFunction, RadialGrid};
use crate::error::{Result, SolverError};
use crate::problem::ProblemSpec;

/// Profiles with `‖u‖` below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-14;
/// Upper end of the bracket expansion.
pub const T_CAP: f64 = 1e8;
const BISECTION_REL_WIDTH: f64 = 1e-12;

/// Ray restricted energy and its derivative.
///
/// For `p >= 2` every term is homogeneous in `t`, so the ray is summarized by
/// `‖u‖^p` and one moment per nonlinearity term. For `p < 2` the regularized
/// gradient term is not homogeneous and the ray is evaluated on the grid.
pub(crate) struct Ray<'a> {
    grid: &'a RadialGrid,
    spec: &'a ProblemSpec,
    u: &'a [f64],
    norm_p: f64,
    moments: Option<Vec<(f64, f64)>>,
}

impl<'a> Ray<'a> {
    pub(crate) fn new(grid: &'a RadialGrid, spec: &'a ProblemSpec, u: &'a [f64]) -> Result<Self> {
        let p = spec.p();
        let norm_p = grid.norm_p_values(p, u);
        if !(norm_p.powf(1.0 / p) >= ZERO_NORM) {
            return Err(SolverError::ZeroInput {
                norm: norm_p.max(0.0).powf(1.0 / p),
            });
        }
        let moments = (p >= 2.0).then(|| {
            spec.terms()
                .iter()
                .map(|t| (t.q, grid.moment_values(t.q, u, |r| t.coefficient(r))))
                .collect()
        });
        Ok(Ray {
            grid,
            spec,
            u,
            norm_p,
            moments,
        })
    }

    pub(crate) fn norm_p(&self) -> f64 {
        self.norm_p
    }

    fn scaled(&self, t: f64) -> Vec<f64> {
        self.u.iter().map(|v| t * v).collect()
    }

    pub(crate) fn phi(&self, t: f64) -> f64 {
        let p = self.spec.p();
        match &self.moments {
            Some(m) => {
                t.powf(p - 1.0) * self.norm_p
                    - m.iter().map(|&(q, b)| t.powf(q - 1.0) * b).sum::<f64>()
            }
            None => self.grid.pairing_values(self.spec, &self.scaled(t), self.u),
        }
    }

    pub(crate) fn energy(&self, t: f64) -> f64 {
        let p = self.spec.p();
        match &self.moments {
            Some(m) => {
                t.powf(p) * self.norm_p / p - m.iter().map(|&(q, b)| t.powf(q) * b / q).sum::<f64>()
            }
            None => self.grid.energy_values(self.spec, &self.scaled(t)),
        }
    }

    /// Unique positive root of `φ` by bracketing and bisection.
    pub(crate) fn root(&self) -> Result<f64> {
        let (mut lo, mut hi);
        if self.phi(1.0) > 0.0 {
            lo = 1.0;
            hi = 2.0;
            while self.phi(hi) > 0.0 {
                lo = hi;
                hi *= 2.0;
                if hi > T_CAP {
                    return Err(SolverError::NoSignChange { t_max: T_CAP });
                }
            }
        } else {
            hi = 1.0;
            lo = 0.5;
            while self.phi(lo) <= 0.0 {
                hi = lo;
                lo *= 0.5;
                if lo < 1.0 / T_CAP {
                    return Err(SolverError::NoSignChange { t_max: T_CAP });
                }
            }
        }
        while hi - lo > BISECTION_REL_WIDTH * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Outcome of [`project`].
#[derive(Debug, Clone)]
pub struct ScalingResult {
    pub t_star: f64,
    pub projected: RadialFunction,
    pub energy_at_t_star: f64,
    pub phi_samples: Option<Vec<(f64, f64)>>,
}

/// `φ(t) = ⟨J'(t u), u⟩`.
pub fn phi(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(SolverError::InvalidArgument(format!("t = {t} must be positive")));
    }
    Ok(Ray::new(grid, spec, u.values())?.phi(t))
}

/// Rescales `u` onto the Nehari set.
pub fn project(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction) -> Result<ScalingResult> {
    let ray = Ray::new(grid, spec, u.values())?;
    let t_star = ray.root()?;
    let energy_at_t_star = ray.energy(t_star);
    Ok(ScalingResult {
        t_star,
        projected: u.scaled(t_star),
        energy_at_t_star,
        phi_samples: None,
    })
}

/// Like [`project`], also tabulating `φ` on `samples` logarithmically spaced
/// points in `[t*/10, 10 t*]`.
pub fn project_with_samples(
    grid: &RadialGrid,
    spec: &ProblemSpec,
    u: &RadialFunction,
    samples: usize,
) -> Result<ScalingResult> {
    let ray = Ray::new(grid, spec, u.values())?;
    let t_star = ray.root()?;
    let table = log_samples(t_star, 0.1, 10.0, samples)
        .into_iter()
        .map(|t| (t, ray.phi(t)))
        .collect();
    Ok(ScalingResult {
        t_star,
        projected: u.scaled(t_star),
        energy_at_t_star: ray.energy(t_star),
        phi_samples: Some(table),
    })
}

/// `n` points from `lo·center` to `hi·center`, equally spaced in `log t`.
pub fn log_samples(center: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = ((center * lo).ln(), (center * hi).ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

/// `|⟨J'(u), u⟩| / ‖u‖^p`.
pub fn nehari_residual(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction) -> Result<f64> {
    let ray = Ray::new(grid, spec, u.values())?;
    Ok(ray.phi(1.0).abs() / ray.norm_p())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub samples: usize,
    pub sign_changes: usize,
    pub unimodal: bool,
    pub violations: Vec<String>,
}

impl UniquenessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks on the sample `t_grid` that `φ` changes sign exactly once and that
/// `t ↦ J(t u)` rises then falls.
pub fn verify_unique_max(
    grid: &RadialGrid,
    spec: &ProblemSpec,
    u: &RadialFunction,
    t_grid: &[f64],
) -> Result<UniquenessReport> {
    let ray = Ray::new(grid, spec, u.values())?;
    let mut ts = t_grid.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let phis: Vec<f64> = ts.iter().map(|&t| ray.phi(t)).collect();
    let energies: Vec<f64> = ts.iter().map(|&t| ray.energy(t)).collect();

    let sign_changes = phis
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    // rises then falls: at most one switch from increasing to decreasing
    let mut descending = false;
    let mut unimodal = true;
    for w in energies.windows(2) {
        if w[1] < w[0] {
            descending = true;
        } else if descending && w[1] > w[0] {
            unimodal = false;
        }
    }
    let mut violations = Vec::new();
    if sign_changes != 1 {
        violations.push(format!("phi changes sign {sign_changes} times"));
    }
    if !unimodal {
        violations.push("t -> J(t u) is not unimodal on the sample".to_string());
    }
    Ok(UniquenessReport {
        samples: ts.len(),
        sign_changes,
        unimodal,
        violations,
    })
}

/// Slice-level projection used by the solvers.
pub(crate) fn project_values(grid: &RadialGrid, spec: &ProblemSpec, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let t = Ray::new(grid, spec, u)?.root()?;
    Ok((t, u.iter().map(|v| t * v).collect()))
}
