//! Sign-changing radial profiles glued from alternating-sign annulus ground
//! states, with node radii chosen to minimize the summed energy.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::annulus::{element_count, AnnulusCache, AnnulusSolution};
use crate::config::SolverConfig;
use crate::discretization::{RadialFunction, RadialGrid};
use crate::error::{Result, SolverError};
use crate::nehari::Ray;
use crate::nelder_mead;
use crate::problem::{ProblemSpec, Sign};

/// Values below this fraction of `‖u‖_∞` are ignored when counting nodes.
pub const NODE_THRESHOLD: f64 = 1e-10;
/// `max |h_j(1)| / ‖u‖^p` accepted at convergence.
pub const CERTIFICATE_TOL: f64 = 1e-6;
/// Relative radius step of the finite-difference flux Jacobian.
const FD_REL: f64 = 1e-3;
const POLISH_MAX_ITER: usize = 30;
/// Stop the flux polish below this log-flux mismatch.
const POLISH_TARGET: f64 = 1e-10;
/// Largest log-flux mismatch regarded as balanced.
const POLISH_ACCEPT: f64 = 1e-4;

/// Interior node radii `0 < ρ_1 < … < ρ_k < r_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NodeVector {
    rho: Vec<f64>,
}

impl NodeVector {
    /// Validates ordering and the minimum gap, counting `0` and `r_max` as
    /// sentinels.
    pub fn new(rho: Vec<f64>, r_max: f64, min_gap: f64) -> Result<Self> {
        let nv = NodeVector { rho };
        let gaps = nv.gaps(r_max);
        if nv.rho.iter().any(|r| !r.is_finite()) || gaps.iter().any(|&g| !(g > 0.0)) {
            return Err(SolverError::InvalidArgument(format!(
                "nodes {:?} are not strictly inside (0, {r_max}) and increasing",
                nv.rho
            )));
        }
        let smallest = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        if smallest < min_gap * (1.0 - 1e-9) {
            return Err(SolverError::CollapseDetected { min_gap, gaps });
        }
        Ok(nv)
    }

    /// `ρ_j = j r_max / (k + 1)`.
    pub fn equally_spaced(k: usize, r_max: f64) -> Self {
        NodeVector {
            rho: (1..=k).map(|j| j as f64 * r_max / (k + 1) as f64).collect(),
        }
    }

    /// Inverse of [`NodeVector::log_gaps`]; `None` when the gaps overrun `r_max`.
    pub fn from_log_gaps(g: &[f64], r_max: f64) -> Option<Self> {
        let mut acc = 0.0;
        let mut rho = Vec::with_capacity(g.len());
        for x in g {
            acc += x.exp();
            rho.push(acc);
        }
        (acc < r_max && acc.is_finite()).then_some(NodeVector { rho })
    }

    /// `log(ρ_{j+1} - ρ_j)` for `j = 0..k`; the last gap is implied by `r_max`.
    pub fn log_gaps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.rho
            .iter()
            .map(|&r| {
                let g = (r - prev).ln();
                prev = r;
                g
            })
            .collect()
    }

    pub fn k(&self) -> usize {
        self.rho.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.rho
    }

    /// All `k + 1` annulus widths.
    pub fn gaps(&self, r_max: f64) -> Vec<f64> {
        self.intervals(r_max).iter().map(|(a, b)| b - a).collect()
    }

    /// `[(ρ_j, ρ_{j+1})]` for `j = 0..=k`.
    pub fn intervals(&self, r_max: f64) -> Vec<(f64, f64)> {
        let mut ends = Vec::with_capacity(self.rho.len() + 2);
        ends.push(0.0);
        ends.extend_from_slice(&self.rho);
        ends.push(r_max);
        ends.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub simplex_iterations: usize,
    pub simplex_evaluations: usize,
    pub simplex_converged: bool,
    pub polish_iterations: usize,
    pub polish_converged: bool,
    /// Final `max_j |log|w_R| - log|w_L||` across the nodes.
    pub log_flux_mismatch: f64,
}

#[derive(Debug, Clone)]
pub struct NodalSolution {
    pub k: usize,
    pub leading: Sign,
    pub nodes: NodeVector,
    pub pieces: Vec<AnnulusSolution>,
    pub alphas: Vec<f64>,
    pub glued: RadialFunction,
    /// Energy of the glued profile on the global grid.
    pub total_energy: f64,
    pub h_certificate: Vec<f64>,
    pub node_count_observed: usize,
    pub crossings: Vec<f64>,
    /// `sup|residual| / ‖u‖^{p-1}` of the glued profile on the global grid.
    pub glued_residual: f64,
    pub search: SearchStats,
    pub converged: bool,
}

impl NodalSolution {
    /// `‖u‖^p` of the glued profile.
    pub fn norm_p(&self, spec: &ProblemSpec) -> f64 {
        self.glued.grid().norm_p_values(spec.p(), self.glued.values())
    }

    /// Turns a non-converged result into [`SolverError::MaxIterations`].
    pub fn require_converged(self, config: &SolverConfig) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SolverError::MaxIterations {
                cap: config.nelder_mead.max_iter,
                residual: self.glued_residual,
            })
        }
    }
}

/// Sign changes between consecutive values above `1e-10·‖u‖_∞`, and the
/// crossing radii: linear interpolation between neighbours, or the middle of a
/// run of skipped values.
pub fn count_nodes(u: &RadialFunction) -> Result<(usize, Vec<f64>)> {
    let sup = u.sup_norm();
    if !(sup > 0.0) || !sup.is_finite() {
        return Err(SolverError::AllBelowThreshold);
    }
    let thr = NODE_THRESHOLD * sup;
    let r = u.grid().nodes();
    let v = u.values();
    let mut crossings = Vec::new();
    let mut last: Option<usize> = None;
    for i in 0..v.len() {
        if v[i].abs() <= thr {
            continue;
        }
        if let Some(j) = last {
            if (v[j] > 0.0) != (v[i] > 0.0) {
                let x = if i == j + 1 {
                    r[j] + (r[i] - r[j]) * v[j] / (v[j] - v[i])
                } else {
                    0.5 * (r[j + 1] + r[i - 1])
                };
                crossings.push(x);
            }
        }
        last = Some(i);
    }
    Ok((crossings.len(), crossings))
}

/// Concatenates `α_j`-scaled pieces on one grid; shared nodes carry zero.
pub fn assemble_candidate(
    spec: &ProblemSpec,
    nodes: &NodeVector,
    pieces: &[AnnulusSolution],
    alphas: &[f64],
    leading: Sign,
) -> Result<RadialFunction> {
    let intervals = nodes.intervals(spec.r_max());
    if pieces.len() != intervals.len() || alphas.len() != pieces.len() {
        return Err(SolverError::InvalidArgument(format!(
            "{} pieces and {} alphas for {} annuli",
            pieces.len(),
            alphas.len(),
            intervals.len()
        )));
    }
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(SolverError::InvalidArgument("alphas must be positive".into()));
    }
    let mut radii = Vec::new();
    let mut values = Vec::new();
    for (j, (piece, &(a, b))) in pieces.iter().zip(&intervals).enumerate() {
        let want = leading.alternate(j);
        let s = want.value();
        if piece.sign != want || piece.profile.values().iter().any(|v| s * v < 0.0) {
            return Err(SolverError::SignPatternViolation { piece: j });
        }
        let tol = 1e-12 * spec.r_max();
        if (piece.rho - a).abs() > tol || (piece.sigma - b).abs() > tol {
            return Err(SolverError::InvalidArgument(format!(
                "piece {j} lives on [{}, {}], expected [{a}, {b}]",
                piece.rho, piece.sigma
            )));
        }
        // the node shared with the previous piece is already present
        let skip = usize::from(j > 0);
        radii.extend_from_slice(&piece.grid().nodes()[skip..]);
        values.extend(piece.profile.values()[skip..].iter().map(|v| alphas[j] * v));
        if j + 1 < pieces.len() {
            *radii.last_mut().unwrap() = b;
            *values.last_mut().unwrap() = 0.0;
        }
    }
    let grid = Arc::new(RadialGrid::from_nodes(spec.dim(), radii)?);
    RadialFunction::new(grid, values)
}

/// `h_j(s) = ⟨J'(s_j α_j u_j), s_j α_j u_j⟩` on annulus `j`.
pub fn h_certificate(spec: &ProblemSpec, solution: &NodalSolution, s: &[f64], tau: f64) -> Result<Vec<f64>> {
    if s.len() != solution.pieces.len() {
        return Err(SolverError::InvalidArgument(format!(
            "{} scalings for {} pieces",
            s.len(),
            solution.pieces.len()
        )));
    }
    if s.iter().any(|&x| !(x >= 1.0 - tau - 1e-12 && x <= 1.0 + tau + 1e-12)) {
        return Err(SolverError::InvalidArgument(format!(
            "scalings must lie in [{}, {}]",
            1.0 - tau,
            1.0 + tau
        )));
    }
    solution
        .pieces
        .iter()
        .zip(&solution.alphas)
        .zip(s)
        .map(|((piece, &alpha), &sj)| {
            let grid = piece.grid();
            let ray = Ray::new(grid, spec, piece.profile.values())?;
            let t = sj * alpha;
            Ok(t * ray.phi(t))
        })
        .collect()
}

/// `(h_j(1 - τ), h_j(1 + τ))` for each piece; a degree-consistent window has
/// the first positive and the second negative.
pub fn certificate_window(spec: &ProblemSpec, solution: &NodalSolution, tau: f64) -> Result<Vec<(f64, f64)>> {
    let n = solution.pieces.len();
    let lower = h_certificate(spec, solution, &vec![1.0 - tau; n], tau)?;
    let upper = h_certificate(spec, solution, &vec![1.0 + tau; n], tau)?;
    Ok(lower.into_iter().zip(upper).collect())
}

/// `E(ρ) = Σ_j c^{±}(ρ_j, ρ_{j+1})` with a fresh cache.
pub fn total_energy(spec: &ProblemSpec, nodes: &NodeVector, leading: Sign, config: &SolverConfig) -> Result<f64> {
    config.validate()?;
    let cache = AnnulusCache::new();
    let pieces = solve_pieces(spec, nodes, leading, config, &cache, &[], None)?;
    Ok(pieces.iter().map(|p| p.energy).sum())
}

fn solve_pieces(
    spec: &ProblemSpec,
    nodes: &NodeVector,
    leading: Sign,
    config: &SolverConfig,
    cache: &AnnulusCache,
    warm: &[Arc<AnnulusSolution>],
    elements: Option<&[usize]>,
) -> Result<Vec<Arc<AnnulusSolution>>> {
    nodes
        .intervals(spec.r_max())
        .into_par_iter()
        .enumerate()
        .map(|(j, (a, b))| {
            let sign = leading.alternate(j);
            let hint = warm.get(j).map(|w| w.as_ref());
            match elements {
                Some(m) => cache.solve_with_elements(spec, a, b, sign, m[j], config, hint),
                None => cache.solve(spec, a, b, sign, config, hint),
            }
        })
        .collect()
}

/// `log|w_R|` of piece `j-1` minus `log|w_L|` of piece `j` at each node.
fn log_flux_mismatch(spec: &ProblemSpec, pieces: &[Arc<AnnulusSolution>]) -> Vec<f64> {
    pieces
        .windows(2)
        .map(|w| {
            let (_, right) = w[0].boundary_fluxes(spec);
            let (left, _) = w[1].boundary_fluxes(spec);
            right.abs().ln() - left.abs().ln()
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `E` over `k` nodes, then balances the boundary fluxes and
/// assembles the glued profile. `leading` is the sign of the innermost piece.
pub fn minimize_nodes(spec: &ProblemSpec, k: usize, leading: Sign, config: &SolverConfig) -> Result<NodalSolution> {
    config.validate()?;
    let r_max = spec.r_max();
    let min_gap = config.min_gap(r_max);
    let start = NodeVector::equally_spaced(k, r_max);
    let start = NodeVector::new(start.rho, r_max, min_gap)?;
    let cache = AnnulusCache::new();
    let mut stats = SearchStats::default();

    // simplex search in log-gap coordinates, warm-starting from the best pieces
    let mut best: Option<(f64, Vec<Arc<AnnulusSolution>>)> = None;
    let mut failure: Option<SolverError> = None;
    let objective = |x: &[f64]| -> f64 {
        let Some(nodes) = NodeVector::from_log_gaps(x, r_max) else {
            return f64::INFINITY;
        };
        if nodes.gaps(r_max).iter().any(|&g| g < min_gap) {
            return f64::INFINITY;
        }
        let warm = best.as_ref().map(|b| b.1.clone()).unwrap_or_default();
        match solve_pieces(spec, &nodes, leading, config, &cache, &warm, None) {
            Ok(pieces) => {
                let e: f64 = pieces.iter().map(|p| p.energy).sum();
                if best.as_ref().map_or(true, |b| e < b.0) {
                    best = Some((e, pieces));
                }
                e
            }
            Err(SolverError::DegenerateAnnulus { .. }) => f64::INFINITY,
            Err(err) => {
                failure.get_or_insert(err);
                f64::INFINITY
            }
        }
    };
    let nm = &config.nelder_mead;
    let result = nelder_mead::minimize(objective, &start.log_gaps(), nm.simplex_scale, nm.energy_tol, nm.max_iter);
    if let Some(err) = failure {
        return Err(err);
    }
    stats.simplex_iterations = result.iterations;
    stats.simplex_evaluations = result.evaluations;
    stats.simplex_converged = result.converged;
    let mut nodes = NodeVector::from_log_gaps(&result.x, r_max).expect("finite simplex optimum is feasible");
    let gaps = nodes.gaps(r_max);
    if gaps.iter().any(|&g| g <= 2.0 * min_gap) {
        return Err(SolverError::CollapseDetected { min_gap, gaps });
    }
    log::info!(
        "simplex: E = {:.12} after {} iterations, nodes {:?}",
        result.value,
        result.iterations,
        nodes.radii()
    );

    let fresh_counts = |nodes: &NodeVector| -> Result<Vec<usize>> {
        nodes
            .intervals(r_max)
            .iter()
            .map(|&(a, b)| element_count(spec, a, b, config))
            .collect()
    };
    let mut elements = fresh_counts(&nodes)?;
    let mut pieces = solve_pieces(spec, &nodes, leading, config, &cache, &[], Some(&elements))?;

    if k > 0 && config.flux_polish {
        let e_before: f64 = pieces.iter().map(|p| p.energy).sum();
        let mut trial_nodes = nodes.clone();
        let mut trial_pieces = pieces.clone();
        let mut mismatch = f64::INFINITY;
        // a second pass re-balances after the element counts follow the nodes
        for _ in 0..2 {
            let outcome = polish(spec, trial_nodes, leading, config, &cache, &elements, trial_pieces, min_gap)?;
            stats.polish_iterations += outcome.iterations;
            elements = fresh_counts(&outcome.nodes)?;
            trial_pieces = solve_pieces(spec, &outcome.nodes, leading, config, &cache, &outcome.pieces, Some(&elements))?;
            trial_nodes = outcome.nodes;
            mismatch = sup(&log_flux_mismatch(spec, &trial_pieces));
            if mismatch <= POLISH_TARGET {
                break;
            }
        }
        let e_after: f64 = trial_pieces.iter().map(|p| p.energy).sum();
        // energies closer than the simplex tolerance are indistinguishable
        if e_after <= e_before + config.nelder_mead.energy_tol {
            nodes = trial_nodes;
            pieces = trial_pieces;
            stats.polish_converged = mismatch <= POLISH_ACCEPT;
        } else {
            log::warn!("flux polish raised the energy from {e_before} to {e_after}; keeping the simplex optimum");
        }
    }
    stats.log_flux_mismatch = sup(&log_flux_mismatch(spec, &pieces));
    finish(spec, k, leading, nodes, pieces, stats)
}

struct PolishOutcome {
    nodes: NodeVector,
    pieces: Vec<Arc<AnnulusSolution>>,
    iterations: usize,
}

/// Newton iteration on the log-flux balance with element counts frozen and a
/// finite-difference Jacobian.
#[allow(clippy::too_many_arguments)]
fn polish(
    spec: &ProblemSpec,
    mut nodes: NodeVector,
    leading: Sign,
    config: &SolverConfig,
    cache: &AnnulusCache,
    elements: &[usize],
    mut pieces: Vec<Arc<AnnulusSolution>>,
    min_gap: f64,
) -> Result<PolishOutcome> {
    let r_max = spec.r_max();
    let k = nodes.k();
    let mut f = log_flux_mismatch(spec, &pieces);
    let mut iterations = 0;
    let feasible = |rho: &[f64]| -> Option<NodeVector> {
        NodeVector::new(rho.to_vec(), r_max, min_gap).ok()
    };
    while iterations < POLISH_MAX_ITER && sup(&f) > POLISH_TARGET {
        if f.iter().any(|x| !x.is_finite()) {
            break;
        }
        iterations += 1;
        let gaps = nodes.gaps(r_max);
        let mut jac = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            let step = FD_REL * gaps[i].min(gaps[i + 1]);
            let mut rho = nodes.radii().to_vec();
            rho[i] += step;
            let Some(shifted) = feasible(&rho) else {
                return Ok(PolishOutcome { nodes, pieces, iterations });
            };
            let p = solve_pieces(spec, &shifted, leading, config, cache, &pieces, Some(elements))?;
            let fi = log_flux_mismatch(spec, &p);
            for r in 0..k {
                jac[(r, i)] = (fi[r] - f[r]) / step;
            }
        }
        let Some(delta) = jac.lu().solve(&DVector::from_vec(f.clone())) else {
            break;
        };
        // keep every gap above half its current width
        let mut lambda: f64 = 1.0;
        let cur = nodes.radii();
        for j in 0..=k {
            let d_left = if j > 0 { -delta[j - 1] } else { 0.0 };
            let d_right = if j < k { -delta[j] } else { 0.0 };
            let shrink = d_left - d_right;
            if shrink > 0.5 * gaps[j] {
                lambda = lambda.min(0.5 * gaps[j] / shrink);
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let rho: Vec<f64> = cur.iter().zip(delta.iter()).map(|(r, d)| r - lambda * d).collect();
            if let Some(trial) = feasible(&rho) {
                let p = solve_pieces(spec, &trial, leading, config, cache, &pieces, Some(elements))?;
                let ft = log_flux_mismatch(spec, &p);
                if sup(&ft) < sup(&f) {
                    nodes = trial;
                    pieces = p;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
        log::debug!("polish {iterations}: mismatch {:.3e}, nodes {:?}", sup(&f), nodes.radii());
    }
    Ok(PolishOutcome {
        nodes,
        pieces,
        iterations,
    })
}

fn finish(
    spec: &ProblemSpec,
    k: usize,
    leading: Sign,
    nodes: NodeVector,
    pieces: Vec<Arc<AnnulusSolution>>,
    search: SearchStats,
) -> Result<NodalSolution> {
    let pieces: Vec<AnnulusSolution> = pieces.iter().map(|p| p.as_ref().clone()).collect();
    let alphas = pieces
        .iter()
        .map(|p| Ray::new(p.grid(), spec, p.profile.values())?.root())
        .collect::<Result<Vec<f64>>>()?;
    let glued = assemble_candidate(spec, &nodes, &pieces, &alphas, leading)?;
    let grid = glued.grid().clone();
    let p = spec.p();
    let total_energy = grid.energy_values(spec, glued.values());
    let norm_p = grid.norm_p_values(p, glued.values());
    let glued_residual = sup(&grid.residual_values(spec, glued.values())) / norm_p.powf((p - 1.0) / p);
    let (node_count_observed, crossings) = count_nodes(&glued)?;
    let mut solution = NodalSolution {
        k,
        leading,
        nodes,
        pieces,
        alphas,
        glued,
        total_energy,
        h_certificate: Vec::new(),
        node_count_observed,
        crossings,
        glued_residual,
        search,
        converged: false,
    };
    let ones = vec![1.0; solution.pieces.len()];
    solution.h_certificate = h_certificate(spec, &solution, &ones, 0.0)?;
    let search_ok = k == 0 || solution.search.simplex_converged || solution.search.polish_converged;
    solution.converged = solution.pieces.iter().all(|p| p.converged)
        && node_count_observed == k
        && sup(&solution.h_certificate) <= CERTIFICATE_TOL * norm_p
        && search_ok;
    Ok(solution)
}
