//! Machine-readable run reports. Every diagnostic is recomputed from the
//! emitted profiles, never copied from solver state.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::SolverConfig;
use crate::discretization::{residual, RadialFunction};
use crate::error::{Result, SolverError};
use crate::nehari::nehari_residual;
use crate::nodal::{certificate_window, count_nodes, h_certificate, NodalSolution, SearchStats, CERTIFICATE_TOL};
use crate::problem::{ProblemSpec, Sign};
use crate::shooting::{OracleSolution, ShootConfig, SweepRow, Terminal};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceReport {
    pub rho: f64,
    pub sigma: f64,
    pub sign: Sign,
    pub energy: f64,
    pub nehari_residual: f64,
    pub grad_residual: f64,
    pub interior_min: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub k: usize,
    pub leading: Sign,
    pub nodes: Vec<f64>,
    pub alphas: Vec<f64>,
    pub c_k: f64,
    pub pieces: Vec<PieceReport>,
    pub h_certificate: Vec<f64>,
    /// `(h_j(1 - τ), h_j(1 + τ))`.
    pub h_window: Vec<(f64, f64)>,
    pub certificate_flips: bool,
    pub node_count_observed: usize,
    pub crossings: Vec<f64>,
    pub glued_residual: f64,
    pub norm_p: f64,
    pub tail_warning: Option<f64>,
    pub search: SearchStats,
    pub converged: bool,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

impl SolutionReport {
    pub fn new(spec: &ProblemSpec, solution: &NodalSolution, config: &SolverConfig) -> Result<Self> {
        let p = spec.p();
        let glued = &solution.glued;
        let grid = glued.grid();
        let c_k = grid.energy_values(spec, glued.values());
        let norm_p = grid.norm_p_values(p, glued.values());
        let glued_residual = residual(grid, spec, glued).sup_norm() / norm_p.powf((p - 1.0) / p);
        let (node_count_observed, crossings) = count_nodes(glued)?;
        let ones = vec![1.0; solution.pieces.len()];
        let h = h_certificate(spec, solution, &ones, config.tau)?;
        let window = certificate_window(spec, solution, config.tau)?;
        let certificate_flips = window.iter().all(|&(lo, hi)| lo > 0.0 && hi < 0.0);

        let pieces = solution
            .pieces
            .iter()
            .map(|piece| {
                let g = piece.grid();
                let u = &piece.profile;
                let scale = g.norm_p_values(p, u.values()).powf((p - 1.0) / p);
                let grad_residual = residual(g, spec, u).sup_norm() / scale;
                let nehari = nehari_residual(g, spec, u)?;
                Ok(PieceReport {
                    rho: piece.rho,
                    sigma: piece.sigma,
                    sign: piece.sign,
                    energy: g.energy_values(spec, u.values()),
                    nehari_residual: nehari,
                    grad_residual,
                    interior_min: piece.interior_min(),
                    iterations: piece.iterations,
                    converged: grad_residual <= config.grad_tol && nehari <= config.nehari_tol,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let converged = pieces.iter().all(|p| p.converged)
            && node_count_observed == solution.k
            && sup(&h) <= CERTIFICATE_TOL * norm_p
            && solution.converged;
        Ok(SolutionReport {
            k: solution.k,
            leading: solution.leading,
            nodes: solution.nodes.radii().to_vec(),
            alphas: solution.alphas.clone(),
            c_k,
            pieces,
            h_certificate: h,
            h_window: window,
            certificate_flips,
            node_count_observed,
            crossings,
            glued_residual,
            norm_p,
            tail_warning: glued.tail_warning(),
            search: solution.search.clone(),
            converged,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub k: usize,
    pub amplitude: f64,
    pub amplitude_low: f64,
    pub bracket: [f64; 2],
    pub bisections: usize,
    pub energy: f64,
    pub nodes: Vec<f64>,
    pub terminal_behavior: Terminal,
    pub end_radius: f64,
    /// `|E_oracle - c_k| / |c_k|` when a variational solution is present.
    pub energy_gap: Option<f64>,
    /// Largest `|ρ_j^oracle - ρ_j|` when a variational solution is present.
    pub node_gap: Option<f64>,
}

impl OracleReport {
    pub fn new(oracle: &OracleSolution, variational: Option<&SolutionReport>) -> Self {
        let nodes = oracle.nodes().to_vec();
        let energy_gap = variational.map(|v| (oracle.energy - v.c_k).abs() / v.c_k.abs());
        let node_gap = variational.and_then(|v| {
            (v.nodes.len() == nodes.len()).then(|| {
                v.nodes
                    .iter()
                    .zip(&nodes)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
        });
        OracleReport {
            k: oracle.k,
            amplitude: oracle.amplitude,
            amplitude_low: oracle.amplitude_low,
            bracket: oracle.bracket,
            bisections: oracle.bisections,
            energy: oracle.energy,
            nodes,
            terminal_behavior: oracle.trajectory.terminal_behavior,
            end_radius: oracle.trajectory.end_radius,
            energy_gap,
            node_gap,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub solve_seconds: f64,
    pub oracle_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub spec: ProblemSpec,
    pub config: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shoot_config: Option<ShootConfig>,
    pub solution: Option<SolutionReport>,
    pub oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    pub error: Option<String>,
    pub converged: bool,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(spec: &ProblemSpec, config: &SolverConfig) -> Self {
        RunReport {
            spec: spec.clone(),
            config: config.clone(),
            shoot_config: None,
            solution: None,
            oracle: None,
            sweep: Vec::new(),
            error: None,
            converged: false,
            timing: Timing::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the timing block, for reproducibility comparisons.
    pub fn to_json_without_timing(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string_pretty(&value).expect("report serializes")
    }
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub report: PathBuf,
    pub profile_csv: Option<PathBuf>,
    pub profile_dat: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
}

fn io_err(path: &Path, err: std::io::Error) -> SolverError {
    SolverError::InvalidArgument(format!("cannot write {}: {err}", path.display()))
}

/// Writes `report.json`, and `profile.csv`/`profile.dat` when a profile is
/// given, into `dir`.
pub fn write_outputs(
    dir: &Path,
    report: &RunReport,
    profile: Option<&RadialFunction>,
    sweep_csv: Option<&str>,
) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, report.to_json()).map_err(|e| io_err(&report_path, e))?;
    let mut paths = OutputPaths {
        report: report_path,
        profile_csv: None,
        profile_dat: None,
        sweep_csv: None,
    };
    if let Some(u) = profile {
        let csv = dir.join("profile.csv");
        fs::write(&csv, u.to_csv()).map_err(|e| io_err(&csv, e))?;
        let dat = dir.join("profile.dat");
        fs::write(&dat, u.to_plot_data()).map_err(|e| io_err(&dat, e))?;
        paths.profile_csv = Some(csv);
        paths.profile_dat = Some(dat);
    }
    if let Some(text) = sweep_csv {
        let path = dir.join("sweep.csv");
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        paths.sweep_csv = Some(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodal::minimize_nodes;

    fn solved() -> (ProblemSpec, SolverConfig, NodalSolution) {
        let spec = ProblemSpec::power(2.0, 1, 12.0, 1.0, 4.0).unwrap();
        let config = SolverConfig {
            grid: 600,
            ..SolverConfig::default()
        };
        let sol = minimize_nodes(&spec, 1, Sign::Plus, &config).unwrap();
        (spec, config, sol)
    }

    #[test]
    fn report_recomputes_from_profiles() {
        let (spec, config, mut sol) = solved();
        let honest = SolutionReport::new(&spec, &sol, &config).unwrap();
        assert!(honest.converged);
        assert!(honest.certificate_flips);
        assert_eq!(honest.node_count_observed, 1);
        // stale solver state does not leak into the report
        sol.total_energy = -1.0;
        sol.glued_residual = 0.0;
        sol.node_count_observed = 9;
        let again = SolutionReport::new(&spec, &sol, &config).unwrap();
        assert_eq!(again.c_k, honest.c_k);
        assert_eq!(again.node_count_observed, 1);
        assert_eq!(again.glued_residual, honest.glued_residual);
    }

    #[test]
    fn json_has_documented_keys() {
        let (spec, config, sol) = solved();
        let mut run = RunReport::new(&spec, &config);
        run.solution = Some(SolutionReport::new(&spec, &sol, &config).unwrap());
        run.timing.solve_seconds = 1.5;
        let v: serde_json::Value = serde_json::from_str(&run.to_json()).unwrap();
        let s = &v["solution"];
        for key in ["k", "nodes", "alphas", "c_k", "pieces", "h_certificate", "node_count_observed", "converged"] {
            assert!(!s[key].is_null(), "missing {key}");
        }
        assert!(!run.to_json_without_timing().contains("solve_seconds"));
    }

    #[test]
    fn outputs_land_in_directory() {
        let (spec, config, sol) = solved();
        let dir = std::env::temp_dir().join(format!("nodal-report-{}", std::process::id()));
        let run = RunReport::new(&spec, &config);
        let paths = write_outputs(&dir, &run, Some(&sol.glued), None).unwrap();
        assert!(paths.report.exists());
        let csv = fs::read_to_string(paths.profile_csv.unwrap()).unwrap();
        assert!(csv.starts_with("r,u"));
        fs::remove_dir_all(&dir).unwrap();
    }
}
