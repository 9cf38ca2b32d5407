//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::SQRT_2;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nodal_core::annulus::energy_map;
use nodal_core::config::SolverConfig;
use nodal_core::discretization::{energy, pairing, RadialFunction, RadialGrid};
use nodal_core::nehari::{log_samples, project, verify_unique_max};
use nodal_core::nodal::{minimize_nodes, NodalSolution};
use nodal_core::problem::{NonlinearitySpec, Term};
use nodal_core::report::SolutionReport;
use nodal_core::shooting::{find_k_node_profile, OracleSolution, ShootConfig};
use nodal_core::{ProblemSpec, Sign};

const SEED: u64 = 12345;

struct Outcome {
    passed: bool,
    detail: String,
}

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = outcome.passed && in_time;
    println!(
        "{} {id} {name}: {} [{:.2} s, limit {} s{}]",
        if passed { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    passed
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `∫_0^∞ (u'²/2 + u²/2 - u⁴/4) dr` for `u = √2 sech r`, by composite Simpson.
fn soliton_energy_quadrature() -> f64 {
    let (n, end) = (200_000, 40.0);
    let h = end / n as f64;
    let density = |r: f64| {
        let s = 1.0 / r.cosh();
        let u = SQRT_2 * s;
        let du = -SQRT_2 * s * r.tanh();
        0.5 * du * du + 0.5 * u * u - 0.25 * u.powi(4)
    };
    let mut sum = density(0.0) + density(end);
    for i in 1..n {
        sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn soliton_spec(r_max: f64) -> ProblemSpec {
    ProblemSpec::power(2.0, 1, r_max, 1.0, 4.0).unwrap()
}

fn config(grid: usize) -> SolverConfig {
    SolverConfig {
        grid,
        seed: SEED,
        ..SolverConfig::default()
    }
}

fn oracle_config() -> ShootConfig {
    ShootConfig {
        grid: 6000,
        ..ShootConfig::extended()
    }
}

/// Neighbouring doubles of √2: the truncated multi-node amplitudes sit
/// within one ulp of the homoclinic one.
fn sqrt2_neighbours() -> (f64, f64) {
    (f64::from_bits(SQRT_2.to_bits() - 1), SQRT_2)
}

fn families() -> Vec<(&'static str, ProblemSpec)> {
    let two = |p: f64, a: f64, b: f64| {
        ProblemSpec::new(
            p,
            2,
            5.0,
            NonlinearitySpec {
                terms: vec![Term::new(1.0, a), Term::new(0.5, b)],
            },
        )
        .unwrap()
    };
    vec![
        ("p=2 q=4", ProblemSpec::power(2.0, 2, 5.0, 1.0, 4.0).unwrap()),
        ("p=2 q={3,5}", two(2.0, 3.0, 5.0)),
        ("p=3 q=5", ProblemSpec::power(3.0, 2, 5.0, 1.0, 5.0).unwrap()),
        ("p=3 q={4,6}", two(3.0, 4.0, 6.0)),
    ]
}

/// Random smooth profile on `[0.5, 5]` vanishing at both ends.
fn random_profile(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> RadialFunction {
    let modes: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
    let (a, b) = (grid.rho(), grid.sigma());
    RadialFunction::from_fn(grid.clone(), |r| {
        let x = std::f64::consts::PI * (r - a) / (b - a);
        scale
            * modes
                .iter()
                .enumerate()
                .map(|(j, c)| c * ((j + 1) as f64 * x).sin() / (j + 1) as f64)
                .sum::<f64>()
    })
}

fn test_grid() -> Arc<RadialGrid> {
    Arc::new(RadialGrid::build(2, 0.5, 5.0, 200, 1.0).unwrap())
}

fn nehari_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let grid = test_grid();
    let mut failures = Vec::new();
    let mut worst_idempotence: f64 = 0.0;
    for (name, spec) in families() {
        for i in 0..100 {
            let u = random_profile(&grid, &mut rng);
            let first = match project(&grid, &spec, &u) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("{name}#{i}: {e}"));
                    continue;
                }
            };
            let again = project(&grid, &spec, &first.projected).unwrap();
            worst_idempotence = worst_idempotence.max((again.t_star - 1.0).abs());
            if (again.t_star - 1.0).abs() > 1e-10 {
                failures.push(format!("{name}#{i}: reprojection t* = {}", again.t_star));
            }
            let peak = energy(&grid, &spec, &first.projected);
            if !(peak > 0.0) {
                failures.push(format!("{name}#{i}: projected energy {peak}"));
            }
            let scalings = log_samples(1.0, 0.1, 10.0, 64);
            if scalings
                .iter()
                .any(|&s| energy(&grid, &spec, &first.projected.scaled(s)) > peak * (1.0 + 1e-12))
            {
                failures.push(format!("{name}#{i}: ray not maximal at t*"));
            }
            let samples = log_samples(first.t_star, 0.1, 10.0, 64);
            let unique = verify_unique_max(&grid, &spec, &u, &samples).unwrap();
            if unique.sign_changes != 1 {
                failures.push(format!("{name}#{i}: {:?}", unique.violations));
            }
        }
    }
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "400 profiles, worst |t*-1| on reprojection {worst_idempotence:.1e} (tol 1e-10), {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    }
}

fn gradient_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let grid = test_grid();
    let specs = families();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let spec = &specs[i % specs.len()].1;
        let u = random_profile(&grid, &mut rng);
        let v = random_profile(&grid, &mut rng);
        let eps = 1e-4 / v.sup_norm();
        let plus = RadialFunction::new(grid.clone(), u.values().iter().zip(v.values()).map(|(a, b)| a + eps * b).collect()).unwrap();
        let minus = RadialFunction::new(grid.clone(), u.values().iter().zip(v.values()).map(|(a, b)| a - eps * b).collect()).unwrap();
        let fd = (energy(&grid, spec, &plus) - energy(&grid, spec, &minus)) / (2.0 * eps);
        let exact = pairing(&grid, spec, &u, &v);
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    Outcome {
        passed: worst < 1e-5,
        detail: format!("50 pairs, worst relative error {worst:.1e} (tol 1e-5)"),
    }
}

struct NodalRuns {
    c0: f64,
    solutions: Vec<(NodalSolution, SolutionReport)>,
    oracles: Vec<Result<OracleSolution, String>>,
}

fn nodal_runs() -> NodalRuns {
    let spec = soliton_spec(60.0);
    let cfg = config(2000);
    let c0 = minimize_nodes(&spec, 0, Sign::Plus, &cfg).unwrap().total_energy;
    let (below, at) = sqrt2_neighbours();
    let brackets = [(below, at), (at, 1.42)];
    let mut solutions = Vec::new();
    let mut oracles = Vec::new();
    for (k, bracket) in (1..=2).zip(brackets) {
        let sol = minimize_nodes(&spec, k, Sign::Plus, &cfg).unwrap();
        let report = SolutionReport::new(&spec, &sol, &cfg).unwrap();
        solutions.push((sol, report));
        oracles.push(find_k_node_profile(&spec, k, bracket, &oracle_config()).map_err(|e| e.to_string()));
    }
    NodalRuns { c0, solutions, oracles }
}

fn main() {
    println!("acceptance run, seed {SEED}");
    let mut all = true;
    let mut converged: Vec<(ProblemSpec, SolverConfig, NodalSolution)> = Vec::new();

    let mut c0 = f64::NAN;
    let target = soliton_energy_quadrature();
    all &= run(1, "soliton energy", Duration::from_secs(10), || {
        let spec = soliton_spec(40.0);
        let cfg = config(4000);
        let sol = minimize_nodes(&spec, 0, Sign::Plus, &cfg).unwrap();
        c0 = sol.total_energy;
        let passed = sol.converged && rel(c0, target) < 0.01;
        if sol.converged {
            converged.push((spec, cfg, sol));
        }
        Outcome {
            passed,
            detail: format!("c0 = {c0:.10}, quadrature {target:.10}, rel {:.1e} (tol 1e-2)", rel(c0, target)),
        }
    });

    all &= run(2, "oracle agreement", Duration::from_secs(5), || {
        let spec = soliton_spec(40.0);
        let shoot = ShootConfig {
            decay_tol: 1e-8,
            ..oracle_config()
        };
        match find_k_node_profile(&spec, 0, (1.3, 1.5), &shoot) {
            Ok(o) => Outcome {
                passed: (o.amplitude - SQRT_2).abs() < 1e-6 && rel(o.energy, c0) < 0.01,
                detail: format!(
                    "a* - sqrt2 = {:.1e} (tol 1e-6), energy {:.10} vs c0 rel {:.1e} (tol 1e-2), {}",
                    o.amplitude - SQRT_2,
                    o.energy,
                    rel(o.energy, c0),
                    o.trajectory.terminal_behavior
                ),
            },
            Err(e) => Outcome {
                passed: false,
                detail: e.to_string(),
            },
        }
    });

    let mut runs = None;
    all &= run(3, "nodal k=1,2 vs oracle", Duration::from_secs(120), || {
        let r = nodal_runs();
        let mut passed = true;
        let mut parts = Vec::new();
        let mut energies = vec![r.c0];
        for ((sol, report), oracle) in r.solutions.iter().zip(&r.oracles) {
            energies.push(report.c_k);
            passed &= report.node_count_observed == sol.k && report.converged;
            match oracle {
                Ok(o) => {
                    let node_gap = report
                        .nodes
                        .iter()
                        .zip(o.nodes())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    passed &= o.nodes().len() == sol.k && node_gap < 1e-2 && rel(o.energy, report.c_k) < 0.01;
                    parts.push(format!(
                        "k={} c={:.8} oracle {:.8} rel {:.1e}, nodes {:?} gap {:.1e}, count {}",
                        sol.k,
                        report.c_k,
                        o.energy,
                        rel(o.energy, report.c_k),
                        report.nodes,
                        node_gap,
                        report.node_count_observed
                    ));
                }
                Err(e) => {
                    passed = false;
                    parts.push(format!("k={} oracle failed: {e}", sol.k));
                }
            }
        }
        let ordered = energies.windows(2).all(|w| w[0] < w[1]);
        passed &= ordered;
        parts.push(format!("c0<c1<c2: {ordered}"));
        for (sol, report) in &r.solutions {
            if report.converged {
                converged.push((soliton_spec(60.0), config(2000), sol.clone()));
            }
        }
        runs = Some(r);
        Outcome {
            passed,
            detail: parts.join("; "),
        }
    });

    all &= run(4, "Nehari suite", Duration::from_secs(30), nehari_suite);
    all &= run(5, "gradient consistency", Duration::from_secs(10), gradient_consistency);

    all &= run(6, "certificate", Duration::from_secs(60), || {
        let Some(r) = &runs else {
            return Outcome {
                passed: false,
                detail: "no nodal runs".into(),
            };
        };
        let mut passed = true;
        let mut parts = Vec::new();
        for (_, report) in &r.solutions {
            let h = report.h_certificate.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            let bound = 1e-6 * report.norm_p;
            passed &= h < bound && report.certificate_flips;
            parts.push(format!(
                "k={} |h(1)| = {h:.1e} < {bound:.1e}, flips {}",
                report.k, report.certificate_flips
            ));
        }
        Outcome {
            passed,
            detail: parts.join("; "),
        }
    });

    all &= run(7, "p=3 property run", Duration::from_secs(120), || {
        let spec = ProblemSpec::power(3.0, 2, 20.0, 1.0, 5.0).unwrap();
        let mut passed = true;
        let mut parts = Vec::new();
        for k in 0..=1 {
            let mut energies = Vec::new();
            for m in [1000, 2000] {
                let cfg = config(m);
                let outcome = minimize_nodes(&spec, k, Sign::Plus, &cfg)
                    .and_then(|s| SolutionReport::new(&spec, &s, &cfg).map(|rep| (s, rep)));
                match outcome {
                    Ok((sol, rep)) => {
                        if rep.converged && m == 1000 {
                            converged.push((spec.clone(), cfg.clone(), sol));
                        }
                        let one_signed = rep.pieces.iter().all(|p| p.interior_min > 0.0);
                        let nehari = rep.pieces.iter().all(|p| p.nehari_residual < cfg.nehari_tol);
                        passed &= rep.glued_residual < 1e-8 && rep.node_count_observed == k && one_signed && nehari;
                        parts.push(format!(
                            "k={k} M={m} c={:.10} res {:.1e} nodes {:?} one-signed {one_signed} nehari {nehari}",
                            rep.c_k, rep.glued_residual, rep.nodes
                        ));
                        energies.push(rep.c_k);
                    }
                    Err(e) => {
                        passed = false;
                        parts.push(format!("k={k} M={m}: {e}"));
                    }
                }
            }
            if let [a, b] = energies[..] {
                passed &= rel(a, b) < 5e-3;
                parts.push(format!("k={k} doubling change {:.1e} (tol 5e-3)", rel(a, b)));
            }
        }
        Outcome {
            passed,
            detail: parts.join("; "),
        }
    });

    all &= run(8, "symmetry pair", Duration::from_secs(60), || {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        let mut failures = Vec::new();
        for (spec, cfg, plus) in &converged {
            // identical seed: the multiplicative noise field turns -u_0 into the mirrored start
            match minimize_nodes(spec, plus.k, Sign::Minus, cfg) {
                Ok(minus) if minus.glued.grid().nodes() == plus.glued.grid().nodes() => {
                    let gap = plus
                        .glued
                        .values()
                        .iter()
                        .zip(minus.glued.values())
                        .map(|(a, b)| (a + b).abs())
                        .fold(0.0, f64::max);
                    worst = worst.max(gap / plus.glued.sup_norm());
                    count += 1;
                }
                Ok(_) => failures.push(format!("k={} grids differ", plus.k)),
                Err(e) => failures.push(format!("k={}: {e}", plus.k)),
            }
        }
        Outcome {
            passed: failures.is_empty() && count > 0 && worst < 1e-8,
            detail: format!(
                "{count} runs, sup|u+ + u-| / sup|u+| = {worst:.1e} (tol 1e-8){}",
                failures.iter().map(|f| format!(", {f}")).collect::<String>()
            ),
        }
    });

    all &= run(9, "domain monotonicity", Duration::from_secs(60), || {
        let spec = ProblemSpec::power(2.0, 3, 10.0, 1.0, 4.0).unwrap();
        let cfg = config(2000);
        let tol = cfg.grad_tol;
        let mut passed = true;
        let mut rows = Vec::new();
        for rho in [0.0, 1.0, 2.0] {
            let values: Vec<f64> = [3.0, 5.0, 8.0]
                .iter()
                .map(|w| energy_map(&spec, rho, rho + w, Sign::Plus, &cfg).unwrap())
                .collect();
            passed &= values.windows(2).all(|w| w[1] <= w[0] + tol * w[0].abs());
            rows.push(format!("rho={rho}: {values:.6?}"));
        }
        Outcome {
            passed,
            detail: format!("{} (tol {tol:.0e} relative)", rows.join(", ")),
        }
    });

    println!("{}", if all { "all criteria passed" } else { "some criteria failed" });
    if !all {
        std::process::exit(1);
    }
}
