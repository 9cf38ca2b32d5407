//! Shooting from the origin in the flux variables `(u, w)` with
//! `w = r^{N-1} |u'|^{p-2} u'`, and bisection on the amplitude `u(0)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::RadialGrid;
use crate::error::{Result, SolverError};
use crate::ode::{Method, State, Stepper, System};
use crate::problem::ProblemSpec;
use crate::scalar::{DoubleDouble, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// `|u|` and `|w|` fell below the decay tolerance before `r_max`.
    Decayed,
    BlewUp,
    /// Bounded orbit that turns away from zero without crossing it.
    Oscillating,
    ReachedRmax,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Terminal::Decayed => "decayed",
            Terminal::BlewUp => "blew_up",
            Terminal::Oscillating => "oscillating",
            Terminal::ReachedRmax => "reached_rmax",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    DoubleDouble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootConfig {
    pub method: Method,
    pub precision: Precision,
    pub rtol: f64,
    pub atol: f64,
    /// Start radius of the series initialization.
    pub h0: f64,
    pub max_step: f64,
    /// `|u|, |w|` below this stop the shot as decayed; zero disables the test.
    pub decay_tol: f64,
    pub blowup: f64,
    /// Bisection stops once `|a_hi - a_lo| <= bisect_rel_width * |a_hi|`.
    pub bisect_rel_width: f64,
    pub max_bisections: usize,
    /// Elements of the grid on `[0, r_max]` used for sampling and the energy.
    pub grid: usize,
    /// A trajectory that reaches `r_max` counts as decayed when
    /// `|u(r_max)| <= tail_tol * max|u|`.
    pub tail_tol: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            method: Method::DormandPrince,
            precision: Precision::Double,
            rtol: 1e-10,
            atol: 1e-20,
            h0: 1e-6,
            max_step: 0.1,
            decay_tol: 1e-8,
            blowup: 1e6,
            bisect_rel_width: 1e-10,
            max_bisections: 200,
            grid: 2000,
            tail_tol: 1e-6,
        }
    }
}

impl ShootConfig {
    /// Double-double extrapolation for targets that need the amplitude far
    /// beyond `f64` resolution, such as multi-node profiles on long
    /// truncated domains. The decay stop is disabled so that the Dirichlet
    /// condition at `r_max` is the target.
    pub fn extended() -> Self {
        ShootConfig {
            method: Method::BulirschStoer,
            precision: Precision::DoubleDouble,
            rtol: 1e-27,
            atol: 1e-40,
            max_step: 0.5,
            decay_tol: 0.0,
            bisect_rel_width: 1e-30,
            max_bisections: 400,
            ..ShootConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol", self.rtol),
            ("h0", self.h0),
            ("max_step", self.max_step),
            ("blowup", self.blowup),
            ("bisect_rel_width", self.bisect_rel_width),
            ("tail_tol", self.tail_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.atol >= 0.0 && self.decay_tol >= 0.0) {
            return Err(SolverError::InvalidArgument("atol and decay_tol must be nonnegative".into()));
        }
        if self.grid < 8 {
            return Err(SolverError::InvalidArgument("grid needs at least 8 elements".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSample {
    pub r: f64,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotTrajectory {
    pub amplitude: f64,
    /// Low word of the amplitude when it was resolved in double-double.
    pub amplitude_low: f64,
    #[serde(skip)]
    pub samples: Vec<ShotSample>,
    pub node_count: usize,
    pub crossings: Vec<f64>,
    pub terminal_behavior: Terminal,
    pub end_radius: f64,
    pub max_abs_u: f64,
    pub steps: usize,
}

impl ShotTrajectory {
    pub fn final_sample(&self) -> Option<&ShotSample> {
        self.samples.last()
    }

    /// Reached `r_max` with a negligible tail, or decayed earlier.
    pub fn decays(&self, tail_tol: f64) -> bool {
        match self.terminal_behavior {
            Terminal::Decayed => true,
            Terminal::ReachedRmax => self
                .final_sample()
                .is_some_and(|s| s.u.abs() <= tail_tol * self.max_abs_u),
            _ => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,u,w\n");
        for s in &self.samples {
            out.push_str(&format!("{:e},{:e},{:e}\n", s.r, s.u, s.w));
        }
        out
    }
}

/// The radial system `u' = sign(w)(|w|/r^{N-1})^{1/(p-1)}`,
/// `w' = r^{N-1}(|u|^{p-2}u - f(r,u))`.
struct RadialSystem<'a> {
    spec: &'a ProblemSpec,
}

impl RadialSystem<'_> {
    fn derivative<S: Real>(&self, r: S, w: S) -> S {
        let rn = r.powi(self.spec.dim() as i32 - 1);
        (w / rn).signed_pow(1.0 / (self.spec.p() - 1.0))
    }
}

impl<S: Real> System<S> for RadialSystem<'_> {
    fn rhs(&self, r: S, y: &State<S>) -> State<S> {
        let rn = r.powi(self.spec.dim() as i32 - 1);
        let up = (y[1] / rn).signed_pow(1.0 / (self.spec.p() - 1.0));
        let wp = rn * (y[0].signed_pow(self.spec.p() - 1.0) - self.spec.f_real(r, y[0]));
        [up, wp]
    }
}

/// Zero of the cubic Hermite interpolant on `[r0, r1]` with a sign change.
fn hermite_root(r0: f64, u0: f64, d0: f64, r1: f64, u1: f64, d1: f64) -> f64 {
    let h = r1 - r0;
    let eval = |t: f64| {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * u0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * u1 + (t3 - t2) * h * d1
    };
    let (mut a, mut b) = (0.0, 1.0);
    let fa = eval(a);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if (eval(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    r0 + 0.5 * (a + b) * h
}

/// Core shot in precision `S`. With `sample_at`, the integrator lands on
/// every listed radius and records it.
fn shoot_in<S: Real>(spec: &ProblemSpec, a: S, config: &ShootConfig, sample_at: Option<&[f64]>) -> Result<ShotTrajectory> {
    let sys = RadialSystem { spec };
    let p = spec.p();
    let n = spec.dim() as i32;
    let r_max = spec.r_max();
    let h0 = S::from_f64(config.h0);
    let c = a.signed_pow(p - 1.0) - spec.f_real(S::zero(), a);
    let w0 = h0.powi(n) * c / S::from_f64(n as f64);
    // leading correction u(h0) - a from u' = (c r / N)^{1/(p-1)}
    let u0 = a + (c / S::from_f64(n as f64)).signed_pow(1.0 / (p - 1.0))
        * h0.powf_nonneg(p / (p - 1.0))
        * S::from_f64((p - 1.0) / p);
    let mut stepper = Stepper::<S>::new(config.method, config.rtol, config.atol, 1e-3, config.max_step);

    let a64 = a.to_f64();
    let mut samples = vec![ShotSample { r: 0.0, u: a64, w: 0.0 }];
    let stops: Vec<f64> = match sample_at {
        Some(radii) => radii.iter().copied().filter(|&r| r > config.h0).collect(),
        None => vec![r_max],
    };

    let mut r = h0;
    let mut y: State<S> = [u0, w0];
    let mut crossings = Vec::new();
    let mut last_sign = a64.signum();
    let mut max_abs_u = a64.abs();
    let mut approaching = false;
    let mut turned = false;
    let mut terminal = Terminal::ReachedRmax;
    let mut steps = 0;

    'outer: for &stop in &stops {
        let stop_s = S::from_f64(stop);
        while r < stop_s {
            let (rn, yn) = stepper.step(&sys, r, &y, stop_s)?;
            steps += 1;
            let (r0, u0, w0) = (r.to_f64(), y[0].to_f64(), y[1].to_f64());
            let (r1, u1, w1) = (rn.to_f64(), yn[0].to_f64(), yn[1].to_f64());
            if !(u1.is_finite() && w1.is_finite()) || u1.abs() > config.blowup {
                terminal = Terminal::BlewUp;
                r = rn;
                y = yn;
                break 'outer;
            }
            max_abs_u = max_abs_u.max(u1.abs());
            if u1 != 0.0 && u1.signum() != last_sign {
                let d0 = sys.derivative(r0, w0);
                let d1 = sys.derivative(r1, w1);
                let root = if u0 == 0.0 { r0 } else { hermite_root(r0, u0, d0, r1, u1, d1) };
                crossings.push(root);
                last_sign = u1.signum();
                approaching = false;
            }
            // |u| has a local minimum away from zero
            let s = u1 * w1;
            if s < 0.0 {
                approaching = true;
            } else if s > 0.0 && approaching {
                turned = true;
                approaching = false;
            }
            r = rn;
            y = yn;
            if config.decay_tol > 0.0 && u1.abs() < config.decay_tol && w1.abs() < config.decay_tol {
                terminal = Terminal::Decayed;
                break 'outer;
            }
        }
        if sample_at.is_some() {
            samples.push(ShotSample {
                r: stop,
                u: y[0].to_f64(),
                w: y[1].to_f64(),
            });
        }
    }
    let end_radius = r.to_f64();
    if terminal == Terminal::ReachedRmax {
        let (u_end, w_end) = (y[0].to_f64(), y[1].to_f64());
        let stalled = crossings.is_empty() && u_end * w_end >= 0.0 && u_end.abs() > config.tail_tol * max_abs_u;
        if turned || stalled {
            terminal = Terminal::Oscillating;
        }
    }
    if sample_at.is_none() {
        samples.push(ShotSample {
            r: end_radius,
            u: y[0].to_f64(),
            w: y[1].to_f64(),
        });
    }
    let amplitude_low = (a - S::from_f64(a64)).to_f64();
    Ok(ShotTrajectory {
        amplitude: a64,
        amplitude_low,
        samples,
        node_count: crossings.len(),
        crossings,
        terminal_behavior: terminal,
        end_radius,
        max_abs_u,
        steps,
    })
}

fn energy_grid(spec: &ProblemSpec, config: &ShootConfig) -> Result<RadialGrid> {
    Ok(RadialGrid::build(spec.dim(), 0.0, spec.r_max(), config.grid, 1.0)?.with_boundary(false, true))
}

/// Integrates the radial equation from `r = 0` with `u(0) = a`, sampling on
/// the uniform grid of `config.grid` elements over `[0, r_max]`.
pub fn shoot(spec: &ProblemSpec, a: f64, config: &ShootConfig) -> Result<ShotTrajectory> {
    config.validate()?;
    if !(a.is_finite() && a != 0.0) {
        return Err(SolverError::InvalidArgument(format!("amplitude {a} must be finite and nonzero")));
    }
    let grid = energy_grid(spec, config)?;
    match config.precision {
        Precision::Double => shoot_in(spec, a, config, Some(grid.nodes())),
        Precision::DoubleDouble => shoot_in(spec, DoubleDouble::from_f64(a), config, Some(grid.nodes())),
    }
}

/// Energy of a sampled trajectory on the uniform grid, with the tail past a
/// decay stop set to zero and the Dirichlet value at `r_max`.
pub fn trajectory_energy(spec: &ProblemSpec, trajectory: &ShotTrajectory, config: &ShootConfig) -> Result<f64> {
    let grid = energy_grid(spec, config)?;
    let mut values: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, _)| trajectory.samples.get(i).map_or(0.0, |s| s.u))
        .collect();
    if let Some(last) = values.last_mut() {
        *last = 0.0;
    }
    Ok(grid.energy_values(spec, &values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub k: usize,
    pub amplitude: f64,
    pub amplitude_low: f64,
    /// Final bracket, `k` crossings at the first end and more at the second.
    pub bracket: [f64; 2],
    pub bisections: usize,
    pub energy: f64,
    pub trajectory: ShotTrajectory,
}

impl OracleSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.trajectory.crossings
    }
}

/// Bisects on the amplitude for the transition from `k` to more than `k`
/// sign changes on `(0, r_max]`, and returns the trajectory on the `k` side.
pub fn find_k_node_profile(
    spec: &ProblemSpec,
    k: usize,
    bracket: (f64, f64),
    config: &ShootConfig,
) -> Result<OracleSolution> {
    config.validate()?;
    let (a, b) = bracket;
    if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 || a.signum() != b.signum() || a == b {
        return Err(SolverError::InvalidArgument(format!(
            "bracket [{a}, {b}] must have distinct nonzero endpoints of one sign"
        )));
    }
    match config.precision {
        Precision::Double => bisect::<f64>(spec, k, bracket, config),
        Precision::DoubleDouble => bisect::<DoubleDouble>(spec, k, bracket, config),
    }
}

fn bisect<S: Real>(spec: &ProblemSpec, k: usize, bracket: (f64, f64), config: &ShootConfig) -> Result<OracleSolution> {
    let (a, b) = if bracket.0.abs() <= bracket.1.abs() { bracket } else { (bracket.1, bracket.0) };
    // bisection shots run to r_max so that both sides stay distinguishable
    let probe = ShootConfig {
        decay_tol: 0.0,
        ..config.clone()
    };
    let count = |x: S| -> Result<usize> { Ok(shoot_in(spec, x, &probe, None)?.node_count) };
    let mut lo = S::from_f64(a);
    let mut hi = S::from_f64(b);
    let n_lo = count(lo)?;
    let n_hi = count(hi)?;
    if !(n_lo <= k && n_hi > k) {
        return Err(SolverError::BracketInvalid {
            a_lo: a,
            a_hi: b,
            k,
            n_lo,
            n_hi,
        });
    }
    let half = S::from_f64(0.5);
    let mut bisections = 0;
    while bisections < config.max_bisections {
        let width = (hi - lo).abs().to_f64();
        if width <= config.bisect_rel_width * hi.abs().to_f64() {
            break;
        }
        let mid = lo + (hi - lo) * half;
        if mid == lo || mid == hi {
            break;
        }
        bisections += 1;
        if count(mid)? <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let grid = energy_grid(spec, config)?;
    let trajectory = shoot_in(spec, lo, config, Some(grid.nodes()))?;
    log::debug!(
        "bisection: a = {:e} after {bisections} steps, {} crossings, {}",
        trajectory.amplitude,
        trajectory.node_count,
        trajectory.terminal_behavior
    );
    if trajectory.node_count != k || !trajectory.decays(config.tail_tol) {
        return Err(SolverError::NoDecay { k });
    }
    let energy = trajectory_energy(spec, &trajectory, config)?;
    Ok(OracleSolution {
        k,
        amplitude: trajectory.amplitude,
        amplitude_low: trajectory.amplitude_low,
        bracket: [lo.to_f64(), hi.to_f64()],
        bisections,
        energy,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub node_count: usize,
    pub terminal_behavior: Terminal,
}

/// Shoots `n` amplitudes evenly spaced over `[a_min, a_max]` in parallel.
pub fn sweep(spec: &ProblemSpec, a_min: f64, a_max: f64, n: usize, config: &ShootConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if n < 2 || !(a_min < a_max) {
        return Err(SolverError::InvalidArgument("sweep needs n >= 2 and a_min < a_max".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let a = a_min + (a_max - a_min) * i as f64 / (n - 1) as f64;
            if a == 0.0 {
                return Ok(None);
            }
            let t = match config.precision {
                Precision::Double => shoot_in(spec, a, config, None)?,
                Precision::DoubleDouble => shoot_in(spec, DoubleDouble::from_f64(a), config, None)?,
            };
            Ok(Some(SweepRow {
                amplitude: a,
                node_count: t.node_count,
                terminal_behavior: t.terminal_behavior,
            }))
        })
        .collect::<Result<Vec<_>>>()
        .map(|rows| rows.into_iter().flatten().collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("a,node_count,terminal_behavior\n");
    for row in rows {
        out.push_str(&format!("{:e},{},{}\n", row.amplitude, row.node_count, row.terminal_behavior));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soliton() -> ProblemSpec {
        ProblemSpec::power(2.0, 1, 40.0, 1.0, 4.0).unwrap()
    }

    #[test]
    fn homoclinic_amplitude_tracks_sech() {
        let config = ShootConfig {
            decay_tol: 1e-8,
            ..ShootConfig::extended()
        };
        let t = shoot(&soliton(), 2f64.sqrt(), &config).unwrap();
        // u = √2 sech r
        for s in t.samples.iter().filter(|s| s.r <= 8.0) {
            assert!((s.u - 2f64.sqrt() / s.r.cosh()).abs() < 1e-12, "{s:?}");
        }
        // the double nearest √2 lies above the separatrix by about 1e-16
        assert!(t.crossings.iter().all(|&r| r > 19.0), "{:?}", t.crossings);
    }

    #[test]
    fn bisected_soliton_decays() {
        let config = ShootConfig {
            decay_tol: 1e-8,
            ..ShootConfig::extended()
        };
        let s = find_k_node_profile(&soliton(), 0, (1.3, 1.5), &config).unwrap();
        assert!((s.amplitude - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.trajectory.terminal_behavior, Terminal::Decayed);
        assert_eq!(s.trajectory.node_count, 0);
        assert!((s.energy - 2.0 / 3.0).abs() < 1e-3, "{}", s.energy);
    }

    #[test]
    fn center_is_oscillating() {
        let t = shoot(&soliton(), 1.0, &ShootConfig::default()).unwrap();
        assert_eq!(t.node_count, 0);
        assert_eq!(t.terminal_behavior, Terminal::Oscillating);
        let t = shoot(&soliton(), 1.2, &ShootConfig::default()).unwrap();
        assert_eq!(t.terminal_behavior, Terminal::Oscillating);
    }

    #[test]
    fn large_amplitude_crosses() {
        let spec = ProblemSpec::power(2.0, 1, 20.0, 1.0, 4.0).unwrap();
        let t = shoot(&spec, 2.0, &ShootConfig::default()).unwrap();
        assert!(t.node_count >= 1);
        assert!(t.crossings[0] < 20.0);
    }

    #[test]
    fn negative_amplitude_mirrors() {
        let c = ShootConfig::default();
        let plus = shoot(&soliton(), 2.0, &c).unwrap();
        let minus = shoot(&soliton(), -2.0, &c).unwrap();
        assert_eq!(plus.crossings, minus.crossings);
        for (a, b) in plus.samples.iter().zip(&minus.samples) {
            assert_eq!(a.u, -b.u);
        }
    }

    #[test]
    fn hermite_root_of_line() {
        let r = hermite_root(1.0, -1.0, 2.0, 2.0, 1.0, 2.0);
        assert!((r - 1.5).abs() < 1e-14);
    }

    #[test]
    fn bracket_must_straddle() {
        let err = find_k_node_profile(&soliton(), 0, (1.0, 1.2), &ShootConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::BracketInvalid { n_lo: 0, n_hi: 0, .. }), "{err:?}");
        let err = find_k_node_profile(&soliton(), 0, (-1.0, 1.2), &ShootConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::InvalidArgument(_)));
    }

    #[test]
    fn sweep_is_ordered() {
        let rows = sweep(&soliton(), 1.0, 2.0, 11, &ShootConfig::default()).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.windows(2).all(|w| w[0].amplitude < w[1].amplitude));
        assert!(sweep_csv(&rows).starts_with("a,node_count,terminal_behavior\n"));
    }
}
