//! Adaptive one-step integrators for two-component systems, generic over the
//! working precision.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::scalar::Real;

pub type State<S> = [S; 2];

pub trait System<S: Real> {
    fn rhs(&self, r: S, y: &State<S>) -> State<S>;
}

impl<S: Real, F: Fn(S, &State<S>) -> State<S>> System<S> for F {
    fn rhs(&self, r: S, y: &State<S>) -> State<S> {
        self(r, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Embedded Runge–Kutta 4(5) pair of Dormand and Prince.
    DormandPrince,
    /// Gragg–Bulirsch–Stoer extrapolation of the modified midpoint rule.
    BulirschStoer,
}

/// Rows of the extrapolation tableau.
const GBS_COLUMNS: usize = 12;
const SAFETY: f64 = 0.9;

/// Step-size controlled integrator state.
#[derive(Debug, Clone)]
pub struct Stepper<S: Real> {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    h: S,
    /// Target column of the extrapolation tableau.
    column: usize,
    pub evaluations: usize,
    pub rejected: usize,
}

impl<S: Real> Stepper<S> {
    pub fn new(method: Method, rtol: f64, atol: f64, h_init: f64, h_max: f64) -> Self {
        Stepper {
            method,
            rtol,
            atol,
            h_max,
            h: S::from_f64(h_init.min(h_max)),
            column: 4,
            evaluations: 0,
            rejected: 0,
        }
    }

    /// Takes one accepted step from `r` without passing `r_stop`; returns the
    /// new radius and state.
    pub fn step<F: System<S>>(&mut self, sys: &F, r: S, y: &State<S>, r_stop: S) -> Result<(S, State<S>)> {
        let floor = 1e-14 * r.to_f64().abs().max(1e-6);
        loop {
            let remaining = r_stop - r;
            let mut h = self.h.min(S::from_f64(self.h_max));
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h.to_f64() < floor {
                return Err(SolverError::StepFailure { radius: r.to_f64() });
            }
            let (y_new, err, proposal) = match self.method {
                Method::DormandPrince => self.dopri(sys, r, y, h),
                Method::BulirschStoer => self.gbs(sys, r, y, h),
            };
            if err <= 1.0 {
                let r_new = if last { r_stop } else { r + h };
                // keep the controller's proposal when the step was clipped by r_stop
                if !last || proposal < h.to_f64() {
                    self.h = S::from_f64(proposal);
                }
                return Ok((r_new, y_new));
            }
            self.rejected += 1;
            self.h = S::from_f64(proposal.min(0.5 * h.to_f64()));
        }
    }

    fn error_norm(&self, y: &State<S>, y_new: &State<S>, diff: &State<S>) -> f64 {
        (0..2)
            .map(|i| {
                let scale = self.atol + self.rtol * y[i].to_f64().abs().max(y_new[i].to_f64().abs());
                diff[i].to_f64().abs() / scale
            })
            .fold(0.0, f64::max)
    }

    fn dopri<F: System<S>>(&mut self, sys: &F, r: S, y: &State<S>, h: S) -> (State<S>, f64, f64) {
        let c = |n: i64, d: i64| S::ratio(n, d);
        let at = |k: &[State<S>], coeffs: &[S]| -> State<S> {
            let mut out = *y;
            for (kj, &a) in k.iter().zip(coeffs) {
                for i in 0..2 {
                    out[i] = out[i] + h * a * kj[i];
                }
            }
            out
        };
        let mut k: Vec<State<S>> = Vec::with_capacity(7);
        k.push(sys.rhs(r, y));
        k.push(sys.rhs(r + h * c(1, 5), &at(&k, &[c(1, 5)])));
        k.push(sys.rhs(r + h * c(3, 10), &at(&k, &[c(3, 40), c(9, 40)])));
        k.push(sys.rhs(r + h * c(4, 5), &at(&k, &[c(44, 45), c(-56, 15), c(32, 9)])));
        k.push(sys.rhs(
            r + h * c(8, 9),
            &at(&k, &[c(19372, 6561), c(-25360, 2187), c(64448, 6561), c(-212, 729)]),
        ));
        k.push(sys.rhs(
            r + h,
            &at(&k, &[c(9017, 3168), c(-355, 33), c(46732, 5247), c(49, 176), c(-5103, 18656)]),
        ));
        let b5 = [c(35, 384), S::zero(), c(500, 1113), c(125, 192), c(-2187, 6784), c(11, 84)];
        let y5 = at(&k, &b5);
        k.push(sys.rhs(r + h, &y5));
        let e = [
            c(71, 57600),
            S::zero(),
            c(-71, 16695),
            c(71, 1920),
            c(-17253, 339200),
            c(22, 525),
            c(-1, 40),
        ];
        let mut diff = [S::zero(); 2];
        for (kj, &ej) in k.iter().zip(&e) {
            for i in 0..2 {
                diff[i] = diff[i] + h * ej * kj[i];
            }
        }
        self.evaluations += 7;
        let err = finite_or_inf(self.error_norm(y, &y5, &diff));
        let fac = if err == 0.0 { 5.0 } else { (SAFETY * err.powf(-0.2)).clamp(0.2, 5.0) };
        (y5, err, h.to_f64() * fac)
    }

    /// Extrapolates up to one column past the target; the target column and
    /// the next step follow the work per unit step.
    fn gbs<F: System<S>>(&mut self, sys: &F, r: S, y: &State<S>, h: S) -> (State<S>, f64, f64) {
        let f0 = sys.rhs(r, y);
        self.evaluations += 1;
        let h64 = h.to_f64();
        let target = self.column.clamp(2, GBS_COLUMNS - 2);
        let mut table: Vec<Vec<State<S>>> = Vec::with_capacity(GBS_COLUMNS);
        // evaluations to build column j: 1 + sum of 2(m+1)
        let cost: Vec<f64> = (0..GBS_COLUMNS).map(|j| (1 + (j + 1) * (j + 2)) as f64).collect();
        let mut proposal = vec![h64; GBS_COLUMNS];
        for j in 0..GBS_COLUMNS {
            let n = 2 * (j + 1);
            let row0 = self.midpoint(sys, r, y, &f0, h, n);
            let mut row = vec![row0];
            for m in 1..=j {
                let d = (2 * (j - m + 1)) as i64;
                let n = n as i64;
                let denom = S::ratio(n * n - d * d, d * d);
                let prev = &table[j - 1][m - 1];
                let cur = row[m - 1];
                row.push([
                    cur[0] + (cur[0] - prev[0]) / denom,
                    cur[1] + (cur[1] - prev[1]) / denom,
                ]);
            }
            if j == 0 {
                table.push(row);
                continue;
            }
            let a = row[j];
            let b = row[j - 1];
            let err = finite_or_inf(self.error_norm(y, &a, &[a[0] - b[0], a[1] - b[1]]));
            let fac = if err == 0.0 {
                4.0
            } else {
                (0.94 * (0.65 / err).powf(1.0 / (2 * j + 1) as f64)).clamp(0.02, 4.0)
            };
            proposal[j] = h64 * fac;
            let work = |i: usize| cost[i] / proposal[i];
            let cheapest = (1..=j).min_by(|&a, &b| work(a).total_cmp(&work(b))).unwrap_or(j);
            if err <= 1.0 && j + 1 >= target {
                let (column, next) = if cheapest == j && j + 1 < GBS_COLUMNS - 1 {
                    (j + 1, proposal[j] * cost[j + 1] / cost[j])
                } else {
                    (cheapest, proposal[cheapest])
                };
                self.column = column;
                return (a, err, next);
            }
            if j > target || j == GBS_COLUMNS - 1 {
                self.column = (cheapest + 1).min(GBS_COLUMNS - 2);
                return (a, err, proposal[cheapest]);
            }
            table.push(row);
        }
        unreachable!("the last column always returns")
    }

    fn midpoint<F: System<S>>(&mut self, sys: &F, r: S, y: &State<S>, f0: &State<S>, big_h: S, n: usize) -> State<S> {
        let h = big_h / S::from_f64(n as f64);
        let two_h = h + h;
        let mut z0 = *y;
        let mut z1 = [y[0] + h * f0[0], y[1] + h * f0[1]];
        for m in 1..n {
            let f = sys.rhs(r + h * S::from_f64(m as f64), &z1);
            let z2 = [z0[0] + two_h * f[0], z0[1] + two_h * f[1]];
            z0 = z1;
            z1 = z2;
        }
        let f = sys.rhs(r + big_h, &z1);
        self.evaluations += n;
        let half = S::from_f64(0.5);
        [
            half * (z1[0] + z0[0] + h * f[0]),
            half * (z1[1] + z0[1] + h * f[1]),
        ]
    }
}

fn finite_or_inf(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::INFINITY
    }
}

/// Integrates from `r0` to `r1`, returning the final state.
pub fn integrate<S: Real, F: System<S>>(
    stepper: &mut Stepper<S>,
    sys: &F,
    r0: S,
    y0: State<S>,
    r1: S,
) -> Result<State<S>> {
    let mut r = r0;
    let mut y = y0;
    while r < r1 {
        let (rn, yn) = stepper.step(sys, r, &y, r1)?;
        r = rn;
        y = yn;
    }
    Ok(y)
}
