//! P1 finite elements on a radial interval `[ρ, σ]` with the `r^{N-1}` surface
//! weight folded into a two-point Gauss rule.
//!
//! Integrals are reported per unit solid angle: the sphere-area constant
//! `ω_{N-1}` is omitted throughout. For `N = 1` the weight is identically one
//! and `[0, L]` stands for the even half-line.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::problem::ProblemSpec;
use crate::tridiag::SymTridiag;
use crate::scalar::Real;

/// Regularization of `|u'|^{p-2}` for `p < 2`.
pub const GRADIENT_EPS: f64 = 1e-12;

const GAUSS_XI: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // 1/2 - 1/(2√3)
    0.5 + 0.288_675_134_594_812_9,
];

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: usize,
    nodes: Vec<f64>,
    /// Gauss points per element.
    qr: Vec<[f64; 2]>,
    /// Gauss weights per element, including the element length and `r^{N-1}`.
    qw: Vec<[f64; 2]>,
    left_dirichlet: bool,
    right_dirichlet: bool,
}

impl RadialGrid {
    /// Graded mesh of `m` elements on `[rho, sigma]`; element lengths grow
    /// geometrically toward `sigma` with last/first ratio `stretch`.
    ///
    /// Boundary conditions default to natural at `rho = 0`, zero Dirichlet at
    /// `rho > 0`, and zero Dirichlet at `sigma`.
    pub fn build(dim: usize, rho: f64, sigma: f64, m: usize, stretch: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho < sigma && sigma.is_finite()) {
            return Err(SolverError::InvalidGrid(format!(
                "need 0 <= rho < sigma < inf, got [{rho}, {sigma}]"
            )));
        }
        if m < 2 {
            return Err(SolverError::InvalidGrid(format!("need at least 2 elements, got {m}")));
        }
        if !(stretch.is_finite() && stretch > 0.0) {
            return Err(SolverError::InvalidGrid(format!("bad stretch factor {stretch}")));
        }
        let len = sigma - rho;
        let mut nodes: Vec<f64> = if (stretch - 1.0).abs() < 1e-14 {
            (0..=m).map(|i| rho + len * i as f64 / m as f64).collect()
        } else {
            let g = stretch.powf(1.0 / (m as f64 - 1.0));
            let total = (g.powi(m as i32) - 1.0) / (g - 1.0);
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(m + 1);
            out.push(rho);
            for i in 0..m {
                acc += g.powi(i as i32);
                out.push(rho + len * acc / total);
            }
            out
        };
        nodes[m] = sigma;
        Self::from_nodes(dim, nodes)
    }

    /// Grid on explicit, strictly increasing nodes.
    pub fn from_nodes(dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if dim < 1 {
            return Err(SolverError::InvalidGrid("dimension must be at least 1".into()));
        }
        if nodes.len() < 3 {
            return Err(SolverError::InvalidGrid("need at least 2 elements".into()));
        }
        if nodes[0] < 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::InvalidGrid(
                "nodes must be nonnegative and strictly increasing".into(),
            ));
        }
        let power = dim as i32 - 1;
        let (qr, qw): (Vec<_>, Vec<_>) = nodes
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                let r = [w[0] + GAUSS_XI[0] * h, w[0] + GAUSS_XI[1] * h];
                let wt = [0.5 * h * r[0].powi(power), 0.5 * h * r[1].powi(power)];
                (r, wt)
            })
            .unzip();
        let left_dirichlet = nodes[0] > 0.0;
        Ok(RadialGrid {
            dim,
            nodes,
            qr,
            qw,
            left_dirichlet,
            right_dirichlet: true,
        })
    }

    pub fn with_boundary(mut self, left_dirichlet: bool, right_dirichlet: bool) -> Self {
        self.left_dirichlet = left_dirichlet;
        self.right_dirichlet = right_dirichlet;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of elements `M`.
    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.nodes[0]
    }

    pub fn sigma(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn left_dirichlet(&self) -> bool {
        self.left_dirichlet
    }

    pub fn right_dirichlet(&self) -> bool {
        self.right_dirichlet
    }

    pub fn quadrature(&self) -> impl Iterator<Item = (&[f64; 2], &[f64; 2])> {
        self.qr.iter().zip(self.qw.iter())
    }

    /// Sum of all quadrature weights, `∫_ρ^σ r^{N-1} dr`.
    pub fn total_weight(&self) -> f64 {
        self.qw.iter().map(|w| w[0] + w[1]).sum()
    }

    pub fn is_constrained(&self, i: usize) -> bool {
        (i == 0 && self.left_dirichlet) || (i + 1 == self.nodes.len() && self.right_dirichlet)
    }

    /// Applies the Dirichlet constraints to nodal values.
    pub fn constrain(&self, values: &mut [f64]) {
        if self.left_dirichlet {
            values[0] = 0.0;
        }
        if self.right_dirichlet {
            *values.last_mut().unwrap() = 0.0;
        }
    }

    #[inline]
    fn element(&self, e: usize, u: &[f64]) -> (f64, f64, [f64; 2], [f64; 2], [f64; 2]) {
        let h = self.nodes[e + 1] - self.nodes[e];
        let slope = (u[e + 1] - u[e]) / h;
        let ug = [
            u[e] + GAUSS_XI[0] * (u[e + 1] - u[e]),
            u[e] + GAUSS_XI[1] * (u[e + 1] - u[e]),
        ];
        (h, slope, ug, self.qr[e], self.qw[e])
    }

    // ---- slice kernels; the public API wraps these ----

    pub(crate) fn energy_values(&self, spec: &ProblemSpec, u: &[f64]) -> f64 {
        let p = spec.p();
        let mut total = 0.0;
        for e in 0..self.elements() {
            let (_, s, ug, rg, wg) = self.element(e, u);
            let mut acc = grad_density(p, s) * (wg[0] + wg[1]);
            for g in 0..2 {
                acc += wg[g] * (Real::abs_pow(ug[g], p) / p - spec.big_f(rg[g], ug[g]));
            }
            total += acc;
        }
        total
    }

    pub(crate) fn pairing_values(&self, spec: &ProblemSpec, u: &[f64], v: &[f64]) -> f64 {
        let p = spec.p();
        let mut total = 0.0;
        for e in 0..self.elements() {
            let (h, s, ug, rg, wg) = self.element(e, u);
            let sv = (v[e + 1] - v[e]) / h;
            let vg = [
                v[e] + GAUSS_XI[0] * (v[e + 1] - v[e]),
                v[e] + GAUSS_XI[1] * (v[e + 1] - v[e]),
            ];
            let mut acc = grad_flux(p, s) * sv * (wg[0] + wg[1]);
            for g in 0..2 {
                acc += wg[g] * (signed_pow(ug[g], p - 1.0) - spec.f(rg[g], ug[g])) * vg[g];
            }
            total += acc;
        }
        total
    }

    /// Weak-form gradient against every hat function, boundary rows included.
    pub(crate) fn raw_residual_values(&self, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
        let p = spec.p();
        let mut res = vec![0.0; self.len()];
        for e in 0..self.elements() {
            let (h, s, ug, rg, wg) = self.element(e, u);
            let flux = grad_flux(p, s) * (wg[0] + wg[1]) / h;
            res[e] -= flux;
            res[e + 1] += flux;
            for g in 0..2 {
                let react = wg[g] * (signed_pow(ug[g], p - 1.0) - spec.f(rg[g], ug[g]));
                res[e] += react * (1.0 - GAUSS_XI[g]);
                res[e + 1] += react * GAUSS_XI[g];
            }
        }
        res
    }

    /// Per-row sum of the magnitudes of the terms entering the weak-form
    /// gradient; the natural scale against which a row has converged.
    pub(crate) fn residual_scale_values(&self, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
        let p = spec.p();
        let mut scale = vec![0.0; self.len()];
        for e in 0..self.elements() {
            let (h, s, ug, rg, wg) = self.element(e, u);
            let flux = (grad_flux(p, s) * (wg[0] + wg[1]) / h).abs();
            scale[e] += flux;
            scale[e + 1] += flux;
            for g in 0..2 {
                let a = wg[g] * signed_pow(ug[g], p - 1.0).abs();
                let b = wg[g] * spec.f(rg[g], ug[g]).abs();
                scale[e] += (a + b) * (1.0 - GAUSS_XI[g]);
                scale[e + 1] += (a + b) * GAUSS_XI[g];
            }
        }
        scale
    }

    pub(crate) fn residual_values(&self, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
        let mut r = self.raw_residual_values(spec, u);
        self.constrain(&mut r);
        r
    }

    /// `‖u‖^p = ∫ (|u'|^p + |u|^p) r^{N-1} dr`.
    pub(crate) fn norm_p_values(&self, p: f64, u: &[f64]) -> f64 {
        let mut total = 0.0;
        for e in 0..self.elements() {
            let (_, s, ug, _, wg) = self.element(e, u);
            total += Real::abs_pow(s, p) * (wg[0] + wg[1]);
            total += wg[0] * Real::abs_pow(ug[0], p) + wg[1] * Real::abs_pow(ug[1], p);
        }
        total
    }

    /// `∫ |u|^q r^{N-1} dr` (optionally with the radial coefficient of a term).
    pub(crate) fn moment_values(&self, q: f64, u: &[f64], coeff: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for e in 0..self.elements() {
            let (_, _, ug, rg, wg) = self.element(e, u);
            for g in 0..2 {
                total += wg[g] * coeff(rg[g]) * Real::abs_pow(ug[g], q);
            }
        }
        total
    }

    /// Hessian of the discrete energy. With `convex_only` the `-f_u` term is
    /// dropped and degenerate weights are floored, giving an SPD preconditioner.
    pub(crate) fn hessian_values(&self, spec: &ProblemSpec, u: &[f64], convex_only: bool) -> SymTridiag {
        let p = spec.p();
        let n = self.len();
        let mut mat = SymTridiag::zeros(n);
        // pointwise coefficients, weights applied afterwards
        let mut stiff = Vec::with_capacity(self.elements());
        let mut mass: Vec<[f64; 2]> = Vec::with_capacity(self.elements());
        for e in 0..self.elements() {
            let (_, s, ug, rg, _) = self.element(e, u);
            stiff.push(grad_curvature(p, s));
            let mut m = [0.0; 2];
            for g in 0..2 {
                m[g] = (p - 1.0) * mass_weight(p, ug[g]);
                if !convex_only {
                    m[g] -= spec.df_du(rg[g], ug[g]);
                }
            }
            mass.push(m);
        }
        if convex_only && p != 2.0 {
            let smax = stiff.iter().cloned().fold(0.0, f64::max);
            let mmax = mass.iter().map(|m| m[0].max(m[1])).fold(0.0, f64::max);
            let floor = 1e-8 * smax.max(mmax).max(f64::MIN_POSITIVE);
            stiff.iter_mut().for_each(|s| *s = s.max(floor));
            mass.iter_mut().for_each(|m| {
                m[0] = m[0].max(floor);
                m[1] = m[1].max(floor);
            });
        }
        for e in 0..self.elements() {
            let h = self.nodes[e + 1] - self.nodes[e];
            stiff[e] *= (self.qw[e][0] + self.qw[e][1]) / (h * h);
            mass[e][0] *= self.qw[e][0];
            mass[e][1] *= self.qw[e][1];
        }
        for e in 0..self.elements() {
            let k = stiff[e];
            mat.diag[e] += k;
            mat.diag[e + 1] += k;
            mat.off[e] -= k;
            for g in 0..2 {
                let a = 1.0 - GAUSS_XI[g];
                let b = GAUSS_XI[g];
                mat.diag[e] += mass[e][g] * a * a;
                mat.diag[e + 1] += mass[e][g] * b * b;
                mat.off[e] += mass[e][g] * a * b;
            }
        }
        if self.left_dirichlet {
            mat.pin(0);
        }
        if self.right_dirichlet {
            mat.pin(n - 1);
        }
        mat
    }
}

#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    Real::signed_pow(x, e)
}

/// `|u|^{p-2}`, regularized at zero for `p < 2`.
#[inline]
fn mass_weight(p: f64, u: f64) -> f64 {
    if p >= 2.0 {
        Real::abs_pow(u, p - 2.0)
    } else {
        (u * u + GRADIENT_EPS * GRADIENT_EPS).powf(0.5 * (p - 2.0))
    }
}

/// Energy density `(1/p)|s|^p` of the gradient term.
#[inline]
pub(crate) fn grad_density(p: f64, s: f64) -> f64 {
    if p >= 2.0 {
        Real::abs_pow(s, p) / p
    } else {
        let e2 = GRADIENT_EPS * GRADIENT_EPS;
        ((s * s + e2).powf(0.5 * p) - GRADIENT_EPS.powf(p)) / p
    }
}

/// `|s|^{p-2} s`.
#[inline]
pub(crate) fn grad_flux(p: f64, s: f64) -> f64 {
    if p == 2.0 {
        s
    } else if p > 2.0 {
        Real::abs_pow(s, p - 2.0) * s
    } else {
        (s * s + GRADIENT_EPS * GRADIENT_EPS).powf(0.5 * (p - 2.0)) * s
    }
}

/// `d/ds (|s|^{p-2} s)`.
#[inline]
fn grad_curvature(p: f64, s: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else if p > 2.0 {
        (p - 1.0) * Real::abs_pow(s, p - 2.0)
    } else {
        let e2 = GRADIENT_EPS * GRADIENT_EPS;
        (s * s + e2).powf(0.5 * (p - 4.0)) * ((p - 1.0) * s * s + e2)
    }
}

/// Nodal values of a radial profile on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SolverError::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(RadialFunction { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialFunction {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        RadialFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    pub fn interpolate(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r < nodes[0] || r > *nodes.last().unwrap() {
            return 0.0;
        }
        let i = match nodes.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        let (r0, r1) = (nodes[i - 1], nodes[i]);
        let t = (r - r0) / (r1 - r0);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }

    /// CSV with header `r,u`, one row per node, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,u\n");
        for (r, u) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r},{u}");
        }
        out
    }

    /// Whitespace-separated two-column data for plotting.
    pub fn to_plot_data(&self) -> String {
        let mut out = String::from("# r u\n");
        for (r, u) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r:.17e} {u:.17e}");
        }
        out
    }

    pub fn from_csv(dim: usize, text: &str) -> Result<Self> {
        let mut rs = Vec::new();
        let mut us = Vec::new();
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "r,u" => {}
            _ => return Err(SolverError::InvalidArgument("missing `r,u` header".into())),
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| SolverError::InvalidArgument(format!("bad row `{line}`")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| SolverError::InvalidArgument(format!("bad number `{s}`: {e}")))
            };
            rs.push(parse(a)?);
            us.push(parse(b)?);
        }
        let grid = Arc::new(RadialGrid::from_nodes(dim, rs)?);
        RadialFunction::new(grid, us)
    }

    /// Largest `|u|` on the outer 10% of the nodes relative to `‖u‖_∞`, if it
    /// exceeds `1e-6` (truncation radius too small).
    pub fn tail_warning(&self) -> Option<f64> {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return None;
        }
        let n = self.values.len();
        let start = n - (n / 10).max(1);
        let tail = self.values[start..].iter().fold(0.0, |m: f64, v| m.max(v.abs())) / sup;
        (tail > 1e-6).then_some(tail)
    }
}

fn check_same_grid(grid: &RadialGrid, u: &RadialFunction) {
    assert!(
        std::ptr::eq(grid, u.grid.as_ref()) || grid == u.grid.as_ref(),
        "function does not live on this grid"
    );
}

/// `J(u) = ∫ [(1/p)|u'|^p + (1/p)|u|^p - F(r,u)] r^{N-1} dr`.
pub fn energy(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction) -> f64 {
    check_same_grid(grid, u);
    grid.energy_values(spec, &u.values)
}

/// `⟨J'(u), v⟩ = ∫ [|u'|^{p-2}u'v' + |u|^{p-2}uv - f(r,u)v] r^{N-1} dr`.
pub fn pairing(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction, v: &RadialFunction) -> f64 {
    check_same_grid(grid, u);
    check_same_grid(grid, v);
    grid.pairing_values(spec, &u.values, &v.values)
}

/// Discrete weak-form gradient; Dirichlet rows are zeroed.
pub fn residual(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction) -> RadialFunction {
    check_same_grid(grid, u);
    RadialFunction {
        grid: u.grid.clone(),
        values: grid.residual_values(spec, &u.values),
    }
}

/// Weak-form gradient including the constrained boundary rows. At a solution,
/// the last entry equals the flux `σ^{N-1}|u'|^{p-2}u'(σ)` and the first equals
/// minus the flux at `ρ`.
pub fn raw_residual(grid: &RadialGrid, spec: &ProblemSpec, u: &RadialFunction) -> RadialFunction {
    check_same_grid(grid, u);
    RadialFunction {
        grid: u.grid.clone(),
        values: grid.raw_residual_values(spec, &u.values),
    }
}

/// `‖u‖ = (∫ (|u'|^p + |u|^p) r^{N-1} dr)^{1/p}`.
pub fn norm_w1p(grid: &RadialGrid, p: f64, u: &RadialFunction) -> f64 {
    check_same_grid(grid, u);
    grid.norm_p_values(p, &u.values).powf(1.0 / p)
}
