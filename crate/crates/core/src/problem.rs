//! PDE instance description: exponent `p`, dimension `N`, truncation radius and
//! an odd power-type nonlinearity `f(r, u) = Σ λ_i(r) |u|^{q_i-2} u`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::scalar::Real;

/// Sign of a one-signed piece, or the branch `f^±` of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// Sign of piece `j` in a profile whose first piece has sign `self`.
    pub fn alternate(self, j: usize) -> Sign {
        if j % 2 == 0 {
            self
        } else {
            self.flip()
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Bounded radial modulation `(1 + num r²) / (1 + den r²)` of a coefficient.
///
/// Both parameters zero gives the constant 1; otherwise both must be positive so
/// that the factor stays between `min(1, num/den)` and `max(1, num/den)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialWeight {
    pub num: f64,
    pub den: f64,
}

impl RadialWeight {
    pub fn eval<S: Real>(&self, r: S) -> S {
        let r2 = r * r;
        (S::one() + S::from_f64(self.num) * r2) / (S::one() + S::from_f64(self.den) * r2)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.num.is_finite()
            && self.den.is_finite()
            && ((self.num == 0.0 && self.den == 0.0) || (self.num > 0.0 && self.den > 0.0));
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidSpec(format!(
                "radial weight (num={}, den={}) must be bounded and bounded away from zero",
                self.num, self.den
            )))
        }
    }
}

/// One term `λ(r) |u|^{q-2} u` of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub lambda: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<RadialWeight>,
}

impl Term {
    pub fn new(lambda: f64, q: f64) -> Self {
        Term {
            lambda,
            q,
            weight: None,
        }
    }

    #[inline]
    pub fn coefficient<S: Real>(&self, r: S) -> S {
        match &self.weight {
            Some(w) => S::from_f64(self.lambda) * w.eval(r),
            None => S::from_f64(self.lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub terms: Vec<Term>,
}

impl NonlinearitySpec {
    pub fn single(lambda: f64, q: f64) -> Self {
        NonlinearitySpec {
            terms: vec![Term::new(lambda, q)],
        }
    }

    pub fn max_exponent(&self) -> f64 {
        self.terms.iter().map(|t| t.q).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_exponent(&self) -> f64 {
        self.terms.iter().map(|t| t.q).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSpec {
    p: f64,
    dim: usize,
    r_max: f64,
    terms: Vec<Term>,
}

/// Immutable description of `-Δ_p u + |u|^{p-2} u = f(|x|, u)` on `ℝ^N`,
/// truncated to the ball of radius `r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProblemSpec {
    p: f64,
    dim: usize,
    r_max: f64,
    nonlinearity: NonlinearitySpec,
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = SolverError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        ProblemSpec::new(raw.p, raw.dim, raw.r_max, NonlinearitySpec { terms: raw.terms })
    }
}

impl From<ProblemSpec> for RawSpec {
    fn from(s: ProblemSpec) -> Self {
        RawSpec {
            p: s.p,
            dim: s.dim,
            r_max: s.r_max,
            terms: s.nonlinearity.terms,
        }
    }
}

/// Critical Sobolev exponent `Np/(N-p)`, infinite when `N <= p`.
pub fn critical_exponent(p: f64, dim: usize) -> f64 {
    let n = dim as f64;
    if n > p {
        n * p / (n - p)
    } else {
        f64::INFINITY
    }
}

impl ProblemSpec {
    pub fn new(p: f64, dim: usize, r_max: f64, nonlinearity: NonlinearitySpec) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(SolverError::InvalidSpec(format!("p = {p} must exceed 1")));
        }
        if dim < 1 {
            return Err(SolverError::InvalidSpec("dimension must be at least 1".into()));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(SolverError::InvalidSpec(format!("r_max = {r_max} must be positive")));
        }
        if nonlinearity.terms.is_empty() {
            return Err(SolverError::InvalidSpec("nonlinearity has no terms".into()));
        }
        let p_star = critical_exponent(p, dim);
        for t in &nonlinearity.terms {
            if !(t.lambda.is_finite() && t.lambda > 0.0) {
                return Err(SolverError::InvalidSpec(format!(
                    "coefficient {} must be positive",
                    t.lambda
                )));
            }
            if !(t.q > p && t.q < p_star) {
                return Err(SolverError::InvalidSpec(format!(
                    "exponent q = {} outside the subcritical window ({}, {})",
                    t.q, p, p_star
                )));
            }
            if let Some(w) = &t.weight {
                w.validate()?;
            }
        }
        Ok(ProblemSpec {
            p,
            dim,
            r_max,
            nonlinearity,
        })
    }

    /// Single pure power `λ |u|^{q-2} u`.
    pub fn power(p: f64, dim: usize, r_max: f64, lambda: f64, q: f64) -> Result<Self> {
        Self::new(p, dim, r_max, NonlinearitySpec::single(lambda, q))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn terms(&self) -> &[Term] {
        &self.nonlinearity.terms
    }

    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.p, self.dim)
    }

    /// Same instance with a different truncation radius.
    pub fn with_r_max(&self, r_max: f64) -> Result<Self> {
        Self::new(self.p, self.dim, r_max, self.nonlinearity.clone())
    }

    /// True when every term is a constant-coefficient power.
    pub fn is_homogeneous_in_r(&self) -> bool {
        self.terms().iter().all(|t| t.weight.is_none())
    }

    #[inline]
    pub fn f(&self, r: f64, u: f64) -> f64 {
        self.f_real(r, u)
    }

    /// `f` in any supported precision.
    #[inline]
    pub fn f_real<S: Real>(&self, r: S, u: S) -> S {
        let mut acc = S::zero();
        for t in self.terms() {
            acc = acc + t.coefficient(r) * u.signed_pow(t.q - 1.0);
        }
        acc
    }

    /// Antiderivative `F(r, u) = Σ λ_i(r) |u|^{q_i} / q_i`.
    #[inline]
    pub fn big_f(&self, r: f64, u: f64) -> f64 {
        let a = u.abs();
        self.terms()
            .iter()
            .map(|t| t.coefficient(r) * Real::abs_pow(a, t.q) / t.q)
            .sum()
    }

    /// `∂f/∂u = Σ λ_i(r) (q_i - 1) |u|^{q_i-2}`.
    #[inline]
    pub fn df_du(&self, r: f64, u: f64) -> f64 {
        let a = u.abs();
        self.terms()
            .iter()
            .map(|t| t.coefficient(r) * (t.q - 1.0) * Real::abs_pow(a, t.q - 2.0))
            .sum()
    }

    /// `f^±`: `f` on the matching half-line, odd reflection on the other.
    pub fn f_branch(&self, branch: Sign, r: f64, u: f64) -> f64 {
        let on_branch = match branch {
            Sign::Plus => u >= 0.0,
            Sign::Minus => u <= 0.0,
        };
        if on_branch {
            self.f(r, u)
        } else {
            -self.f(r, -u)
        }
    }

    /// `F^±(r, u) = ∫_0^u f^±(r, s) ds`.
    pub fn big_f_branch(&self, branch: Sign, r: f64, u: f64) -> f64 {
        let on_branch = match branch {
            Sign::Plus => u >= 0.0,
            Sign::Minus => u <= 0.0,
        };
        if on_branch {
            self.big_f(r, u)
        } else {
            self.big_f(r, -u)
        }
    }
}

pub fn eval_f(spec: &ProblemSpec, r: f64, u: f64) -> f64 {
    spec.f(r, u)
}

#[allow(non_snake_case)]
pub fn eval_F(spec: &ProblemSpec, r: f64, u: f64) -> f64 {
    spec.big_f(r, u)
}

pub fn eval_f_branch(spec: &ProblemSpec, branch: Sign, r: f64, u: f64) -> f64 {
    spec.f_branch(branch, r, u)
}

/// Sampling plan for [`check_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_decade: usize,
    /// Number of radii sampled uniformly on `[0, r_max]`.
    pub radii: usize,
    /// Threshold `R` above which monotonicity of `f(t)/t^{p-1}` is checked.
    pub monotone_from: f64,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid {
            t_min: 1e-4,
            t_max: 1e4,
            points_per_decade: 10,
            radii: 5,
            monotone_from: 1.0,
        }
    }
}

impl ScanGrid {
    pub fn t_values(&self) -> Vec<f64> {
        let decades = (self.t_max / self.t_min).log10();
        let n = (decades * self.points_per_decade as f64).round() as usize;
        (0..=n)
            .map(|i| self.t_min * 10f64.powf(decades * i as f64 / n as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub detail: String,
}

impl Verdict {
    fn new(holds: bool, detail: impl Into<String>) -> Self {
        Verdict {
            holds,
            detail: detail.into(),
        }
    }
}

/// Sampled ratio tables, one row per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTables {
    pub t: Vec<f64>,
    pub radii: Vec<f64>,
    /// `f(r, t) / |t|^{p-2} t`
    pub f_ratio: Vec<Vec<f64>>,
    /// `F(r, t) / |t|^p`
    pub big_f_ratio: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub f1: Verdict,
    pub f2: Verdict,
    pub f3: Verdict,
    pub f4: Verdict,
    pub sq: Verdict,
    pub ar: Verdict,
    /// Ambrosetti–Rabinowitz exponent `μ = min q_i`, when it exceeds `p`.
    pub ar_mu: Option<f64>,
    pub scan: ScanTables,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.f1.holds && self.f2.holds && self.f3.holds && self.f4.holds
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:<6} detail", "cond", "holds")?;
        let rows = [
            ("f1", &self.f1),
            ("f2", &self.f2),
            ("f3", &self.f3),
            ("f4", &self.f4),
            ("SQ", &self.sq),
            ("AR", &self.ar),
        ];
        for (name, v) in rows {
            writeln!(f, "{:<6} {:<6} {}", name, if v.holds { "yes" } else { "no" }, v.detail)?;
        }
        Ok(())
    }
}

fn log_slope(t0: f64, y0: f64, t1: f64, y1: f64) -> f64 {
    (y1.ln() - y0.ln()) / (t1.ln() - t0.ln())
}

/// Sampled verdicts for (f1)–(f4), (SQ) and (AR).
pub fn check_assumptions(spec: &ProblemSpec, scan: &ScanGrid) -> Result<AssumptionReport> {
    if !(scan.t_min > 0.0 && scan.t_min <= 1e-4 && scan.t_max >= 1e4 && scan.points_per_decade > 0)
    {
        return Err(SolverError::InvalidArgument(
            "scan grid must span at least [1e-4, 1e4] logarithmically".into(),
        ));
    }
    let p = spec.p();
    let t = scan.t_values();
    let n_r = scan.radii.max(1);
    let radii: Vec<f64> = (0..n_r)
        .map(|i| {
            if n_r == 1 {
                0.0
            } else {
                spec.r_max() * i as f64 / (n_r - 1) as f64
            }
        })
        .collect();

    let f_ratio: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| t.iter().map(|&s| spec.f(r, s) / s.powf(p - 1.0)).collect())
        .collect();
    let big_f_ratio: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| t.iter().map(|&s| spec.big_f(r, s) / s.powf(p)).collect())
        .collect();

    let last = t.len() - 1;
    let mut f1 = true;
    let mut f3 = true;
    let mut f4 = true;
    let mut sq = true;
    let mut min_f1_slope = f64::INFINITY;
    let mut min_f3_slope = f64::INFINITY;
    for (ri, &r) in radii.iter().enumerate() {
        f1 &= spec.f(r, 0.0) == 0.0;
        let fr = &f_ratio[ri];
        let s1 = log_slope(t[0], fr[0], t[1], fr[1]);
        min_f1_slope = min_f1_slope.min(s1);
        f1 &= s1 > 0.0 && fr[0] < fr[last];

        let gr = &big_f_ratio[ri];
        let s3 = log_slope(t[last - 1], gr[last - 1], t[last], gr[last]);
        min_f3_slope = min_f3_slope.min(s3);
        f3 &= s3 > 0.0 && gr[last] > gr[0];

        let sq_hi = spec.big_f(r, t[last]) / (t[last] * t[last]);
        let sq_lo = spec.big_f(r, t[last - 1]) / (t[last - 1] * t[last - 1]);
        sq &= log_slope(t[last - 1], sq_lo, t[last], sq_hi) > 0.0;

        // increasing for t >= R, decreasing for t <= -R
        let mut prev_pos = f64::NEG_INFINITY;
        let mut prev_neg = f64::NEG_INFINITY;
        for &s in t.iter().filter(|&&s| s >= scan.monotone_from) {
            let pos = spec.f(r, s) / s.powf(p - 1.0);
            let neg = spec.f(r, -s) / (-(s.powf(p - 1.0)));
            f4 &= pos >= prev_pos && neg >= prev_neg;
            prev_pos = pos;
            prev_neg = neg;
        }
    }

    let q_max = spec.nonlinearity().max_exponent();
    let p_star = spec.critical_exponent();
    let mut growth_ok = q_max > p && q_max < p_star;
    for &r in &radii {
        let slope = log_slope(
            t[last - 1],
            spec.f(r, t[last - 1]).abs(),
            t[last],
            spec.f(r, t[last]).abs(),
        );
        growth_ok &= slope <= q_max - 1.0 + 1e-6;
    }

    let mu = spec.nonlinearity().min_exponent();
    let ar_mu = if mu > p { Some(mu) } else { None };
    let mut ar = ar_mu.is_some();
    if ar {
        for &r in &radii {
            for &s in t.iter().filter(|&&s| s >= scan.monotone_from) {
                for x in [s, -s] {
                    let lhs = mu * spec.big_f(r, x);
                    let rhs = spec.f(r, x) * x;
                    ar &= lhs > 0.0 && lhs <= rhs * (1.0 + 1e-12);
                }
            }
        }
    }

    Ok(AssumptionReport {
        f1: Verdict::new(
            f1,
            format!("f(r,0)=0; f/t^(p-1) ~ t^{min_f1_slope:.3} as t -> 0"),
        ),
        f2: Verdict::new(
            growth_ok,
            format!("max q = {q_max}, p* = {p_star}; |f| grows like t^(q-1)"),
        ),
        f3: Verdict::new(f3, format!("F/t^p ~ t^{min_f3_slope:.3} as t -> inf")),
        f4: Verdict::new(
            f4,
            format!("f/t^(p-1) monotone on sampled |t| >= {}", scan.monotone_from),
        ),
        sq: Verdict::new(sq, "F/t^2 increasing at the top of the scan"),
        ar: Verdict::new(
            ar,
            match ar_mu {
                Some(m) => format!("mu = {m}: mu F <= f t on sampled |t| >= {}", scan.monotone_from),
                None => "no mu > p".to_string(),
            },
        ),
        ar_mu,
        scan: ScanTables {
            t,
            radii,
            f_ratio,
            big_f_ratio,
        },
    })
}
