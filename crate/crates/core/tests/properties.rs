use std::sync::Arc;

use proptest::prelude::*;

use nodal_core::discretization::{energy, pairing, RadialFunction, RadialGrid};
use nodal_core::nehari::{nehari_residual, project};
use nodal_core::nodal::{count_nodes, NodeVector};
use nodal_core::ode::{integrate, Method, Stepper};
use nodal_core::problem::{critical_exponent, NonlinearitySpec, Term};
use nodal_core::shooting::{shoot, ShootConfig};
use nodal_core::{ProblemSpec, SolverError};

fn profile(grid: &Arc<RadialGrid>, modes: &[f64]) -> RadialFunction {
    let (a, b) = (grid.rho(), grid.sigma());
    RadialFunction::from_fn(grid.clone(), |r| {
        let x = std::f64::consts::PI * (r - a) / (b - a);
        modes
            .iter()
            .enumerate()
            .map(|(j, c)| c * ((j + 1) as f64 * x).sin())
            .sum()
    })
}

fn spec_strategy() -> impl Strategy<Value = ProblemSpec> {
    (prop_oneof![Just(2.0), Just(3.0), 1.5..4.0f64], 1usize..4, 0.1..2.0f64, 0.05..0.9f64).prop_map(
        |(p, dim, lambda, frac)| {
            let top = critical_exponent(p, dim).min(p + 4.0);
            let q = p + frac * (top - p);
            ProblemSpec::power(p, dim, 10.0, lambda, q).unwrap()
        },
    )
}

fn modes_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 1..5).prop_filter("nonzero", |m| m.iter().any(|c| c.abs() > 0.1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_on_nehari_set(spec in spec_strategy(), modes in modes_strategy(), scale in 0.01..50.0f64) {
        let grid = Arc::new(RadialGrid::build(spec.dim(), 1.0, 6.0, 120, 1.0).unwrap());
        let u = profile(&grid, &modes).scaled(scale);
        let s = project(&grid, &spec, &u).unwrap();
        prop_assert!(s.t_star > 0.0);
        prop_assert!(nehari_residual(&grid, &spec, &s.projected).unwrap() < 1e-9);
        prop_assert!(s.energy_at_t_star > 0.0);
        let again = project(&grid, &spec, &s.projected).unwrap();
        prop_assert!((again.t_star - 1.0).abs() < 1e-9);
    }

    #[test]
    fn energy_is_even_for_odd_nonlinearity(spec in spec_strategy(), modes in modes_strategy()) {
        let grid = Arc::new(RadialGrid::build(spec.dim(), 0.0, 5.0, 80, 1.0).unwrap());
        let u = profile(&grid, &modes);
        let e = energy(&grid, &spec, &u);
        prop_assert!((e - energy(&grid, &spec, &u.scaled(-1.0))).abs() <= 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn pairing_is_linear_in_direction(spec in spec_strategy(), a in modes_strategy(), b in modes_strategy(), c in -3.0..3.0f64) {
        let grid = Arc::new(RadialGrid::build(spec.dim(), 0.5, 5.0, 80, 1.0).unwrap());
        let u = profile(&grid, &a);
        let v = profile(&grid, &b);
        let lhs = pairing(&grid, &spec, &u, &v.scaled(c));
        let rhs = c * pairing(&grid, &spec, &u, &v);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn log_gaps_round_trip(gaps in prop::collection::vec(0.05..2.0f64, 1..6)) {
        let r_max = gaps.iter().sum::<f64>() + 1.0;
        let radii: Vec<f64> = gaps.iter().scan(0.0, |acc, g| { *acc += g; Some(*acc) }).collect();
        let nodes = NodeVector::new(radii.clone(), r_max, 0.01).unwrap();
        let back = NodeVector::from_log_gaps(&nodes.log_gaps(), r_max).unwrap();
        for (x, y) in back.radii().iter().zip(&radii) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(nodes.gaps(r_max).len(), radii.len() + 1);
    }

    #[test]
    fn node_count_matches_sine_zeros(k in 0usize..8, shift in 0.1..0.4f64) {
        let grid = Arc::new(RadialGrid::build(1, 0.0, 10.0, 997, 1.0).unwrap());
        // zeros of cos at (j + 1/2)π/ω fall strictly inside (0, 10)
        let omega = std::f64::consts::PI * (k as f64 + shift) / 10.0;
        let u = RadialFunction::from_fn(grid, |r| (omega * r).cos());
        let (n, crossings) = count_nodes(&u).unwrap();
        prop_assert_eq!(n, k);
        for (j, x) in crossings.iter().enumerate() {
            let exact = (j as f64 + 0.5) * std::f64::consts::PI / omega;
            prop_assert!((x - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn spec_json_round_trip(spec in spec_strategy()) {
        let text = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn supercritical_exponents_are_rejected(p in 1.5..4.0f64, dim in 5usize..8, extra in 0.0..3.0f64) {
        let q = critical_exponent(p, dim) + extra;
        let err = ProblemSpec::new(p, dim, 10.0, NonlinearitySpec { terms: vec![Term::new(1.0, q)] });
        prop_assert!(matches!(err, Err(SolverError::InvalidSpec(_))), "q = {} accepted", q);
    }

    #[test]
    fn shots_are_odd_in_amplitude(a in 0.2..2.5f64) {
        let spec = ProblemSpec::power(2.0, 3, 15.0, 1.0, 4.0).unwrap();
        let cfg = ShootConfig::default();
        let up = shoot(&spec, a, &cfg).unwrap();
        let down = shoot(&spec, -a, &cfg).unwrap();
        prop_assert_eq!(up.node_count, down.node_count);
        prop_assert_eq!(up.terminal_behavior, down.terminal_behavior);
        for (s, t) in up.samples.iter().zip(&down.samples) {
            prop_assert!((s.u + t.u).abs() <= 1e-12 * up.max_abs_u);
        }
    }

    #[test]
    fn exponential_growth_is_integrated(rate in -2.0..2.0f64, bs in any::<bool>()) {
        let method = if bs { Method::BulirschStoer } else { Method::DormandPrince };
        let mut stepper = Stepper::<f64>::new(method, 1e-12, 1e-14, 1e-3, 0.5);
        let sys = move |_r: f64, y: &[f64; 2]| [rate * y[0], -y[1]];
        let y = integrate(&mut stepper, &sys, 0.0, [1.0, 1.0], 3.0).unwrap();
        prop_assert!((y[0] - (3.0 * rate).exp()).abs() < 1e-9 * (3.0 * rate).exp());
        prop_assert!((y[1] - (-3.0f64).exp()).abs() < 1e-10);
    }
}
