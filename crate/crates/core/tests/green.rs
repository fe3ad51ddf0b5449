use std::sync::Arc;

use fracgreen_core::fraclap::{apply_operator, assemble_operator};
use fracgreen_core::green::*;
use fracgreen_core::harness::TestBattery;
use fracgreen_core::model::{gradient, Atom, FracParams, Grid, GridField, RadonMeasure, Support};
use fracgreen_core::quad;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn params() -> FracParams {
    FracParams::new(1, 0.75).unwrap()
}

fn tables(n: usize) -> (Arc<Grid>, GreenTable, GreenTable) {
    let grid = Grid::interval(n).unwrap();
    let explicit = build_green(&grid, &params(), GreenRoute::Explicit).unwrap();
    let inverse = build_green(&grid, &params(), GreenRoute::NumericInverse).unwrap();
    (grid, explicit, inverse)
}

#[test]
fn kernel_decays_like_distance_to_the_power_alpha() {
    for alpha in [0.6, 0.75, 0.9] {
        let p = FracParams::new(1, alpha).unwrap();
        let ds: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
        let pts: Vec<(f64, f64)> = ds.iter().map(|&d| (d.ln(), green_kernel_ball(1.0 - d, 0.0, &p).unwrap().ln())).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - alpha).abs() < 0.05, "alpha {alpha}: slope {slope}");
    }
}

#[test]
fn kernel_rejects_coincident_points() {
    assert!(matches!(green_kernel_ball(0.3, 0.3, &params()), Err(fracgreen_core::Error::KernelSingularity(_))));
}

#[test]
fn kernel_agrees_with_discrete_inverse() {
    let (grid, _, inverse) = tables(512);
    let (i, j) = (grid.nearest(0.0), grid.nearest(0.5));
    let kernel = green_kernel_ball(grid.nodes[i], grid.nodes[j], &params()).unwrap();
    let discrete = inverse.matrix[(i, j)];
    assert!(((kernel - discrete) / kernel).abs() < 1e-2, "{kernel} vs {discrete}");
}

#[test]
fn routes_agree_off_diagonal() {
    let (_, explicit, inverse) = tables(512);
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..512 {
        for j in 0..512 {
            if i != j {
                diff += (explicit.matrix[(i, j)] - inverse.matrix[(i, j)]).powi(2);
                norm += explicit.matrix[(i, j)].powi(2);
            }
        }
    }
    let rel = (diff / norm).sqrt();
    assert!(rel < 2e-2, "relative {rel}");
}

#[test]
fn numeric_inverse_inverts_the_operator() {
    let grid = Grid::interval(256).unwrap();
    let op = assemble_operator(&grid, &params()).unwrap();
    let green = GreenTable::numeric_inverse(&op).unwrap();
    let product = &green.matrix * &op.matrix * grid.h;
    let err = (product - DMatrix::<f64>::identity(256, 256)).abs().max();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn tables_are_positive_and_symmetric() {
    let (_, explicit, inverse) = tables(128);
    for t in [&explicit, &inverse] {
        assert!(t.matrix.iter().all(|&v| v >= 0.0));
        assert!((&t.matrix - t.matrix.transpose()).abs().max() < 1e-10);
    }
}

/// `max G(x,y) / min{|x-y|^{2α-1}, d(x)^α |x-y|^{α-1}, d(y)^α |x-y|^{α-1}}`
/// over pairs at least `r_min` apart.
fn fitted_bound_constant(table: &GreenTable, r_min: f64) -> f64 {
    let a = table.params.alpha;
    let grid = &table.grid;
    let mut c = 0.0f64;
    for i in 0..grid.n {
        for j in 0..grid.n {
            let r = (grid.nodes[i] - grid.nodes[j]).abs();
            if r < r_min {
                continue;
            }
            let bound = r.powf(2.0 * a - 1.0).min(grid.dist[i].powf(a) * r.powf(a - 1.0)).min(grid.dist[j].powf(a) * r.powf(a - 1.0));
            c = c.max(table.matrix[(i, j)] / bound);
        }
    }
    c
}

#[test]
fn kernel_bound_holds_with_a_grid_independent_constant() {
    // the nodes sample the continuum supremum at slightly different pairs
    let cs: Vec<f64> = [128, 256, 512].iter().map(|&n| fitted_bound_constant(&tables(n).1, 0.05)).collect();
    assert!(cs.iter().all(|c| c.is_finite() && *c > 0.0));
    let (lo, hi) = cs.iter().fold((f64::MAX, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(hi <= 1.15 * lo, "{cs:?}");
}

#[test]
fn kernel_is_finite_on_the_diagonal() {
    // with 2α > 1 the kernel stays bounded as y → x, so |x-y|^{2α-1} only
    // bounds it away from the diagonal
    let p = params();
    for x in [-0.6, 0.0, 0.35] {
        let limit = green_on_diagonal(x, &p);
        let near = green_kernel_ball(x, x + 1e-7, &p).unwrap();
        assert!(limit > 0.0 && ((near - limit) / limit).abs() < 1e-3, "{near} vs {limit}");
    }
}

#[test]
fn gradient_bound_probe_is_uniform() {
    let p = params();
    let a = p.alpha;
    let sup_at = |n: usize| {
        let grid = Grid::interval(n).unwrap();
        let y = 0.3;
        let u: Vec<f64> = grid.nodes.iter().map(|&x| green_kernel_ball(x, y, &p).unwrap()).collect();
        let g = gradient(&u, grid.h);
        grid.nodes
            .iter()
            .enumerate()
            .filter(|(_, &x)| (x - y).abs() > 2.0 * grid.h)
            .map(|(i, &x)| g[i].abs() * grid.dist[i].powf(1.0 - a) * (x - y).abs().powf(2.0 - 2.0 * a))
            .fold(0.0f64, f64::max)
    };
    let sups: Vec<f64> = [128, 256, 512].iter().map(|&n| sup_at(n)).collect();
    assert!(sups[2] <= 1.1 * sups[0], "{sups:?}");
}

#[test]
fn torsion_profile_from_unit_source() {
    let (grid, explicit, _) = tables(512);
    let one = GridField::from_fn(grid.clone(), |_| 1.0);
    let u = green_apply(&explicit, Source::Field(&one)).unwrap();
    let exact = GridField::from_fn(grid.clone(), |x| torsion_profile(&params(), x));
    let err = u.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err / exact.sup_norm() < 2e-2, "{}", err / exact.sup_norm());
}

#[test]
fn zero_and_dirac_sources() {
    let (grid, explicit, _) = tables(64);
    let zero = green_apply(&explicit, Source::Field(&GridField::zeros(grid.clone()))).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0));
    let delta = RadonMeasure::dirac(Support::Interior, 0.0, 1.0);
    let u = green_apply(&explicit, Source::Measure(&delta)).unwrap();
    for (x, v) in grid.nodes.iter().zip(&u.values) {
        assert_eq!(*v, green_kernel_ball(*x, 0.0, &params()).unwrap());
    }
    let ext = RadonMeasure::dirac(Support::Exterior, 2.0, 1.0);
    assert!(green_apply(&explicit, Source::Measure(&ext)).is_err());
}

#[test]
fn weak_identity_for_linear_problem() {
    let (grid, explicit, _) = tables(512);
    let p = params();
    let f = GridField::from_fn(grid.clone(), |x| 1.0 + x.sin());
    let u = green_apply(&explicit, Source::Field(&f)).unwrap();
    let battery = TestBattery::new(7);
    for (bump, lap) in battery.bumps.iter().zip(battery.laplacians(&grid, &p)) {
        let lhs: f64 = grid.integrate(&u.values.iter().zip(&lap).map(|(a, b)| a * b).collect::<Vec<_>>());
        let rhs = quad::integrate(&|x: f64| (1.0 + x.sin()) * bump.eval(x), bump.support().0, bump.support().1, 1e-13);
        assert!(((lhs - rhs) / rhs).abs() < 5e-3, "{lhs} vs {rhs}");
    }
}

#[test]
fn exterior_trace_density_cases() {
    let grid = Grid::interval(64).unwrap();
    let p = params();
    let one = exterior_trace_density(&RadonMeasure::dirac(Support::Exterior, 2.0, 1.0), &grid, &p).unwrap();
    for (x, v) in grid.nodes.iter().zip(&one.values) {
        assert!((v - p.c_norm * (2.0 - x).powf(-2.5)).abs() < 1e-15);
    }
    let zero = exterior_trace_density(&RadonMeasure::zero(Support::Exterior), &grid, &p).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0));
    let (m1, m2) = (0.7, 1.9);
    let two = RadonMeasure::exterior(vec![Atom { point: 2.0, mass: m1 }, Atom { point: -1.5, mass: m2 }]);
    let b = exterior_trace_density(&RadonMeasure::dirac(Support::Exterior, -1.5, 1.0), &grid, &p).unwrap();
    let sum = exterior_trace_density(&two, &grid, &p).unwrap();
    for i in 0..grid.n {
        assert!((sum.values[i] - (m1 * one.values[i] + m2 * b.values[i])).abs() < 1e-12);
    }
    // decreasing with the distance to the atom at 2
    assert!(one.values.windows(2).all(|w| w[1] > w[0]));
    assert!(exterior_trace_density(&RadonMeasure::dirac(Support::Exterior, 0.5, 1.0), &grid, &p).is_err());
}

#[test]
fn poisson_routes_agree_and_scale() {
    let (_, explicit, _) = tables(512);
    let mu = RadonMeasure::exterior(vec![Atom { point: 2.0, mass: 1.0 }, Atom { point: -1.6, mass: 0.5 }]);
    let pp = poisson_apply(&mu, &explicit).unwrap();
    assert!(pp.discrepancy < POISSON_ROUTE_TOL, "{}", pp.discrepancy);
    assert!(pp.field.values.iter().all(|&v| v >= 0.0));
    let double = poisson_apply(&mu.scaled(2.0), &explicit).unwrap();
    for (a, b) in double.field.values.iter().zip(&pp.field.values) {
        assert!((a - 2.0 * b).abs() < 1e-12 * b.abs().max(1e-300) + 1e-15);
    }
    let zero = poisson_apply(&RadonMeasure::zero(Support::Exterior), &explicit).unwrap();
    assert!(zero.field.values.iter().all(|&v| v == 0.0));
}

#[test]
fn poisson_potential_is_harmonic_in_the_interior() {
    let (grid, explicit, _) = tables(512);
    let op = assemble_operator(&grid, &params()).unwrap();
    let mu = RadonMeasure::dirac(Support::Exterior, 2.0, 1.0);
    let pp = poisson_apply(&mu, &explicit).unwrap();
    let w = exterior_trace_density(&mu, &grid, &params()).unwrap();
    let lap = apply_operator(&op, &pp.field).unwrap();
    let worst = grid.dist.iter().zip(&lap.values).filter(|(d, _)| **d >= 0.1).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    assert!(worst < 2e-2 * w.sup_norm(), "{}", worst / w.sup_norm());
}

#[test]
fn normal_derivative_duality_and_sign() {
    let grid = Grid::interval(512).unwrap();
    let p = params();
    let phi = GridField::from_fn(grid.clone(), |x| torsion_profile(&p, x));
    let mu = RadonMeasure::dirac(Support::Exterior, 2.0, 1.0);
    let w = exterior_trace_density(&mu, &grid, &p).unwrap();
    let lhs = grid.integrate(&w.values.iter().zip(&phi.values).map(|(a, b)| a * b).collect::<Vec<_>>());
    let n = nonlocal_normal_derivative(&phi, 2.0, &p).unwrap();
    assert!(n <= 0.0);
    assert!(((lhs + n) / lhs).abs() < 1e-3, "{lhs} vs {}", -n);
    let zero = nonlocal_normal_derivative(&GridField::zeros(grid.clone()), 2.0, &p).unwrap();
    assert_eq!(zero, 0.0);
    assert!(nonlocal_normal_derivative(&phi, 0.9, &p).is_err());
    let callback = nonlocal_normal_derivative_fn(&|x| torsion_profile(&p, x), (-1.0, 1.0), 2.0, &p).unwrap();
    assert!(((callback - n) / n).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn green_operator_is_self_adjoint(f in prop::collection::vec(-1.0f64..1.0, 48), g in prop::collection::vec(-1.0f64..1.0, 48)) {
        let grid = Grid::interval(48).unwrap();
        let table = build_green(&grid, &params(), GreenRoute::Explicit).unwrap();
        let (ff, gf) = (GridField::new(grid.clone(), f).unwrap(), GridField::new(grid.clone(), g).unwrap());
        let gf_ = green_apply(&table, Source::Field(&ff)).unwrap();
        let gg_ = green_apply(&table, Source::Field(&gf)).unwrap();
        let a: f64 = gf_.values.iter().zip(&gf.values).map(|(x, y)| x * y).sum();
        let b: f64 = ff.values.iter().zip(&gg_.values).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).abs() < 1e-8 * (a.abs() + b.abs() + 1.0));
    }

    #[test]
    fn nonnegative_sources_give_nonnegative_potentials(f in prop::collection::vec(0.0f64..1.0, 40), y in -0.95f64..0.95, m in 0.0f64..2.0) {
        let grid = Grid::interval(40).unwrap();
        let table = build_green(&grid, &params(), GreenRoute::Explicit).unwrap();
        let u = green_apply(&table, Source::Field(&GridField::new(grid.clone(), f).unwrap())).unwrap();
        prop_assert!(u.values.iter().all(|&v| v >= 0.0));
        let mu = RadonMeasure::dirac(Support::Interior, y, m);
        let v = green_apply(&table, Source::Measure(&mu)).unwrap();
        prop_assert!(v.values.iter().all(|&v| v >= 0.0));
    }
}
