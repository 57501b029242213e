use nalgebra::{DMatrix, DVector};
use neumann_lab::boundary::{BoundaryOp, BoundarySpec};
use neumann_lab::coeffs::{MatrixFn, ScalarFn, VectorFn};
use neumann_lab::geometry::{DistanceField, Domain, Grid};
use neumann_lab::operators::{CoefficientSet, OperatorSpec};
use neumann_lab::solver::{sup_difference, BoundaryMode, Discretization, SolveParams};
use proptest::prelude::*;

fn unit() -> Domain {
    Domain::Interval { a: 0.0, b: 1.0 }
}

fn set(sigma: f64, b: f64, c: f64, f: ScalarFn) -> CoefficientSet {
    CoefficientSet {
        sigma: MatrixFn::Scalar(ScalarFn::constant(sigma)),
        b: VectorFn::constant(&[b]),
        c: ScalarFn::constant(c),
        f,
    }
}

fn wave(amplitude: f64, k: f64, phase: f64) -> ScalarFn {
    ScalarFn::Cos { amplitude, wavenumber: vec![k], phase, offset: 0.0 }
}

fn disc(op: OperatorSpec, bc: BoundarySpec, n: usize, mu: f64) -> Discretization {
    let field = DistanceField::new(unit()).unwrap();
    let grid = Grid::new(unit(), &[n]).unwrap();
    Discretization::new(grid, op, BoundaryOp::new(bc, field).unwrap(), mu, BoundaryMode::Strong).unwrap()
}

/// `S(u) = M u - r` for an affine scheme, recovered by probing unit vectors.
fn affine_parts(d: &Discretization) -> (DMatrix<f64>, DVector<f64>) {
    let n = d.grid().len();
    let s0 = d.scheme(&vec![0.0; n]).unwrap();
    let mut m = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let s = d.scheme(&e).unwrap();
        for row in 0..n {
            m[(row, col)] = s[row] - s0[row];
        }
    }
    (m, DVector::from_iterator(n, s0.iter().map(|v| -v)))
}

#[test]
fn isaacs_matches_policy_enumeration() {
    let controls = vec![
        vec![set(0.0, 1.0, 1.0, wave(1.0, 1.0, 0.0)), set(0.5, -0.5, 1.5, ScalarFn::constant(0.2))],
        vec![set(0.2, 0.0, 1.0, wave(0.5, 2.0, 0.3)), set(0.0, -1.0, 2.0, ScalarFn::constant(-0.3))],
    ];
    let bc = BoundarySpec::neumann(0.1);
    let n = 5;
    let game = disc(OperatorSpec::isaacs(controls.clone()).unwrap(), bc.clone(), n, 0.0);
    let u = game.solve(&SolveParams::default()).unwrap();

    let parts: Vec<Vec<_>> = controls
        .iter()
        .map(|row| row.iter().map(|c| affine_parts(&disc(OperatorSpec::linear(c.clone()), bc.clone(), n, 0.0))).collect())
        .collect();
    let nodes = n + 1;
    let mut equilibria = Vec::new();
    for code in 0..4usize.pow(nodes as u32) {
        let mut m = DMatrix::zeros(nodes, nodes);
        let mut r = DVector::zeros(nodes);
        for k in 0..nodes {
            let pick = (code / 4usize.pow(k as u32)) % 4;
            let (mk, rk) = &parts[pick / 2][pick % 2];
            m.set_row(k, &mk.row(k));
            r[k] = rk[k];
        }
        let Some(v) = m.lu().solve(&r) else { continue };
        let value = |i: usize, j: usize, k: usize| (parts[i][j].0.row(k) * &v)[0] - parts[i][j].1[k];
        let ok = (0..nodes).all(|k| {
            let inf_sup = (0..2).map(|i| value(i, 0, k).max(value(i, 1, k))).fold(f64::INFINITY, f64::min);
            inf_sup.abs() < 1e-10
        });
        if ok {
            equilibria.push(v);
        }
    }
    assert!(!equilibria.is_empty());
    for v in equilibria {
        assert!(sup_difference(v.as_slice(), &u.values).1 < 1e-9);
    }
}

#[test]
fn constant_data_shift() {
    let base = set(0.4, 0.3, 1.0, wave(1.0, 1.0, 0.2));
    let bumped = set(0.4, 0.3, 1.0, ScalarFn::Sum { terms: vec![wave(1.0, 1.0, 0.2), ScalarFn::constant(1.0)] });
    let params = SolveParams::default();
    let u = disc(OperatorSpec::linear(base), BoundarySpec::neumann(0.0), 64, 0.0).solve(&params).unwrap();
    let v = disc(OperatorSpec::linear(bumped), BoundarySpec::neumann(0.0), 64, 0.0).solve(&params).unwrap();
    for (a, b) in u.values.iter().zip(&v.values) {
        assert!((b - a - 1.0).abs() < 1e-10);
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let op = OperatorSpec::bellman(vec![set(0.3, 0.5, 1.0, wave(1.0, 1.0, 0.0)), set(0.6, -0.5, 1.5, ScalarFn::constant(0.5))]).unwrap();
    let d = disc(op, BoundarySpec::capillary(0.3), 128, 0.0);
    let a = d.solve(&SolveParams::default()).unwrap();
    let b = d.solve(&SolveParams::default()).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.history, b.history);
}

#[test]
fn degenerate_drift_without_viscosity_is_monotone_in_2d() {
    let dom = Domain::PeriodicStrip { period: 1.0, height: 1.0 };
    let field = DistanceField::new(dom).unwrap();
    let op = OperatorSpec::linear(CoefficientSet {
        sigma: MatrixFn::Const(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
        b: VectorFn::constant(&[1.0, -0.7]),
        c: ScalarFn::constant(1.0),
        f: ScalarFn::Cos { amplitude: 1.0, wavenumber: vec![2.0, 1.0], phase: 0.0, offset: 0.0 },
    });
    let grid = Grid::new(dom, &[16, 16]).unwrap();
    let d = Discretization::new(grid, op, BoundaryOp::new(BoundarySpec::neumann(0.0), field).unwrap(), 0.0, BoundaryMode::Strong).unwrap();
    let u = d.solve(&SolveParams::default()).unwrap();
    d.check_monotone(&u.values).unwrap();
    assert!(u.residual_norm <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn viscosity_keeps_rows_monotone(
        sigma in 0.0..1.0f64,
        b in -3.0..3.0f64,
        c in 0.1..3.0f64,
        mu in 0.0..0.5f64,
        g in -1.0..1.0f64,
        n in 4usize..40,
    ) {
        let d = disc(OperatorSpec::linear(set(sigma, b, c, wave(1.0, 1.0, 0.0))), BoundarySpec::neumann(g), n, mu);
        let u: Vec<f64> = (0..=n).map(|k| (k as f64).sin()).collect();
        prop_assert!(d.check_monotone(&u).is_ok());
    }

    #[test]
    fn ordered_forcing_gives_ordered_solutions(
        amp in -1.0..1.0f64,
        k in 0.0..4.0f64,
        phase in 0.0..6.0f64,
        bump in 0.0..1.0f64,
        b in -1.0..1.0f64,
        g_lo in -0.5..0.5f64,
        g_gap in 0.0..0.5f64,
    ) {
        let sub = set(0.3, b, 1.0, wave(amp, k.floor(), phase));
        let sup = set(0.3, b, 1.0, ScalarFn::Sum { terms: vec![wave(amp, k.floor(), phase), ScalarFn::constant(bump)] });
        let params = SolveParams::default();
        let u = disc(OperatorSpec::linear(sub), BoundarySpec::neumann(g_lo), 32, 0.0).solve(&params).unwrap();
        let v = disc(OperatorSpec::linear(sup), BoundarySpec::neumann(g_lo + g_gap), 32, 0.0).solve(&params).unwrap();
        prop_assert!(sup_difference(&u.values, &v.values).0 <= 1e-10);
    }

    #[test]
    fn solve_reaches_tolerance(
        sigma in 0.0..1.0f64,
        b in -2.0..2.0f64,
        c in 0.2..2.0f64,
        theta in -0.8..0.8f64,
    ) {
        let d = disc(OperatorSpec::linear(set(sigma, b, c, wave(1.0, 1.0, 0.0))), BoundarySpec::capillary(theta), 48, 0.0);
        let u = d.solve(&SolveParams::default()).unwrap();
        prop_assert!(u.residual_norm <= 1e-10);
        prop_assert!(d.residual(&u.values).unwrap() <= 1e-10);
    }
}
