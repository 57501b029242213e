//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use neumann_lab::boundary::{BoundaryCondition, BoundaryOp, BoundarySpec, Direction, ReflectionControl};
use neumann_lab::cli::{parse_config, Config};
use neumann_lab::coeffs::ScalarFn;
use neumann_lab::experiments::{
    boundary_samples, ordered_pairs, probe_problem, run_cont_dep, run_lemma_checks, run_vv_rate, Lemma, LemmaOutcome,
    Perturbation, RateStudy,
};
use neumann_lab::geometry::{DistanceField, Domain};
use neumann_lab::linalg::Vector;
use neumann_lab::solver::{discrete_comparison_check, SolveParams};

type Outcome = Result<String, String>;

fn load(name: &str) -> Config {
    let path = format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn manufactured() -> Outcome {
    let start = Instant::now();
    let mut problem = load("manufactured.json").problem();
    let mut errors = Vec::new();
    for n in [64, 128, 256, 512] {
        problem.cells = vec![n];
        let u = problem.solve(&SolveParams::default()).map_err(e)?;
        let err = u.grid.nodes().iter().zip(&u.values).map(|(x, v)| (v - (PI * x[0]).cos()).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = start.elapsed();
    check(
        ratios.iter().all(|r| (3.5..=4.5).contains(r)) && elapsed < Duration::from_secs(10),
        format!("ratios {ratios:.4?}, runtime {elapsed:.2?}"),
    )
}

fn vanishing_viscosity() -> Outcome {
    let start = Instant::now();
    let config = load("vanishing_viscosity.json");
    let report = run_vv_rate(&config.problem(), &RateStudy::default(), &config.solver.params()).map_err(e)?;
    let elapsed = start.elapsed();
    let slope = report.value("slope").unwrap_or(f64::NAN);
    let beta = report.value("beta_hat").unwrap_or(f64::NAN);
    let monotone = report.flags.get("monotone") == Some(&true);
    check(
        report.aborted.is_none() && slope >= beta / 2.0 - 0.1 && monotone && elapsed < Duration::from_secs(60),
        format!("slope {slope:.4}, beta_hat {beta:.4}, monotone {monotone}, runtime {elapsed:.2?}"),
    )
}

fn continuous_dependence() -> Outcome {
    let config = load("continuous_dependence.json");
    let problem = config.problem();
    let families: Vec<Perturbation> = config.cont_dep.iter().map(|s| s.family).collect();
    if families != [Perturbation::FShift, Perturbation::SigmaShift, Perturbation::GammaShift] {
        return Err(format!("unexpected families {families:?}"));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for study in &config.cont_dep {
        let span = study.magnitudes.iter().cloned().fold(0.0, f64::max) / study.magnitudes.iter().cloned().fold(f64::INFINITY, f64::min);
        let r = run_cont_dep(&problem, study, &config.solver.params(), config.seed).map_err(e)?;
        let (max, median) = (r.value("max_ratio").unwrap_or(f64::NAN), r.value("median_ratio").unwrap_or(f64::NAN));
        ok &= r.aborted.is_none() && span >= 100.0 && max <= 10.0 * median && median > 0.0;
        parts.push(format!("{:?} max/median {:.3}", study.family, max / median));
        if study.family == Perturbation::FShift {
            let gap = r.value("shift_identity_gap").unwrap_or(f64::NAN);
            ok &= gap <= 1e-8;
            parts.push(format!("identity gap {gap:.1e}"));
        }
    }
    check(ok, parts.join(", "))
}

fn lemma_outcome(outcomes: &[LemmaOutcome], lemma: Lemma) -> Result<&LemmaOutcome, String> {
    outcomes.iter().find(|o| o.lemma == lemma).ok_or_else(|| format!("{lemma:?} missing"))
}

fn lemguy(outcomes: &[LemmaOutcome]) -> Outcome {
    let o = lemma_outcome(outcomes, Lemma::Lemguy)?;
    check(
        o.violations == 0 && o.samples >= 10_000 && o.max_drift <= 0.2 && o.fitted_constants.len() == 7,
        format!("{} violations on {} grid points, drift {:.3}", o.violations, o.samples, o.max_drift),
    )
}

fn lem_pos_bc(outcomes: &[LemmaOutcome]) -> Outcome {
    let pos = lemma_outcome(outcomes, Lemma::LemPos)?;
    let bc = lemma_outcome(outcomes, Lemma::LemBc)?;
    let limit = 2f64.powi(20);
    let a = pos.fitted_constants["A"];
    let k = bc.fitted_constants["K"];
    let negative = bc.fitted_constants.get("negative_control_violations").copied().unwrap_or(0.0);
    check(
        pos.violations == 0
            && bc.violations == 0
            && pos.samples >= 10_000
            && bc.samples >= 10_000
            && a < limit
            && k < limit
            && negative >= 1.0,
        format!(
            "lem_pos {} violations (A = {a}), lem_bc {} violations (K = {k}), negative control {negative} violations",
            pos.violations, bc.violations
        ),
    )
}

fn lem_deriv(outcomes: &[LemmaOutcome]) -> Outcome {
    let o = lemma_outcome(outcomes, Lemma::LemDeriv)?;
    let names = ["pmqest", "pmqest2", "lwrbd", "scnd"];
    let present = names.iter().all(|n| o.fitted_constants.contains_key(*n));
    check(
        present && o.violations == 0 && o.samples >= 10_000 && o.max_drift <= 0.2,
        format!("{} violations on {} samples, drift {:.3}", o.violations, o.samples, o.max_drift),
    )
}

fn comparison() -> Outcome {
    let params = SolveParams::default();
    let mut pairs = Vec::new();
    for (name, seed) in [
        ("bellman.json", 1),
        ("isaacs.json", 2),
        ("continuous_dependence.json", 3),
        ("lemma_capillary.json", 4),
    ] {
        let mut problem = load(name).problem();
        problem.cells = vec![64];
        for (a, b) in ordered_pairs(&problem, 25, seed).map_err(e)? {
            pairs.push((a.discretization(1, 0.0).map_err(e)?, b.discretization(1, 0.0).map_err(e)?));
        }
    }
    let violations = discrete_comparison_check(&pairs, &params).map_err(e)?;
    check(violations == 0, format!("{violations} violations over {} pairs", pairs.len()))
}

fn shift_correctness() -> Outcome {
    let reflection = BoundarySpec::new(BoundaryCondition::ControlledReflection {
        controls: vec![
            vec![
                ReflectionControl { gamma: Direction::frame(1.0, 0.3), g: ScalarFn::constant(0.3) },
                ReflectionControl { gamma: Direction::normal(1.5), g: ScalarFn::constant(-0.4) },
            ],
            vec![
                ReflectionControl { gamma: Direction::normal(0.8), g: ScalarFn::constant(0.5) },
                ReflectionControl { gamma: Direction::frame(1.2, -0.6), g: ScalarFn::constant(0.2) },
            ],
        ],
    });
    let theta = ScalarFn::Cos { amplitude: 0.4, wavenumber: vec![2.0, 0.0], phase: 0.0, offset: 0.1 };
    let specs = [
        BoundarySpec::neumann(0.7),
        BoundarySpec::oblique(Direction::frame(1.3, 0.8), -0.2),
        BoundarySpec::capillary(0.6),
        BoundarySpec::new(BoundaryCondition::Capillary { theta }),
        reflection,
    ];
    let domains = [
        Domain::Interval { a: 0.0, b: 1.0 },
        Domain::PeriodicStrip { period: 1.0, height: 1.0 },
        Domain::Disc { radius: 1.0 },
    ];
    let (mut calls, mut worst, mut closed_gap) = (0usize, 0.0f64, 0.0f64);
    for domain in domains {
        let field = DistanceField::new(domain).map_err(e)?;
        for spec in &specs {
            let Ok(op) = BoundaryOp::new(spec.clone(), field) else { continue };
            for (x, p) in boundary_samples(&domain, 400, 50.0, 9) {
                let c = op.normal_shift(&x, &p).map_err(e)?;
                let (_, n) = op.frame(&x).map_err(e)?;
                let residual = op.eval_g(&x, &(p + n * c)).map_err(e)?.abs();
                worst = worst.max(residual / BoundaryOp::shift_tolerance(&p));
                calls += 1;
                if let (BoundaryCondition::Oblique { .. }, Some(closed)) = (&spec.condition, op.closed_form_shift(&x, &p).map_err(e)?) {
                    closed_gap = closed_gap.max((closed - c).abs() / (1.0 + p.norm()));
                }
            }
        }
    }
    let field = DistanceField::new(Domain::Interval { a: 0.0, b: 1.0 }).map_err(e)?;
    let op = BoundaryOp::new(BoundarySpec::capillary(0.5), field).map_err(e)?;
    let c = op.normal_shift(&Vector::new1(0.0), &Vector::new1(0.0)).map_err(e)?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid - 0.5 * (1.0 + mid * mid).sqrt() > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let capillary_gap = (c - oracle).abs().max((c - 1.0 / 3f64.sqrt()).abs());
    check(
        worst <= 1.0 && closed_gap <= 1e-12 && capillary_gap <= 1e-10,
        format!(
            "{calls} calls, worst residual {worst:.2} x tolerance, oblique closed-form gap {closed_gap:.1e}, capillary C = {c:.12} (gap {capillary_gap:.1e})"
        ),
    )
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn reports(lemmas: &[LemmaOutcome]) -> Result<Vec<String>, String> {
    let mut out = vec![json(&lemmas)];
    let vv = load("vanishing_viscosity.json");
    out.push(json(&run_vv_rate(&vv.problem(), &RateStudy::default(), &vv.solver.params()).map_err(e)?));
    let cd = load("continuous_dependence.json");
    for study in &cd.cont_dep {
        out.push(json(&run_cont_dep(&cd.problem(), study, &cd.solver.params(), cd.seed).map_err(e)?));
    }
    for name in ["continuous_dependence.json", "strip_capillary.json", "probe_lambda_violation.json"] {
        let c = load(name);
        out.push(json(&probe_problem(&c.problem(), c.seed).map_err(e)?));
    }
    for name in ["strip_capillary.json", "isaacs.json"] {
        let c = load(name);
        out.push(json(&c.problem().solve(&c.solver.params()).map_err(e)?.values));
    }
    Ok(out)
}

fn determinism(first: &[LemmaOutcome]) -> Outcome {
    let config = load("lemma_capillary.json");
    let study = config.lemma.clone().unwrap_or_default();
    let second = run_lemma_checks(&config.problem(), &study, config.seed).map_err(e)?;
    let a = reports(first)?;
    let b = reports(&second)?;
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x == y);
    check(same, format!("{} reports compared", a.len()))
}

fn main() {
    let config = load("lemma_capillary.json");
    let study = config.lemma.clone().unwrap_or_default();
    let lemmas = run_lemma_checks(&config.problem(), &study, config.seed);
    let lemma_result = |f: fn(&[LemmaOutcome]) -> Outcome| match &lemmas {
        Ok(o) => f(o),
        Err(err) => Err(format!("lemma checks failed: {err}")),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("1 manufactured convergence", manufactured()),
        ("2 vanishing viscosity rate", vanishing_viscosity()),
        ("3 continuous dependence", continuous_dependence()),
        ("4 regularized shift bounds", lemma_result(lemguy)),
        ("5 test function positivity and boundary inequalities", lemma_result(lem_pos_bc)),
        ("6 test function derivative bounds", lemma_result(lem_deriv)),
        ("7 discrete comparison", comparison()),
        ("8 shift correctness", shift_correctness()),
        ("9 determinism", lemma_result(determinism)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
