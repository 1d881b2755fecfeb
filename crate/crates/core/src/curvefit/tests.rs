use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference() -> SigmoidParams {
    SigmoidParams::new(1000.0, 2.0, 4.0).unwrap()
}

fn sampled(p: &SigmoidParams, n: usize, x_max: f64) -> ClickCostCurve {
    let pairs = (1..=n)
        .map(|i| {
            let x = x_max * i as f64 / n as f64;
            (x, p.value(x))
        })
        .collect();
    ClickCostCurve::new(pairs, 0.001, 1e6)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn sigmoid_values() {
    let p = reference();
    assert_eq!(p.value(0.0), 0.0);
    let q = 1000.0 / (1.0 + 4f64.exp());
    assert!((p.q() - 17.986).abs() < 1e-3);
    assert!((p.value(2.0) - (500.0 - q)).abs() < 1e-9);
    assert!((p.value(2.0) - 482.014).abs() < 1e-3);
    assert!((p.value(100.0) - (1000.0 - q)).abs() < 1e-9);
    assert!((p.asymptote() - 982.014).abs() < 1e-3);
    let m = Model::Sigmoid(p);
    assert!(m.eval(-1.0).is_err());
    assert!(Model::Sigmoid(SigmoidParams {
        s: -1.0,
        t: 1.0,
        p: 0.0
    })
    .eval(1.0)
    .is_err());
}

#[test]
fn sigmoid_derivative_examples() {
    let p = reference();
    assert!((p.derivative(2.0) - 500.0).abs() < 1e-9);
    for x in [0.1, 1.0, 2.0, 3.7, 8.0] {
        let d = 1e-6;
        let fd = (p.value(x + d) - p.value(x - d)) / (2.0 * d);
        assert!(rel(p.derivative(x), fd) < 1e-4, "x={x}");
    }
}

#[test]
fn baseline_derivatives_match_finite_differences() {
    let models = [
        Model::Power(TwoParams { alpha: 30.0, beta: 0.6 }),
        Model::MichaelisMenten(TwoParams {
            alpha: 200.0,
            beta: 0.4,
        }),
        Model::NegExp(TwoParams {
            alpha: 500.0,
            beta: 0.7,
        }),
    ];
    for m in &models {
        for x in [0.2, 1.0, 3.0, 9.0] {
            let d = 1e-6;
            let fd = (m.eval(x + d).unwrap() - m.eval(x - d).unwrap()) / (2.0 * d);
            let an = m.derivative(x).unwrap();
            assert!(an >= 0.0);
            assert!(rel(an, fd) < 1e-4, "{:?} x={x}: {an} vs {fd}", m.kind());
        }
    }
    let ne = &models[2];
    assert!(ne.derivative(1.0).unwrap() > ne.derivative(2.0).unwrap());
    assert!(Model::NearestNeighbor(sampled(&reference(), 5, 5.0))
        .derivative(1.0)
        .is_err());
}

#[test]
fn baseline_saturation_limits() {
    let x = 1e6;
    let power = Model::Power(TwoParams { alpha: 2.0, beta: 0.5 });
    assert!(power.eval(x).unwrap() >= 2.0 * 1e3 - 1e-9);
    assert!(power.eval(4.0 * x).unwrap() > power.eval(x).unwrap() * 1.9);
    let mm = Model::MichaelisMenten(TwoParams { alpha: 30.0, beta: 0.2 });
    assert!(rel(mm.eval(x).unwrap(), 30.0 / 0.2) < 1e-4);
    let ne = Model::NegExp(TwoParams { alpha: 77.0, beta: 0.3 });
    assert!(rel(ne.eval(x).unwrap(), 77.0) < 1e-12);
}

#[test]
fn jacobian_structure() {
    let p = reference();
    let xs = [0.0, 0.5, 2.0, 4.5];
    let j = jacobian(&p, &xs).unwrap();
    assert_eq!(j.shape(), (4, 3));
    for c in 0..3 {
        assert_eq!(j[(0, c)], 0.0);
    }
    for (r, &x) in xs.iter().enumerate().skip(1) {
        assert!(rel(j[(r, 0)], p.value(x) / p.s) < 1e-12);
    }
}

// Central finite differences on (s, t, p) as an independent check.
fn fd_column(p: &SigmoidParams, x: f64, k: usize) -> f64 {
    let theta = [p.s, p.t, p.p];
    let h = 1e-6 * theta[k].abs().max(1e-3);
    let at = |v: f64| {
        let mut th = theta;
        th[k] = v;
        SigmoidParams {
            s: th[0],
            t: th[1],
            p: th[2],
        }
        .value(x)
    };
    (at(theta[k] + h) - at(theta[k] - h)) / (2.0 * h)
}

#[test]
fn jacobian_matches_finite_differences_on_seeded_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let p = SigmoidParams::new(
            10f64.powf(rng.random_range(1.0..6.0)),
            rng.random_range(0.1..10.0),
            rng.random_range(0.5..20.0),
        )
        .unwrap();
        let x = rng.random_range(0.0..(p.p + 6.0) / p.t);
        let j = jacobian(&p, &[x]).unwrap();
        for k in 0..3 {
            let fd = fd_column(&p, x, k);
            let scale = fd.abs().max(1e-8 * p.s);
            assert!(
                (j[(0, k)] - fd).abs() / scale < 1e-5,
                "k={k} {p:?} x={x}: {} vs {fd}",
                j[(0, k)]
            );
        }
    }
}

#[test]
fn round_trip_recovers_reference_params() {
    let p = reference();
    let curve = sampled(&p, 25, 5.0);
    let r = fit(ModelKind::Sigmoid, &curve, &FitConfig::default()).unwrap();
    let got = r.model.as_sigmoid().unwrap();
    assert!(r.converged, "{r:?}");
    assert!(
        rel(got.s, p.s) < 1e-3 && rel(got.t, p.t) < 1e-3 && rel(got.p, p.p) < 1e-3,
        "{got:?}"
    );
    assert_eq!(got.value(0.0), 0.0);
    assert_eq!(r.n_points, 25);
}

#[test]
fn sse_never_increases_with_more_iterations() {
    // iterates are a deterministic prefix, so capping iterations exposes them
    let p = SigmoidParams::new(5e4, 0.8, 6.0).unwrap();
    let mut curve = sampled(&p, 30, 15.0);
    for (i, pair) in curve.pairs.iter_mut().enumerate() {
        pair.1 *= 1.0 + 0.05 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
    }
    let mut last = f64::INFINITY;
    for cap in 1..40 {
        let cfg = FitConfig {
            max_iterations: cap,
            xi: 1e-15,
            ..FitConfig::default()
        };
        let r = fit(ModelKind::Sigmoid, &curve, &cfg).unwrap();
        assert!(
            r.sse <= last + 1e-9 * last.abs().min(1e300),
            "cap {cap}: {} > {last}",
            r.sse
        );
        last = r.sse;
    }
}

#[test]
fn fitted_sigmoid_has_s_curve_sign_pattern() {
    let p = SigmoidParams::new(2000.0, 1.3, 5.0).unwrap();
    let mut curve = sampled(&p, 25, 9.0);
    for (i, pair) in curve.pairs.iter_mut().enumerate() {
        pair.1 *= if i % 2 == 0 { 1.03 } else { 0.97 };
    }
    let r = fit(ModelKind::Sigmoid, &curve, &FitConfig::default()).unwrap();
    let f = r.model.as_sigmoid().unwrap();
    let x_star = f.p / f.t;
    let h = 1e-3;
    let second = |x: f64| (f.value(x + h) - 2.0 * f.value(x) + f.value(x - h)) / (h * h);
    let mut x = 0.01;
    while x <= x_star - 0.05 {
        assert!(second(x) > 0.0, "x={x}");
        x += 0.01;
    }
    x = x_star + 0.05;
    while x <= x_star + 5.0 / f.t {
        assert!(second(x) < 0.0, "x={x}");
        x += 0.01;
    }
}

#[test]
fn baselines_fit_their_own_families() {
    let cases = [
        (
            ModelKind::Power,
            Model::Power(TwoParams {
                alpha: 40.0,
                beta: 0.55,
            }),
        ),
        (
            ModelKind::MichaelisMenten,
            Model::MichaelisMenten(TwoParams {
                alpha: 300.0,
                beta: 0.5,
            }),
        ),
        (
            ModelKind::NegExp,
            Model::NegExp(TwoParams {
                alpha: 800.0,
                beta: 0.35,
            }),
        ),
    ];
    for (kind, truth) in cases {
        let pairs = (1..=20).map(|i| {
            let x = i as f64 * 0.5;
            (x, truth.eval(x).unwrap())
        });
        let curve = ClickCostCurve::new(pairs.collect(), 0.001, 1.0);
        let r = fit(kind, &curve, &FitConfig::default()).unwrap();
        assert!(r.converged, "{kind}");
        for x in [0.7, 3.3, 9.1] {
            let (a, b) = (r.model.eval(x).unwrap(), truth.eval(x).unwrap());
            assert!(rel(a, b) < 1e-4, "{kind} at {x}: {a} vs {b}");
        }
    }
}

#[test]
fn power_beta_is_projected_into_unit_interval() {
    // convex data would want beta > 1
    let curve = ClickCostCurve::new((1..=10).map(|i| (i as f64, (i * i) as f64)).collect(), 0.001, 1.0);
    let r = fit(ModelKind::Power, &curve, &FitConfig::default()).unwrap();
    match r.model {
        Model::Power(p) => assert!(p.beta > 0.0 && p.beta <= 1.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn degenerate_and_short_data() {
    let zeros = ClickCostCurve::new((1..=5).map(|i| (i as f64, 0.0)).collect(), 0.001, 1.0);
    assert!(matches!(
        fit(ModelKind::Sigmoid, &zeros, &FitConfig::default()),
        Err(FitError::DegenerateData(_))
    ));
    let same_cost = ClickCostCurve::new((1..=5).map(|i| (2.0, i as f64)).collect(), 0.001, 1.0);
    assert!(matches!(
        fit(ModelKind::Power, &same_cost, &FitConfig::default()),
        Err(FitError::DegenerateData(_))
    ));
    let short = sampled(&reference(), 3, 5.0).without(0);
    assert_eq!(
        fit(ModelKind::Sigmoid, &short, &FitConfig::default()),
        Err(FitError::TooFewPoints { found: 2, need: 4 })
    );
    let bad_cfg = FitConfig {
        xi: 0.0,
        ..FitConfig::default()
    };
    assert!(fit(ModelKind::Sigmoid, &sampled(&reference(), 10, 5.0), &bad_cfg).is_err());
}

#[test]
fn non_parametric_predictors() {
    let curve = ClickCostCurve::new(vec![(1.0, 100.0), (3.0, 300.0)], 0.001, 1.0);
    assert_eq!(predict_baseline(ModelKind::LinearInterp, &curve, 2.0).unwrap(), 200.0);
    assert_eq!(
        predict_baseline(ModelKind::NearestNeighbor, &curve, 1.9).unwrap(),
        100.0
    );
    assert_eq!(
        predict_baseline(ModelKind::NearestNeighbor, &curve, 2.0).unwrap(),
        100.0
    );
    assert_eq!(
        predict_baseline(ModelKind::NearestNeighbor, &curve, 3.0).unwrap(),
        300.0
    );
    assert_eq!(
        predict_baseline(ModelKind::LinearInterp, &curve, 3.5),
        Err(FitError::OutOfRange {
            x: 3.5,
            lo: 1.0,
            hi: 3.0
        })
    );
    let r = fit(ModelKind::NearestNeighbor, &curve, &FitConfig::default()).unwrap();
    assert_eq!(r.model, Model::NearestNeighbor(curve.clone()));
    assert_eq!(r.model.eval(2.9).unwrap(), 300.0);
}

#[test]
fn fit_result_json_shape() {
    let r = fit(
        ModelKind::Sigmoid,
        &sampled(&reference(), 25, 5.0),
        &FitConfig::default(),
    )
    .unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["kind"], "sigmoid");
    for key in ["s", "t", "p", "q"] {
        assert!(v["params"][key].is_number(), "{key}");
    }
    for key in ["sse", "iterations", "converged", "n_points"] {
        assert!(!v[key].is_null(), "{key}");
    }
    let mm = FitResult {
        model: Model::MichaelisMenten(TwoParams { alpha: 1.0, beta: 2.0 }),
        sse: 0.0,
        iterations: 0,
        converged: true,
        n_points: 3,
    };
    let v = serde_json::to_value(&mm).unwrap();
    assert_eq!(v["kind"], "michaelis_menten");
    assert_eq!(v["params"]["beta"], 2.0);
}

#[test]
fn model_kind_names_round_trip() {
    for k in ModelKind::ALL {
        assert_eq!(k.short_name().parse::<ModelKind>().unwrap(), k);
    }
}

proptest! {
    #[test]
    fn sigmoid_h0_zero_and_monotone(s in 1.0f64..1e6, t in 0.01f64..10.0, p in -20.0f64..20.0, x in 0.0f64..50.0) {
        let sp = SigmoidParams::new(s, t, p).unwrap();
        prop_assert_eq!(sp.value(0.0), 0.0);
        prop_assert!(sp.derivative(x) >= 0.0);
        prop_assert!(sp.value(x + 0.1) >= sp.value(x));
        let g = sp.gradient(x);
        prop_assert!(rel(g[0] * s, sp.value(x)) < 1e-9 || sp.value(x).abs() < 1e-300);
    }

    #[test]
    fn baseline_derivatives_non_negative(a in 0.01f64..1e4, b in 0.01f64..1.0, x in 0.0f64..100.0) {
        for m in [
            Model::Power(TwoParams { alpha: a, beta: b }),
            Model::MichaelisMenten(TwoParams { alpha: a, beta: b }),
            Model::NegExp(TwoParams { alpha: a, beta: b }),
        ] {
            prop_assert!(m.derivative(x).unwrap() >= 0.0);
        }
    }
}
