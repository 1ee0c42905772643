use cpvquad::approx::best_approx_ladder;
use cpvquad::cpv::{cpv_eval, CpvOptions};
use cpvquad::mrs::{mrs, DegreeScales};
use cpvquad::orthopoly::{cached_table, gauss_rule, recurrence_table};
use cpvquad::quad::{integrate, AdaptiveOptions, Split};
use cpvquad::quadrature::{build_rule, error_bound, BoundOptions};
use cpvquad::second_kind::QnEvaluator;
use cpvquad::WeightSpec;
use proptest::prelude::*;

fn spec(s: &str) -> WeightSpec {
    s.parse().unwrap()
}

fn w2(w: &WeightSpec, t: f64) -> f64 {
    w.eval_w2(t).unwrap().value
}

const SPECS: [&str; 3] = ["freud:alpha=2,beta=2", "freud:alpha=2,beta=3", "pollaczek:alpha=1,beta=1"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn q_is_nonnegative_and_freud_t_is_exact(x in -20.0f64..20.0, alpha in 1.1f64..5.0, extra in 0.0f64..3.0) {
        let w = WeightSpec::freud(alpha, alpha + extra).unwrap();
        prop_assert!(w.eval_q(x).unwrap() >= 0.0);
        prop_assert_eq!(w.eval_q(0.0).unwrap(), 0.0);
        if x.abs() > 1e-3 {
            let t = w.eval_t(x).unwrap();
            let want = if x > 0.0 { alpha } else { alpha + extra };
            prop_assert!((t - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn q_prime_matches_central_difference(x in 0.05f64..0.95, which in 0usize..3) {
        let w = spec(SPECS[which]);
        for x in [x, -x] {
            let h = 1e-6;
            let fd = (w.eval_q(x + h).unwrap() - w.eval_q(x - h).unwrap()) / (2.0 * h);
            let exact = w.eval_q_prime(x).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3));
        }
    }

    #[test]
    fn mrs_is_symmetric_for_even_weights_and_increasing(t in 1.0f64..500.0) {
        for s in ["freud:alpha=2,beta=2", "freud:alpha=4,beta=4", "pollaczek:alpha=1,beta=1"] {
            let w = spec(s);
            let m = mrs(&w, t).unwrap();
            prop_assert!((m.a_minus + m.a_plus).abs() <= 1e-12 * m.a_plus);
        }
        let w = spec("freud:alpha=2,beta=3");
        let (a, b) = (mrs(&w, t).unwrap(), mrs(&w, 1.1 * t).unwrap());
        prop_assert!(b.a_plus > a.a_plus && b.delta > a.delta && b.a_minus < a.a_minus);
    }

    #[test]
    fn gauss_rules_integrate_degree_2n_minus_1(
        coeffs in prop::collection::vec(-1.0f64..1.0, 64),
        which in 0usize..3,
        k in 0usize..4,
    ) {
        let n = [4usize, 8, 16, 32][k];
        let w = spec(SPECS[which]);
        let table = recurrence_table(&w).unwrap();
        let rule = gauss_rule(&table, n).unwrap();
        let scale = mrs(&w, n as f64).unwrap().delta;
        let c = &coeffs[..2 * n];
        let p = |t: f64| c.iter().rev().fold(0.0, |acc, &ck| acc * t / scale + ck);
        let (lo, hi) = if w.is_bounded() {
            w.support()
        } else {
            let m = mrs(&w, 6.0 * n as f64).unwrap();
            (2.0 * m.a_minus, 2.0 * m.a_plus)
        };
        let opts = AdaptiveOptions { abs_tol: 0.0, rel_tol: 1e-13, max_panels: 50_000, ..Default::default() };
        let exact = integrate(|t| p(t) * w2(&w, t), &[lo, 0.0, hi], &opts).value;
        prop_assert!((rule.integrate(p) - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn cpv_is_linear(x in -2.0f64..2.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let w = spec("freud:alpha=2,beta=3");
        let opts = CpvOptions::default();
        let f = cpv_eval(&w, |t| t.sin(), x, &opts).unwrap();
        let g = cpv_eval(&w, |t| 1.0 + t * t, x, &opts).unwrap();
        let h = cpv_eval(&w, |t| a * t.sin() + b * (1.0 + t * t), x, &opts).unwrap();
        let err = h.error_estimate + a.abs() * f.error_estimate + b.abs() * g.error_estimate;
        prop_assert!((h.value - a * f.value - b * g.value).abs() <= err + 1e-12);
    }

    #[test]
    fn cpv_translation_identity(x in -2.0f64..2.0) {
        let w = spec("freud:alpha=2,beta=3");
        let opts = CpvOptions::default();
        let g = |t: f64| t.cos();
        let lhs = cpv_eval(&w, |t| t * g(t), x, &opts).unwrap();
        let base = cpv_eval(&w, g, x, &opts).unwrap();
        let aopts = AdaptiveOptions { abs_tol: 1e-13, rel_tol: 1e-13, ..Default::default() };
        let mass = integrate(|t| g(t) * w2(&w, t), &[-8.0, 0.0, 8.0], &aopts);
        let rhs = mass.value + x * base.value;
        let err = lhs.error_estimate + mass.error + x.abs() * base.error_estimate;
        prop_assert!((lhs.value - rhs).abs() <= err + 1e-12);
    }

    #[test]
    fn more_panels_never_raise_the_error_and_splits_agree(x in -2.0f64..2.0) {
        let w = spec("freud:alpha=2,beta=2");
        let g = |t: f64| t.abs() + 0.5 * t;
        let run = |opts: CpvOptions| match cpv_eval(&w, g, x, &opts) {
            Ok(v) => (v.value, v.error_estimate),
            Err(cpvquad::Error::Accuracy { value, error, .. }) => (value, error),
            Err(e) => panic!("{e}"),
        };
        let tight = CpvOptions::default().with_tolerances(1e-15, 1e-15);
        let small = run(CpvOptions { max_panels: 40, ..tight });
        let large = run(CpvOptions { max_panels: 80, ..tight });
        prop_assert!(large.1 <= small.1);
        let bisect = run(CpvOptions::default());
        let trisect = run(CpvOptions { split: Split::Trisect, ..CpvOptions::default() });
        prop_assert!((bisect.0 - trisect.0).abs() <= 3.0 * bisect.1.max(trisect.1) + 1e-14);
    }

    #[test]
    fn second_kind_is_continuous_across_the_near_node_seam(j in 0usize..12, side in prop::bool::ANY) {
        let w = spec("freud:alpha=2,beta=3");
        let ev = QnEvaluator::new(&w, cached_table(&w, 40, 64).unwrap(), 12).unwrap();
        let s = if side { 1.0 } else { -1.0 };
        let x = ev.rule().nodes[j] + s * ev.tau(j);
        let inside = ev.qn(x - s * 1e-9 * ev.tau(j)).unwrap();
        let outside = ev.qn(x + s * 1e-9 * ev.tau(j)).unwrap();
        let scale = ev.qn_at_node(j).abs().max(inside.abs());
        prop_assert!((inside - outside).abs() <= 1e-6 * scale);
    }

    #[test]
    fn product_rule_is_exact_below_degree_n(x in -2.5f64..2.5, k in 0usize..3) {
        let n = [8usize, 12, 16][k];
        let w = spec("freud:alpha=2,beta=3");
        let ev = QnEvaluator::new(&w, cached_table(&w, 40, 64).unwrap(), n).unwrap();
        let rule = build_rule(&ev, x).unwrap();
        for d in 0..n as i32 {
            let q = rule.evaluate(|t| t.powi(d)).unwrap();
            let o = cpv_eval(&w, |t| t.powi(d), x, &CpvOptions::default()).unwrap();
            prop_assert!((q - o.value).abs() <= 1e-8 * o.value.abs() + 10.0 * o.error_estimate);
        }
    }
}

#[test]
fn orthonormality_to_degree_40() {
    for s in SPECS {
        let w = spec(s);
        let t = recurrence_table(&w).unwrap();
        assert!(cpvquad::orthopoly::orthonormality_defect(&w, &t, 40).unwrap() <= 1e-10, "{s}");
    }
}

#[test]
fn nodes_interlace_and_stay_inside_the_mrs_interval() {
    for s in SPECS {
        let w = spec(s);
        let table = recurrence_table(&w).unwrap();
        for n in 2..40 {
            let a = gauss_rule(&table, n).unwrap();
            let b = gauss_rule(&table, n + 1).unwrap();
            for j in 0..n {
                assert!(b.nodes[j] > a.nodes[j] && a.nodes[j] > b.nodes[j + 1], "{s} n = {n} j = {j}");
            }
            let m = mrs(&w, n as f64).unwrap();
            assert!(a.nodes[0] < m.a_plus && a.nodes[n - 1] > m.a_minus, "{s} n = {n}");
        }
    }
}

#[test]
fn spacing_over_phi_stays_in_one_band() {
    for s in SPECS {
        let w = spec(s);
        let table = recurrence_table(&w).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for n in [8usize, 12, 16, 24, 32, 48, 64] {
            let d = cpvquad::orthopoly::pn_diagnostics(&w, &table, n, 500).unwrap();
            lo = lo.min(d.spacing_band.0);
            hi = hi.max(d.spacing_band.1);
        }
        assert!(lo > 0.0 && hi / lo < 10.0, "{s}: [{lo}, {hi}]");
    }
}

#[test]
fn proxy_never_increases_with_degree() {
    let w = spec("freud:alpha=2,beta=3");
    let table = recurrence_table(&w).unwrap();
    for f in [|t: f64| t.abs(), |t: f64| (t - 0.5).abs(), |t: f64| t.sin()] {
        let ladder: Vec<usize> = (4..=24).collect();
        let res = best_approx_ladder(&w, &table, f, &ladder, 600).unwrap();
        for p in res.windows(2) {
            assert!(p[1].proxy <= p[0].proxy + 1e-12);
        }
        assert!(res.iter().all(|r| r.proxy >= 0.0));
    }
}

#[test]
fn shifted_kink_stays_within_the_calibrated_bound() {
    let w = spec("freud:alpha=2,beta=2");
    let table = recurrence_table(&w).unwrap();
    let f = |t: f64| (t - 0.5).abs();
    for n in [8usize, 16, 32] {
        let ev = QnEvaluator::new(&w, table.clone(), n).unwrap();
        let e = cpvquad::approx::best_approx(&w, &table, f, n - 1, 20 * n).unwrap().proxy;
        for x in [0.0, 0.3, 1.1] {
            let q = build_rule(&ev, x).unwrap().evaluate(f).unwrap();
            let o = cpv_eval(&w, f, x, &CpvOptions::default().with_tolerances(1e-12, 1e-12)).unwrap();
            let bound = error_bound(&w, n, x, e, &BoundOptions::default()).unwrap().total;
            let err = (q - o.value).abs();
            assert!(err <= cpvquad::acceptance::C_STAR * bound + o.error_estimate, "n = {n}, x = {x}: {err} vs {bound}");
        }
    }
}

#[test]
fn region_labels_follow_the_mrs_data() {
    let w = spec("freud:alpha=2,beta=3");
    let n = 16;
    let sc = DegreeScales::new(&w, n).unwrap();
    let half = mrs(&w, 8.0).unwrap();
    use cpvquad::quadrature::Region;
    let at = |x: f64| error_bound(&w, n, x, 1.0, &BoundOptions::default()).unwrap().region;
    assert_eq!(at(0.5 * half.a_plus), Region::C);
    assert_eq!(at(0.5 * (half.a_plus + sc.mrs_n.a_plus)), Region::B);
    assert_eq!(at(0.5 * (half.a_minus + sc.mrs_n.a_minus)), Region::D);
    assert_eq!(at(1.5 * sc.mrs_n.a_plus), Region::A);
    assert_eq!(at(1.5 * sc.mrs_n.a_minus), Region::E);
    assert_eq!(at(5.0 * sc.mrs_n.a_plus), Region::Otherwise);
}
