//! The acceptance suite: ten numbered checks with fixed tolerances, each
//! returning a pass/fail record with its measured quantities.

use crate::cpv::{cpv_eval, CpvOptions, Subtraction};
use crate::error::{Error, Result};
use crate::integrand::Builtin;
use crate::mrs::{mrs, scaling_exponents, solve_mrs, DEFAULT_TOL};
use crate::orthopoly::{gauss_rule, orthonormality_defect, pn_diagnostics, recurrence_table};
use crate::quad::{integrate, AdaptiveOptions};
use crate::quadrature::{build_rule, convergence_study, count_inversions, ConvergenceRow, StudyPoint};
use crate::second_kind::{qn_sup_study, QnEvaluator};
use crate::weight::WeightSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 42;

/// Bound constant calibrated once as the largest error/bound ratio above the
/// noise floor on freud(2,2) (observed 0.0994), rounded up.
pub const C_STAR: f64 = 0.1;

/// Frozen band for `sup |q_n| a_n^{1/2}` on freud(2,2) (observed 2.31 to 2.51 for n = 8…64).
pub const SYMMETRIC_SUP_BAND: (f64, f64) = (1.0, 5.0);

/// Largest allowed ratio between the ends of a two-sided band across degrees.
pub const BAND_WIDTH: f64 = 10.0;

pub const DEGREE_BAND_LADDER: [usize; 7] = [8, 12, 16, 24, 32, 48, 64];

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub seconds: f64,
    pub details: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub passed: bool,
    pub seconds: f64,
    pub criteria: Vec<CriterionResult>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary,
            self.seconds
        )
    }
}

pub const CRITERIA: [(u32, &str); 10] = [
    (1, "mrs closed form"),
    (2, "mrs scaling"),
    (3, "orthonormality"),
    (4, "gauss exactness"),
    (5, "second-kind identity"),
    (6, "product-rule exactness"),
    (7, "remainder of p_n"),
    (8, "second-kind sup band"),
    (9, "polynomial bands"),
    (10, "end-to-end convergence"),
];

/// Runs one criterion; an internal error is reported as a failure.
pub fn run_criterion(id: u32, seed: u64) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .unwrap_or("unknown");
    let start = Instant::now();
    let outcome = match id {
        1 => mrs_closed_form(),
        2 => mrs_scaling(),
        3 => orthonormality(),
        4 => gauss_exactness(seed),
        5 => second_kind_identity(seed),
        6 => product_rule_exactness(seed),
        7 => remainder_of_pn(),
        8 => second_kind_sup_band(),
        9 => polynomial_bands(),
        10 => end_to_end_convergence(),
        _ => Err(Error::Parameter(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, summary, details) = match outcome {
        Ok(o) => o,
        Err(e) => (false, format!("error: {e}"), Value::Null),
    };
    let limit = time_limit(id);
    let within_time = seconds <= limit;
    CriterionResult {
        id,
        name,
        passed: passed && within_time,
        summary: if within_time {
            summary
        } else {
            format!("{summary}; runtime {seconds:.1} s exceeds {limit} s")
        },
        seconds,
        details,
    }
}

fn time_limit(id: u32) -> f64 {
    match id {
        1 => 1.0,
        2 => 30.0,
        3 => 120.0,
        8 => 300.0,
        _ => 600.0,
    }
}

pub fn run_all(seed: u64) -> AcceptanceReport {
    let start = Instant::now();
    let criteria: Vec<CriterionResult> = CRITERIA.iter().map(|&(id, _)| run_criterion(id, seed)).collect();
    AcceptanceReport {
        seed,
        passed: criteria.iter().all(|c| c.passed),
        seconds: start.elapsed().as_secs_f64(),
        criteria,
    }
}

type Outcome = Result<(bool, String, Value)>;

fn spec(s: &str) -> WeightSpec {
    s.parse().expect("built-in spec")
}

fn mrs_closed_form() -> Outcome {
    let w = spec("freud:alpha=2,beta=2");
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for t in [1.0f64, 4.0, 9.0, 100.0] {
        let m = solve_mrs(&w, t, DEFAULT_TOL)?;
        let rel = (m.a_plus - t.sqrt()).abs().max((m.a_minus + t.sqrt()).abs()) / t.sqrt();
        worst = worst.max(rel);
        rows.push(json!({"t": t, "a_plus": m.a_plus, "a_minus": m.a_minus, "relative_error": rel}));
    }
    Ok((worst <= 1e-8, format!("max |a_t − √t|/√t = {worst:.2e} (≤ 1e-8)"), json!(rows)))
}

fn mrs_scaling() -> Outcome {
    let ladder: Vec<f64> = (0..=12).map(|k| 10f64 * 1000f64.powf(k as f64 / 12.0)).collect();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    // asserted on the upper MRS number; the lower one is reported
    let cases: [(&str, f64, f64); 4] = [
        ("freud:alpha=2,beta=2", 0.5, 0.5),
        ("freud:alpha=2,beta=3", 0.5, 1.0 / 3.0),
        ("freud:alpha=4,beta=4", 0.25, 0.25),
        ("pollaczek:alpha=1,beta=1", -1.0 / 1.5, -1.0 / 1.5),
    ];
    for (s, plus, minus) in cases {
        let fit = scaling_exponents(&spec(s), &ladder)?;
        let dp = (fit.slope_plus / plus - 1.0).abs();
        worst = worst.max(dp);
        rows.push(json!({"spec": s, "slope_plus": fit.slope_plus, "expected_plus": plus,
            "slope_minus": fit.slope_minus, "limit_minus": minus}));
    }
    Ok((worst <= 0.05, format!("max relative slope deviation {:.2}% (≤ 5%)", 100.0 * worst), json!(rows)))
}

const THREE_SPECS: [&str; 3] = ["freud:alpha=2,beta=2", "freud:alpha=2,beta=3", "pollaczek:alpha=1,beta=1"];

fn orthonormality() -> Outcome {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for s in THREE_SPECS {
        let w = spec(s);
        let table = recurrence_table(&w)?;
        let d = orthonormality_defect(&w, &table, 40)?;
        worst = worst.max(d);
        rows.push(json!({"spec": s, "defect": d}));
    }
    Ok((worst <= 1e-10, format!("max Gram defect to degree 40: {worst:.2e} (≤ 1e-10)"), json!(rows)))
}

/// Random `Σ c_k (t/s)^k`, `c_k` uniform in `[−1, 1]`.
fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Vec<f64> {
    (0..=degree).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

fn gauss_exactness(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    let opts = AdaptiveOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_panels: 50_000,
        ..Default::default()
    };
    let rough = AdaptiveOptions {
        abs_tol: 0.0,
        rel_tol: 1e-6,
        ..opts
    };
    for s in THREE_SPECS {
        let w = spec(s);
        let table = recurrence_table(&w)?;
        let (c, d) = w.support();
        for n in [4usize, 8, 16, 32] {
            let rule = gauss_rule(&table, n)?;
            let scale = mrs(&w, n as f64)?.delta;
            let (lo, hi) = if w.is_bounded() {
                (c, d)
            } else {
                let m = mrs(&w, 6.0 * n as f64)?;
                (2.0 * m.a_minus, 2.0 * m.a_plus)
            };
            let mut worst_n = 0.0f64;
            for _ in 0..50 {
                let coeffs = random_poly(&mut rng, 2 * n - 1);
                let p = |t: f64| horner(&coeffs, t / scale);
                let g = rule.integrate(p);
                let breaks = [lo, 0.0, hi];
                let exact = integrate(|t| p(t) * w.w2(t), &breaks, &opts);
                let l1 = integrate(|t| p(t).abs() * w.w2(t), &breaks, &rough);
                let rel = (g - exact.value).abs() / l1.value;
                worst_n = worst_n.max(rel);
            }
            worst = worst.max(worst_n);
            rows.push(json!({"spec": s, "n": n, "max_relative_error": worst_n}));
        }
    }
    Ok((
        worst <= 1e-10,
        format!("max |G_n[P] − ∫P w²| / ∫|P| w² = {worst:.2e} over 600 polynomials (≤ 1e-10)"),
        json!(rows),
    ))
}

/// Oracle value and error estimate of `I[g; x]`: the better of both subtraction forms.
fn oracle_with_error(w: &WeightSpec, g: impl Fn(f64) -> f64, x: f64, good: impl Fn(f64, f64) -> bool) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut last = None;
    for subtraction in [Subtraction::Integrand, Subtraction::Product] {
        let opts = CpvOptions {
            subtraction,
            ..CpvOptions::default().with_tolerances(1e-14, 1e-13)
        };
        let (value, error) = match cpv_eval(w, &g, x, &opts) {
            Ok(v) => (v.value, v.error_estimate),
            Err(Error::Accuracy { value, error, .. }) => (value, error),
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        if best.map_or(true, |(_, e)| error < e) {
            best = Some((value, error));
        }
        if good(value, error) {
            break;
        }
    }
    best.ok_or_else(|| last.unwrap_or_else(|| Error::Parameter("no oracle value".into())))
}

/// Oracle value accepted when its error estimate is below `0.1 · tol · max(|value|, floor)`.
fn oracle(w: &WeightSpec, g: impl Fn(f64) -> f64, x: f64, tol: f64, floor: f64) -> Result<f64> {
    let good = |value: f64, error: f64| error <= 0.1 * tol * value.abs().max(floor);
    let (value, error) = oracle_with_error(w, g, x, good)?;
    if good(value, error) {
        Ok(value)
    } else {
        Err(Error::Accuracy { value, error, panels: 0 })
    }
}

fn second_kind_identity(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_node = 0.0f64;
    let mut node_rows = Vec::new();
    for s in THREE_SPECS {
        let w = spec(s);
        let table = recurrence_table(&w)?;
        for n in 1..=6usize {
            let ev = QnEvaluator::new(&w, table.clone(), n)?;
            for j in 0..n {
                let xj = ev.rule().nodes[j];
                let o = oracle(&w, |t| table.pn(n, t), xj, 1e-6, 1.0)?;
                let d = (ev.qn_at_node(j) - o).abs();
                worst_node = worst_node.max(d);
                node_rows.push(json!({"spec": s, "n": n, "j": j + 1, "node_value": ev.qn_at_node(j), "oracle": o}));
            }
        }
    }
    let mut worst_rel = 0.0f64;
    let mut point_rows = Vec::new();
    for s in THREE_SPECS {
        let w = spec(s);
        let table = recurrence_table(&w)?;
        for _ in 0..50 {
            let n = rng.gen_range(1..=20usize);
            let m = mrs(&w, n as f64)?;
            let x = rng.gen_range(m.a_minus..m.a_plus);
            let ev = QnEvaluator::new(&w, table.clone(), n)?;
            let (q, method) = ev.qn_with_method(x)?;
            let o = oracle(&w, |t| table.pn(n, t), x, 1e-6, 0.0)?;
            let rel = (q - o).abs() / o.abs();
            worst_rel = worst_rel.max(rel);
            point_rows.push(json!({"spec": s, "n": n, "x": x, "qn": q, "method": format!("{method:?}"), "oracle": o}));
        }
    }
    Ok((
        worst_node <= 1e-6 && worst_rel <= 1e-6,
        format!("node identity max error {worst_node:.2e} (≤ 1e-6); closed form vs oracle max relative {worst_rel:.2e} at 150 points (≤ 1e-6)"),
        json!({"nodes": node_rows, "points": point_rows}),
    ))
}

fn product_rule_exactness(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = spec("freud:alpha=2,beta=3");
    let table = recurrence_table(&w)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for n in [8usize, 16, 32] {
        let ev = QnEvaluator::new(&w, table.clone(), n)?;
        let m = mrs(&w, n as f64)?;
        let mut worst_n = 0.0f64;
        for _ in 0..20 {
            let x = rng.gen_range(0.9 * m.a_minus..0.9 * m.a_plus);
            let rule = build_rule(&ev, x)?;
            for k in 0..n as i32 {
                let q = rule.evaluate(|t| t.powi(k))?;
                let o = oracle(&w, |t| t.powi(k), x, 1e-8, 0.0)?;
                let rel = (q - o).abs() / o.abs();
                worst_n = worst_n.max(rel);
            }
        }
        worst = worst.max(worst_n);
        rows.push(json!({"n": n, "max_relative_error": worst_n}));
    }
    Ok((
        worst <= 1e-8,
        format!("max relative error of Σ w_j x_j^k against the oracle {worst:.2e} (≤ 1e-8)"),
        json!(rows),
    ))
}

fn remainder_of_pn() -> Outcome {
    let w = spec("freud:alpha=2,beta=3");
    let table = recurrence_table(&w)?;
    let mut worst = 0.0f64;
    let mut excess = 0.0f64;
    let mut rows = Vec::new();
    for n in [8usize, 16] {
        let ev = QnEvaluator::new(&w, table.clone(), n)?;
        let m = mrs(&w, n as f64)?;
        for i in 0..50 {
            let x = m.a_minus + (m.a_plus - m.a_minus) * (i as f64 + 0.5) / 50.0;
            let rule = build_rule(&ev, x)?;
            let q = ev.qn(x)?;
            let (o, oe) = oracle_with_error(&w, |t| table.pn(n, t), x, |v, e| e <= 1e-8 * v.abs())?;
            let r = o - rule.evaluate(|t| table.pn(n, t))?;
            let d = (r - q).abs();
            worst = worst.max(d / q.abs());
            excess = excess.max(d / (1e-7 * q.abs() + oe));
            rows.push(json!({"n": n, "x": x, "remainder": r, "qn": q, "oracle_error": oe}));
        }
    }
    Ok((
        excess <= 1.0,
        format!(
            "max |R_n[p_n] − q_n|/(1e-7·|q_n| + oracle error) = {excess:.3} (≤ 1) on 100 points; raw max relative {worst:.2e}"
        ),
        json!(rows),
    ))
}

fn second_kind_sup_band() -> Outcome {
    let ladder = [8usize, 16, 32, 64];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for s in ["freud:alpha=2,beta=2", "freud:alpha=2,beta=3"] {
        let w = spec(s);
        let rep = qn_sup_study(&w, recurrence_table(&w)?, &ladder)?;
        let ratio = rep.normalized_max / rep.normalized_median;
        ok &= ratio <= 2.0;
        parts.push(format!("{s} max/median {ratio:.2}"));
        if s == "freud:alpha=2,beta=2" {
            let (lo, hi) = rep
                .rows
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.symmetric_normalized), b.max(r.symmetric_normalized)));
            ok &= lo >= SYMMETRIC_SUP_BAND.0 && hi <= SYMMETRIC_SUP_BAND.1;
            parts.push(format!(
                "sup|q_n| a_n^(1/2) in [{lo:.2}, {hi:.2}] ⊂ [{}, {}]",
                SYMMETRIC_SUP_BAND.0, SYMMETRIC_SUP_BAND.1
            ));
        }
        reports.push(rep);
    }
    Ok((ok, parts.join("; "), json!(reports)))
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(0.0f64, f64::max);
    hi / lo
}

fn polynomial_bands() -> Outcome {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    let mut spreads = Vec::new();
    for s in THREE_SPECS {
        let w = spec(s);
        let table = recurrence_table(&w)?;
        let diags = DEGREE_BAND_LADDER
            .iter()
            .map(|&n| pn_diagnostics(&w, &table, n, 2000))
            .collect::<Result<Vec<_>>>()?;
        let col = |f: &dyn Fn(&crate::orthopoly::PnDiagnostics) -> f64| diags.iter().map(f).collect::<Vec<f64>>();
        let stats = [
            ("edge_sup", spread(&col(&|d| d.sup_pw_edge))),
            ("spacing_low", spread(&col(&|d| d.spacing_band.0))),
            ("spacing_high", spread(&col(&|d| d.spacing_band.1))),
            ("christoffel_low", spread(&col(&|d| d.christoffel_band.0))),
            ("christoffel_high", spread(&col(&|d| d.christoffel_band.1))),
        ];
        for (name, v) in stats {
            worst = worst.max(v);
            spreads.push(json!({"spec": s, "statistic": name, "spread_over_n": v}));
        }
        let x_width = |f: &dyn Fn(&crate::orthopoly::PnDiagnostics) -> (f64, f64)| {
            diags.iter().map(|d| f(d).1 / f(d).0).fold(0.0f64, f64::max)
        };
        rows.push(json!({
            "spec": s,
            "spacing_width_in_x": x_width(&|d| d.spacing_band),
            "christoffel_width_in_x": x_width(&|d| d.christoffel_band),
            "diagnostics": diags,
        }));
    }
    Ok((
        worst <= BAND_WIDTH,
        format!("largest spread across n = 8…64 of any normalized statistic {worst:.2} (≤ {BAND_WIDTH})"),
        json!({"spreads": spreads, "per_spec": rows}),
    ))
}

/// Studies `|t|` and `sin t` at `x ∈ {0, 0.3, a_{n/2}}` for `n ∈ {8, 16, 32, 64}`.
pub fn convergence_rows(w: &WeightSpec) -> Result<Vec<(Builtin, Vec<ConvergenceRow>)>> {
    let table = recurrence_table(w)?;
    let points = [StudyPoint::Fixed(0.0), StudyPoint::Fixed(0.3), StudyPoint::HalfMrs];
    [Builtin::Abs, Builtin::Sin]
        .into_iter()
        .map(|f| Ok((f, convergence_study(w, table.clone(), |t| f.eval(t), &points, &[8, 16, 32, 64], 20)?)))
        .collect()
}

fn end_to_end_convergence() -> Outcome {
    let mut ok = true;
    let mut max_inv = 0usize;
    let mut calibration = 0.0f64;
    let mut worst_excess = 0.0f64;
    let mut out = Vec::new();
    for s in ["freud:alpha=2,beta=2", "freud:alpha=2,beta=3"] {
        let w = spec(s);
        for (f, rows) in convergence_rows(&w)? {
            for p in 0..3 {
                let series: Vec<&ConvergenceRow> = rows.iter().skip(p).step_by(3).collect();
                let errs: Vec<(f64, f64)> = series.iter().map(|r| (r.abs_error, r.noise_floor)).collect();
                let inv = count_inversions(&errs);
                max_inv = max_inv.max(inv);
                ok &= inv <= 1;
            }
            for r in &rows {
                let above_floor = r.abs_error > r.noise_floor;
                if s == "freud:alpha=2,beta=2" && above_floor {
                    calibration = calibration.max(r.ratio);
                }
                worst_excess = worst_excess.max(r.abs_error / (C_STAR * r.bound + r.noise_floor));
            }
            out.push(json!({"spec": s, "f": f.name(), "rows": rows}));
        }
    }
    ok &= worst_excess <= 1.0 && calibration <= C_STAR;
    Ok((
        ok,
        format!(
            "max inversions {max_inv} (≤ 1); calibration ratio {calibration:.4} ≤ C* = {C_STAR}; max |R_n|/(C*·bound + noise) = {worst_excess:.3} (≤ 1)"
        ),
        json!(out),
    ))
}
