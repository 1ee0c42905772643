//! The interpolatory product rule `Q_n[f; x] = Σ_j w_{j,n}(x) f(x_{j,n})`
//! for `I[f; x]`, exact for polynomials of degree `< n`, and the a-priori
//! error bound for it.
//!
//! The weights are
//!
//! ```text
//! w_j(x) = (q_n(x_j) − q_n(x)) / ((x_j − x) p_n'(x_j)),
//! ```
//! and `q_n'(x_j)/p_n'(x_j)` at `x = x_j`. Within `τ_w` of a node the quotient
//! is replaced by its Taylor-divided form
//!
//! ```text
//! w_j(x) = [λ_j (p''/2 + p''' e/6 + p'''' e²/24) + D_j(x) R_j(x)] / p'(x_j),   e = x − x_j,
//! ```
//! which at `e = 0` is `q_n'(x_j)/p_n'(x_j)` with `q_n'(x_j) = λ_j p''(x_j)/2 + p'(x_j) R_j(x_j)`.

use crate::approx::best_approx;
use crate::cpv::cpv_eval;
use crate::error::{Error, Result};
use crate::mrs::{mrs, DegreeScales};
use crate::orthopoly::RecurrenceTable;
use crate::second_kind::QnEvaluator;
use crate::weight::WeightSpec;
use serde::Serialize;
use std::sync::Arc;

/// Coincidence threshold as a fraction of the local node spacing.
pub const DEFAULT_TAU_W_FACTOR: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct CpvRule {
    pub x: f64,
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `true` where the coincidence (Taylor-divided) form was used.
    pub coincidence: Vec<bool>,
    pub qn_x: f64,
}

/// Weights of the product rule at `x`.
pub fn build_rule(ev: &QnEvaluator, x: f64) -> Result<CpvRule> {
    build_rule_with(ev, x, DEFAULT_TAU_W_FACTOR)
}

pub fn build_rule_with(ev: &QnEvaluator, x: f64, tau_w_factor: f64) -> Result<CpvRule> {
    let rule = ev.rule();
    let n = rule.n;
    let qx = ev.qn(x)?;
    let mut weights = Vec::with_capacity(n);
    let mut coincidence = Vec::with_capacity(n);
    for j in 0..n {
        let xj = rule.nodes[j];
        let spacing = rule.local_spacing(j);
        let tau_w = tau_w_factor * if spacing.is_finite() { spacing } else { 1.0 };
        let e = x - xj;
        if e.abs() > tau_w {
            weights.push((ev.qn_at_node(j) - qx) / ((xj - x) * rule.pn_prime[j]));
            coincidence.push(false);
        } else {
            let [_, d1, d2, d3, d4] = ev.table().derivs::<5>(n, xj);
            let taylor = d2 / 2.0 + d3 * e / 6.0 + d4 * e * e / 24.0;
            let d = if e == 0.0 { d1 } else { ev.divided_pn(j, x) };
            let r = ev.reduced_bracket(j, x)?;
            weights.push((rule.christoffel[j] * taylor + d * r) / d1);
            coincidence.push(true);
        }
    }
    if let Some(j) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::Input(format!("weight {j} at x = {x} is not finite")));
    }
    Ok(CpvRule {
        x,
        n,
        nodes: rule.nodes.clone(),
        weights,
        coincidence,
        qn_x: qx,
    })
}

impl CpvRule {
    /// `Σ_j w_j f(x_j)`.
    pub fn evaluate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut s = 0.0;
        for (&xj, &wj) in self.nodes.iter().zip(&self.weights) {
            let v = f(xj);
            if !v.is_finite() {
                return Err(Error::Input(format!("f({xj}) = {v}")));
            }
            s += wj * v;
        }
        Ok(s)
    }

    /// Rounding level of [`Self::evaluate`]: `n ε Σ |w_j f(x_j)|`.
    pub fn rounding<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let s: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| (w * f(x)).abs()).sum();
        self.n as f64 * f64::EPSILON * s
    }
}

/// Region of `x` relative to the MRS data in the a-priori bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `a_n(1 + Cη_n) ≤ x ≤ min{(d + a_n)/2, 2a_n}`
    A,
    /// `a_{ξn} ≤ x ≤ a_n(1 + Cη_n)`
    B,
    /// `a_{−ξn} ≤ x ≤ a_{ξn}`
    C,
    /// `a_{−n}(1 + Cη_{−n}) ≤ x ≤ a_{−ξn}`
    D,
    /// `max{(c + a_{−n})/2, 2a_{−n}} ≤ x ≤ a_{−n}(1 + Cη_{−n})`
    E,
    Otherwise,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::A => "a_n(1+C eta_n) <= x <= min{(d+a_n)/2, 2a_n}",
            Region::B => "a_{xi n} <= x <= a_n(1+C eta_n)",
            Region::C => "a_{-xi n} <= x <= a_{xi n}",
            Region::D => "a_{-n}(1+C eta_{-n}) <= x <= a_{-xi n}",
            Region::E => "max{(c+a_{-n})/2, 2a_{-n}} <= x <= a_{-n}(1+C eta_{-n})",
            Region::Otherwise => "otherwise",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundOptions {
    pub xi: f64,
    pub c_region: f64,
    /// Measured `‖q_n‖_∞` for the alternative form of `γ_n`.
    pub qn_sup: Option<f64>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            xi: 0.5,
            c_region: 1.0,
            qn_sup: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorBoundReport {
    pub x: f64,
    pub n: usize,
    pub region: Region,
    pub region_label: &'static str,
    pub xi: f64,
    pub c_region: f64,
    pub a_n: f64,
    pub a_minus_n: f64,
    pub a_xi_n: f64,
    pub a_minus_xi_n: f64,
    pub delta_n: f64,
    pub eta_n: f64,
    pub eta_minus_n: f64,
    /// `max{T(a_n)/a_n, T(a_{−n})/|a_{−n}|}`
    pub t_ratio_max: f64,
    pub mu_n: f64,
    pub a_factor: f64,
    pub b_factor: f64,
    pub c_factor: f64,
    pub d_factor: f64,
    pub e_factor: f64,
    /// The factor selected by the region (0 otherwise).
    pub region_factor: f64,
    /// `μ^{−1} δ^{5/4} max{…}^{1/4} ln n + μ · factor`
    pub gamma_n: f64,
    /// `‖q_n‖_∞ μ^{−1} δ^{3/2} + μ · factor`, when a measured sup is supplied.
    pub gamma_n_sup: Option<f64>,
    /// `(1 + n^{−2} w^{−1}(x)) ln n`
    pub lagrange_term: f64,
    pub e_proxy: f64,
    /// `((1 + n^{−2} w^{−1}(x)) ln n + γ_n) E`
    pub total: f64,
}

/// The a-priori bound `((1 + n^{−2}w^{−1}(x)) ln n + γ_n(x)) E_{n−1}[f]` with every intermediate.
pub fn error_bound(spec: &WeightSpec, n: usize, x: f64, e_proxy: f64, opts: &BoundOptions) -> Result<ErrorBoundReport> {
    if !spec.contains(x) {
        let (c, d) = spec.support();
        return Err(Error::Domain(format!("x = {x} is outside the support ({c}, {d})")));
    }
    if n < 2 {
        return Err(Error::Parameter("the bound needs n ≥ 2".into()));
    }
    if !(e_proxy >= 0.0) {
        return Err(Error::Parameter(format!("E proxy {e_proxy} must be non-negative")));
    }
    let sc = DegreeScales::new(spec, n)?;
    let m_xi = mrs(spec, opts.xi * n as f64)?;
    let nf = n as f64;
    let ln = nf.ln();
    let (ap, am, delta) = (sc.mrs_n.a_plus, sc.mrs_n.a_minus, sc.mrs_n.delta);
    let (eta_p, eta_m) = (sc.edges.eta_plus, sc.edges.eta_minus);
    let mmax = sc.t_ratio_max;
    let (tp, tm) = (spec.t(ap), spec.t(am));
    let mu = 0.5 * (ap * eta_p).min(am.abs() * eta_m);

    let a_factor = nf.powf(5.0 / 6.0) * delta.powf(1.0 / 3.0) * ap.powf(-5.0 / 6.0) * tp.powf(5.0 / 6.0) * mmax.sqrt();
    let b_factor = nf * delta.powf(0.25) * ap.powf(-0.75) * tp.powf(0.75) * mmax.sqrt();
    let c_factor = nf.powf(7.0 / 6.0) * delta.powf(-1.0 / 3.0) * mmax.powf(2.0 / 3.0) * ln;
    let d_factor = nf * delta.powf(0.25) * am.abs().powf(-0.75) * tm.powf(0.75) * mmax.sqrt();
    let e_factor =
        nf.powf(5.0 / 6.0) * delta.powf(1.0 / 3.0) * am.abs().powf(-5.0 / 6.0) * tm.powf(5.0 / 6.0) * mmax.sqrt();

    let (c, d) = spec.support();
    let c_reg = opts.c_region;
    let upper_edge = ap * (1.0 + c_reg * eta_p);
    let lower_edge = am * (1.0 + c_reg * eta_m);
    let upper_far = (0.5 * (d + ap)).min(2.0 * ap);
    let lower_far = (0.5 * (c + am)).max(2.0 * am);
    let region = if x >= m_xi.a_minus && x <= m_xi.a_plus {
        Region::C
    } else if x > m_xi.a_plus && x <= upper_edge {
        Region::B
    } else if x < m_xi.a_minus && x >= lower_edge {
        Region::D
    } else if x > upper_edge && x <= upper_far {
        Region::A
    } else if x < lower_edge && x >= lower_far {
        Region::E
    } else {
        Region::Otherwise
    };
    let region_factor = match region {
        Region::A => a_factor,
        Region::B => b_factor,
        Region::C => c_factor,
        Region::D => d_factor,
        Region::E => e_factor,
        Region::Otherwise => 0.0,
    };
    let gamma_n = delta.powf(1.25) * mmax.powf(0.25) * ln / mu + mu * region_factor;
    let gamma_n_sup = opts.qn_sup.map(|s| s * delta.powf(1.5) / mu + mu * region_factor);
    let lagrange_term = (1.0 + 1.0 / (nf * nf * spec.w(x))) * ln;
    Ok(ErrorBoundReport {
        x,
        n,
        region,
        region_label: region.label(),
        xi: opts.xi,
        c_region: c_reg,
        a_n: ap,
        a_minus_n: am,
        a_xi_n: m_xi.a_plus,
        a_minus_xi_n: m_xi.a_minus,
        delta_n: delta,
        eta_n: eta_p,
        eta_minus_n: eta_m,
        t_ratio_max: mmax,
        mu_n: mu,
        a_factor,
        b_factor,
        c_factor,
        d_factor,
        e_factor,
        region_factor,
        gamma_n,
        gamma_n_sup,
        lagrange_term,
        e_proxy,
        total: (lagrange_term + gamma_n) * e_proxy,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub x: f64,
    pub n: usize,
    pub oracle: f64,
    pub oracle_error: f64,
    pub quadrature: f64,
    pub abs_error: f64,
    /// Level below which `abs_error` is indistinguishable from evaluation noise.
    pub noise_floor: f64,
    pub e_proxy: f64,
    pub bound: f64,
    pub ratio: f64,
    pub region: Region,
}

/// Where a study evaluates: fixed points or `a_{n/2}` for each `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StudyPoint {
    Fixed(f64),
    HalfMrs,
}

impl StudyPoint {
    pub fn at(self, spec: &WeightSpec, n: usize) -> Result<f64> {
        match self {
            StudyPoint::Fixed(x) => Ok(x),
            StudyPoint::HalfMrs => Ok(mrs(spec, 0.5 * n as f64)?.a_plus),
        }
    }
}

/// Oracle, rule value, error, minimax proxy, bound and their ratio for each `(x, n)`.
pub fn convergence_study<F: Fn(f64) -> f64 + Sync>(
    spec: &WeightSpec,
    table: Arc<RecurrenceTable>,
    f: F,
    points: &[StudyPoint],
    ladder: &[usize],
    grid_factor: usize,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &n in ladder {
        let ev = QnEvaluator::new(spec, table.clone(), n)?;
        let e_proxy = best_approx(spec, &table, &f, n - 1, grid_factor.max(20) * n)?.proxy;
        for &pt in points {
            let x = pt.at(spec, n)?;
            let oracle = match cpv_eval(spec, &f, x, ev.oracle_options()) {
                Ok(v) => v,
                Err(Error::Accuracy { value, error, panels }) => crate::cpv::CpvValue {
                    value,
                    error_estimate: error,
                    panels,
                },
                Err(e) => return Err(e),
            };
            let rule = build_rule(&ev, x)?;
            let quadrature = rule.evaluate(&f)?;
            let abs_error = (oracle.value - quadrature).abs();
            let report = error_bound(spec, n, x, e_proxy, &BoundOptions::default())?;
            rows.push(ConvergenceRow {
                x,
                n,
                oracle: oracle.value,
                oracle_error: oracle.error_estimate,
                quadrature,
                abs_error,
                noise_floor: oracle.error_estimate + rule.rounding(&f) + 1e-13 * oracle.value.abs(),
                e_proxy,
                bound: report.total,
                ratio: if report.total > 0.0 { abs_error / report.total } else { f64::NAN },
                region: report.region,
            });
        }
    }
    Ok(rows)
}

/// Number of increases of `err` along the ladder, ignoring changes below the noise floor.
pub fn count_inversions(errors: &[(f64, f64)]) -> usize {
    errors
        .windows(2)
        .filter(|w| {
            let (e0, f0) = w[0];
            let (e1, f1) = w[1];
            e1 > e0 && e1 > 2.0 * f1.max(f0)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpv::CpvOptions;
    use crate::orthopoly::cached_table;

    fn evaluator(spec: &str, n: usize) -> QnEvaluator {
        let spec: WeightSpec = spec.parse().unwrap();
        QnEvaluator::new(&spec, cached_table(&spec, 40, 64).unwrap(), n).unwrap()
    }

    #[test]
    fn exact_on_low_degree() {
        let ev = evaluator("freud:alpha=2,beta=3", 10);
        let opts = CpvOptions::default();
        for &x in &[-1.3, -0.2, 0.0, 0.45, 1.7] {
            let rule = build_rule(&ev, x).unwrap();
            for k in 0..10 {
                let q = rule.evaluate(|t| t.powi(k)).unwrap();
                let o = cpv_eval(ev.spec(), |t| t.powi(k), x, &opts).unwrap().value;
                assert!((q - o).abs() <= 1e-8 * (1.0 + o.abs()), "x = {x}, k = {k}: {q} vs {o}");
            }
        }
    }

    #[test]
    fn annihilates_pn() {
        let ev = evaluator("freud:alpha=2,beta=2", 8);
        let rule = build_rule(&ev, 0.3).unwrap();
        let v = rule.evaluate(|t| ev.table().pn(8, t)).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn coincidence_weight_and_seam() {
        let ev = evaluator("freud:alpha=2,beta=3", 9);
        for j in [0usize, 4, 8] {
            let xj = ev.rule().nodes[j];
            let at = build_rule(&ev, xj).unwrap();
            assert!(at.coincidence[j]);
            // independent: symmetric difference of q_n at a moderate step
            let h = 1e-4;
            let dq = (ev.qn(xj + h).unwrap() - ev.qn(xj - h).unwrap()) / (2.0 * h);
            let want = dq / ev.rule().pn_prime[j];
            assert!((at.weights[j] - want).abs() < 1e-6 * (1.0 + want.abs()));
            let tau_w = DEFAULT_TAU_W_FACTOR * ev.rule().local_spacing(j);
            for s in [-1.0, 1.0] {
                let inside = build_rule(&ev, xj + s * 0.999 * tau_w).unwrap();
                let outside = build_rule(&ev, xj + s * 1.001 * tau_w).unwrap();
                assert!(inside.coincidence[j] && !outside.coincidence[j]);
                let (a, b, c) = (inside.weights[j], outside.weights[j], at.weights[j]);
                assert!((a - b).abs() <= 1e-5 * a.abs(), "j = {j}: {a} vs {b}");
                assert!((b - c).abs() <= 1e-5 * c.abs(), "j = {j}: {b} vs {c}");
            }
        }
    }

    #[test]
    fn weights_at_origin_are_odd() {
        let ev = evaluator("freud:alpha=2,beta=2", 12);
        let rule = build_rule(&ev, 0.0).unwrap();
        for j in 0..12 {
            assert!((rule.weights[j] + rule.weights[11 - j]).abs() < 1e-12 * rule.weights[j].abs().max(1.0));
        }
    }

    #[test]
    fn two_point_rule_at_origin() {
        let ev = evaluator("freud:alpha=2,beta=2", 2);
        let rule = build_rule(&ev, 0.0).unwrap();
        // I[1; 0] = 0 and I[t; 0] = √(π/2) with nodes ±1/2
        let s = (std::f64::consts::PI / 2.0).sqrt();
        assert!((rule.weights[0] + rule.weights[1]).abs() < 1e-13);
        assert!((rule.weights[0] - s).abs() < 1e-12);
    }

    #[test]
    fn bound_arithmetic() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        let r = error_bound(&spec, 16, 0.0, 1.0, &BoundOptions::default()).unwrap();
        assert_eq!(r.region, Region::C);
        // 16^{7/6} 4^{-1/3} 0.5^{2/3} ln 16
        assert!((r.c_factor - 27.945_943_150_808_24).abs() < 1e-9, "{}", r.c_factor);
        assert!(r.mu_n > 0.0 && r.mu_n <= (r.a_n * r.eta_n).min(r.a_minus_n.abs() * r.eta_minus_n));
        let far = error_bound(&spec, 16, 9.0, 1.0, &BoundOptions::default()).unwrap();
        assert_eq!(far.region, Region::Otherwise);
        let mu = far.mu_n;
        let first = far.delta_n.powf(1.25) * far.t_ratio_max.powf(0.25) * 16f64.ln() / mu;
        assert!((far.gamma_n - first).abs() < 1e-12 * first);
        for &x in &[2.5, 3.9, 4.2, 6.0] {
            let a = error_bound(&spec, 16, x, 1.0, &BoundOptions::default()).unwrap();
            let b = error_bound(&spec, 16, -x, 1.0, &BoundOptions::default()).unwrap();
            assert!((a.region_factor - b.region_factor).abs() < 1e-12 * a.region_factor.max(1.0));
        }
        assert!(error_bound(&spec, 16, f64::INFINITY, 1.0, &BoundOptions::default()).is_err());
    }
}
