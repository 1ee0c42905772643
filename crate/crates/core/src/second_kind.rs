//! Functions of the second kind `q_n(x) = CPV∫ p_n(t) w²(t)/(t − x) dt`.
//!
//! Away from the zeros of `p_n`,
//!
//! ```text
//! q_n(x) = p_n(x) (H(x) − Σ_j λ_j/(x_j − x)),   H(x) = CPV∫ w²(t)/(t − x) dt,
//! ```
//! and `q_n(x_j) = λ_j p_n'(x_j)`. Within `τ` of a zero `x_j` the pole of the
//! `j`-th term is cancelled analytically:
//!
//! ```text
//! q_n(x) = λ_j D_j(x) + p_n(x) R_j(x),
//! D_j(x) = p_n(x)/(x − x_j) = p_n'(x_j) Π_{i≠j} (x − x_i)/(x_j − x_i),
//! R_j(x) = H(x) − Σ_{i≠j} λ_i/(x_i − x),
//! ```
//! which equals the node value at `x = x_j` and is continuous across the seam.
//! Where the bracket cancels badly (far tails) the product-subtracted
//! reference integral of `p_n w²` is used instead.

use crate::cpv::{cpv_eval, cpv_weight_transform, cpv_weight_transform_between, CpvOptions, Subtraction};
use crate::error::{Error, Result};
use crate::mrs::{mrs, DegreeScales};
use crate::orthopoly::{gauss_rule, GaussRule, RecurrenceTable};
use crate::weight::WeightSpec;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Near-node threshold as a fraction of the local node spacing.
pub const DEFAULT_TAU_FACTOR: f64 = 0.05;
/// Condition number of the bracket in the far-from-node form above which the
/// reference integral is used.
const MAX_CANCELLATION: f64 = 1e4;
/// Largest accepted rounding of the closed forms inside the node range, relative to `max_j |q_n(x_j)|`.
const INSIDE_ROUNDING: f64 = 1e-10;

/// Which formula produced a value of `q_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum QnMethod {
    Node,
    Direct,
    PoleRemoved,
    Recurrence,
    Reference,
}

pub struct QnEvaluator {
    spec: WeightSpec,
    table: Arc<RecurrenceTable>,
    rule: GaussRule,
    tau_factor: f64,
    oracle: CpvOptions,
    /// `max_j |q_n(x_{j,n})|`
    level: f64,
    transforms: RwLock<HashMap<u64, f64>>,
}

impl QnEvaluator {
    pub fn new(spec: &WeightSpec, table: Arc<RecurrenceTable>, n: usize) -> Result<Self> {
        let rule = gauss_rule(&table, n)?;
        let level = (0..n).map(|j| (rule.christoffel[j] * rule.pn_prime[j]).abs()).fold(0.0, f64::max);
        Ok(Self {
            spec: *spec,
            table,
            rule,
            level,
            tau_factor: DEFAULT_TAU_FACTOR,
            oracle: CpvOptions::default().with_tolerances(1e-14, 1e-13),
            transforms: RwLock::new(HashMap::new()),
        })
    }

    pub fn with_tau_factor(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 0.5) {
            return Err(Error::Parameter(format!("tau factor {factor} must lie in (0, 0.5)")));
        }
        self.tau_factor = factor;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.rule.n
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn table(&self) -> &RecurrenceTable {
        &self.table
    }

    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }

    pub fn oracle_options(&self) -> &CpvOptions {
        &self.oracle
    }

    /// Near-node threshold around node `j`.
    pub fn tau(&self, j: usize) -> f64 {
        let s = self.rule.local_spacing(j);
        if s.is_finite() {
            self.tau_factor * s
        } else {
            self.tau_factor * self.table.offdiag[0].max(1.0)
        }
    }

    /// `H(x) = CPV∫ w²(t)/(t − x) dt`, memoized by the bits of `x`.
    pub fn weight_transform(&self, x: f64) -> Result<f64> {
        if let Some(v) = self.transforms.read().unwrap().get(&x.to_bits()) {
            return Ok(*v);
        }
        let v = match cpv_weight_transform(&self.spec, x, &self.oracle) {
            Ok(v) => v.value,
            Err(Error::Accuracy { value, .. }) => value,
            Err(e) => return Err(e),
        };
        self.transforms.write().unwrap().insert(x.to_bits(), v);
        Ok(v)
    }

    /// `q_n(x_{j,n}) = λ_{j,n} p_n'(x_{j,n})`, `j` zero-based.
    pub fn qn_at_node(&self, j: usize) -> f64 {
        self.rule.christoffel[j] * self.rule.pn_prime[j]
    }

    /// `Σ_{i≠skip} λ_i/(x_i − x)` and the same sum of absolute values.
    fn node_sum(&self, x: f64, skip: Option<usize>) -> (f64, f64) {
        let mut s = 0.0;
        let mut a = 0.0;
        for (i, (&xi, &li)) in self.rule.nodes.iter().zip(&self.rule.christoffel).enumerate() {
            if Some(i) == skip {
                continue;
            }
            let v = li / (xi - x);
            s += v;
            a += v.abs();
        }
        (s, a)
    }

    /// `p_n(x)/(x − x_j)` as a product, accurate near `x_j`.
    pub(crate) fn divided_pn(&self, j: usize, x: f64) -> f64 {
        let xj = self.rule.nodes[j];
        let mut d = self.rule.pn_prime[j];
        for (i, &xi) in self.rule.nodes.iter().enumerate() {
            if i != j {
                d *= (x - xi) / (xj - xi);
            }
        }
        d
    }

    /// `R_j(x) = H(x) − Σ_{i≠j} λ_i/(x_i − x)`.
    pub(crate) fn reduced_bracket(&self, j: usize, x: f64) -> Result<f64> {
        Ok(self.weight_transform(x)? - self.node_sum(x, Some(j)).0)
    }

    /// `q_n(x)` and the formula used.
    pub fn qn_with_method(&self, x: f64) -> Result<(f64, QnMethod)> {
        if !self.spec.contains(x) {
            let (c, d) = self.spec.support();
            return Err(Error::Domain(format!("x = {x} is outside the support ({c}, {d})")));
        }
        let (j, dist) = self.rule.nearest(x);
        if dist == 0.0 {
            return Ok((self.qn_at_node(j), QnMethod::Node));
        }
        let n = self.rule.n;
        let pn = self.table.pn(n, x);
        let h = self.weight_transform(x)?;
        let (value, scale, method) = if dist <= self.tau(j) {
            let d = self.divided_pn(j, x);
            let (s, a) = self.node_sum(x, Some(j));
            let r = h - s;
            let lj = self.rule.christoffel[j];
            let v = lj * d + pn * r;
            (v, (lj * d).abs() + pn.abs() * (h.abs() + a), QnMethod::PoleRemoved)
        } else {
            let (s, a) = self.node_sum(x, None);
            let v = pn * (h - s);
            (v, pn.abs() * (h.abs() + a), QnMethod::Direct)
        };
        let inside = x <= self.rule.nodes[0] && x >= self.rule.nodes[n - 1];
        if inside {
            // absolute rounding of the bracket against the size of q_n at the nodes
            let h_err = self.oracle.abs_tol.max(self.oracle.rel_tol * h.abs());
            let rounding = 4.0 * f64::EPSILON * scale + pn.abs() * h_err;
            if rounding <= INSIDE_ROUNDING * self.level {
                return Ok((value, method));
            }
            return Ok((self.qn_reference(x)?, QnMethod::Reference));
        }
        if value != 0.0 && scale / value.abs() <= MAX_CANCELLATION {
            return Ok((value, method));
        }
        if let Some(v) = self.qn_backward(x)? {
            return Ok((v, QnMethod::Recurrence));
        }
        Ok((self.qn_reference(x)?, QnMethod::Reference))
    }

    /// `q_n` as the minimal solution of the three-term recurrence:
    /// `q_k/q_{k−1} = b_k/((x − a_k) − b_{k+1} q_{k+1}/q_k)` from the top of the
    /// table downward, `q_0 = H(x)/b_0`. `None` unless two starting depths agree.
    fn qn_backward(&self, x: f64) -> Result<Option<f64>> {
        let t = &*self.table;
        let n = self.rule.n;
        let top = t.n_max;
        if top < n + 20 {
            return Ok(None);
        }
        let product = |start: usize| {
            let mut r = 0.0;
            let mut prod = 1.0;
            for k in (1..=start).rev() {
                r = t.offdiag[k] / ((x - t.diag[k]) - t.offdiag[k + 1] * r);
                if k <= n {
                    prod *= r;
                }
            }
            prod
        };
        let a = product(top - 1);
        let b = product(top - 11);
        if !(a.is_finite() && (a - b).abs() <= 1e-12 * a.abs()) {
            return Ok(None);
        }
        Ok(Some(self.weight_transform(x)? / t.offdiag[0] * a))
    }

    pub fn qn(&self, x: f64) -> Result<f64> {
        Ok(self.qn_with_method(x)?.0)
    }

    /// Reference integral of `p_n w²` with product subtraction.
    pub fn qn_reference(&self, x: f64) -> Result<f64> {
        let n = self.rule.n;
        let opts = CpvOptions {
            subtraction: Subtraction::Product,
            envelope_degree: n as u32,
            ..self.oracle.with_tolerances(1e-14 * self.level, 1e-12)
        };
        match cpv_eval(&self.spec, |t| self.table.pn(n, t), x, &opts) {
            Ok(v) => Ok(v.value),
            Err(Error::Accuracy { value, .. }) => Ok(value),
            Err(e) => Err(e),
        }
    }

    /// `q_n` beyond the extreme zeros together with the majorant
    /// `|p_n(x)| (λ_1/|x − x_1| + |CPV∫_{x_1}^d w²/(x − t)|)` (and its mirror below `x_n`).
    pub fn qn_tail(&self, x: f64) -> Result<TailEvaluation> {
        let n = self.rule.n;
        let (top, bottom) = (self.rule.nodes[0], self.rule.nodes[n - 1]);
        let (c, d) = self.spec.support();
        let (j, a, b) = if x > top {
            (0, top, d)
        } else if x < bottom {
            (n - 1, c, bottom)
        } else {
            return Err(Error::Domain(format!("x = {x} lies inside the node range [{bottom}, {top}]")));
        };
        let value = self.qn(x)?;
        let partial = match cpv_weight_transform_between(&self.spec, x, a, b, &self.oracle) {
            Ok(v) => v.value,
            Err(Error::Accuracy { value, .. }) => value,
            Err(e) => return Err(e),
        };
        let pn = self.table.pn(n, x);
        let bound = pn.abs() * (self.rule.christoffel[j] / (x - self.rule.nodes[j]).abs() + partial.abs());
        Ok(TailEvaluation {
            x,
            value,
            bound,
            within_bound: value.abs() <= bound * (1.0 + 1e-9),
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailEvaluation {
    pub x: f64,
    pub value: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Sample points resolving `q_n` between and beyond the zeros of `p_n`.
fn sup_grid(ev: &QnEvaluator, sc: &DegreeScales, per_gap: usize) -> Vec<f64> {
    let spec = ev.spec();
    let nodes = &ev.rule().nodes;
    let n = nodes.len();
    let (c, d) = spec.support();
    let mut grid = Vec::new();
    for w in nodes.windows(2) {
        for k in 1..per_gap {
            grid.push(w[1] + (w[0] - w[1]) * k as f64 / per_gap as f64);
        }
    }
    grid.extend(nodes.iter().copied());
    // beyond the extreme zeros: geometric toward a_{±2n}
    let outer = 4 * per_gap;
    for (edge, end, far) in [(nodes[0], d, sc.mrs_2n.a_plus), (nodes[n - 1], c, sc.mrs_2n.a_minus)] {
        let span = far - edge;
        let first = if n >= 2 { (nodes[0] - nodes[1]).abs() / per_gap as f64 } else { span.abs() / outer as f64 };
        let ratio = (span.abs() / first).max(1.0).powf(1.0 / outer as f64);
        let mut step = first;
        for _ in 0..outer {
            let x = edge + span.signum() * step;
            if spec.contains(x) && (x - end).abs() > 1e-12 {
                grid.push(x);
            }
            step *= ratio;
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Golden-section refinement of a local maximum of `|q_n|` bracketed by `[a, b]`.
fn refine_max(ev: &QnEvaluator, a: f64, b: f64, start: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut best = start;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = ev.qn(x1)?.abs();
    let mut f2 = ev.qn(x2)?.abs();
    for _ in 0..30 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = ev.qn(x1)?.abs();
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = ev.qn(x2)?.abs();
        }
        best = best.max(f1).max(f2);
        if (b - a) < 1e-9 * (1.0 + a.abs()) {
            break;
        }
    }
    Ok(best)
}

/// Grid-searched `sup |q_n|` with `per_gap` samples between consecutive zeros.
pub fn qn_sup(ev: &QnEvaluator, sc: &DegreeScales, per_gap: usize) -> Result<(f64, f64)> {
    let grid = sup_grid(ev, sc, per_gap.max(2));
    let vals: Vec<f64> = grid.iter().map(|&x| ev.qn(x).map(f64::abs)).collect::<Result<_>>()?;
    let (k, &raw) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let refined = if hi > lo { refine_max(ev, lo, hi, raw)? } else { raw };
    Ok((refined, grid[k]))
}

#[derive(Clone, Debug, Serialize)]
pub struct QnSupRow {
    pub n: usize,
    pub sup: f64,
    pub argmax: f64,
    /// `sup |q_n| at half the grid density`
    pub sup_coarse: f64,
    /// `sup |q_n| δ_n^{1/4} / (max{T(a_n)/a_n, T(a_{−n})/|a_{−n}|}^{1/4} ln n)`
    pub normalized: f64,
    /// `sup |q_n| a_n^{1/2}`
    pub symmetric_normalized: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QnSupReport {
    pub spec: String,
    pub rows: Vec<QnSupRow>,
    pub normalized_max: f64,
    pub normalized_median: f64,
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn qn_sup_study(spec: &WeightSpec, table: Arc<RecurrenceTable>, ladder: &[usize]) -> Result<QnSupReport> {
    let mut rows = Vec::new();
    for &n in ladder {
        if n < 2 {
            return Err(Error::Parameter("the sup study needs n ≥ 2".into()));
        }
        let ev = QnEvaluator::new(spec, table.clone(), n)?;
        let sc = DegreeScales::new(spec, n)?;
        let (sup, argmax) = qn_sup(&ev, &sc, 16)?;
        let (sup_coarse, _) = qn_sup(&ev, &sc, 8)?;
        let nf = n as f64;
        rows.push(QnSupRow {
            n,
            sup,
            argmax,
            sup_coarse,
            normalized: sup * sc.mrs_n.delta.powf(0.25) / (sc.t_ratio_max.powf(0.25) * nf.ln()),
            symmetric_normalized: sup * sc.mrs_n.a_plus.sqrt(),
        });
    }
    let norm: Vec<f64> = rows.iter().map(|r| r.normalized).collect();
    Ok(QnSupReport {
        spec: spec.to_string(),
        normalized_max: norm.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        normalized_median: median(&norm),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QnPrimeRow {
    pub n: usize,
    pub xi: f64,
    pub step: f64,
    /// Regional sups of `|q_n'|`: inner `[a_{−ξn}, a_{ξn}]`, upper `x ≥ a_{ξn}`, lower `x ≤ a_{−ξn}`.
    pub sup_inner: f64,
    pub sup_upper: f64,
    pub sup_lower: f64,
    pub normalized_inner: f64,
    pub normalized_upper: f64,
    pub normalized_lower: f64,
    /// Largest relative change of a regional sup when the step is halved.
    pub step_sensitivity: f64,
}

/// Central-difference estimate of `q_n'`.
pub fn qn_prime_fd(ev: &QnEvaluator, x: f64, h: f64) -> Result<f64> {
    Ok((ev.qn(x + h)? - ev.qn(x - h)?) / (2.0 * h))
}

pub fn qn_prime_study(spec: &WeightSpec, table: Arc<RecurrenceTable>, ladder: &[usize], xi: f64) -> Result<Vec<QnPrimeRow>> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::Parameter(format!("xi = {xi} must lie in (0, 1)")));
    }
    let mut rows = Vec::new();
    for &n in ladder {
        if n < 2 {
            return Err(Error::Parameter("the derivative study needs n ≥ 2".into()));
        }
        let ev = QnEvaluator::new(spec, table.clone(), n)?;
        let sc = DegreeScales::new(spec, n)?;
        let m_xi = mrs(spec, xi * n as f64)?;
        let h = 1e-4 * sc.mrs_n.delta;
        let grid: Vec<f64> = sup_grid(&ev, &sc, 8)
            .into_iter()
            .filter(|&x| spec.contains(x - 2.0 * h) && spec.contains(x + 2.0 * h))
            .collect();
        let sups = |step: f64| -> Result<[f64; 3]> {
            let mut s = [0.0f64; 3];
            for &x in &grid {
                let d = qn_prime_fd(&ev, x, step)?.abs();
                let k = if x > m_xi.a_plus {
                    1
                } else if x < m_xi.a_minus {
                    2
                } else {
                    0
                };
                s[k] = s[k].max(d);
            }
            Ok(s)
        };
        let full = sups(h)?;
        let half = sups(0.5 * h)?;
        let sensitivity = (0..3)
            .filter(|&k| full[k] > 0.0)
            .map(|k| ((full[k] - half[k]) / full[k]).abs())
            .fold(0.0, f64::max);
        let nf = n as f64;
        let m = sc.t_ratio_max;
        let (ap, am) = (sc.mrs_n.a_plus, sc.mrs_n.a_minus);
        let inner_rate = nf.powf(7.0 / 6.0) * sc.mrs_n.delta.powf(-5.0 / 6.0) * m.powf(2.0 / 3.0) * nf.ln();
        let upper_rate = nf / ap * spec.t(ap) * m.sqrt();
        let lower_rate = nf / am.abs() * spec.t(am) * m.sqrt();
        rows.push(QnPrimeRow {
            n,
            xi,
            step: h,
            sup_inner: full[0],
            sup_upper: full[1],
            sup_lower: full[2],
            normalized_inner: full[0] / inner_rate,
            normalized_upper: full[1] / upper_rate,
            normalized_lower: full[2] / lower_rate,
            step_sensitivity: sensitivity,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::cached_table;

    fn setup(spec: &str, n: usize) -> QnEvaluator {
        let spec: WeightSpec = spec.parse().unwrap();
        let table = cached_table(&spec, 40, 64).unwrap();
        QnEvaluator::new(&spec, table, n).unwrap()
    }

    #[test]
    fn degree_one_node_value() {
        let ev = setup("freud:alpha=2,beta=2", 1);
        // √(π/2) · 2/(π/2)^{1/4}
        assert!((ev.qn_at_node(0) - 2.239_030_269_840_495).abs() < 1e-12);
        assert!((ev.qn(0.0).unwrap() - ev.qn_at_node(0)).abs() < 1e-15);
    }

    #[test]
    fn node_sign_and_parity() {
        let ev = setup("freud:alpha=2,beta=2", 7);
        assert!(ev.qn_at_node(0) * ev.rule().pn_prime[0] > 0.0);
        assert!(ev.rule().pn_prime[3].abs() > 1e-3);
        for &x in &[0.13, 0.77, 1.9, 3.2] {
            let a = ev.qn(x).unwrap();
            let b = ev.qn(-x).unwrap();
            // (−1)^{n+1} = +1 for n = 7
            assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()), "{a} {b}");
        }
        let ev = setup("freud:alpha=2,beta=2", 6);
        for &x in &[0.21, 1.1] {
            let a = ev.qn(x).unwrap();
            let b = ev.qn(-x).unwrap();
            assert!((a + b).abs() < 1e-11 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn seam_is_continuous() {
        let ev = setup("freud:alpha=2,beta=3", 10);
        for j in [1usize, 4, 8] {
            let xj = ev.rule().nodes[j];
            let tau = ev.tau(j);
            for s in [-1.0, 1.0] {
                let inside = ev.qn_with_method(xj + s * tau * (1.0 - 1e-9)).unwrap();
                let outside = ev.qn_with_method(xj + s * tau * (1.0 + 1e-9)).unwrap();
                assert_eq!(inside.1, QnMethod::PoleRemoved);
                assert_eq!(outside.1, QnMethod::Direct);
                let scale = ev.qn_at_node(j).abs();
                assert!((inside.0 - outside.0).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn agrees_with_reference_integral() {
        let ev = setup("pollaczek:alpha=1,beta=1", 5);
        for &x in &[-0.93, -0.4, 0.05, 0.61] {
            let a = ev.qn(x).unwrap();
            let b = ev.qn_reference(x).unwrap();
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "x = {x}: {a} vs {b}");
        }
    }

    // q_8 for exp(−2t²) via Hermite polynomials and 30-digit quadrature
    const GAUSS_Q8: [(f64, f64); 5] = [
        (2.2, 0.012_387_076_542_701_888),
        (2.5, -1.245_884_475_870_528e-5),
        (3.0, -3.314_633_903_687_011e-4),
        (4.0, -8.036_677_834_591_503e-6),
        (-2.6, 7.276_804_360_982_927e-4),
    ];

    #[test]
    fn tail_values_and_majorant() {
        let ev = setup("freud:alpha=2,beta=2", 8);
        for (x, want) in GAUSS_Q8 {
            let t = ev.qn_tail(x).unwrap();
            assert!((t.value - want).abs() < 1e-9 * (1e-3 + want.abs()), "x = {x}: {} vs {want}", t.value);
            assert!(t.bound.is_finite() && t.within_bound, "{t:?}");
        }
        let ev = setup("freud:alpha=2,beta=3", 8);
        let (top, bottom) = (ev.rule().nodes[0], ev.rule().nodes[7]);
        for k in 1..8 {
            assert!(ev.qn_tail(top + 0.05 * (k * k) as f64).unwrap().within_bound);
            assert!(ev.qn_tail(bottom - 0.03 * k as f64).unwrap().within_bound);
        }
        assert!(ev.qn_tail(0.0).is_err());
        // far out q_n(x) ≈ −(b_0 ⋯ b_n)/x^{n+1}
        let lead: f64 = ev.table().offdiag[..=8].iter().product();
        for x in [600.0, 1200.0] {
            let v = ev.qn(x).unwrap();
            assert!((v / (-lead / x.powi(9)) - 1.0).abs() < 0.01, "x = {x}: {v}");
        }
    }
}
