//! Orthonormal polynomials `p_n` for the measure `w²(t)dt`.
//!
//! The recurrence
//!
//! ```text
//! b_{k+1} p_{k+1}(x) = (x − a_k) p_k(x) − b_k p_{k−1}(x),   p_{−1} = 0,   p_0 = 1/b_0,
//! ```
//!
//! is generated by the Stieltjes procedure on a discretized measure, with
//! all inner products carried in extended precision. `b_0 = sqrt(∫w²)`.

use crate::cache;
use crate::error::{Error, Result};
use crate::extended::{ExtContext, ExtFloat};
use crate::mrs::{mrs, DegreeScales, MrsNumbers};
use crate::quad::gauss_legendre;
use crate::weight::WeightSpec;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

pub const DEFAULT_DIGITS: u32 = 64;
pub const DEFAULT_N_MAX: usize = 128;
pub const MAX_N: usize = 256;
/// Largest tolerated `|⟨p_i, p_j⟩ − δ_ij|` on the verification rule.
pub const ORTHONORMALITY_LIMIT: f64 = 1e-10;

// w² < 1e-40 once Q exceeds this level
const TAIL_LEVEL: f64 = 46.06;
const GENERATION_POINTS: usize = 24;
const VERIFICATION_POINTS: usize = 32;

/// A positive composite rule `Σ W_i g(x_i) ≈ ∫ g w²`, weights already include `w²`.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Set when the support ends before `w²` falls below the tail level.
    pub truncation_reduced: bool,
}

impl DiscreteMeasure {
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }
}

/// Truncation interval `[lo, hi]` covering `[a_{-t}, a_t]` and the region where `w² ≥ 1e-40`.
pub fn truncation(spec: &WeightSpec, mrs_large: &MrsNumbers) -> (f64, f64, bool) {
    let (c, d) = spec.support();
    let mut reduced = false;
    let mut side = |sign: f64, a: f64, end: f64| {
        let level = spec.q_level_point(sign, TAIL_LEVEL);
        if end.is_finite() && spec.q(sign * level) < TAIL_LEVEL {
            reduced = true;
        }
        level.max(a)
    };
    let hi = side(1.0, mrs_large.a_plus, d);
    let lo = -side(-1.0, -mrs_large.a_minus, -c);
    (lo, hi, reduced)
}

/// Composite Gauss–Legendre rule for `∫ g w²` over the truncation interval.
///
/// Each half `[lo, 0]`, `[0, hi]` is cut into `panels/2` pieces uniform in
/// `u` under `x = end·sin(u)`, which concentrates panels toward the ends;
/// the piece touching 0 is refined geometrically when `Q` is not smooth there.
/// Halves are built identically, so an even weight yields a mirror-symmetric rule.
pub fn discretize_measure(spec: &WeightSpec, mrs_large: &MrsNumbers, panels: usize) -> Result<DiscreteMeasure> {
    discretize_with(spec, mrs_large, panels, GENERATION_POINTS)
}

fn discretize_with(spec: &WeightSpec, mrs_large: &MrsNumbers, panels: usize, m: usize) -> Result<DiscreteMeasure> {
    if panels < 8 {
        return Err(Error::Parameter(format!("panels = {panels} must be at least 8")));
    }
    let (lo, hi, truncation_reduced) = truncation(spec, mrs_large);
    let half = panels.div_ceil(2);
    let refine = !spec.smooth_at_origin();
    let gl = gauss_legendre(m);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (sign, end) in [(-1.0, -lo), (1.0, hi)] {
        let mut breaks: Vec<f64> = (0..=half).map(|k| end * (FRAC_PI_2 * k as f64 / half as f64).sin()).collect();
        if refine {
            let first = breaks[1];
            let extra: Vec<f64> = (1..=12).rev().map(|k| first * 0.2f64.powi(k)).collect();
            breaks.splice(1..1, extra);
        }
        for win in breaks.windows(2) {
            let (a, b) = (win[0], win[1]);
            let h = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&z, &g) in gl.nodes.iter().zip(&gl.weights) {
                let x = sign * (mid + h * z);
                let w = g * h * spec.w2(x);
                if w > 0.0 {
                    nodes.push(x);
                    weights.push(w);
                }
            }
        }
    }
    Ok(DiscreteMeasure {
        nodes,
        weights,
        lo,
        hi,
        truncation_reduced,
    })
}

/// Jacobi matrix data of the orthonormal system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecurrenceTable {
    pub spec: String,
    pub n_max: usize,
    /// `a_0 … a_{n_max}`
    pub diag: Vec<f64>,
    /// `b_0 … b_{n_max}`, with `b_0 = sqrt(norm0)`
    pub offdiag: Vec<f64>,
    /// `∫ w²`
    pub norm0: f64,
    pub working_precision: u32,
    pub truncation: (f64, f64),
    pub truncation_reduced: bool,
    /// `max |⟨p_i, p_j⟩ − δ_ij|` over `i, j ≤ n_max` on the verification rule.
    pub orthonormality_defect: f64,
}

fn generation_panels(n_max: usize) -> usize {
    2 * (n_max + 8).max(16)
}

fn large_t(n_max: usize) -> f64 {
    4.0 * n_max.max(8) as f64
}

/// Runs the Stieltjes procedure for `p_0 … p_{n_max}` in `precision_digits` decimal digits.
pub fn stieltjes(spec: &WeightSpec, n_max: usize, precision_digits: u32) -> Result<RecurrenceTable> {
    if n_max == 0 || n_max > MAX_N {
        return Err(Error::Parameter(format!("n_max = {n_max} must lie in 1..={MAX_N}")));
    }
    if precision_digits < 32 {
        return Err(Error::Parameter(format!(
            "precision_digits = {precision_digits} must be at least 32"
        )));
    }
    let mrs_large = mrs(spec, large_t(n_max))?;
    let measure = discretize_measure(spec, &mrs_large, generation_panels(n_max))?;
    let ctx = ExtContext::from_digits(precision_digits);
    let xs: Vec<ExtFloat> = measure.nodes.iter().map(|&x| ctx.from_f64(x)).collect();
    let ws: Vec<ExtFloat> = measure.weights.iter().map(|&w| ctx.from_f64(w)).collect();
    let sum = |v: &mut dyn Iterator<Item = ExtFloat>| v.fold(ctx.zero(), |acc, t| ctx.add(&acc, &t));

    let norm0 = sum(&mut ws.iter().cloned());
    let b0 = ctx.sqrt(&norm0);
    let inv_b0 = ctx.div(&ctx.from_f64(1.0), &b0);
    let mut p_prev: Vec<ExtFloat> = vec![ctx.zero(); xs.len()];
    let mut p_cur: Vec<ExtFloat> = vec![inv_b0; xs.len()];
    let mut diag = Vec::with_capacity(n_max + 1);
    let mut offdiag = vec![b0.to_f64()];
    let mut b_cur = b0;
    for k in 0..=n_max {
        let wp2: Vec<ExtFloat> = ws.iter().zip(&p_cur).map(|(w, p)| ctx.mul(w, &ctx.mul(p, p))).collect();
        let a_k = sum(&mut wp2.iter().zip(&xs).map(|(u, x)| ctx.mul(u, x)));
        diag.push(a_k.to_f64());
        if k == n_max {
            break;
        }
        let r: Vec<ExtFloat> = xs
            .iter()
            .zip(p_cur.iter().zip(&p_prev))
            .map(|(x, (p, q))| {
                let t = ctx.mul(&ctx.sub(x, &a_k), p);
                if k == 0 {
                    t
                } else {
                    ctx.sub(&t, &ctx.mul(&b_cur, q))
                }
            })
            .collect();
        let b2 = sum(&mut ws.iter().zip(&r).map(|(w, r)| ctx.mul(w, &ctx.mul(r, r))));
        if b2.is_zero() || b2.is_negative() {
            return Err(Error::Precision {
                degree: k + 1,
                digits: precision_digits,
            });
        }
        let b_next = ctx.sqrt(&b2);
        let inv = ctx.div(&ctx.from_f64(1.0), &b_next);
        let p_next: Vec<ExtFloat> = r.iter().map(|r| ctx.mul(r, &inv)).collect();
        offdiag.push(b_next.to_f64());
        p_prev = std::mem::replace(&mut p_cur, p_next);
        b_cur = b_next;
    }
    let mut table = RecurrenceTable {
        spec: spec.to_string(),
        n_max,
        diag,
        offdiag,
        norm0: norm0.to_f64(),
        working_precision: precision_digits,
        truncation: (measure.lo, measure.hi),
        truncation_reduced: measure.truncation_reduced,
        orthonormality_defect: f64::NAN,
    };
    let defect = orthonormality_defect(spec, &table, n_max)?;
    table.orthonormality_defect = defect;
    if !(defect <= ORTHONORMALITY_LIMIT) {
        return Err(Error::Orthonormality {
            defect,
            limit: ORTHONORMALITY_LIMIT,
        });
    }
    Ok(table)
}

/// A finer rule than the generation one, for checks independent of the generation sums.
pub fn verification_measure(spec: &WeightSpec, n_max: usize) -> Result<DiscreteMeasure> {
    let mrs_large = mrs(spec, large_t(n_max))?;
    discretize_with(spec, &mrs_large, 3 * generation_panels(n_max) / 2, VERIFICATION_POINTS)
}

/// Gram matrix `⟨p_i, p_j⟩` for `i, j ≤ k_max` on the verification rule.
pub fn gram_matrix(spec: &WeightSpec, table: &RecurrenceTable, k_max: usize) -> Result<DMatrix<f64>> {
    table.check_degree(k_max)?;
    let measure = verification_measure(spec, table.n_max)?;
    let dim = k_max + 1;
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    let mut p = vec![0.0; dim];
    for (&x, &w) in measure.nodes.iter().zip(&measure.weights) {
        table.eval_upto(k_max, x, &mut p);
        for i in 0..dim {
            let wi = w * p[i];
            for j in 0..=i {
                g[(i, j)] += wi * p[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(g)
}

pub fn orthonormality_defect(spec: &WeightSpec, table: &RecurrenceTable, k_max: usize) -> Result<f64> {
    let g = gram_matrix(spec, table, k_max)?;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    Ok(worst)
}

type TableKey = (String, usize, u32);

fn table_memo() -> &'static Mutex<HashMap<TableKey, Arc<RecurrenceTable>>> {
    static MEMO: OnceLock<Mutex<HashMap<TableKey, Arc<RecurrenceTable>>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Memoized (and, with `CPVQUAD_CACHE_DIR`, disk-cached) [`stieltjes`].
pub fn cached_table(spec: &WeightSpec, n_max: usize, precision_digits: u32) -> Result<Arc<RecurrenceTable>> {
    let key = (spec.to_string(), n_max, precision_digits);
    if let Some(t) = table_memo().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let file_key = format!("{}|n{}|d{}", key.0, n_max, precision_digits);
    let table = match cache::load::<RecurrenceTable>("recurrence", &file_key) {
        Some(t) if t.spec == key.0 && t.n_max == n_max && t.working_precision == precision_digits => t,
        _ => {
            let t = stieltjes(spec, n_max, precision_digits)?;
            cache::store("recurrence", &file_key, &t);
            t
        }
    };
    let table = Arc::new(table);
    table_memo().lock().unwrap().insert(key, table.clone());
    Ok(table)
}

/// The table at the default size and precision.
pub fn recurrence_table(spec: &WeightSpec) -> Result<Arc<RecurrenceTable>> {
    cached_table(spec, DEFAULT_N_MAX, DEFAULT_DIGITS)
}

/// `mantissa · 2^exponent`, for values of `p_n` beyond binary64 range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scaled {
    pub mantissa: f64,
    pub exponent: i64,
}

impl Scaled {
    /// Nearest `f64`, saturating to ±inf or 0.
    pub fn to_f64(self) -> f64 {
        let e = self.exponent.clamp(-4000, 4000) as i32;
        let half = e / 2;
        self.mantissa * 2f64.powi(half) * 2f64.powi(e - half)
    }
}

const RESCALE: f64 = 1e150;
const RESCALE_LOG2: f64 = 498.289_214_233_104_7;

impl RecurrenceTable {
    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            Err(Error::Degree {
                degree: n,
                max: self.n_max,
            })
        } else {
            Ok(())
        }
    }

    /// Fills `out[0..=n]` with `p_0(x) … p_n(x)`.
    pub fn eval_upto(&self, n: usize, x: f64, out: &mut [f64]) {
        let mut prev = 0.0;
        let mut cur = 1.0 / self.offdiag[0];
        out[0] = cur;
        for k in 0..n {
            let next = ((x - self.diag[k]) * cur - self.offdiag[k] * prev) / self.offdiag[k + 1];
            prev = cur;
            cur = next;
            out[k + 1] = cur;
        }
    }

    /// `p_n(x)`; non-finite on overflow, see [`Self::eval_pn_scaled`].
    pub fn eval_pn(&self, n: usize, x: f64) -> Result<f64> {
        self.check_degree(n)?;
        Ok(self.pn(n, x))
    }

    pub(crate) fn pn(&self, n: usize, x: f64) -> f64 {
        let mut prev = 0.0;
        let mut cur = 1.0 / self.offdiag[0];
        for k in 0..n {
            let next = ((x - self.diag[k]) * cur - self.offdiag[k] * prev) / self.offdiag[k + 1];
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `p_n(x)` as a scaled pair; never overflows.
    pub fn eval_pn_scaled(&self, n: usize, x: f64) -> Result<Scaled> {
        self.check_degree(n)?;
        let mut prev = 0.0;
        let mut cur = 1.0 / self.offdiag[0];
        let mut exponent = 0.0;
        for k in 0..n {
            let next = ((x - self.diag[k]) * cur - self.offdiag[k] * prev) / self.offdiag[k + 1];
            prev = cur;
            cur = next;
            if cur.abs() > RESCALE {
                cur /= RESCALE;
                prev /= RESCALE;
                exponent += RESCALE_LOG2;
            }
        }
        // RESCALE is not a power of two; fold the fractional part back in
        let e = exponent.floor();
        Ok(Scaled {
            mantissa: cur * 2f64.powf(exponent - e),
            exponent: e as i64,
        })
    }

    /// `p_n'(x)` by the differentiated recurrence.
    pub fn eval_pn_prime(&self, n: usize, x: f64) -> Result<f64> {
        self.check_degree(n)?;
        Ok(self.derivs::<2>(n, x)[1])
    }

    /// `[p_n(x), p_n'(x), …, p_n^{(K−1)}(x)]` by differentiating the recurrence.
    pub fn derivs<const K: usize>(&self, n: usize, x: f64) -> [f64; K] {
        let mut prev = [0.0; K];
        let mut cur = [0.0; K];
        cur[0] = 1.0 / self.offdiag[0];
        for k in 0..n {
            let mut next = [0.0; K];
            for m in 0..K {
                let mut v = (x - self.diag[k]) * cur[m] - self.offdiag[k] * prev[m];
                if m > 0 {
                    v += m as f64 * cur[m - 1];
                }
                next[m] = v / self.offdiag[k + 1];
            }
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `λ_n(w², x) = 1 / Σ_{k<n} p_k(x)²`.
    pub fn christoffel_fn(&self, n: usize, x: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("the Christoffel function needs n ≥ 1".into()));
        }
        self.check_degree(n)?;
        Ok(self.christoffel(n, x))
    }

    pub(crate) fn christoffel(&self, n: usize, x: f64) -> f64 {
        let mut prev = 0.0;
        let mut cur = 1.0 / self.offdiag[0];
        let mut s = cur * cur;
        for k in 0..n - 1 {
            let next = ((x - self.diag[k]) * cur - self.offdiag[k] * prev) / self.offdiag[k + 1];
            prev = cur;
            cur = next;
            s += cur * cur;
        }
        1.0 / s
    }
}

/// Nodes `x_{1,n} > … > x_{n,n}` (zeros of `p_n`) and Christoffel numbers.
#[derive(Clone, Debug, Serialize)]
pub struct GaussRule {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub christoffel: Vec<f64>,
    /// `p_n'(x_{j,n})`
    pub pn_prime: Vec<f64>,
}

impl GaussRule {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.christoffel).map(|(&x, &l)| l * f(x)).sum()
    }

    /// `min_j |x − x_{j,n}|` and the minimizing index.
    pub fn nearest(&self, x: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, &xj) in self.nodes.iter().enumerate() {
            let d = (x - xj).abs();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Distance from node `j` to its nearest neighbour (`∞` for `n = 1`).
    pub fn local_spacing(&self, j: usize) -> f64 {
        let left = if j + 1 < self.n { self.nodes[j] - self.nodes[j + 1] } else { f64::INFINITY };
        let right = if j > 0 { self.nodes[j - 1] - self.nodes[j] } else { f64::INFINITY };
        left.min(right)
    }
}

/// Golub–Welsch eigenvalues of the order-`n` Jacobi matrix, polished by Newton on `p_n`.
///
/// Christoffel numbers are taken from `1/Σ_{k<n} p_k(x_j)²`, which keeps full
/// relative accuracy for the tiny weights at extreme nodes.
pub fn gauss_rule(table: &RecurrenceTable, n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::Parameter("a Gauss rule needs n ≥ 1".into()));
    }
    table.check_degree(n)?;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = table.diag[k];
        if k + 1 < n {
            jac[(k, k + 1)] = table.offdiag[k + 1];
            jac[(k + 1, k)] = table.offdiag[k + 1];
        }
    }
    let eig = SymmetricEigen::try_new(jac, 1e-15, 10_000).ok_or(Error::Eigen(n))?;
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| b.total_cmp(a));
    let spacing: Vec<f64> = (0..n)
        .map(|j| {
            let l = if j + 1 < n { nodes[j] - nodes[j + 1] } else { f64::INFINITY };
            let r = if j > 0 { nodes[j - 1] - nodes[j] } else { f64::INFINITY };
            l.min(r)
        })
        .collect();
    for (x, s) in nodes.iter_mut().zip(&spacing) {
        for _ in 0..3 {
            let [p, dp] = table.derivs::<2>(n, *x);
            if dp == 0.0 || !p.is_finite() {
                break;
            }
            let step = p / dp;
            if step.abs() > 0.1 * s.min(1.0) || step == 0.0 {
                break;
            }
            *x -= step;
        }
    }
    let christoffel: Vec<f64> = nodes.iter().map(|&x| table.christoffel(n, x)).collect();
    let pn_prime: Vec<f64> = nodes.iter().map(|&x| table.derivs::<2>(n, x)[1]).collect();
    if christoffel.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Eigen(n));
    }
    Ok(GaussRule {
        n,
        nodes,
        christoffel,
        pn_prime,
    })
}

/// Normalized statistics of `p_n` whose boundedness in `n` is predicted by
/// the weighted polynomial inequalities for exponential weights.
#[derive(Clone, Debug, Serialize)]
pub struct PnDiagnostics {
    pub n: usize,
    pub grid_points: usize,
    /// `sup |p_n w| |(x − a_{−n})(a_n − x)|^{1/4}`
    pub sup_pw_edge: f64,
    /// `sup |p_n w| / k_n`, `k_n = n^{1/6} δ_n^{−1/3} max{T(a_n)/a_n, T(a_{−n})/|a_{−n}|}^{1/6}`
    pub sup_pw_normalized: f64,
    /// `(p, ‖p_n w‖_p / rate_p)` for `p ∈ {1, 2, 4}`
    pub lp_normalized: Vec<(f64, f64)>,
    /// min and max over nodes of `|p_n' w| (φ_n/n) |(x − a_{−n})(a_n − x)|^{1/4}`
    pub node_derivative_band: (f64, f64),
    /// `‖p_n' w‖_∞ / (h_n ‖p_n w‖_∞)`, `h_n = n δ_n^{−1/2} max{…}^{1/2}`
    pub markov_bernstein: f64,
    /// min and max of `(x_{j,n} − x_{j+1,n}) / (φ_n(x_{j,n})/n)`
    pub spacing_band: (f64, f64),
    /// min and max of `λ_n(w², x) / ((φ_n(x)/n) w²(x))` over `[a_{−n}(1+η_{−n}), a_n(1+η_n)]`
    pub christoffel_band: (f64, f64),
}

fn band(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Points uniform in the angle of `[lo, hi]` (denser toward both ends).
pub(crate) fn angle_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let rad = 0.5 * (hi - lo);
    (0..points)
        .map(|i| mid - rad * (std::f64::consts::PI * (i as f64 + 0.5) / points as f64).cos())
        .collect()
}

pub fn pn_diagnostics(spec: &WeightSpec, table: &RecurrenceTable, n: usize, grid_points: usize) -> Result<PnDiagnostics> {
    if n == 0 {
        return Err(Error::Parameter("diagnostics need n ≥ 1".into()));
    }
    table.check_degree(n)?;
    let grid_points = grid_points.max(100);
    let sc = DegreeScales::new(spec, n)?;
    let (am, ap) = (sc.mrs_n.a_minus, sc.mrs_n.a_plus);
    let delta = sc.mrs_n.delta;
    let nf = n as f64;
    let edge = |x: f64| ((x - am) * (ap - x)).abs().powf(0.25);
    let phi = |x: f64| sc.phi(x) / nf;

    let (c, d) = spec.support();
    let lo = sc.mrs_2n.a_minus.max(c + 1e-12 * (1.0 + c.abs().min(1e300)));
    let hi = sc.mrs_2n.a_plus.min(d - 1e-12 * (1.0 + d.abs().min(1e300)));
    let grid = angle_grid(lo, hi, grid_points);
    let mut sup_edge = 0.0f64;
    let mut sup_pw = 0.0f64;
    let mut sup_dpw = 0.0f64;
    for &x in &grid {
        let [p, dp] = table.derivs::<2>(n, x);
        let w = spec.w(x);
        sup_edge = sup_edge.max((p * w).abs() * edge(x));
        sup_pw = sup_pw.max((p * w).abs());
        sup_dpw = sup_dpw.max((dp * w).abs());
    }
    let k_n = nf.powf(1.0 / 6.0) * delta.powf(-1.0 / 3.0) * sc.t_ratio_max.powf(1.0 / 6.0);
    let h_n = nf / delta.sqrt() * sc.t_ratio_max.sqrt();

    let measure = verification_measure(spec, table.n_max)?;
    let lp_normalized = [1.0, 2.0, 4.0]
        .iter()
        .map(|&p| {
            let integral = measure.integrate(|x| table.pn(n, x).abs().powf(p) * spec.w(x).powf(p - 2.0));
            let norm = integral.powf(1.0 / p);
            let rate = if p < 4.0 {
                delta.powf(1.0 / p - 0.5)
            } else {
                delta.powf(-0.25) * (nf + 1.0).ln().powf(0.25)
            };
            (p, norm / rate)
        })
        .collect();

    let rule = gauss_rule(table, n)?;
    let node_derivative_band = band(
        rule.nodes
            .iter()
            .zip(&rule.pn_prime)
            .map(|(&x, &dp)| (dp * spec.w(x)).abs() * phi(x) * edge(x)),
    );
    let spacing_band = if n >= 2 {
        band((0..n - 1).map(|j| (rule.nodes[j] - rule.nodes[j + 1]) / phi(rule.nodes[j])))
    } else {
        (f64::NAN, f64::NAN)
    };
    let c_lo = am * (1.0 + sc.edges.eta_minus);
    let c_hi = ap * (1.0 + sc.edges.eta_plus);
    let c_lo = c_lo.max(c + 1e-9);
    let c_hi = c_hi.min(d - 1e-9);
    let christoffel_band = band(
        angle_grid(c_lo, c_hi, grid_points)
            .into_iter()
            .map(|x| table.christoffel(n, x) / (phi(x) * spec.w2(x))),
    );
    Ok(PnDiagnostics {
        n,
        grid_points,
        sup_pw_edge: sup_edge,
        sup_pw_normalized: sup_pw / k_n,
        lp_normalized,
        node_derivative_band,
        markov_bernstein: sup_dpw / (h_n * sup_pw),
        spacing_band,
        christoffel_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn freud22() -> WeightSpec {
        WeightSpec::freud(2.0, 2.0).unwrap()
    }

    fn small_table(spec: &WeightSpec) -> Arc<RecurrenceTable> {
        cached_table(spec, 40, DEFAULT_DIGITS).unwrap()
    }

    #[test]
    fn measure_moments() {
        let spec = freud22();
        let m = mrs(&spec, 64.0).unwrap();
        let d = discretize_measure(&spec, &m, 32).unwrap();
        let s = (PI / 2.0).sqrt();
        assert!((d.integrate(|_| 1.0) - s).abs() < 1e-14);
        assert!(d.integrate(|x| x).abs() < 1e-14);
        assert!((d.integrate(|x| x * x) - s / 4.0).abs() < 1e-14);
        assert!(!d.truncation_reduced);
        assert!(discretize_measure(&spec, &m, 4).is_err());
    }

    #[test]
    fn low_order_values() {
        let spec = freud22();
        let t = small_table(&spec);
        let s = (PI / 2.0).sqrt();
        assert!((t.norm0 - s).abs() < 1e-14);
        assert!((t.eval_pn(0, 0.7).unwrap() - 0.893_243_841_738_002_3).abs() < 1e-13);
        assert!((t.eval_pn_prime(1, 0.0).unwrap() - 1.786_487_683_476_004_7).abs() < 1e-12);
        assert!(t.eval_pn(1, 0.0).unwrap().abs() < 1e-30);
        assert!((t.offdiag[1] - 0.5).abs() < 1e-14);
        assert!(t.diag.iter().all(|a| a.abs() < 1e-32));
        assert!(t.offdiag.iter().all(|&b| b > 0.0));
        // Hermite: b_k^2 = k/4 for exp(-2t^2)
        for k in 1..=40 {
            assert!((t.offdiag[k] - (k as f64 / 4.0).sqrt()).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn small_gauss_rules() {
        let spec = freud22();
        let t = small_table(&spec);
        let r2 = gauss_rule(&t, 2).unwrap();
        assert!((r2.nodes[0] - 0.5).abs() < 1e-14 && (r2.nodes[1] + 0.5).abs() < 1e-14);
        for l in &r2.christoffel {
            assert!((l - 0.626_657_068_657_750_1).abs() < 1e-13);
        }
        let r3 = gauss_rule(&t, 3).unwrap();
        let m4 = r3.integrate(|x| x.powi(4));
        assert!((m4 - 0.234_996_400_746_656_3).abs() < 1e-13);
        for n in 1..=40 {
            let r = gauss_rule(&t, n).unwrap();
            assert!((r.christoffel.iter().sum::<f64>() / t.norm0 - 1.0).abs() < 1e-12);
            assert!(r.nodes.windows(2).all(|w| w[0] > w[1]));
        }
        assert!(gauss_rule(&t, 41).is_err());
    }

    #[test]
    fn christoffel_identity_and_monotonicity() {
        let spec = freud22();
        let t = small_table(&spec);
        let r = gauss_rule(&t, 12).unwrap();
        for (x, l) in r.nodes.iter().zip(&r.christoffel) {
            assert!((t.christoffel_fn(12, *x).unwrap() / l - 1.0).abs() < 1e-13);
        }
        for &x in &[-2.0, 0.0, 0.3, 1.7] {
            let mut last = f64::INFINITY;
            for n in 1..30 {
                let v = t.christoffel_fn(n, x).unwrap();
                assert!(v > 0.0 && v <= last);
                last = v;
            }
        }
    }

    #[test]
    fn interlacing() {
        let spec = WeightSpec::freud(2.0, 3.0).unwrap();
        let t = small_table(&spec);
        for n in 1..30 {
            let a = gauss_rule(&t, n).unwrap();
            let b = gauss_rule(&t, n + 1).unwrap();
            for j in 0..n {
                assert!(b.nodes[j] > a.nodes[j] && a.nodes[j] > b.nodes[j + 1]);
            }
        }
    }

    #[test]
    fn scaled_evaluation_agrees_and_survives_overflow() {
        let spec = freud22();
        let t = small_table(&spec);
        let direct = t.eval_pn(30, 3.1).unwrap();
        let scaled = t.eval_pn_scaled(30, 3.1).unwrap().to_f64();
        assert!((scaled / direct - 1.0).abs() < 1e-12);
        let far = t.eval_pn_scaled(40, 1e12).unwrap();
        assert!(far.mantissa.is_finite() && far.exponent > 1000);
        assert!(!t.eval_pn(40, 1e12).unwrap().is_finite());
    }

    #[test]
    fn derivatives_match_differences() {
        let spec = WeightSpec::pollaczek(1.0, 1.0).unwrap();
        let t = small_table(&spec);
        let x = 0.37;
        let h = 1e-5;
        let d = t.derivs::<3>(9, x);
        let fd1 = (t.pn(9, x + h) - t.pn(9, x - h)) / (2.0 * h);
        let fd2 = (t.pn(9, x + h) - 2.0 * t.pn(9, x) + t.pn(9, x - h)) / (h * h);
        assert!((d[1] - fd1).abs() < 1e-6 * d[1].abs().max(1.0));
        assert!((d[2] - fd2).abs() < 1e-3 * d[2].abs().max(1.0));
    }

    #[test]
    fn parameter_gates() {
        let spec = freud22();
        assert!(stieltjes(&spec, 0, 64).is_err());
        assert!(stieltjes(&spec, 300, 64).is_err());
        assert!(stieltjes(&spec, 10, 16).is_err());
    }

    #[test]
    fn diagnostics_l2_is_one() {
        let spec = freud22();
        let t = small_table(&spec);
        let d = pn_diagnostics(&spec, &t, 16, 800).unwrap();
        let (_, l2) = d.lp_normalized[1];
        assert!((l2 - 1.0).abs() < 1e-10, "{l2}");
        assert!(d.sup_pw_edge > 0.1 && d.sup_pw_edge < 10.0);
    }
}
