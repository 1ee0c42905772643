//! Mhaskar–Rakhmanov–Saff numbers `a_{-t} < 0 < a_t` and the scale
//! quantities derived from them.
//!
//! The defining equations
//!
//! ```text
//! t = (1/π) ∫ x Q'(x) / sqrt((x − a_{-t})(a_t − x)) dx,
//! 0 = (1/π) ∫   Q'(x) / sqrt((x − a_{-t})(a_t − x)) dx,
//! ```
//!
//! are integrated after the substitution `x = β + δ cos θ`, which turns
//! both into smooth integrals over `θ ∈ [0, π]`. The θ-range is split where
//! `x = 0` so that one-sided non-smoothness of `Q'` sits on a panel end.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::weight::WeightSpec;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

/// Default relative tolerance of the MRS solver.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_NEWTON: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MrsNumbers {
    pub t: f64,
    pub a_minus: f64,
    pub a_plus: f64,
    /// `(a_t + |a_{-t}|)/2`
    pub delta: f64,
    /// `(a_t + a_{-t})/2`
    pub beta: f64,
    /// `(F1 − t)/t` at the returned pair.
    pub residual1: f64,
    /// `F2` scaled by `(1/π)∫|Q'|dθ`.
    pub residual2: f64,
}

impl MrsNumbers {
    /// `|a_{±t}|` for `sign = ±1`.
    pub fn magnitude(&self, sign: f64) -> f64 {
        if sign > 0.0 {
            self.a_plus
        } else {
            -self.a_minus
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeScales {
    pub n: usize,
    pub eta_plus: f64,
    pub eta_minus: f64,
}

/// Integral values `(F1, F2, S)` with `S = (1/π)∫|Q'| dθ` as a scale for `F2`.
pub(crate) fn mrs_integrals(spec: &WeightSpec, a_minus: f64, a_plus: f64, tol: f64) -> (f64, f64, f64) {
    let beta = 0.5 * (a_plus + a_minus);
    let delta = 0.5 * (a_plus - a_minus);
    let theta0 = (-beta / delta).clamp(-1.0, 1.0).acos();
    let eval = |m: usize| -> (f64, f64, f64) {
        let rule = gauss_legendre(m);
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        let mut s = 0.0;
        for (lo, hi) in [(0.0, theta0), (theta0, PI)] {
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&node, &wt) in rule.nodes.iter().zip(&rule.weights) {
                let th = mid + half * node;
                let x = beta + delta * th.cos();
                let qp = spec.q_prime(x);
                f1 += wt * half * x * qp;
                f2 += wt * half * qp;
                s += wt * half * qp.abs();
            }
        }
        (f1 / PI, f2 / PI, s / PI)
    };
    let mut m = 32;
    let mut prev = eval(m);
    loop {
        m *= 2;
        let cur = eval(m);
        let d1 = (cur.0 - prev.0).abs() / cur.0.abs().max(f64::MIN_POSITIVE);
        let d2 = (cur.1 - prev.1).abs() / cur.2.max(f64::MIN_POSITIVE);
        if (d1 < tol / 10.0 && d2 < tol / 10.0) || m >= 16384 {
            return cur;
        }
        prev = cur;
    }
}

// Coordinates in which the solver works: a = e^s on unbounded sides and
// a = end·(1 − e^{−s}) on a bounded side.
#[derive(Clone, Copy)]
struct SideMap {
    end: f64,
}

impl SideMap {
    fn to_a(self, s: f64) -> f64 {
        if self.end.is_finite() {
            -self.end * (-s).exp_m1()
        } else {
            s.exp()
        }
    }
    fn to_s(self, a: f64) -> f64 {
        if self.end.is_finite() {
            -(-a / self.end).ln_1p()
        } else {
            a.ln()
        }
    }
    fn max_s(self) -> f64 {
        if self.end.is_finite() {
            30.0
        } else {
            700.0
        }
    }
}

fn cache() -> &'static RwLock<HashMap<(String, u64, u64), MrsNumbers>> {
    static CACHE: OnceLock<RwLock<HashMap<(String, u64, u64), MrsNumbers>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Solves the MRS equations for `t` (memoized per spec, `t`, `tol`).
pub fn solve_mrs(spec: &WeightSpec, t: f64, tol: f64) -> Result<MrsNumbers> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("MRS numbers need t > 0, got {t}")));
    }
    if !(tol > 1e-14 && tol < 1e-4) {
        return Err(Error::Parameter(format!("MRS tolerance must lie in (1e-14, 1e-4), got {tol}")));
    }
    let key = (spec.to_string(), t.to_bits(), tol.to_bits());
    if let Some(hit) = cache().read().unwrap().get(&key) {
        return Ok(*hit);
    }
    let solved = if spec.is_even() {
        solve_even(spec, t, tol)?
    } else {
        solve_general(spec, t, tol)?
    };
    cache().write().unwrap().insert(key, solved);
    Ok(solved)
}

/// `solve_mrs` with the default tolerance.
pub fn mrs(spec: &WeightSpec, t: f64) -> Result<MrsNumbers> {
    solve_mrs(spec, t, DEFAULT_TOL)
}

fn finish(spec: &WeightSpec, t: f64, a_minus: f64, a_plus: f64, tol: f64) -> MrsNumbers {
    let (f1, f2, s) = mrs_integrals(spec, a_minus, a_plus, tol);
    MrsNumbers {
        t,
        a_minus,
        a_plus,
        delta: 0.5 * (a_plus - a_minus),
        beta: 0.5 * (a_plus + a_minus),
        residual1: (f1 - t) / t,
        residual2: f2 / s.max(f64::MIN_POSITIVE),
    }
}

/// 1-D solve of `F1(a) = t` for the symmetric pair `(−a, a)` where `Q'` on
/// `x ≥ 0` is that of the `sign` side of `spec`.
fn solve_symmetric_side(spec: &WeightSpec, sign: f64, t: f64, tol: f64) -> Result<f64> {
    let (c, d) = spec.support();
    let map = SideMap {
        end: if sign > 0.0 { d } else { -c },
    };
    // for an even Q'(x) = sign·Q'(sign·|x|) the pair is symmetric
    let f1 = |a: f64| -> f64 {
        let mut m = 32;
        let mut prev = f1_symmetric(spec, sign, a, m);
        loop {
            m *= 2;
            let cur = f1_symmetric(spec, sign, a, m);
            if (cur - prev).abs() <= tol / 10.0 * cur.abs() || m >= 16384 {
                return cur;
            }
            prev = cur;
        }
    };
    let g = |s: f64| f1(map.to_a(s)) / t - 1.0;

    let mut lo;
    let mut hi;
    let start = map.to_s(if map.end.is_finite() {
        map.end * (1.0 - 1.0 / (1.0 + t).sqrt())
    } else {
        t.powf(1.0 / spec.lambda_floor())
    });
    let g0 = g(start);
    if g0 == 0.0 {
        return Ok(map.to_a(start));
    }
    let step = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut s_prev = start;
    let mut g_prev = g0;
    loop {
        let s_next = s_prev + step;
        if s_next > map.max_s() {
            return Err(Error::Domain(format!(
                "MRS number for t = {t} lies beyond the representable part of the support"
            )));
        }
        let g_next = g(s_next);
        if g_next.is_nan() {
            return Err(Error::Domain(format!("MRS integrals saturate for t = {t}")));
        }
        if (g_next > 0.0) != (g_prev > 0.0) || g_next == 0.0 {
            if step > 0.0 {
                lo = (s_prev, g_prev);
                hi = (s_next, g_next);
            } else {
                lo = (s_next, g_next);
                hi = (s_prev, g_prev);
            }
            break;
        }
        s_prev = s_next;
        g_prev = g_next;
    }
    // Illinois variant of regula falsi on the bracket
    let mut side = 0i32;
    for _ in 0..200 {
        let s = (lo.0 * hi.1 - hi.0 * lo.1) / (hi.1 - lo.1);
        let gs = g(s);
        if gs.abs() <= tol * 0.5 || (hi.0 - lo.0).abs() <= 1e-15 * s.abs().max(1.0) {
            return Ok(map.to_a(s));
        }
        if gs < 0.0 {
            lo = (s, gs);
            if side == -1 {
                hi.1 *= 0.5;
            }
            side = -1;
        } else {
            hi = (s, gs);
            if side == 1 {
                lo.1 *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NoConvergence {
        iterations: 200,
        residual1: g(0.5 * (lo.0 + hi.0)),
        residual2: 0.0,
    })
}

// (1/π)∫ x Q'(x) dθ over x = a cos θ with the chosen side's Q' made even
fn f1_symmetric(spec: &WeightSpec, sign: f64, a: f64, m: usize) -> f64 {
    let rule = gauss_legendre(m);
    let half = 0.25 * PI;
    let mid = 0.25 * PI;
    let mut acc = 0.0;
    for (&node, &wt) in rule.nodes.iter().zip(&rule.weights) {
        let th = mid + half * node;
        let x = a * th.cos();
        acc += wt * half * x * (sign * spec.q_prime(sign * x));
    }
    // the integrand is symmetric about θ = π/2
    2.0 * acc / PI
}

fn solve_even(spec: &WeightSpec, t: f64, tol: f64) -> Result<MrsNumbers> {
    let a = solve_symmetric_side(spec, 1.0, t, tol)?;
    Ok(finish(spec, t, -a, a, tol))
}

fn solve_general(spec: &WeightSpec, t: f64, tol: f64) -> Result<MrsNumbers> {
    let (c, d) = spec.support();
    let maps = [SideMap { end: -c }, SideMap { end: d }];
    // start from the symmetric solutions of each side's own Q
    let a_minus0 = solve_symmetric_side(spec, -1.0, t, tol)?;
    let a_plus0 = solve_symmetric_side(spec, 1.0, t, tol)?;
    let mut s = [maps[0].to_s(a_minus0), maps[1].to_s(a_plus0)];

    let residual = |s: &[f64; 2]| -> Result<[f64; 2]> {
        if s[0] > maps[0].max_s() || s[1] > maps[1].max_s() {
            return Err(Error::Domain(format!(
                "MRS numbers for t = {t} lie beyond the representable part of the support"
            )));
        }
        let am = -maps[0].to_a(s[0]);
        let ap = maps[1].to_a(s[1]);
        let (f1, f2, sc) = mrs_integrals(spec, am, ap, tol);
        Ok([f1 / t - 1.0, f2 / sc.max(f64::MIN_POSITIVE)])
    };
    let norm = |r: &[f64; 2]| r[0].abs().max(r[1].abs());

    let mut r = residual(&s)?;
    for _ in 0..MAX_NEWTON {
        if r[0].abs() <= tol && r[1].abs() <= tol {
            return Ok(finish(spec, t, -maps[0].to_a(s[0]), maps[1].to_a(s[1]), tol));
        }
        // forward-difference Jacobian in the solver coordinates
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut sp = s;
            sp[k] += h;
            let rp = residual(&sp)?;
            jac[0][k] = (rp[0] - r[0]) / h;
            jac[1][k] = (rp[1] - r[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let ds = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [s[0] + lambda * ds[0], s[1] + lambda * ds[1]];
            if let Ok(rt) = residual(&trial) {
                if norm(&rt) < norm(&r) {
                    s = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r[0].abs() <= tol && r[1].abs() <= tol {
        return Ok(finish(spec, t, -maps[0].to_a(s[0]), maps[1].to_a(s[1]), tol));
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON,
        residual1: r[0],
        residual2: r[1],
    })
}

/// Least-squares slopes of the MRS numbers against `log t`.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    /// `log a_t` (unbounded) or `log(1 − a_t)` (bounded support) vs `log t`.
    pub slope_plus: f64,
    /// `log |a_{−t}|` (unbounded) or `log(1 + a_{−t})` (bounded support) vs `log t`.
    pub slope_minus: f64,
    pub points: Vec<MrsNumbers>,
}

pub fn scaling_exponents(spec: &WeightSpec, t_ladder: &[f64]) -> Result<ScalingFit> {
    if t_ladder.len() < 6 {
        return Err(Error::Parameter("scaling fit needs at least 6 ladder points".into()));
    }
    let (tmin, tmax) = t_ladder
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if tmax / tmin < 100.0 {
        return Err(Error::Parameter("scaling fit ladder must span at least two decades".into()));
    }
    let points = t_ladder.iter().map(|&t| mrs(spec, t)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|m| m.t.ln()).collect();
    let (plus, minus): (Vec<f64>, Vec<f64>) = if spec.is_bounded() {
        let (c, d) = spec.support();
        points
            .iter()
            .map(|m| ((d - m.a_plus).ln(), (m.a_minus - c).ln()))
            .unzip()
    } else {
        points.iter().map(|m| (m.a_plus.ln(), (-m.a_minus).ln())).unzip()
    };
    Ok(ScalingFit {
        slope_plus: ls_slope(&xs, &plus),
        slope_minus: ls_slope(&xs, &minus),
        points,
    })
}

pub(crate) fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `η_{±n} = (n T(a_{±n}) sqrt(|a_{±n}|/δ_n))^{−2/3}` from MRS numbers at `t = n`.
pub fn edge_scales(spec: &WeightSpec, n: usize, mrs_n: &MrsNumbers) -> EdgeScales {
    let nf = n as f64;
    let eta = |a: f64| (nf * spec.t(a) * (a.abs() / mrs_n.delta).sqrt()).powf(-2.0 / 3.0);
    EdgeScales {
        n,
        eta_plus: eta(mrs_n.a_plus),
        eta_minus: eta(mrs_n.a_minus),
    }
}

/// The local spacing function `φ_n(x)`, continued as a constant outside `Δ_n`.
pub fn phi_n(x: f64, mrs_n: &MrsNumbers, mrs_2n: &MrsNumbers, scales: &EdgeScales) -> f64 {
    let inner = |x: f64| {
        let num = (x - mrs_2n.a_minus).abs() * (mrs_2n.a_plus - x).abs();
        let left = (x - mrs_n.a_minus).abs() + mrs_n.a_minus.abs() * scales.eta_minus;
        let right = (x - mrs_n.a_plus).abs() + mrs_n.a_plus.abs() * scales.eta_plus;
        num / (left * right).sqrt()
    };
    inner(x.clamp(mrs_n.a_minus, mrs_n.a_plus))
}

/// Bundle of the scale data used by most diagnostics at degree `n`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DegreeScales {
    pub n: usize,
    pub mrs_n: MrsNumbers,
    pub mrs_2n: MrsNumbers,
    pub edges: EdgeScales,
    /// `max{T(a_n)/a_n, T(a_{−n})/|a_{−n}|}`
    pub t_ratio_max: f64,
}

impl DegreeScales {
    pub fn new(spec: &WeightSpec, n: usize) -> Result<Self> {
        let mrs_n = mrs(spec, n as f64)?;
        let mrs_2n = mrs(spec, 2.0 * n as f64)?;
        let edges = edge_scales(spec, n, &mrs_n);
        let t_ratio_max = (spec.t(mrs_n.a_plus) / mrs_n.a_plus).max(spec.t(mrs_n.a_minus) / mrs_n.a_minus.abs());
        Ok(Self {
            n,
            mrs_n,
            mrs_2n,
            edges,
            t_ratio_max,
        })
    }

    pub fn phi(&self, x: f64) -> f64 {
        phi_n(x, &self.mrs_n, &self.mrs_2n, &self.edges)
    }
}

/// Ratios whose boundedness in `t` expresses the asymptotics of `Q(a_{±t})` and `Q'(a_{±t})`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MrsDiagnosticRow {
    pub t: f64,
    /// `Q(a_t) sqrt(δ_t T(a_t)/a_t) / t`
    pub q_ratio_plus: f64,
    pub q_ratio_minus: f64,
    /// `|Q'(a_t)| / (t sqrt(T(a_t)/(δ_t a_t)))`
    pub q_prime_ratio_plus: f64,
    pub q_prime_ratio_minus: f64,
}

pub fn mrs_diagnostics(spec: &WeightSpec, t_ladder: &[f64]) -> Result<Vec<MrsDiagnosticRow>> {
    t_ladder
        .iter()
        .map(|&t| {
            if t < 1.0 {
                return Err(Error::Domain(format!("MRS diagnostics need t >= 1, got {t}")));
            }
            let m = mrs(spec, t)?;
            let ratios = |a: f64| {
                let tt = spec.t(a);
                let q = spec.q(a) * (m.delta * tt / a.abs()).sqrt() / t;
                let qp = spec.q_prime(a).abs() / (t * (tt / (m.delta * a.abs())).sqrt());
                (q, qp)
            };
            let (qp_, qpp) = ratios(m.a_plus);
            let (qm, qpm) = ratios(m.a_minus);
            Ok(MrsDiagnosticRow {
                t,
                q_ratio_plus: qp_,
                q_ratio_minus: qm,
                q_prime_ratio_plus: qpp,
                q_prime_ratio_minus: qpm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freud_quadratic_closed_form() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        for t in [1.0, 4.0, 9.0, 100.0] {
            let m = mrs(&spec, t).unwrap();
            assert!((m.a_plus - t.sqrt()).abs() <= 1e-8 * t.sqrt(), "t={t}: {}", m.a_plus);
            assert_eq!(m.a_minus, -m.a_plus);
            assert_eq!(m.beta, 0.0);
        }
    }

    #[test]
    fn freud_quartic_closed_form() {
        // F1 = (4a⁴/π)∫cos⁴θ dθ = 3a⁴/2
        let spec = WeightSpec::freud(4.0, 4.0).unwrap();
        let m = mrs(&spec, 3.0).unwrap();
        assert!((m.a_plus - 2f64.powf(0.25)).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_residuals_and_ordering() {
        let spec = WeightSpec::freud(2.0, 3.0).unwrap();
        let m = mrs(&spec, 50.0).unwrap();
        assert!(m.residual1.abs() <= DEFAULT_TOL && m.residual2.abs() <= DEFAULT_TOL);
        assert!(m.a_minus < 0.0 && m.a_plus > 0.0);
        assert!(m.a_plus > 50f64.sqrt(), "steeper left side pushes mass right");
        assert!(m.beta > 0.0);
    }

    #[test]
    fn monotone_in_t() {
        for spec in [
            WeightSpec::freud(2.0, 3.0).unwrap(),
            WeightSpec::pollaczek(1.0, 2.0).unwrap(),
            WeightSpec::iterated_exp(1, 2, 2.0, 2.0).unwrap(),
        ] {
            let ladder = [1.0, 2.0, 5.0, 10.0, 30.0, 100.0];
            let ms: Vec<_> = ladder.iter().map(|&t| mrs(&spec, t).unwrap()).collect();
            for w in ms.windows(2) {
                assert!(w[1].a_plus > w[0].a_plus, "{spec}");
                assert!(w[1].a_minus < w[0].a_minus, "{spec}");
                assert!(w[1].delta > w[0].delta, "{spec}");
            }
        }
    }

    #[test]
    fn pollaczek_stays_inside() {
        let spec = WeightSpec::pollaczek(1.0, 1.0).unwrap();
        let m = mrs(&spec, 1e4).unwrap();
        assert!(m.a_plus < 1.0 && m.a_plus > 0.95);
        assert_eq!(m.a_minus, -m.a_plus);
    }

    #[test]
    fn bad_inputs() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        assert!(mrs(&spec, 0.0).is_err());
        assert!(solve_mrs(&spec, 1.0, 1e-3).is_err());
        assert!(scaling_exponents(&spec, &[1.0, 2.0, 3.0]).is_err());
        assert!(scaling_exponents(&spec, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).is_err());
    }

    #[test]
    fn edge_scales_and_phi() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        let ds = DegreeScales::new(&spec, 16).unwrap();
        let expected = 32f64.powf(-2.0 / 3.0);
        assert!((ds.edges.eta_plus - expected).abs() < 1e-10);
        assert_eq!(ds.edges.eta_plus, ds.edges.eta_minus);
        // φ_16(0) = a_32² / (a_16 (1 + η_16))
        let phi0 = ds.phi(0.0);
        assert!((phi0 - 32.0 / (4.0 * (1.0 + expected))).abs() < 1e-8);
        assert!((phi0 - 7.2780).abs() < 1e-4);
        // constant continuation outside Δ_n
        assert_eq!(ds.phi(ds.mrs_n.a_plus), ds.phi(ds.mrs_n.a_plus + 3.0));
        assert_eq!(ds.phi(ds.mrs_n.a_minus), ds.phi(-100.0));
    }

    #[test]
    fn eta_decreases_along_ladder() {
        let spec = WeightSpec::freud(2.0, 3.0).unwrap();
        let etas: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| edge_scales(&spec, n, &mrs(&spec, n as f64).unwrap()).eta_plus)
            .collect();
        assert!(etas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn freud_quadratic_qprime_ratio_is_sqrt2() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        for row in mrs_diagnostics(&spec, &[4.0, 16.0, 64.0]).unwrap() {
            assert!((row.q_prime_ratio_plus - 2f64.sqrt()).abs() < 1e-9);
            assert!((row.q_prime_ratio_minus - 2f64.sqrt()).abs() < 1e-9);
        }
    }
}
