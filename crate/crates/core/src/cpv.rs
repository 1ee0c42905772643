//! Reference evaluation of `I[g; x] = CPV∫ w²(t) g(t)/(t − x) dt` by
//! subtracting the singularity once and integrating the continuous
//! remainder adaptively.

use crate::error::{Error, Result};
use crate::quad::{integrate, AdaptiveOptions, AdaptiveResult, Split};
use crate::weight::WeightSpec;
use serde::Serialize;

// ln(1e40): w² times the envelope is cut below 1e-40
const TAIL_LOG: f64 = 92.1034;

/// How the `1/(t − x)` singularity is removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Subtraction {
    /// `∫ w²(t)(g(t) − g(x))/(t − x) dt + g(x)·CPV∫ w²/(t − x)`
    Integrand,
    /// `CPV∫ (g w²(t) − g w²(x))/(t − x) dt`, preferable where `w²(x)` is tiny and `g(x)` huge.
    Product,
}

#[derive(Clone, Copy, Debug)]
pub struct CpvOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub split: Split,
    /// `g` is assumed to grow no faster than `1 + |t|^envelope_degree`.
    pub envelope_degree: u32,
    pub subtraction: Subtraction,
}

impl Default for CpvOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_panels: 20_000,
            split: Split::Bisect,
            envelope_degree: 8,
            subtraction: Subtraction::Integrand,
        }
    }
}

impl CpvOptions {
    fn adaptive(&self) -> AdaptiveOptions {
        AdaptiveOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_panels: self.max_panels,
            split: self.split,
        }
    }

    // a share of the tolerance for one of several summed sub-integrals
    fn share(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpvValue {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

fn finish(value: f64, error: f64, panels: usize, opts: &CpvOptions) -> Result<CpvValue> {
    if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
        Ok(CpvValue {
            value,
            error_estimate: error,
            panels,
        })
    } else {
        Err(Error::Accuracy { value, error, panels })
    }
}

/// Magnitude on side `sign` beyond which `w²(t)(1 + |t|^deg) < 1e-40`.
fn tail_point(spec: &WeightSpec, sign: f64, degree: u32) -> f64 {
    let (c, d) = spec.support();
    let end = if sign > 0.0 { d } else { -c };
    let excess = |u: f64| 2.0 * spec.q(sign * u) - degree as f64 * (1.0 + u).ln() - TAIL_LOG;
    let mut lo = 0.0;
    let mut hi = if end.is_finite() { end } else { 1.0 };
    if !end.is_finite() {
        while excess(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.min(end)
}

/// Truncation `[lo, hi]` for singularity `x` and growth envelope `degree`.
pub fn truncation_for(spec: &WeightSpec, x: f64, degree: u32) -> (f64, f64) {
    let (c, d) = spec.support();
    let mut hi = tail_point(spec, 1.0, degree);
    let mut lo = -tail_point(spec, -1.0, degree);
    if x >= hi {
        hi = x + x.abs().max(1.0);
    }
    if x <= lo {
        lo = x - x.abs().max(1.0);
    }
    // keep the truncation strictly inside a bounded support
    let shrink = |end: f64, v: f64| if end.is_finite() && v >= end.abs() { end.abs() * (1.0 - 1e-15) } else { v };
    (-shrink(c, -lo), shrink(d, hi))
}

/// Panel ends: the truncation, `x`, the origin and the extent of the bulk of `w²`.
fn breaks_for(spec: &WeightSpec, lo: f64, hi: f64, x: f64) -> Vec<f64> {
    let mut b = vec![lo, hi, x, 0.0, tail_point(spec, 1.0, 0), -tail_point(spec, -1.0, 0)];
    b.retain(|&t| t >= lo && t <= hi);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn check_x(spec: &WeightSpec, x: f64) -> Result<()> {
    if !x.is_finite() || !spec.contains(x) {
        let (c, d) = spec.support();
        return Err(Error::Domain(format!("x = {x} is outside the support ({c}, {d})")));
    }
    Ok(())
}

/// `∫` over the parts of the support beyond `[lo, hi]`; both are regular there.
fn tails<F: Fn(f64) -> f64>(spec: &WeightSpec, lo: f64, hi: f64, f: F, opts: &CpvOptions) -> AdaptiveResult {
    let (c, d) = spec.support();
    tails_within(c, d, lo, hi, f, opts)
}

fn tails_within<F: Fn(f64) -> f64>(c: f64, d: f64, lo: f64, hi: f64, f: F, opts: &CpvOptions) -> AdaptiveResult {
    let mut total = AdaptiveResult {
        value: 0.0,
        error: 0.0,
        panels: 0,
        converged: true,
    };
    let mut add = |r: AdaptiveResult| {
        total.value += r.value;
        total.error += r.error;
        total.panels += r.panels;
        total.converged &= r.converged;
    };
    let ad = opts.adaptive();
    if d.is_finite() {
        if d > hi {
            add(integrate(&f, &[hi, d], &ad));
        }
    } else {
        add(integrate(
            |u: f64| {
                let s = 1.0 - u;
                f(hi + u / s) / (s * s)
            },
            &[0.0, 1.0],
            &ad,
        ));
    }
    if c.is_finite() {
        if c < lo {
            add(integrate(&f, &[c, lo], &ad));
        }
    } else {
        add(integrate(
            |u: f64| {
                let s = 1.0 - u;
                f(lo - u / s) / (s * s)
            },
            &[0.0, 1.0],
            &ad,
        ));
    }
    total
}

/// `CPV∫ w²(t)/(t − x) dt` over the whole support.
pub fn cpv_weight_transform(spec: &WeightSpec, x: f64, opts: &CpvOptions) -> Result<CpvValue> {
    check_x(spec, x)?;
    let (lo, hi) = truncation_for(spec, x, opts.envelope_degree);
    weight_transform_on(spec, x, lo, hi, opts)
}

/// `CPV∫_a^b w²(t)/(t − x) dt` for `a < x < b` inside the support; `a`, `b` may be infinite.
pub fn cpv_weight_transform_between(spec: &WeightSpec, x: f64, a: f64, b: f64, opts: &CpvOptions) -> Result<CpvValue> {
    check_x(spec, x)?;
    let (c, d) = spec.support();
    let (a, b) = (a.max(c), b.min(d));
    if !(a < x && x < b) {
        return Err(Error::Domain(format!("x = {x} is not inside ({a}, {b})")));
    }
    let (lo, hi) = truncation_for(spec, x, opts.envelope_degree);
    weight_transform_within(spec, x, lo.max(a), hi.min(b), a, b, opts)
}

fn weight_transform_on(spec: &WeightSpec, x: f64, lo: f64, hi: f64, opts: &CpvOptions) -> Result<CpvValue> {
    let (c, d) = spec.support();
    weight_transform_within(spec, x, lo, hi, c, d, opts)
}

fn weight_transform_within(spec: &WeightSpec, x: f64, lo: f64, hi: f64, c: f64, d: f64, opts: &CpvOptions) -> Result<CpvValue> {
    let scale = 1.0 + x.abs();
    if x - lo <= 1e-13 * scale || hi - x <= 1e-13 * scale {
        return Err(Error::Domain(format!("x = {x} is too close to the truncation [{lo}, {hi}]")));
    }
    let wx = spec.w2(x);
    let slope = -2.0 * spec.q_prime(x) * wx;
    let part = opts.share(0.25);
    let body = integrate(
        |t| {
            if t == x {
                slope
            } else {
                (spec.w2(t) - wx) / (t - x)
            }
        },
        &breaks_for(spec, lo, hi, x),
        &part.adaptive(),
    );
    let tail = tails_within(c, d, lo, hi, |t| spec.w2(t) / (t - x), &part);
    let value = body.value + wx * ((hi - x) / (x - lo)).ln() + tail.value;
    finish(value, body.error + tail.error, body.panels + tail.panels, opts)
}

/// `I[g; x]` with the error estimate of the adaptive integration.
pub fn cpv_eval<G: Fn(f64) -> f64>(spec: &WeightSpec, g: G, x: f64, opts: &CpvOptions) -> Result<CpvValue> {
    let first = cpv_eval_retry(spec, &g, x, opts);
    let Err(Error::Accuracy { value, error, panels }) = first else {
        return first;
    };
    // the other subtraction avoids the cancellation that stalled the first
    let other = CpvOptions {
        subtraction: match opts.subtraction {
            Subtraction::Integrand => Subtraction::Product,
            Subtraction::Product => Subtraction::Integrand,
        },
        ..*opts
    };
    match cpv_eval_retry(spec, &g, x, &other) {
        Err(Error::Accuracy { error: e2, .. }) if e2 >= error => Err(Error::Accuracy { value, error, panels }),
        second => second,
    }
}

fn cpv_eval_retry<G: Fn(f64) -> f64>(spec: &WeightSpec, g: &G, x: f64, opts: &CpvOptions) -> Result<CpvValue> {
    match cpv_eval_once(spec, g, x, opts, opts) {
        Err(Error::Accuracy { value, .. }) => {
            // parts larger than their sum: retry with the absolute target implied by the first estimate
            let target = opts.abs_tol.max(opts.rel_tol * value.abs());
            let inner = opts.with_tolerances(target, 0.0);
            cpv_eval_once(spec, g, x, &inner, opts)
        }
        other => other,
    }
}

fn cpv_eval_once<G: Fn(f64) -> f64>(
    spec: &WeightSpec,
    g: &G,
    x: f64,
    opts: &CpvOptions,
    accept: &CpvOptions,
) -> Result<CpvValue> {
    check_x(spec, x)?;
    let (lo, hi) = truncation_for(spec, x, opts.envelope_degree);
    let gx = g(x);
    if !gx.is_finite() {
        return Err(Error::Input(format!("g({x}) = {gx}")));
    }
    let part = opts.share(0.25);
    match opts.subtraction {
        Subtraction::Integrand => {
            let body = integrate(
                |t| {
                    if t == x {
                        0.0
                    } else {
                        spec.w2(t) * (g(t) - gx) / (t - x)
                    }
                },
                &breaks_for(spec, lo, hi, x),
                &part.adaptive(),
            );
            let tail = tails(spec, lo, hi, |t| spec.w2(t) * (g(t) - gx) / (t - x), &part);
            let mut value = body.value + tail.value;
            let mut error = body.error + tail.error;
            let mut panels = body.panels + tail.panels;
            if gx != 0.0 {
                let h_opts = opts.share(0.5 / gx.abs().max(1.0));
                let h = match weight_transform_on(spec, x, lo, hi, &h_opts) {
                    Ok(h) => h,
                    Err(Error::Accuracy { value, error, panels }) => CpvValue {
                        value,
                        error_estimate: error,
                        panels,
                    },
                    Err(e) => return Err(e),
                };
                value += gx * h.value;
                error += gx.abs() * h.error_estimate;
                panels += h.panels;
            }
            finish(value, error, panels, accept)
        }
        Subtraction::Product => {
            let rho = gx * spec.w2(x);
            let body = integrate(
                |t| {
                    if t == x {
                        0.0
                    } else {
                        (g(t) * spec.w2(t) - rho) / (t - x)
                    }
                },
                &breaks_for(spec, lo, hi, x),
                &part.adaptive(),
            );
            let tail = tails(spec, lo, hi, |t| g(t) * spec.w2(t) / (t - x), &part);
            let value = body.value + rho * ((hi - x) / (x - lo)).ln() + tail.value;
            finish(value, body.error + tail.error, body.panels + tail.panels, accept)
        }
    }
}
