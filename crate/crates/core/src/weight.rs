//! Exponential weight families `w = exp(-Q)` and their class diagnostics.
//!
//! Three families are supported:
//!
//! * `freud(α, β)`: `Q(x) = x^α` for `x ≥ 0` and `|x|^β` for `x < 0`, on the real line,
//!   with `β ≥ α > 1`;
//! * `iterexp(ℓ, k, α, β)`: `Q(x) = exp_ℓ(x^α) − exp_ℓ(0)` for `x ≥ 0` and
//!   `exp_k(|x|^β) − exp_k(0)` for `x < 0`, with `k ≥ ℓ ≥ 1`, `α, β > 1`, and `β ≥ α` when `k = ℓ`;
//! * `pollaczek(α, β)`: `Q(x) = (1 − x²)^{−α} − 1` for `x ∈ [0, 1)` and exponent `β` on
//!   `(−1, 0)`, with `β ≥ α > 0`.
//!
//! `Q'` is evaluated in closed form for every family. All methods are pure.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Freud { alpha: f64, beta: f64 },
    IteratedExp { l: u32, k: u32, alpha: f64, beta: f64 },
    Pollaczek { alpha: f64, beta: f64 },
}

/// A validated weight instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpec {
    family: Family,
    lambda_floor: f64,
}

/// `exp(-2Q(x))` together with an underflow flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValue {
    pub value: f64,
    pub underflow: bool,
}

// Parameters of Q on one side of the origin.
#[derive(Clone, Copy)]
enum Side {
    Power(f64),
    IterExp { level: u32, exponent: f64 },
    Pollaczek(f64),
}

impl WeightSpec {
    pub fn freud(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 1.0 && beta >= alpha) {
            return Err(Error::Parameter(format!(
                "freud requires beta >= alpha > 1, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self {
            family: Family::Freud { alpha, beta },
            lambda_floor: alpha.min(beta),
        })
    }

    pub fn iterated_exp(l: u32, k: u32, alpha: f64, beta: f64) -> Result<Self> {
        let ok = l >= 1
            && k >= l
            && alpha.is_finite()
            && beta.is_finite()
            && alpha > 1.0
            && beta > 1.0
            && (k != l || beta >= alpha);
        if !ok {
            return Err(Error::Parameter(format!(
                "iterexp requires k >= l >= 1, alpha, beta > 1 and beta >= alpha when k = l; got l={l}, k={k}, alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self {
            family: Family::IteratedExp { l, k, alpha, beta },
            lambda_floor: alpha.min(beta),
        })
    }

    pub fn pollaczek(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta >= alpha) {
            return Err(Error::Parameter(format!(
                "pollaczek requires beta >= alpha > 0, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self {
            family: Family::Pollaczek { alpha, beta },
            lambda_floor: 1.01,
        })
    }

    /// Overrides the recorded lower bound Λ for `T`; must exceed 1.
    pub fn with_lambda_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 1.0 && floor.is_finite()) {
            return Err(Error::Parameter(format!("lambda floor must exceed 1, got {floor}")));
        }
        self.lambda_floor = floor;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn lambda_floor(&self) -> f64 {
        self.lambda_floor
    }

    /// Support interval `(c, d)`; infinite ends are `±inf`.
    pub fn support(&self) -> (f64, f64) {
        match self.family {
            Family::Pollaczek { .. } => (-1.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.family, Family::Pollaczek { .. })
    }

    /// True when `Q` is even.
    pub fn is_even(&self) -> bool {
        match self.family {
            Family::Freud { alpha, beta } | Family::Pollaczek { alpha, beta } => alpha == beta,
            Family::IteratedExp { l, k, alpha, beta } => l == k && alpha == beta,
        }
    }

    /// True when `Q` is analytic across the origin (a panel break at 0 is then unnecessary).
    pub(crate) fn smooth_at_origin(&self) -> bool {
        match self.family {
            Family::Freud { alpha, beta } => alpha == beta && alpha.fract() == 0.0 && alpha as i64 % 2 == 0,
            Family::Pollaczek { alpha, beta } => alpha == beta,
            Family::IteratedExp { l, k, alpha, beta } => {
                l == k && alpha == beta && alpha.fract() == 0.0 && alpha as i64 % 2 == 0
            }
        }
    }

    fn side(&self, x: f64) -> Side {
        let positive = x >= 0.0;
        match self.family {
            Family::Freud { alpha, beta } => Side::Power(if positive { alpha } else { beta }),
            Family::IteratedExp { l, k, alpha, beta } => {
                if positive {
                    Side::IterExp { level: l, exponent: alpha }
                } else {
                    Side::IterExp { level: k, exponent: beta }
                }
            }
            Family::Pollaczek { alpha, beta } => Side::Pollaczek(if positive { alpha } else { beta }),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (c, d) = self.support();
        x > c && x < d
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            let (c, d) = self.support();
            Err(Error::Domain(format!("x = {x} is outside the support ({c}, {d})")))
        }
    }

    /// `Q(x)`; `+inf` once an iterated exponential saturates.
    pub fn eval_q(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.q(x))
    }

    /// Closed-form `Q'(x)`.
    pub fn eval_q_prime(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.q_prime(x))
    }

    /// `w²(x) = exp(−2Q(x))`, flagging underflow to zero.
    pub fn eval_w2(&self, x: f64) -> Result<WeightValue> {
        self.check(x)?;
        let value = self.w2(x);
        Ok(WeightValue {
            value,
            underflow: value == 0.0,
        })
    }

    /// `T(x) = xQ'(x)/Q(x)` for `x ≠ 0`.
    pub fn eval_t(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        if x == 0.0 {
            return Err(Error::Domain("T is undefined at x = 0".into()));
        }
        Ok(self.t(x))
    }

    /// True if `Q(x)` is not representable in binary64.
    pub fn saturates(&self, x: f64) -> bool {
        !self.q(x).is_finite()
    }

    pub(crate) fn q(&self, x: f64) -> f64 {
        let u = x.abs();
        match self.side(x) {
            Side::Power(p) => u.powf(p),
            Side::IterExp { level, exponent } => iter_exp_shifted(level, u.powf(exponent)),
            Side::Pollaczek(a) => (-a * (-u * u).ln_1p()).exp_m1(),
        }
    }

    pub(crate) fn q_prime(&self, x: f64) -> f64 {
        let u = x.abs();
        let s = if x >= 0.0 { 1.0 } else { -1.0 };
        let mag = match self.side(x) {
            Side::Power(p) => p * u.powf(p - 1.0),
            Side::IterExp { level, exponent } => {
                let v = u.powf(exponent);
                let mut d = exponent * u.powf(exponent - 1.0);
                let mut e = v;
                for _ in 0..level {
                    e = e.exp();
                    d *= e;
                }
                d
            }
            Side::Pollaczek(a) => 2.0 * a * u * (-(a + 1.0) * (-u * u).ln_1p()).exp(),
        };
        s * mag
    }

    pub(crate) fn w2(&self, x: f64) -> f64 {
        (-2.0 * self.q(x)).exp()
    }

    /// `w(x) = exp(−Q(x))`.
    pub(crate) fn w(&self, x: f64) -> f64 {
        (-self.q(x)).exp()
    }

    pub(crate) fn t(&self, x: f64) -> f64 {
        let u = x.abs();
        match self.side(x) {
            Side::Power(p) => p,
            Side::IterExp { level, exponent } => {
                let v = u.powf(exponent);
                if v < 1e-12 {
                    return exponent;
                }
                // log-domain to survive saturation
                let ln_num = exponent.ln() + v.ln() + sum_ln_iter_exp(level, v);
                let ln_q = ln_iter_exp_shifted(level, v);
                (ln_num - ln_q).exp()
            }
            Side::Pollaczek(a) => {
                let u2 = u * u;
                if u2 < 1e-300 {
                    return 2.0;
                }
                let l = (-u2).ln_1p();
                let q = (-a * l).exp_m1();
                2.0 * a * u2 * (-(a + 1.0) * l).exp() / q
            }
        }
    }

    /// Samples the class conditions on a log-spaced grid toward both ends.
    pub fn validate(&self, grid_size: usize) -> Result<ValidationReport> {
        if grid_size < 100 {
            return Err(Error::Parameter(format!("validation grid needs >= 100 points, got {grid_size}")));
        }
        let grid = self.validation_grid(grid_size);
        let eps0 = 0.5;
        let mut monotonicity_violations = 0;
        let mut worst_drop: f64 = 0.0;
        let mut saturated = 0;
        let mut min_t = f64::INFINITY;
        let mut max_t: f64 = 0.0;
        let mut ratio_lo = f64::INFINITY;
        let mut ratio_hi: f64 = 0.0;
        let mut prev: Option<f64> = None;
        for &x in &grid {
            let qp = self.q_prime(x);
            if !qp.is_finite() || !self.q(x).is_finite() {
                saturated += 1;
                continue;
            }
            if let Some(p) = prev {
                let drop = (p - qp) / p.abs().max(qp.abs()).max(1.0);
                if drop > 1e-12 {
                    monotonicity_violations += 1;
                    worst_drop = worst_drop.max(drop);
                }
            }
            prev = Some(qp);
            if x != 0.0 {
                let t = self.t(x);
                min_t = min_t.min(t);
                max_t = max_t.max(t);
                let y = x * (1.0 - eps0 / t).abs();
                if y != 0.0 && self.contains(y) {
                    let r = t / self.t(y);
                    ratio_lo = ratio_lo.min(r);
                    ratio_hi = ratio_hi.max(r);
                }
            }
        }
        let floor_ok = min_t >= self.lambda_floor * (1.0 - 1e-12);
        Ok(ValidationReport {
            spec: self.to_string(),
            grid_size: grid.len(),
            monotonicity_violations,
            worst_monotonicity_drop: worst_drop,
            min_t,
            max_t,
            lambda_floor: self.lambda_floor,
            t_below_floor: !floor_ok,
            condition_e_ratio: (ratio_lo, ratio_hi),
            saturated_points: saturated,
            pass: monotonicity_violations == 0 && floor_ok,
        })
    }

    fn validation_grid(&self, size: usize) -> Vec<f64> {
        let per_side = size / 2;
        let mut pos = Vec::with_capacity(per_side);
        if self.is_bounded() {
            // half toward 0, half toward the endpoint
            let near0 = per_side / 2;
            for i in 0..near0 {
                pos.push(10f64.powf(-6.0 + 5.7 * i as f64 / (near0 - 1) as f64));
            }
            let rest = per_side - near0;
            for i in 0..rest {
                pos.push(1.0 - 10f64.powf(-0.3 - 7.7 * i as f64 / (rest - 1) as f64));
            }
        } else {
            let hi = self.q_level_point(1.0, 700.0).max(1.0);
            for i in 0..per_side {
                pos.push(10f64.powf(-6.0 + (6.0 + hi.log10()) * i as f64 / (per_side - 1) as f64));
            }
        }
        let mut neg: Vec<f64> = if self.is_bounded() {
            pos.iter().map(|x| -x).collect()
        } else {
            let hi = self.q_level_point(-1.0, 700.0).max(1.0);
            (0..per_side)
                .map(|i| -(10f64.powf(-6.0 + (6.0 + hi.log10()) * i as f64 / (per_side - 1) as f64)))
                .collect()
        };
        neg.reverse();
        let mut grid = neg;
        grid.push(0.0);
        grid.extend(pos);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// Magnitude `|x|` on the side `sign` where `Q` first reaches `level`
    /// (bisection; the support end for bounded weights).
    pub(crate) fn q_level_point(&self, sign: f64, level: f64) -> f64 {
        let (c, d) = self.support();
        let end = if sign > 0.0 { d } else { -c };
        let mut lo = 0.0;
        let mut hi = if end.is_finite() { end } else { 1.0 };
        if !end.is_finite() {
            while self.q(sign * hi) < level {
                lo = hi;
                hi *= 2.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.q(sign * mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// `exp_j(u) − exp_j(0)` without cancellation near `u = 0`.
fn iter_exp_shifted(level: u32, u: f64) -> f64 {
    let mut d = u;
    let mut base = 0.0f64;
    for _ in 0..level {
        let next_base = base.exp();
        d = next_base * d.exp_m1();
        base = next_base;
        if !d.is_finite() {
            return f64::INFINITY;
        }
    }
    d
}

/// `Σ_{j=1}^{level} ln exp_j(v) = Σ_{j=0}^{level−1} exp_j(v)`.
fn sum_ln_iter_exp(level: u32, v: f64) -> f64 {
    let mut s = 0.0;
    let mut e = v;
    for _ in 0..level {
        s += e;
        e = e.exp();
    }
    s
}

/// `ln(exp_j(v) − exp_j(0))`, finite even when the difference overflows.
fn ln_iter_exp_shifted(level: u32, v: f64) -> f64 {
    let direct = iter_exp_shifted(level, v);
    if direct.is_finite() && direct > 0.0 {
        return direct.ln();
    }
    // exp_j(v) dominates: ln exp_j(v) = exp_{j-1}(v)
    let mut e = v;
    for _ in 0..level.saturating_sub(1) {
        e = e.exp();
    }
    e
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Freud { alpha, beta } => write!(f, "freud:alpha={alpha},beta={beta}"),
            Family::IteratedExp { l, k, alpha, beta } => {
                write!(f, "iterexp:l={l},k={k},alpha={alpha},beta={beta}")
            }
            Family::Pollaczek { alpha, beta } => write!(f, "pollaczek:alpha={alpha},beta={beta}"),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let parse_err = |reason: String| Error::Parse {
            input: input.to_string(),
            reason,
        };
        let lower = input.trim().to_ascii_lowercase();
        let (name, args) = lower
            .split_once(':')
            .ok_or_else(|| parse_err("missing `:` after the family name".into()))?;
        let keys: &[&str] = match name.trim() {
            "freud" | "pollaczek" => &["alpha", "beta"],
            "iterexp" => &["l", "k", "alpha", "beta"],
            other => return Err(parse_err(format!("unknown family `{other}`"))),
        };
        let mut values: Vec<Option<f64>> = vec![None; keys.len()];
        for item in args.split(',') {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got `{item}`")))?;
            let k = k.trim();
            let slot = keys.iter().position(|key| *key == k).ok_or_else(|| {
                parse_err(format!("unknown key `{k}`; accepted keys are {}", keys.join(", ")))
            })?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("value `{}` for `{k}` is not a number", v.trim())))?;
            if values[slot].replace(v).is_some() {
                return Err(parse_err(format!("duplicate key `{k}`")));
            }
        }
        let mut got = Vec::with_capacity(keys.len());
        for (key, v) in keys.iter().zip(&values) {
            got.push(v.ok_or_else(|| parse_err(format!("missing key `{key}`; accepted keys are {}", keys.join(", "))))?);
        }
        let as_int = |v: f64, key: &str| -> Result<u32> {
            if v.fract() == 0.0 && (0.0..=16.0).contains(&v) {
                Ok(v as u32)
            } else {
                Err(parse_err(format!("`{key}` must be a small non-negative integer")))
            }
        };
        match name.trim() {
            "freud" => WeightSpec::freud(got[0], got[1]),
            "pollaczek" => WeightSpec::pollaczek(got[0], got[1]),
            _ => WeightSpec::iterated_exp(as_int(got[0], "l")?, as_int(got[1], "k")?, got[2], got[3]),
        }
    }
}

/// Outcome of [`WeightSpec::validate`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub spec: String,
    pub grid_size: usize,
    pub monotonicity_violations: usize,
    pub worst_monotonicity_drop: f64,
    pub min_t: f64,
    pub max_t: f64,
    pub lambda_floor: f64,
    pub t_below_floor: bool,
    /// Range of `T(y) / T(y|1 − ε₀/T(y)|)` with `ε₀ = 0.5`.
    pub condition_e_ratio: (f64, f64),
    pub saturated_points: usize,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn q_values() {
        let f22 = WeightSpec::freud(2.0, 2.0).unwrap();
        assert_eq!(f22.eval_q(0.0).unwrap(), 0.0);
        let f23 = WeightSpec::freud(2.0, 3.0).unwrap();
        assert_eq!(f23.eval_q(-2.0).unwrap(), 8.0);
        let p = WeightSpec::pollaczek(1.0, 1.0).unwrap();
        assert!(rel(p.eval_q(0.6).unwrap(), 0.5625) < 1e-15);
        assert!(p.eval_q(1.0).is_err());
        assert!(p.eval_q(-1.5).is_err());
    }

    #[test]
    fn w2_values_and_underflow() {
        let f22 = WeightSpec::freud(2.0, 2.0).unwrap();
        assert_eq!(f22.eval_w2(0.0).unwrap().value, 1.0);
        assert!(rel(f22.eval_w2(1.0).unwrap().value, (-2.0f64).exp()) < 1e-15);
        let far = f22.eval_w2(10.0).unwrap();
        assert!(rel(far.value, (-200.0f64).exp()) < 1e-13);
        assert!(!far.underflow);
        assert!(f22.eval_w2(30.0).unwrap().underflow);
    }

    #[test]
    fn t_values() {
        let f23 = WeightSpec::freud(2.0, 3.0).unwrap();
        assert_eq!(f23.eval_t(1.5).unwrap(), 2.0);
        assert_eq!(f23.eval_t(-1.0).unwrap(), 3.0);
        assert!(f23.eval_t(0.0).is_err());
        let p = WeightSpec::pollaczek(1.0, 1.0).unwrap();
        let t = p.eval_t(0.9).unwrap();
        let scaled = t * (1.0 - 0.81);
        assert!((0.5..=4.0).contains(&scaled), "T(0.9)(1-x^2) = {scaled}");
    }

    #[test]
    fn parameter_gates() {
        assert!(WeightSpec::freud(1.0, 2.0).is_err());
        assert!(WeightSpec::freud(3.0, 2.0).is_err());
        assert!(WeightSpec::iterated_exp(2, 1, 2.0, 2.0).is_err());
        assert!(WeightSpec::iterated_exp(1, 1, 3.0, 2.0).is_err());
        assert!(WeightSpec::iterated_exp(1, 2, 3.0, 2.0).is_ok());
        assert!(WeightSpec::pollaczek(0.0, 1.0).is_err());
        assert!(WeightSpec::freud(2.0, 2.0).unwrap().with_lambda_floor(1.0).is_err());
    }

    #[test]
    fn q_prime_matches_finite_differences() {
        let specs = [
            WeightSpec::freud(2.0, 3.0).unwrap(),
            WeightSpec::freud(2.5, 4.0).unwrap(),
            WeightSpec::iterated_exp(1, 2, 2.0, 2.0).unwrap(),
            WeightSpec::pollaczek(0.5, 1.5).unwrap(),
        ];
        for spec in specs {
            for &x in &[-0.7f64, -0.3, 0.2, 0.55, 0.8] {
                let h = 1e-5 * x.abs();
                let fd = (spec.q(x + h) - spec.q(x - h)) / (2.0 * h);
                let qp = spec.q_prime(x);
                assert!(rel(fd, qp) < 1e-6, "{spec} at {x}: fd {fd} vs {qp}");
            }
        }
    }

    #[test]
    fn iterexp_saturates_without_nan() {
        let spec = WeightSpec::iterated_exp(2, 2, 2.0, 2.0).unwrap();
        assert!(spec.saturates(3.0));
        assert_eq!(spec.w2(3.0), 0.0);
        let t = spec.t(3.0);
        assert!(t.is_finite() && t > 2.0);
        assert!(rel(spec.t(1e-8), 2.0) < 1e-6);
    }

    #[test]
    fn validation_reports() {
        let f22 = WeightSpec::freud(2.0, 2.0).unwrap();
        let r = f22.validate(1000).unwrap();
        assert!(r.pass);
        assert_eq!(r.min_t, 2.0);
        let p = WeightSpec::pollaczek(0.5, 0.5).unwrap();
        let r = p.validate(1000).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_t > 1e6);
        assert!(f22.validate(10).is_err());
        let it = WeightSpec::iterated_exp(1, 2, 2.0, 3.0).unwrap();
        assert!(it.validate(400).unwrap().pass);
    }

    #[test]
    fn parse_grammar() {
        let s: WeightSpec = "FREUD:Alpha=2,beta=3".parse().unwrap();
        assert_eq!(s, WeightSpec::freud(2.0, 3.0).unwrap());
        assert_eq!(s.to_string(), "freud:alpha=2,beta=3");
        let s: WeightSpec = "iterexp:l=1,k=2,alpha=2,beta=2.5".parse().unwrap();
        assert_eq!(s.to_string().parse::<WeightSpec>().unwrap(), s);
        let err = "freud:a=2".parse::<WeightSpec>().unwrap_err().to_string();
        assert!(err.contains("alpha, beta"), "{err}");
        assert!("freud:alpha=2".parse::<WeightSpec>().is_err());
        assert!("gauss:alpha=2,beta=2".parse::<WeightSpec>().is_err());
        assert!("freud:alpha=1,beta=2".parse::<WeightSpec>().is_err());
    }

    #[test]
    fn evenness() {
        assert!(WeightSpec::freud(2.0, 2.0).unwrap().is_even());
        assert!(!WeightSpec::freud(2.0, 3.0).unwrap().is_even());
        assert!(WeightSpec::pollaczek(1.0, 1.0).unwrap().is_even());
        assert!(!WeightSpec::iterated_exp(1, 2, 2.0, 2.0).unwrap().is_even());
    }
}
