//! Discrete weighted minimax approximation: a computable stand-in for
//! `E_n[f]_{w,∞} = inf_{P ∈ P_n} ‖(f − P) w‖_∞`.
//!
//! Remez multiple exchange on a graded grid, with polynomials expanded in
//! the orthonormal basis `p_k`.

use crate::error::{Error, Result};
use crate::mrs::mrs;
use crate::orthopoly::{angle_grid, gauss_rule, RecurrenceTable};
use crate::weight::WeightSpec;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const MAX_ITER: usize = 60;
const LEVEL_TOL: f64 = 1e-9;

/// A graded grid on `[a_{-2n}, a_{2n}]` (the open support for bounded weights).
#[derive(Clone, Debug, Serialize)]
pub struct ApproxGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<f64>,
}

impl ApproxGrid {
    /// Union of an angle-uniform grid with geometric refinement toward 0 and both ends.
    pub fn new(spec: &WeightSpec, n: usize, grid_points: usize) -> Result<Self> {
        let (lo, hi) = if spec.is_bounded() {
            let (c, d) = spec.support();
            (c * (1.0 - 1e-9), d * (1.0 - 1e-9))
        } else {
            let m = mrs(spec, 2.0 * n.max(1) as f64)?;
            (m.a_minus, m.a_plus)
        };
        let geometric = 40.min(grid_points / 10).max(8);
        let bulk = grid_points.saturating_sub(4 * geometric).max(grid_points / 2);
        let mut points = angle_grid(lo, hi, bulk);
        points.push(0.0);
        points.push(lo);
        points.push(hi);
        let h0 = (hi - lo) / bulk as f64;
        for k in 0..geometric {
            let h = h0 * 0.7f64.powi(k as i32);
            points.extend([h, -h, hi - h, lo + h]);
        }
        points.retain(|&x| x >= lo && x <= hi && spec.w(x) > 0.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(Self { lo, hi, points })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimaxResult {
    pub n: usize,
    /// `sup |(f − P) w|` of the returned polynomial: grid maximum refined between grid points
    pub proxy: f64,
    /// Coefficients of `P` in the basis `p_0 … p_n`.
    pub coefficients: Vec<f64>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    /// Levelled error `|E|` of the last reference.
    pub level: f64,
    /// Sign alternations among residual extrema within 5% of the maximum.
    pub alternations: usize,
    pub iterations: usize,
    /// Set when the exchange stopped at the iteration cap.
    pub warning: bool,
}

impl MinimaxResult {
    /// `P(x) = Σ c_k p_k(x)`.
    pub fn eval(&self, table: &RecurrenceTable, x: f64) -> f64 {
        let mut p = vec![0.0; self.n + 1];
        table.eval_upto(self.n, x, &mut p);
        p.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

fn basis_rows(table: &RecurrenceTable, n: usize, grid: &[f64]) -> Vec<Vec<f64>> {
    grid.iter()
        .map(|&x| {
            let mut p = vec![0.0; n + 1];
            table.eval_upto(n, x, &mut p);
            p
        })
        .collect()
}

/// Alternating extrema: one per maximal run of equal residual sign, trimmed from the ends to `want`.
fn alternating_extrema(r: &[f64], want: usize) -> Vec<usize> {
    let mut picks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < r.len() {
        if r[i] == 0.0 {
            i += 1;
            continue;
        }
        let s = r[i] > 0.0;
        let mut best = i;
        let mut j = i;
        while j < r.len() && (r[j] > 0.0) == s && r[j] != 0.0 {
            if r[j].abs() > r[best].abs() {
                best = j;
            }
            j += 1;
        }
        picks.push(best);
        i = j;
    }
    while picks.len() > want {
        let first = r[picks[0]].abs();
        let last = r[*picks.last().unwrap()].abs();
        if first < last {
            picks.remove(0);
        } else {
            picks.pop();
        }
    }
    picks
}

/// Single exchange: swap the global maximum into `reference` keeping sign alternation.
fn single_exchange(reference: &mut [usize], r: &[f64], imax: usize) {
    let s = |i: usize| r[i] > 0.0;
    if reference.contains(&imax) {
        return;
    }
    let pos = reference.partition_point(|&i| i < imax);
    let m = reference.len();
    if pos == 0 {
        if s(reference[0]) == s(imax) {
            reference[0] = imax;
        } else {
            reference.rotate_right(1);
            reference[0] = imax;
        }
    } else if pos == m {
        if s(reference[m - 1]) == s(imax) {
            reference[m - 1] = imax;
        } else {
            reference.rotate_left(1);
            reference[m - 1] = imax;
        }
    } else if s(reference[pos - 1]) == s(imax) {
        reference[pos - 1] = imax;
    } else {
        reference[pos] = imax;
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut best = f1.max(f2);
    for _ in 0..40 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        best = best.max(f1).max(f2);
    }
    best
}

/// Grid points nearest the zeros of `p_k`, or evenly spaced indices when `k` exceeds the table.
fn initial_reference(table: &RecurrenceTable, pts: &[f64], k: usize) -> Vec<usize> {
    let m = pts.len();
    let even = || (0..k).map(|i| ((i as f64 + 0.5) / k as f64 * m as f64) as usize).collect::<Vec<_>>();
    let Ok(rule) = gauss_rule(table, k) else {
        return even();
    };
    let mut idx: Vec<usize> = rule
        .nodes
        .iter()
        .rev()
        .map(|&z| {
            let p = pts.partition_point(|&x| x < z);
            if p == 0 || (p < m && pts[p] - z < z - pts[p - 1]) {
                p.min(m - 1)
            } else {
                p - 1
            }
        })
        .collect();
    idx.dedup();
    if idx.len() == k {
        idx
    } else {
        even()
    }
}

/// Discrete minimax of `(f − P) w` over `grid` for `P ∈ P_n`.
pub fn best_approx_on<F: Fn(f64) -> f64>(
    spec: &WeightSpec,
    table: &RecurrenceTable,
    f: F,
    n: usize,
    grid: &ApproxGrid,
) -> Result<MinimaxResult> {
    if n > table.n_max {
        return Err(Error::Degree {
            degree: n,
            max: table.n_max,
        });
    }
    let pts = &grid.points;
    let m = pts.len();
    if m < n + 2 {
        return Err(Error::Parameter(format!("grid of {m} points is too small for degree {n}")));
    }
    let w: Vec<f64> = pts.iter().map(|&x| spec.w(x)).collect();
    let fx: Vec<f64> = pts
        .iter()
        .map(|&x| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Input(format!("f({x}) = {v}")))
            }
        })
        .collect::<Result<_>>()?;
    let rows = basis_rows(table, n, pts);
    let residual = |c: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| (fx[i] - rows[i].iter().zip(c).map(|(a, b)| a * b).sum::<f64>()) * w[i])
            .collect()
    };

    let k = n + 2;
    let mut reference = initial_reference(table, pts, k);
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut warning = true;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        // (f − P)(x_i) w(x_i) = (−1)^i E
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for (r, &i) in reference.iter().enumerate() {
            for c in 0..=n {
                a[(r, c)] = rows[i][c] * w[i];
            }
            a[(r, n + 1)] = if r % 2 == 0 { 1.0 } else { -1.0 };
            b[r] = fx[i] * w[i];
        }
        let Some(sol) = a.lu().solve(&b) else {
            break;
        };
        let coeffs: Vec<f64> = sol.iter().take(n + 1).copied().collect();
        let level = sol[n + 1].abs();
        let r = residual(&coeffs);
        let (imax, rmax) = r
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best.as_ref().map_or(true, |(e, _, _)| rmax < *e) {
            best = Some((rmax, coeffs, level));
        }
        if rmax - level <= LEVEL_TOL * rmax.max(f64::MIN_POSITIVE) || rmax < 1e-14 {
            warning = false;
            break;
        }
        let next = alternating_extrema(&r, k);
        let new_ref = if next.len() == k && next.contains(&imax) {
            next
        } else {
            let mut s = reference.clone();
            single_exchange(&mut s, &r, imax);
            s
        };
        if new_ref == reference {
            warning = false;
            break;
        }
        reference = new_ref;
    }
    let (grid_sup, coefficients, level) = best.ok_or(Error::Eigen(k))?;
    let r = residual(&coefficients);
    // between grid points the weighted error can exceed its grid maximum
    let err_at = |x: f64| {
        let mut p = vec![0.0; n + 1];
        table.eval_upto(n, x, &mut p);
        ((f(x) - p.iter().zip(&coefficients).map(|(a, b)| a * b).sum::<f64>()) * spec.w(x)).abs()
    };
    let mut proxy = grid_sup;
    for i in 0..m {
        if r[i].abs() >= 0.5 * grid_sup {
            let a = pts[i.saturating_sub(1)];
            let b = pts[(i + 1).min(m - 1)];
            proxy = proxy.max(golden_max(&err_at, a, b));
        }
    }
    let ext = alternating_extrema(&r, usize::MAX);
    let strong: Vec<usize> = ext.into_iter().filter(|&i| r[i].abs() >= 0.95 * grid_sup).collect();
    let alternations = strong.windows(2).filter(|p| (r[p[0]] > 0.0) != (r[p[1]] > 0.0)).count() + usize::from(!strong.is_empty());
    Ok(MinimaxResult {
        n,
        proxy,
        coefficients,
        grid_lo: grid.lo,
        grid_hi: grid.hi,
        grid_points: m,
        level,
        alternations,
        iterations,
        warning,
    })
}

/// Minimax proxy at degree `n` on the grid built for `n`.
pub fn best_approx<F: Fn(f64) -> f64>(
    spec: &WeightSpec,
    table: &RecurrenceTable,
    f: F,
    n: usize,
    grid_points: usize,
) -> Result<MinimaxResult> {
    if grid_points < 20 * n.max(1) {
        return Err(Error::Parameter(format!(
            "grid_points = {grid_points} must be at least 20·n = {}",
            20 * n.max(1)
        )));
    }
    let grid = ApproxGrid::new(spec, n, grid_points)?;
    best_approx_on(spec, table, f, n, &grid)
}

/// Proxies for every degree in `ladder` on one common grid (built for the largest degree).
/// A degree reuses the previous polynomial when that is better, so the proxy never increases.
pub fn best_approx_ladder<F: Fn(f64) -> f64>(
    spec: &WeightSpec,
    table: &RecurrenceTable,
    f: F,
    ladder: &[usize],
    grid_points: usize,
) -> Result<Vec<MinimaxResult>> {
    let top = ladder.iter().copied().max().unwrap_or(0);
    let grid = ApproxGrid::new(spec, top, grid_points.max(20 * top.max(1)))?;
    let mut sorted: Vec<usize> = ladder.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<MinimaxResult> = Vec::new();
    for n in sorted {
        let mut res = best_approx_on(spec, table, &f, n, &grid)?;
        if let Some(prev) = out.last() {
            if prev.proxy < res.proxy {
                let mut coefficients = prev.coefficients.clone();
                coefficients.resize(n + 1, 0.0);
                res = MinimaxResult {
                    n,
                    coefficients,
                    ..prev.clone()
                };
            }
        }
        out.push(res);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::cached_table;

    #[test]
    fn polynomials_are_reproduced() {
        let spec = WeightSpec::freud(2.0, 3.0).unwrap();
        let t = cached_table(&spec, 40, 64).unwrap();
        let r = best_approx(&spec, &t, |x| 1.0 - 2.0 * x + 0.5 * x.powi(3), 4, 400).unwrap();
        assert!(r.proxy < 1e-10, "{}", r.proxy);
    }

    #[test]
    fn abs_decreases_and_is_grid_stable() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        let t = cached_table(&spec, 40, 64).unwrap();
        let ladder = best_approx_ladder(&spec, &t, f64::abs, &[4, 8, 16, 32], 1280).unwrap();
        for w in ladder.windows(2) {
            assert!(w[1].proxy < w[0].proxy);
        }
        let a = best_approx(&spec, &t, f64::abs, 16, 640).unwrap();
        let b = best_approx(&spec, &t, f64::abs, 16, 1280).unwrap();
        assert!(a.proxy > 0.0 && !a.warning);
        assert!((a.proxy / b.proxy - 1.0).abs() < 0.02);
        assert!(a.alternations >= 16);
    }

    #[test]
    fn fresh_grid_reproduces_proxy() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        let t = cached_table(&spec, 40, 64).unwrap();
        let r = best_approx(&spec, &t, |x: f64| x.sin() + x.abs(), 12, 600).unwrap();
        let fresh = ApproxGrid::new(&spec, 12, 2311).unwrap();
        let sup = fresh
            .points
            .iter()
            .map(|&x| ((x.sin() + x.abs()) - r.eval(&t, x)).abs() * spec.w(x))
            .fold(0.0, f64::max);
        assert!((sup / r.proxy - 1.0).abs() < 0.01, "{sup} vs {}", r.proxy);
    }

    #[test]
    fn gates() {
        let spec = WeightSpec::freud(2.0, 2.0).unwrap();
        let t = cached_table(&spec, 40, 64).unwrap();
        assert!(best_approx(&spec, &t, f64::abs, 8, 100).is_err());
        assert!(best_approx(&spec, &t, |_| f64::NAN, 8, 400).is_err());
    }
}
