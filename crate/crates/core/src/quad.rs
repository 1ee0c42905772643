//! Quadrature building blocks: Gauss–Legendre rules of any order and an
//! adaptive 21-point Gauss–Kronrod integrator over a list of breakpoints.

use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Shared m-point Gauss–Legendre rule (computed once per order).
pub fn gauss_legendre(m: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&m) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(m));
    cache.lock().unwrap().insert(m, rule.clone());
    rule
}

fn compute_gauss_legendre(m: usize) -> GaussLegendre {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_m
        let theta = std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5);
        let mut x = (1.0 - (mf - 1.0) / (8.0 * mf * mf * mf)) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1e-300) {
                let (_, d) = legendre_with_derivative(m, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    GaussLegendre { nodes, weights }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed m-point Gauss–Legendre approximation of `∫_a^b f`.
pub fn gl_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let rule = gauss_legendre(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One G10/K21 panel: (Kronrod value, error estimate).
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = half.abs();
    res_k *= half;
    res_g *= half;
    res_abs *= hl;
    res_asc *= hl;
    let mut err = (res_k - res_g).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if floor > f64::MIN_POSITIVE {
        err = err.max(floor);
    }
    (res_k, err)
}

/// Panel refinement strategy of the adaptive integrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Bisect,
    Trisect,
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    pub split: Split,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_panels: 20_000,
            split: Split::Bisect,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Compensated running sum.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Adaptive integration of `f` over `[breaks[0], breaks[last]]`, never placing
/// a node on an interior breakpoint. Returns the lowest-error state reached,
/// so a larger panel budget never yields a larger error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: &AdaptiveOptions) -> AdaptiveResult {
    assert!(breaks.len() >= 2, "need at least one panel");
    let mut heap = BinaryHeap::new();
    let mut value = Neumaier::default();
    let mut error = Neumaier::default();
    let mut frozen_error = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk21(&f, w[0], w[1]);
        value.add(v);
        error.add(e);
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut panels = heap.len();
    let mut best = AdaptiveResult {
        value: value.value(),
        error: error.value().max(0.0),
        panels,
        converged: false,
    };
    loop {
        let err_now = error.value().max(0.0) + frozen_error;
        let tol = opts.abs_tol.max(opts.rel_tol * value.value().abs());
        if err_now <= best.error {
            best = AdaptiveResult {
                value: value.value(),
                error: err_now,
                panels,
                converged: false,
            };
        }
        if err_now <= tol {
            best.converged = true;
            return best;
        }
        if panels >= opts.max_panels {
            best.converged = best.error <= tol;
            return best;
        }
        let Some(worst) = heap.pop() else {
            best.converged = best.error <= tol;
            return best;
        };
        let width = worst.b - worst.a;
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if width <= 1e-13 * scale {
            // cannot be refined further in double precision
            error.add(-worst.error);
            frozen_error += worst.error;
            continue;
        }
        value.add(-worst.value);
        error.add(-worst.error);
        let cuts: Vec<f64> = match opts.split {
            Split::Bisect => vec![worst.a, 0.5 * (worst.a + worst.b), worst.b],
            Split::Trisect => vec![
                worst.a,
                worst.a + width / 3.0,
                worst.a + 2.0 * width / 3.0,
                worst.b,
            ],
        };
        for w in cuts.windows(2) {
            let (v, e) = gk21(&f, w[0], w[1]);
            value.add(v);
            error.add(e);
            heap.push(Panel {
                a: w[0],
                b: w[1],
                value: v,
                error: e,
            });
        }
        panels += cuts.len() - 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        for m in [1usize, 2, 5, 20, 64] {
            let rule = gauss_legendre(m);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "m={m}");
            let deg = 2 * m - 1;
            let val = gl_integrate(|x| x.powi(deg as i32 - 1), -1.0, 1.0, m);
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((val - exact).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn gl_nodes_ascending() {
        let rule = gauss_legendre(33);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(rule.nodes[16], 0.0);
    }

    #[test]
    fn adaptive_handles_kink() {
        let opts = AdaptiveOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            ..Default::default()
        };
        let r = integrate(|x: f64| x.abs().sqrt(), &[-1.0, 1.0], &opts);
        assert!(r.converged);
        assert!((r.value - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn larger_budget_never_raises_error() {
        let f = |x: f64| (1.0 / (x + 1e-3)).sin();
        let mut last = f64::INFINITY;
        for budget in [4usize, 8, 16, 32, 64, 128, 256] {
            let opts = AdaptiveOptions {
                abs_tol: 1e-15,
                rel_tol: 1e-15,
                max_panels: budget,
                split: Split::Bisect,
            };
            let r = integrate(f, &[0.0, 1.0], &opts);
            assert!(r.error <= last);
            last = r.error;
        }
    }
}
