//! Globally adaptive Gauss–Kronrod quadrature on intervals and rectangles.
//!
//! Both routines keep a max-heap of sub-regions keyed by their error estimate
//! and bisect the worst one until the summed error meets the tolerance or the
//! subdivision cap is hit. The 2-D rule is the tensor product of the 15-point
//! Kronrod rule with its embedded 7-point Gauss rule; the region is split
//! along the axis whose Gauss/Kronrod discrepancy is larger.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Nodes on [-1, 1] with Kronrod weights and (zero where absent) Gauss weights.
fn rule() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    for j in 0..7 {
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        out[j] = (-XGK[j], WGK[j], wg);
        out[14 - j] = (XGK[j], WGK[j], wg);
    }
    out[7] = (0.0, WGK[7], WG[3]);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 20_000,
        }
    }
}

/// Result of an adaptive integration. `converged` is false when the cap was
/// reached before the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
    pub converged: bool,
}

impl Estimate {
    /// Accept the estimate if its relative error is at most `rel_limit`.
    pub fn within(self, rel_limit: f64) -> Result<f64> {
        if self.error <= rel_limit * self.value.abs() || self.error == 0.0 {
            Ok(self.value)
        } else {
            Err(Error::QuadratureFailure {
                estimate: self.value,
                error: self.error,
                subdivisions: self.subdivisions,
            })
        }
    }

    /// Accept if converged to the requested tolerance.
    pub fn converged_value(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::QuadratureFailure {
                estimate: self.value,
                error: self.error,
                subdivisions: self.subdivisions,
            })
        }
    }
}

struct Region<R> {
    error: f64,
    value: f64,
    bounds: R,
    split_x: bool,
}

impl<R> PartialEq for Region<R> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<R> Eq for Region<R> {}
impl<R> PartialOrd for Region<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R> Ord for Region<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let (mut k, mut g) = (0.0, 0.0);
    for (x, wk, wg) in rule() {
        let v = f(centre + half * x);
        k += wk * v;
        g += wg * v;
    }
    (k * half, ((k - g) * half).abs())
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Estimate {
    let (value, error) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Region {
        error,
        value,
        bounds: (a, b),
        split_x: true,
    });
    let (mut total, mut total_err) = (value, error);
    let mut subdivisions = 0;
    loop {
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Estimate {
                value: total,
                error: total_err,
                subdivisions,
                converged: true,
            };
        }
        if subdivisions >= opts.max_subdivisions {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let (lo, hi) = worst.bounds;
        let mid = 0.5 * (lo + hi);
        total -= worst.value;
        total_err -= worst.error;
        for (l, h) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(&f, l, h);
            total += v;
            total_err += e;
            heap.push(Region {
                error: e,
                value: v,
                bounds: (l, h),
                split_x: true,
            });
        }
        subdivisions += 1;
        // Re-sum occasionally so the running totals do not drift.
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|r| r.value).sum();
            total_err = heap.iter().map(|r| r.error).sum();
        }
    }
    Estimate {
        value: total,
        error: total_err,
        subdivisions,
        converged: false,
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: (f64, f64),
    y: (f64, f64),
}

fn gk15_2d<F: Fn(f64, f64) -> f64>(f: &F, r: Rect) -> (f64, f64, bool) {
    let (cx, hx) = (0.5 * (r.x.0 + r.x.1), 0.5 * (r.x.1 - r.x.0));
    let (cy, hy) = (0.5 * (r.y.0 + r.y.1), 0.5 * (r.y.1 - r.y.0));
    let nodes = rule();
    let (mut kk, mut gk, mut kg) = (0.0, 0.0, 0.0);
    for (xi, wkx, wgx) in nodes {
        let x = cx + hx * xi;
        let (mut col_k, mut col_g) = (0.0, 0.0);
        for (yj, wky, wgy) in nodes {
            let v = f(x, cy + hy * yj);
            col_k += wky * v;
            col_g += wgy * v;
        }
        kk += wkx * col_k;
        gk += wgx * col_k;
        kg += wkx * col_g;
    }
    let area = hx * hy;
    let err_x = ((kk - gk) * area).abs();
    let err_y = ((kk - kg) * area).abs();
    (kk * area, err_x + err_y, err_x >= err_y)
}

/// Integrate `f(x, y)` over `[x0, x1] x [y0, y1]`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    x: (f64, f64),
    y: (f64, f64),
    opts: QuadOptions,
) -> Estimate {
    let rect = Rect { x, y };
    let (value, error, split_x) = gk15_2d(&f, rect);
    let mut heap = BinaryHeap::new();
    heap.push(Region {
        error,
        value,
        bounds: rect,
        split_x,
    });
    let (mut total, mut total_err) = (value, error);
    let mut subdivisions = 0;
    loop {
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Estimate {
                value: total,
                error: total_err,
                subdivisions,
                converged: true,
            };
        }
        if subdivisions >= opts.max_subdivisions {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let r = worst.bounds;
        let halves = if worst.split_x {
            let mid = 0.5 * (r.x.0 + r.x.1);
            [
                Rect { x: (r.x.0, mid), y: r.y },
                Rect { x: (mid, r.x.1), y: r.y },
            ]
        } else {
            let mid = 0.5 * (r.y.0 + r.y.1);
            [
                Rect { x: r.x, y: (r.y.0, mid) },
                Rect { x: r.x, y: (mid, r.y.1) },
            ]
        };
        total -= worst.value;
        total_err -= worst.error;
        for h in halves {
            let (v, e, sx) = gk15_2d(&f, h);
            total += v;
            total_err += e;
            heap.push(Region {
                error: e,
                value: v,
                bounds: h,
                split_x: sx,
            });
        }
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|r| r.value).sum();
            total_err = heap.iter().map(|r| r.error).sum();
        }
    }
    Estimate {
        value: total,
        error: total_err,
        subdivisions,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_sum_to_two() {
        let (k, g) = rule()
            .iter()
            .fold((0.0, 0.0), |(k, g), &(_, wk, wg)| (k + wk, g + wg));
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_1d() {
        let est = integrate(|x| (-x * x).exp(), -10.0, 10.0, QuadOptions::default());
        assert!(est.converged);
        assert!((est.value - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_1d() {
        let est = integrate(|x| (40.0 * x).cos(), 0.0, 3.0, QuadOptions::default());
        assert!((est.value - (120.0f64).sin() / 40.0).abs() < 1e-12);
    }

    #[test]
    fn offset_gaussian_2d() {
        let f = |x: f64, y: f64| (-((x - 1.0).powi(2) + 4.0 * (y + 2.0).powi(2))).exp();
        let est = integrate_2d(f, (-8.0, 8.0), (-8.0, 8.0), QuadOptions::default());
        assert!(est.converged);
        assert!((est.value - PI / 2.0).abs() < 1e-10, "{}", est.value);
    }

    #[test]
    fn cap_reports_failure() {
        let opts = QuadOptions {
            max_subdivisions: 2,
            rel_tol: 1e-14,
            abs_tol: 0.0,
        };
        let est = integrate_2d(|x, y| (30.0 * x * y).sin().abs(), (0.0, 4.0), (0.0, 4.0), opts);
        assert!(!est.converged);
        assert!(matches!(est.converged_value(), Err(Error::QuadratureFailure { .. })));
    }
}
