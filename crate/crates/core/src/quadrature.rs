//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! The caller supplies the initial panel edges. Oscillatory integrands should
//! be split into panels no wider than about one period so that every panel
//! starts out well resolved; the adaptive loop then bisects whichever panel
//! carries the largest error estimate until the global tolerance is met.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// Kronrod abscissae on [-1, 1] (positive half, descending); odd indices are
// the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule: the summed error estimate must fall below
/// `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Hard cap on the number of live subintervals.
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-12,
            max_intervals: 500_000,
        }
    }
}

impl Tolerance {
    pub fn halved(self) -> Self {
        Tolerance {
            abs: self.abs / 2.0,
            rel: self.rel / 2.0,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of per-panel |K15 − G7| differences.
    pub error: f64,
    pub evaluations: usize,
    pub intervals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// One 15-point Kronrod evaluation with its embedded 7-point Gauss estimate.
pub fn gauss_kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[edges[0], edges[last]]`, starting from the panels
/// delimited by `edges` (which must be strictly increasing).
pub fn integrate<F: Fn(f64) -> f64>(f: F, edges: &[f64], tol: Tolerance) -> QuadResult {
    if edges.len() < 2 {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            intervals: 0,
            converged: true,
        };
    }
    let mut heap = BinaryHeap::with_capacity(edges.len() * 2);
    let mut evaluations = 0usize;
    for w in edges.windows(2) {
        let (value, error) = gauss_kronrod15(&f, w[0], w[1]);
        evaluations += 15;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    let mut converged = err <= tol.abs.max(tol.rel * total.abs());

    while !converged && heap.len() < tol.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gauss_kronrod15(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod15(&f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        converged = err <= tol.abs.max(tol.rel * total.abs());
    }

    // Re-sum in interval order so the result does not carry the running
    // update's cancellation error.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = panels.iter().map(|p| p.value).sum();
    let error: f64 = panels.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        error,
        evaluations,
        intervals: panels.len(),
        converged: converged || error <= tol.abs.max(tol.rel * f64::abs(value)),
    }
}

/// Panel edges covering `[a, b]` with widths at most `max_width`, with the
/// given interior breakpoints inserted.
pub fn panel_edges(a: f64, b: f64, max_width: f64, breakpoints: &[f64]) -> Vec<f64> {
    debug_assert!(b > a && max_width > 0.0);
    let n = ((b - a) / max_width).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut edges: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    edges.push(b);
    for &bp in breakpoints {
        if bp > a && bp < b {
            edges.push(bp);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * (1.0 + q.abs()));
    edges
}
