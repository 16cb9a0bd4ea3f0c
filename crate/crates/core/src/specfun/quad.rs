//! Adaptive Gauss–Kronrod quadrature on finite and semi-infinite intervals.
//!
//! The backbone is the 7/15-point Gauss–Kronrod pair with bisection of the
//! interval carrying the largest error estimate. Semi-infinite integrals are
//! mapped to (0, 1) with the substitution `x = t / (1 - t)`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Relative tolerance on the integral value.
    pub rel_tol: f64,
    /// Absolute error floor; quadrature stops once the error is below it.
    pub abs_tol: f64,
    /// Maximum number of interval bisections.
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || !rel_tol.is_finite() {
            return Err(Error::domain(format!("rel_tol must be > 0, got {rel_tol}")));
        }
        if !(abs_tol >= 0.0) {
            return Err(Error::domain(format!("abs_tol must be >= 0, got {abs_tol}")));
        }
        if max_subdivisions < 1 {
            return Err(Error::domain("max_subdivisions must be >= 1".to_string()));
        }
        Ok(QuadratureSpec { rel_tol, abs_tol, max_subdivisions })
    }

    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureSpec { rel_tol, ..Default::default() }
    }
}

/// Neumaier compensated accumulator for sums with cancellation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

// 15-point Kronrod abscissae; odd indices are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
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

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One G7-K15 pass over `[a, b]`; returns (integral, error estimate).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);

    let mut res_gauss = fc * WG[3];
    let mut res_kronrod = fc * WGK[7];
    let mut res_abs = res_kronrod.abs();
    let mut fv = [[0.0f64; 2]; 7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = [f1, f2];
        let fsum = f1 + f2;
        if j % 2 == 1 {
            res_gauss += WG[j / 2] * fsum;
        }
        res_kronrod += WGK[j] * fsum;
        res_abs += WGK[j] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv[j][0] - mean).abs() + (fv[j][1] - mean).abs());
    }

    let value = res_kronrod * half;
    let err = rescale_error((res_kronrod - res_gauss) * half, res_abs * half.abs(), res_asc * half.abs());
    (value, err)
}

#[derive(Debug)]
struct Seg {
    err: f64,
    order: u64,
    a: f64,
    b: f64,
    val: f64,
}

impl PartialEq for Seg {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.order == other.order
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Seg {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Largest error first; insertion order breaks ties deterministically.
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate_finite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integrate_finite: non-finite bounds".to_string()));
    }
    if a == b {
        return Ok(0.0);
    }

    let mut heap = BinaryHeap::new();
    let (val, err) = gk15(&mut f, a, b);
    heap.push(Seg { err, order: 0, a, b, val });
    let mut order = 1u64;
    let mut total_val = val;
    let mut total_err = err;

    for _ in 0..spec.max_subdivisions {
        if total_err <= spec.abs_tol.max(spec.rel_tol * total_val.abs()) {
            break;
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval is at floating-point resolution; keep it as-is.
            heap.push(Seg { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total_val += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Seg { err: e1, order, a: worst.a, b: mid, val: v1 });
        order += 1;
        heap.push(Seg { err: e2, order, a: mid, b: worst.b, val: v2 });
        order += 1;
    }

    // Recompute the value and error from the final partition, in positional
    // order, so the result does not depend on heap internals.
    let mut segs: Vec<Seg> = heap.into_vec();
    segs.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut vsum = CompensatedSum::new();
    let mut esum = 0.0;
    for s in &segs {
        vsum.add(s.val);
        esum += s.err;
    }
    let value = vsum.value();
    if esum <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
        Ok(value)
    } else {
        Err(Error::Numeric {
            what: "adaptive quadrature reached subdivision limit".to_string(),
            best: value,
            bound: esum,
        })
    }
}

/// Adaptive integral of `f` over `(0, inf)` via `x = t / (1 - t)`.
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(mut f: F, spec: &QuadratureSpec) -> Result<f64> {
    integrate_finite(
        |t| {
            let om = 1.0 - t;
            if om <= 0.0 {
                return 0.0;
            }
            let x = t / om;
            let fx = f(x);
            if fx == 0.0 {
                0.0
            } else {
                fx / (om * om)
            }
        },
        0.0,
        1.0,
        spec,
    )
}

/// Vector-valued G7-K15 pass; `out_val`/`out_err` have the integrand dimension.
fn gk15_vec<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    out_val: &mut [f64],
    out_err: &mut [f64],
    scratch: &mut VecScratch,
) {
    let dim = out_val.len();
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    scratch.resize(dim);
    let VecScratch { fbuf, kron, gauss, fnodes } = scratch;

    fbuf.iter_mut().for_each(|x| *x = 0.0);
    f(center, fbuf);
    for z in 0..dim {
        kron[z] = fbuf[z] * WGK[7];
        gauss[z] = fbuf[z] * WG[3];
        fnodes[14 * z] = fbuf[z];
    }

    for j in 0..7 {
        let dx = half * XGK[j];
        for (side, x) in [(0usize, center - dx), (1usize, center + dx)] {
            fbuf.iter_mut().for_each(|v| *v = 0.0);
            f(x, fbuf);
            for z in 0..dim {
                fnodes[14 * z + 1 + 2 * j + side] = fbuf[z];
                kron[z] += WGK[j] * fbuf[z];
                if j % 2 == 1 {
                    gauss[z] += WG[j / 2] * fbuf[z];
                }
            }
        }
    }

    for z in 0..dim {
        let mean = 0.5 * kron[z];
        let mut res_abs = 0.0;
        let mut res_asc = WGK[7] * (fnodes[14 * z] - mean).abs();
        res_abs += WGK[7] * fnodes[14 * z].abs();
        for j in 0..7 {
            let f1 = fnodes[14 * z + 1 + 2 * j];
            let f2 = fnodes[14 * z + 2 + 2 * j];
            res_abs += WGK[j] * (f1.abs() + f2.abs());
            res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
        }
        out_val[z] = kron[z] * half;
        out_err[z] = rescale_error(
            (kron[z] - gauss[z]) * half,
            res_abs * half.abs(),
            res_asc * half.abs(),
        );
    }
}

#[derive(Default)]
struct VecScratch {
    fbuf: Vec<f64>,
    kron: Vec<f64>,
    gauss: Vec<f64>,
    fnodes: Vec<f64>,
}

impl VecScratch {
    fn resize(&mut self, dim: usize) {
        self.fbuf.resize(dim, 0.0);
        self.kron.resize(dim, 0.0);
        self.gauss.resize(dim, 0.0);
        self.fnodes.resize(14 * dim + dim, 0.0);
    }
}

struct VecSeg {
    err: f64,
    order: u64,
    a: f64,
    b: f64,
    val: Vec<f64>,
}

impl PartialEq for VecSeg {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.order == other.order
    }
}
impl Eq for VecSeg {}
impl PartialOrd for VecSeg {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for VecSeg {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Result of a vector quadrature: per-component values plus the final
/// interval partition (used to reuse the node set for related integrands).
pub(crate) struct VecQuad {
    pub values: Vec<f64>,
    pub partition: Vec<(f64, f64)>,
}

/// Adaptive integral of a vector integrand over `[a, b]`. The error control is
/// on the L1 norm across components, which for probability-mass components
/// bounds every component's absolute error.
pub(crate) fn integrate_vec_finite<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    spec: &QuadratureSpec,
) -> Result<VecQuad> {
    let mut scratch = VecScratch::default();
    let mut val = vec![0.0; dim];
    let mut errs = vec![0.0; dim];
    gk15_vec(&mut f, a, b, &mut val, &mut errs, &mut scratch);
    let err: f64 = errs.iter().sum();
    let mut heap = BinaryHeap::new();
    heap.push(VecSeg { err, order: 0, a, b, val });
    let mut order = 1u64;

    let mut total_err = err;
    let mut total_abs: f64 = heap.peek().map(|s| s.val.iter().map(|v| v.abs()).sum()).unwrap_or(0.0);

    for _ in 0..spec.max_subdivisions {
        if total_err <= spec.abs_tol.max(spec.rel_tol * total_abs) {
            break;
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(VecSeg { err: 0.0, ..worst });
            continue;
        }
        let mut v1 = vec![0.0; dim];
        let mut e1 = vec![0.0; dim];
        gk15_vec(&mut f, worst.a, mid, &mut v1, &mut e1, &mut scratch);
        let mut v2 = vec![0.0; dim];
        let mut e2 = vec![0.0; dim];
        gk15_vec(&mut f, mid, worst.b, &mut v2, &mut e2, &mut scratch);
        let err1: f64 = e1.iter().sum();
        let err2: f64 = e2.iter().sum();
        total_err += err1 + err2 - worst.err;
        let old_abs: f64 = worst.val.iter().map(|v| v.abs()).sum();
        let new_abs: f64 = v1.iter().chain(v2.iter()).map(|v| v.abs()).sum();
        total_abs += new_abs - old_abs;
        heap.push(VecSeg { err: err1, order, a: worst.a, b: mid, val: v1 });
        order += 1;
        heap.push(VecSeg { err: err2, order, a: mid, b: worst.b, val: v2 });
        order += 1;
    }

    let mut segs: Vec<VecSeg> = heap.into_vec();
    segs.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut values = vec![CompensatedSum::new(); dim];
    let mut err_l1 = 0.0;
    let mut partition = Vec::with_capacity(segs.len());
    for s in &segs {
        for z in 0..dim {
            values[z].add(s.val[z]);
        }
        err_l1 += s.err;
        partition.push((s.a, s.b));
    }
    let values: Vec<f64> = values.iter().map(|c| c.value()).collect();
    let total_abs: f64 = values.iter().map(|v| v.abs()).sum();
    if err_l1 <= spec.abs_tol.max(spec.rel_tol * total_abs) {
        Ok(VecQuad { values, partition })
    } else {
        Err(Error::Numeric {
            what: "vector quadrature reached subdivision limit".to_string(),
            best: total_abs,
            bound: err_l1,
        })
    }
}

/// K15 nodes and weights on `[a, b]`, in left-to-right order.
pub(crate) fn k15_nodes(a: f64, b: f64) -> Vec<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = Vec::with_capacity(15);
    for j in (0..7).rev() {
        out.push((center - half * XGK[j], WGK[j] * half));
    }
    out.push((center, WGK[7] * half));
    for j in 0..7 {
        out.push((center + half * XGK[j], WGK[j] * half));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let spec = QuadratureSpec::default();
        let v = integrate_semi_infinite(|x| (-x).exp(), &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn gaussian_moment() {
        let spec = QuadratureSpec::default();
        let v = integrate_semi_infinite(|x| x * (-x * x).exp(), &spec).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn gamma_five() {
        let spec = QuadratureSpec::default();
        let v = integrate_semi_infinite(|x| x.powi(4) * (-x).exp(), &spec).unwrap();
        assert!((v - 24.0).abs() < 24.0 * 1e-12, "got {v}");
    }

    #[test]
    fn endpoint_singularity() {
        // sqrt singularity at zero is integrable and handled by bisection
        let spec = QuadratureSpec::with_rel_tol(1e-12);
        let v = integrate_finite(|x| x.powf(-0.5), 0.0, 1.0, &spec).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn budget_exhaustion_reports_best() {
        let spec = QuadratureSpec::new(1e-14, 0.0, 4).unwrap();
        let r = integrate_finite(|x: f64| x.powf(-0.9), 0.0, 1.0, &spec);
        match r {
            Err(Error::Numeric { best, bound, .. }) => {
                assert!(best.is_finite());
                assert!(bound > 0.0);
            }
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn vector_components_match_scalar() {
        let spec = QuadratureSpec::with_rel_tol(1e-11);
        let vq = integrate_vec_finite(
            |x, out| {
                out[0] = x.sin();
                out[1] = x * x;
                out[2] = (-3.0 * x).exp();
            },
            0.0,
            2.0,
            3,
            &spec,
        )
        .unwrap();
        let s0 = integrate_finite(|x| x.sin(), 0.0, 2.0, &spec).unwrap();
        let s1 = integrate_finite(|x| x * x, 0.0, 2.0, &spec).unwrap();
        let s2 = integrate_finite(|x| (-3.0 * x).exp(), 0.0, 2.0, &spec).unwrap();
        assert!((vq.values[0] - s0).abs() < 1e-10);
        assert!((vq.values[1] - s1).abs() < 1e-10);
        assert!((vq.values[2] - s2).abs() < 1e-10);
        assert!(!vq.partition.is_empty());
    }

    #[test]
    fn compensated_sum_cancellation() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        acc.add(1.0);
        acc.add(-1e16);
        assert_eq!(acc.value(), 1.0);
    }
}
