//! Monotone rational-quadratic splines with identity tails.
//!
//! A spline with `K` bins on `[-B, B]` is described by `3K - 1` unconstrained
//! numbers laid out as `[widths (K) | heights (K) | interior derivatives (K-1)]`.
//! Widths and heights pass through a softmax with a minimum bin size; interior
//! knot derivatives through a softplus with a minimum slope. Boundary
//! derivatives are pinned to 1 so the map joins the identity tails smoothly.

use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::Array2;

use crate::tape::{sigmoid, softplus, CustomOp, Var};

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_BOUND: f64 = 5.0;
pub const MIN_BIN_WIDTH: f64 = 1e-3;
pub const MIN_BIN_HEIGHT: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Number of raw parameters for a spline with `bins` bins.
pub fn raw_len(bins: usize) -> usize {
    3 * bins - 1
}

/// Raw parameters of the identity map.
pub fn identity_raw(bins: usize) -> Vec<f64> {
    let mut raw = vec![0.0; raw_len(bins)];
    let d = ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln();
    for r in raw.iter_mut().skip(2 * bins) {
        *r = d;
    }
    raw
}

/// Knot positions derived from raw parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineKnots {
    pub bound: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ds: Vec<f64>,
    width_probs: Vec<f64>,
    height_probs: Vec<f64>,
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cumulative(probs: &[f64], min: f64, bound: f64) -> Vec<f64> {
    let k = probs.len();
    let mut out = Vec::with_capacity(k + 1);
    out.push(-bound);
    let mut acc = -bound;
    for p in probs.iter().take(k - 1) {
        acc += 2.0 * bound * (min + (1.0 - min * k as f64) * p);
        out.push(acc);
    }
    out.push(bound);
    out
}

impl SplineKnots {
    pub fn from_raw(raw: &[f64], bins: usize, bound: f64) -> Self {
        assert_eq!(raw.len(), raw_len(bins), "raw spline parameter length");
        let width_probs = softmax(&raw[..bins]);
        let height_probs = softmax(&raw[bins..2 * bins]);
        let xs = cumulative(&width_probs, MIN_BIN_WIDTH, bound);
        let ys = cumulative(&height_probs, MIN_BIN_HEIGHT, bound);
        let mut ds = Vec::with_capacity(bins + 1);
        ds.push(1.0);
        ds.extend(raw[2 * bins..].iter().map(|r| MIN_DERIVATIVE + softplus(*r)));
        ds.push(1.0);
        Self {
            bound,
            xs,
            ys,
            ds,
            width_probs,
            height_probs,
        }
    }

    pub fn bins(&self) -> usize {
        self.xs.len() - 1
    }

    fn bin_of(knots: &[f64], v: f64) -> usize {
        let k = knots.len() - 1;
        knots[1..k].partition_point(|t| *t <= v)
    }

    fn inside(&self, v: f64) -> bool {
        v > -self.bound && v < self.bound
    }

    /// `(y, ln dy/dx)`.
    pub fn forward(&self, x: f64) -> (f64, f64) {
        if !self.inside(x) {
            return (x, 0.0);
        }
        let k = Self::bin_of(&self.xs, x);
        rq_segment(
            x,
            self.xs[k],
            self.xs[k + 1],
            self.ys[k],
            self.ys[k + 1],
            self.ds[k],
            self.ds[k + 1],
        )
    }

    /// `(x, ln dx/dy)`.
    pub fn inverse(&self, y: f64) -> (f64, f64) {
        if !self.inside(y) {
            return (y, 0.0);
        }
        let k = Self::bin_of(&self.ys, y);
        let (xk, xk1, yk, yk1, dk, dk1) = (
            self.xs[k],
            self.xs[k + 1],
            self.ys[k],
            self.ys[k + 1],
            self.ds[k],
            self.ds[k + 1],
        );
        let w = xk1 - xk;
        let h = yk1 - yk;
        let s = h / w;
        let dy = y - yk;
        let sum = dk1 + dk - 2.0 * s;
        let a = h * (s - dk) + dy * sum;
        let b = h * dk - dy * sum;
        let c = -s * dy;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        let xi = (2.0 * c) / (-b - disc.sqrt());
        let x = xi * w + xk;
        let (_, ld) = rq_segment(x, xk, xk1, yk, yk1, dk, dk1);
        (x, -ld)
    }
}

/// A spline bijection with its raw parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RqSpline {
    pub bins: usize,
    pub bound: f64,
    pub raw: Vec<f64>,
    knots: SplineKnots,
}

impl RqSpline {
    pub fn identity(bins: usize, bound: f64) -> Self {
        Self::from_raw(identity_raw(bins), bins, bound)
    }

    pub fn from_raw(raw: Vec<f64>, bins: usize, bound: f64) -> Self {
        let knots = SplineKnots::from_raw(&raw, bins, bound);
        Self {
            bins,
            bound,
            raw,
            knots,
        }
    }

    pub fn knots(&self) -> &SplineKnots {
        &self.knots
    }

    pub fn forward(&self, x: f64) -> (f64, f64) {
        self.knots.forward(x)
    }

    pub fn inverse(&self, y: f64) -> (f64, f64) {
        self.knots.inverse(y)
    }
}

/// Minimal field needed to share the segment formula between plain values and
/// forward-mode duals.
trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn ln(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dual<const N: usize> {
    v: f64,
    d: [f64; N],
}

impl<const N: usize> Dual<N> {
    fn var(v: f64, slot: usize) -> Self {
        let mut d = [0.0; N];
        d[slot] = 1.0;
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Self { v: self.v + o.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Self { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * o.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Self { v: -self.v, d }
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        let mut d = self.d;
        for a in d.iter_mut() {
            *a *= inv;
        }
        Self { v: self.v.ln(), d }
    }
}

/// Rational-quadratic segment: `(y, ln dy/dx)` for `x` in `[xk, xk1]`.
fn rq_segment<T: Real>(x: T, xk: T, xk1: T, yk: T, yk1: T, dk: T, dk1: T) -> (T, T) {
    let one = T::cst(1.0);
    let two = T::cst(2.0);
    let w = xk1 - xk;
    let h = yk1 - yk;
    let s = h / w;
    let xi = (x - xk) / w;
    let xi1 = xi * (one - xi);
    let den = s + (dk1 + dk - two * s) * xi1;
    let y = yk + h * (s * xi * xi + dk * xi1) / den;
    let omx = one - xi;
    let numd = dk1 * xi * xi + two * s * xi1 + dk * omx * omx;
    let logdet = two * s.ln() + numd.ln() - two * den.ln();
    (y, logdet)
}

struct SplineColumnsOp {
    bins: usize,
    knots: Vec<SplineKnots>,
    raw: Array2<f64>,
}

/// Applies the spline in row `i` of `raw` (`D × (3K-1)`) to column `i` of `z`
/// (`N × D`). Returns `N × 2D`: transformed values in the first `D` columns and
/// `ln |d out / d in|` in the last `D`.
pub fn rq_spline_columns<'t>(z: Var<'t>, raw: Var<'t>, bins: usize, bound: f64) -> Var<'t> {
    let zv = z.value();
    let rv = raw.value();
    let (n, d) = zv.dim();
    assert_eq!(rv.dim(), (d, raw_len(bins)), "spline parameter shape");
    let knots: Vec<SplineKnots> = (0..d)
        .map(|i| SplineKnots::from_raw(rv.row(i).as_slice().unwrap_or(&rv.row(i).to_vec()), bins, bound))
        .collect();
    let mut out = Array2::zeros((n, 2 * d));
    for r in 0..n {
        for (i, kn) in knots.iter().enumerate() {
            let (y, ld) = kn.forward(zv[[r, i]]);
            out[[r, i]] = y;
            out[[r, d + i]] = ld;
        }
    }
    let op = SplineColumnsOp {
        bins,
        knots,
        raw: (*rv).clone(),
    };
    z.tape().custom(&[z, raw], out, Box::new(op))
}

impl CustomOp for SplineColumnsOp {
    fn name(&self) -> &'static str {
        "rq_spline_columns"
    }

    fn backward(
        &self,
        inputs: &[&Array2<f64>],
        _output: &Array2<f64>,
        grad: &Array2<f64>,
    ) -> Vec<Option<Array2<f64>>> {
        let z = inputs[0];
        let (n, d) = z.dim();
        let k = self.bins;
        let mut gz = Array2::zeros((n, d));
        let mut graw = Array2::zeros((d, raw_len(k)));
        for (i, kn) in self.knots.iter().enumerate() {
            let mut gx = vec![0.0; k + 1];
            let mut gy = vec![0.0; k + 1];
            let mut gd = vec![0.0; k + 1];
            for r in 0..n {
                let x = z[[r, i]];
                let (gout, glog) = (grad[[r, i]], grad[[r, d + i]]);
                if !kn.inside(x) {
                    gz[[r, i]] = gout;
                    continue;
                }
                let b = SplineKnots::bin_of(&kn.xs, x);
                let (y, ld) = rq_segment(
                    Dual::<7>::var(x, 0),
                    Dual::var(kn.xs[b], 1),
                    Dual::var(kn.xs[b + 1], 2),
                    Dual::var(kn.ys[b], 3),
                    Dual::var(kn.ys[b + 1], 4),
                    Dual::var(kn.ds[b], 5),
                    Dual::var(kn.ds[b + 1], 6),
                );
                let t: Vec<f64> = (0..7).map(|s| gout * y.d[s] + glog * ld.d[s]).collect();
                gz[[r, i]] = t[0];
                gx[b] += t[1];
                gx[b + 1] += t[2];
                gy[b] += t[3];
                gy[b + 1] += t[4];
                gd[b] += t[5];
                gd[b + 1] += t[6];
            }
            let bound = kn.bound;
            let mut row = graw.row_mut(i);
            let widths = softmax_chain(&gx, &kn.width_probs, MIN_BIN_WIDTH, bound);
            let heights = softmax_chain(&gy, &kn.height_probs, MIN_BIN_HEIGHT, bound);
            for m in 0..k {
                row[m] = widths[m];
                row[k + m] = heights[m];
            }
            for j in 1..k {
                row[2 * k + j - 1] = gd[j] * sigmoid(self.raw[[i, 2 * k + j - 1]]);
            }
        }
        vec![Some(gz), Some(graw)]
    }
}

/// Pulls knot-position gradients back to the raw softmax logits.
fn softmax_chain(gknot: &[f64], probs: &[f64], min: f64, bound: f64) -> Vec<f64> {
    let k = probs.len();
    // interior knot j (1..k-1) = -B + sum_{m<j} width_m
    let mut gw = vec![0.0; k];
    let mut acc = 0.0;
    for m in (0..k).rev() {
        if m + 1 <= k - 1 {
            acc += gknot[m + 1];
        }
        gw[m] = acc * 2.0 * bound * (1.0 - min * k as f64);
    }
    let dotp: f64 = gw.iter().zip(probs).map(|(g, p)| g * p).sum();
    probs.iter().zip(&gw).map(|(p, g)| p * (g - dotp)).collect()
}
