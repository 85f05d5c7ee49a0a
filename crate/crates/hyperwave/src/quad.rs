//! One-dimensional quadrature rules.
//!
//! Gauss–Legendre for smooth (operator-valued) integrands, adaptive
//! Gauss–Kronrod for oscillatory scalar integrals, and a tanh–sinh rule for
//! integrands with algebraic or logarithmic endpoint singularities. The
//! tanh–sinh integrand receives the distances to both endpoints so that
//! expressions like `cosh t − cosh r` can be formed without cancellation.

use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`, optionally split into
/// `panels` equal subintervals.
pub fn composite_gauss_legendre(a: f64, b: f64, order: usize, panels: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(order * panels);
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((mid + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

#[derive(PartialEq)]
struct Piece {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive 15-point Gauss–Kronrod integration.
///
/// Returns the estimate once the summed error estimate is below
/// `max(abs_tol, rel_tol·|I|)`; otherwise `QuadratureFailure` after
/// `max_pieces` subintervals. `initial` seeds the subdivision, useful for
/// oscillatory integrands.
pub fn adaptive_gk(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut heap = BinaryHeap::new();
    let n0 = initial.max(1);
    let h = (b - a) / n0 as f64;
    let (mut total, mut err) = (0.0, 0.0);
    for k in 0..n0 {
        let lo = a + h * k as f64;
        let hi = if k + 1 == n0 { b } else { lo + h };
        let (v, e) = gk15(&mut f, lo, hi);
        total += v;
        err += e;
        heap.push(Piece { err: e, a: lo, b: hi, val: v });
    }
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_pieces {
            return Err(Error::QuadratureFailure { estimate: total, error: err });
        }
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { err: e1, a: p.a, b: m, val: v1 });
        heap.push(Piece { err: e2, a: m, b: p.b, val: v2 });
    }
    // Re-sum to shed accumulated update round-off.
    Ok(heap.iter().map(|p| p.val).sum())
}

/// tanh–sinh rule on `[a, b]`.
///
/// `f(x, x − a, b − x)` is evaluated at nodes that cluster double
/// exponentially at both ends; the integrand must tolerate distances far
/// below machine epsilon relative to `x`. Returns `(estimate, error)`.
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    if b <= a {
        return Ok((0.0, 0.0));
    }
    const T_MAX: f64 = 4.0;
    const LEVELS: usize = 10;
    let h = 0.5 * (b - a);
    let mut eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = h * FRAC_PI_2 * t.cosh() / (cu * cu);
        if w == 0.0 {
            return 0.0;
        }
        let dr = 2.0 * h / (1.0 + (2.0 * u).exp());
        let dl = 2.0 * h / (1.0 + (-2.0 * u).exp());
        let x = if dl < dr { a + dl } else { b - dr };
        let v = f(x, dl, dr);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let mut step = 1.0;
    let mut sum = eval(0.0);
    let n = (T_MAX / step) as i64;
    for k in 1..=n {
        let t = k as f64 * step;
        sum += eval(t) + eval(-t);
    }
    let mut est = sum * step;
    let mut err = f64::INFINITY;
    for _ in 1..LEVELS {
        step *= 0.5;
        let n = (T_MAX / step) as i64;
        let mut k = 1;
        while k <= n {
            let t = k as f64 * step;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * step;
        err = (next - est).abs();
        est = next;
        if err <= abs_tol.max(rel_tol * est.abs()) {
            return Ok((est, err));
        }
    }
    if err <= 10.0 * abs_tol.max(rel_tol * est.abs()) {
        return Ok((est, err));
    }
    Err(Error::QuadratureFailure { estimate: est, error: err })
}

/// tanh–sinh over consecutive breakpoints; singularities may sit at any of them.
pub fn tanh_sinh_split<F>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let mut total = 0.0;
    let mut err = 0.0;
    let parts = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let (v, e) = tanh_sinh(&mut f, w[0], w[1], abs_tol / parts, rel_tol)?;
        total += v;
        err += e;
    }
    Ok((total, err))
}
