//! Scalar wave kernels: the Abel kernel, the spectral multipliers `h` and
//! `h̃_τ` with their time averages, the two-point function `F`, and the
//! planar integral estimates built from them.

use std::f64::consts::{PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuchsian::{CoverDescriptor, SurfacePoint};
use crate::hypgeo::dist;
use crate::quad::{adaptive_gk, tanh_sinh, tanh_sinh_split};

/// `(2√2 π)⁻¹`
pub const ABEL_PREFACTOR: f64 = 1.0 / (2.0 * SQRT_2 * PI);

const BRANCH_EPS: f64 = 1e-8;
const SINGULAR_GAP: f64 = 1e-9;

/// A spectral window `[a, b] ⊂ (1/4, ∞)` with an optional enclosing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<(f64, f64)>,
}

impl WindowSpec {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let w = WindowSpec { a, b, outer: None };
        w.validate()?;
        Ok(w)
    }

    pub fn with_outer(a: f64, b: f64, a_outer: f64, b_outer: f64) -> Result<Self> {
        let w = WindowSpec { a, b, outer: Some((a_outer, b_outer)) };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.25 && self.a < self.b && self.b.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "window needs 1/4 < a < b, got [{}, {}]",
                self.a, self.b
            )));
        }
        if let Some((ao, bo)) = self.outer {
            if !(ao > 0.25 && ao <= self.a && self.b <= bo && bo.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "outer window [{ao}, {bo}] must contain [{}, {}] and lie above 1/4",
                    self.a, self.b
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.a <= lambda && lambda <= self.b
    }

    /// The enclosing window, or the window itself.
    pub fn outer_or_self(&self) -> (f64, f64) {
        self.outer.unwrap_or((self.a, self.b))
    }
}

/// `cosh t − cosh r` without cancellation.
pub fn cosh_gap(t: f64, r: f64) -> f64 {
    2.0 * (0.5 * (t + r)).sinh() * (0.5 * (t - r)).sinh()
}

/// The Abel kernel `A(t, r)`, zero for `r ≥ t`.
pub fn abel(t: f64, r: f64) -> f64 {
    if r >= t {
        return 0.0;
    }
    ABEL_PREFACTOR / cosh_gap(t, r).sqrt()
}

// A(t, t − gap) with the gap supplied exactly.
fn abel_gap(t: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    ABEL_PREFACTOR / (2.0 * (t - 0.5 * gap).sinh() * (0.5 * gap).sinh()).sqrt()
}

/// `h(t, λ) = sin(t√(λ−¼))/√(λ−¼)`, continued by `sinh` below `¼` and by
/// its Taylor series across the branch point.
pub fn h(t: f64, lambda: f64) -> f64 {
    let mu = lambda - 0.25;
    if mu.abs() < BRANCH_EPS {
        let t2 = t * t;
        return t * (1.0 - mu * t2 / 6.0 + mu * mu * t2 * t2 / 120.0);
    }
    if mu > 0.0 {
        let s = mu.sqrt();
        (t * s).sin() / s
    } else {
        let s = (-mu).sqrt();
        (t * s).sinh() / s
    }
}

/// `cos(t√(λ−¼))`, continued by `cosh` below `¼`.
pub fn cosine(t: f64, lambda: f64) -> f64 {
    let mu = lambda - 0.25;
    if mu.abs() < BRANCH_EPS {
        let t2 = t * t;
        return 1.0 - mu * t2 / 2.0 + mu * mu * t2 * t2 / 24.0;
    }
    if mu > 0.0 {
        (t * mu.sqrt()).cos()
    } else {
        (t * (-mu).sqrt()).cosh()
    }
}

/// `h̃_τ(t, λ) = cos(τt)·h(t, λ)`.
pub fn h_mod(tau: f64, t: f64, lambda: f64) -> f64 {
    (tau * t).cos() * h(t, lambda)
}

/// `(1/T)∫₀ᵀ h(t, λ)² dt` for `λ > ¼`, in closed form.
pub fn time_avg_h2(lambda: f64, big_t: f64) -> Result<f64> {
    if !(lambda > 0.25) || !(big_t > 0.0) {
        return Err(Error::InvalidParams(format!(
            "time_avg_h2 needs lambda > 1/4 and T > 0, got lambda={lambda}, T={big_t}"
        )));
    }
    let mu = lambda - 0.25;
    let s = mu.sqrt();
    Ok(0.5 / mu - (2.0 * big_t * s).sin() / (4.0 * big_t * mu * s))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Signed `(1/T)∫₀ᵀ h̃_τ(t, λ_k) h(t, λ_j) dt`.
///
/// Closed form by product-to-sum when both eigenvalues exceed `¼`, adaptive
/// Gauss–Kronrod otherwise.
pub fn time_avg_pair(lambda_k: f64, lambda_j: f64, tau: f64, big_t: f64) -> Result<f64> {
    if !(big_t > 0.0) {
        return Err(Error::InvalidParams(format!("averaging time must be positive, got {big_t}")));
    }
    let (mk, mj) = (lambda_k - 0.25, lambda_j - 0.25);
    if mk > BRANCH_EPS && mj > BRANCH_EPS {
        let (al, be) = (mk.sqrt(), mj.sqrt());
        let s = |w: f64| sinc(w * big_t);
        let sum = s(al - be + tau) + s(al - be - tau) - s(al + be + tau) - s(al + be - tau);
        return Ok(sum / (4.0 * al * be));
    }
    let freq = mk.abs().sqrt() + mj.abs().sqrt() + tau.abs();
    let pieces = (big_t * freq / PI).ceil() as usize + 1;
    let v = adaptive_gk(
        |t| h_mod(tau, t, lambda_k) * h(t, lambda_j),
        0.0,
        big_t,
        pieces,
        1e-14,
        1e-12,
        200_000,
    )?;
    Ok(v / big_t)
}

/// `(1/T)|∫₀ᵀ h̃_τ(t, a) h(t, b) dt|` at `T = π/(2δ)`, by quadrature, after
/// checking `δ ∈ (0, (2/9)√(m−¼))` and `|√(a−¼) − √(b−¼) − τ| < δ` with
/// `m = min(a, b)`.
pub fn time_avg_hh_mod(a: f64, b: f64, tau: f64, delta: f64) -> Result<f64> {
    check_resonance_hypotheses(a, b, tau, delta)?;
    let big_t = PI / (2.0 * delta);
    let (al, be) = ((a - 0.25).sqrt(), (b - 0.25).sqrt());
    let pieces = (big_t * (al + be + tau.abs()) / PI).ceil() as usize + 1;
    let v = adaptive_gk(|t| h_mod(tau, t, a) * h(t, b), 0.0, big_t, pieces, 1e-15, 1e-12, 400_000)?;
    Ok((v / big_t).abs())
}

pub fn check_resonance_hypotheses(a: f64, b: f64, tau: f64, delta: f64) -> Result<()> {
    if !(a > 0.25 && b > 0.25) {
        return Err(Error::HypothesisViolated(format!("need a, b > 1/4, got a={a}, b={b}")));
    }
    let m = a.min(b);
    let dmax = 2.0 / 9.0 * (m - 0.25).sqrt();
    if !(delta > 0.0 && delta < dmax) {
        return Err(Error::HypothesisViolated(format!("delta={delta} outside (0, {dmax})")));
    }
    let off = (a - 0.25).sqrt() - (b - 0.25).sqrt() - tau;
    if off.abs() >= delta {
        return Err(Error::HypothesisViolated(format!(
            "sqrt(a-1/4) - sqrt(b-1/4) - tau = {off} not within delta={delta}"
        )));
    }
    Ok(())
}

/// Result of scanning the resonance average over its hypothesis region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResonanceScan {
    /// `inf value·√(a−¼)·√(b−¼)` over the scanned points.
    pub infimum: f64,
    /// `(a, b, τ, δ)` attaining the infimum.
    pub argmin: (f64, f64, f64, f64),
    /// `sup value / (8π √(a−¼)√(b−¼))`; at least 1 wherever the stated
    /// lower bound `8π√(a−¼)√(b−¼)` would hold.
    pub max_ratio_to_claim: f64,
    pub samples: usize,
}

/// Scan `(a, b)` over a grid in `[lo, hi]²`, every `δ` in `deltas` allowed
/// by the hypothesis, and offsets `θδ` with `θ ∈ {−0.9, −0.5, 0, 0.5, 0.9}`.
pub fn resonance_scan(lo: f64, hi: f64, grid: usize, deltas: &[f64]) -> Result<ResonanceScan> {
    if !(lo > 0.25 && hi > lo && grid >= 2) {
        return Err(Error::InvalidParams("resonance scan needs 1/4 < lo < hi and grid >= 2".into()));
    }
    let mut out = ResonanceScan {
        infimum: f64::INFINITY,
        argmin: (0.0, 0.0, 0.0, 0.0),
        max_ratio_to_claim: 0.0,
        samples: 0,
    };
    for i in 0..grid {
        for j in 0..grid {
            let a = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            let b = lo + (hi - lo) * j as f64 / (grid - 1) as f64;
            let (al, be) = ((a - 0.25).sqrt(), (b - 0.25).sqrt());
            for &delta in deltas {
                if delta >= 2.0 / 9.0 * (a.min(b) - 0.25).sqrt() {
                    continue;
                }
                for theta in [-0.9, -0.5, 0.0, 0.5, 0.9] {
                    let tau = al - be - theta * delta;
                    let v = time_avg_hh_mod(a, b, tau, delta)?;
                    let scaled = v * al * be;
                    if scaled < out.infimum {
                        out.infimum = scaled;
                        out.argmin = (a, b, tau, delta);
                    }
                    out.max_ratio_to_claim = out.max_ratio_to_claim.max(v / (8.0 * PI * al * be));
                    out.samples += 1;
                }
            }
        }
    }
    if out.samples == 0 {
        return Err(Error::InvalidParams("no admissible delta in resonance scan".into()));
    }
    Ok(out)
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind from the complementary
/// modulus `k′`.
fn ellip_k_comp(kp: f64) -> f64 {
    PI / (2.0 * agm(1.0, kp))
}

// ∫ over the angular slice of A(t′, d(x, w′)) for x on the circle of radius
// ρ about w, divided by the Abel prefactor; d(w, w′) = r > 0. The offsets
// `e = ρ + r − t′`, `u = t′ + ρ − r` and `v = t′ − ρ + r` are passed in so
// they keep full precision where they vanish.
fn angular_abel(rho: f64, r: f64, tp: f64, e: f64, u: f64, v: f64) -> f64 {
    let s = rho.sinh() * r.sinh();
    let p = 2.0 * (0.5 * u).sinh() * (0.5 * v).sinh() / s;
    if p <= 0.0 {
        return 0.0;
    }
    let q = 2.0 * (0.5 * (rho + r + tp)).sinh() * (0.5 * e).sinh() / s;
    let j = if q > 0.0 {
        SQRT_2 * ellip_k_comp((0.5 * q).sqrt())
    } else {
        2.0 / p.sqrt() * ellip_k_comp((-q / p).sqrt())
    };
    2.0 * j / s.sqrt()
}

/// `G(t, t′, r) = ∫_ℍ A(t, d(x, w)) A(t′, d(x, w′)) dx` with `d(w, w′) = r`.
///
/// Infinite for `t = t′, r = 0`.
pub fn abel_pair_integral(t: f64, tp: f64, r: f64) -> Result<f64> {
    if !(t > 0.0 && tp > 0.0 && r >= 0.0) {
        return Err(Error::InvalidParams(format!("need t, t' > 0 and r >= 0, got ({t}, {tp}, {r})")));
    }
    if r >= t + tp {
        return Ok(0.0);
    }
    let c2 = ABEL_PREFACTOR * ABEL_PREFACTOR;
    if r < 1e-12 {
        let (big, small) = (t.max(tp), t.min(tp));
        let gap = cosh_gap(big, small);
        if gap <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let num = SQRT_2 * ((0.5 * big).sinh() + (0.5 * small).sinh());
        return Ok(c2 * TAU * 2.0 * (num / gap.sqrt()).ln());
    }
    let lo = (r - tp).max(0.0);
    let hi = t.min(r + tp);
    if lo >= hi {
        return Ok(0.0);
    }
    let mut breaks = vec![lo];
    if tp - r > lo && tp - r < hi {
        breaks.push(tp - r);
    }
    breaks.push(hi);
    let last = breaks.len() - 2;
    let mut total = 0.0;
    let mut err = 0.0;
    let rho0 = tp - r;
    let near = |x: f64| (x - rho0).abs() <= 1e-14 * (1.0 + tp);
    for (k, w) in breaks.windows(2).enumerate() {
        let ends_at_t = k == last && hi == t;
        let starts_at_lo = k == 0 && lo == r - tp;
        let ends_at_far = k == last && hi == r + tp;
        let (left0, right0) = (near(w[0]), near(w[1]));
        let f = |rho: f64, dl: f64, dr: f64| {
            let gap = if ends_at_t { dr } else { t - rho };
            let e = if left0 {
                dl
            } else if right0 {
                -dr
            } else {
                rho - rho0
            };
            let u = if starts_at_lo { dl } else { tp + rho - r };
            let v = if ends_at_far { dr } else { tp - rho + r };
            ABEL_PREFACTOR * abel_gap(t, gap) * rho.sinh() * angular_abel(rho, r, tp, e, u, v)
        };
        let (v, e) = tanh_sinh(f, w[0], w[1], 1e-13, 1e-10)?;
        total += v;
        err += e;
    }
    if err > 1e-6 * total.abs() + 1e-12 {
        return Err(Error::QuadratureFailure { estimate: total, error: err });
    }
    Ok(total)
}

/// The two-point function `F(t, t′, r) = G(t, t′, r)²`.
pub fn f_func(t: f64, tp: f64, r: f64) -> Result<f64> {
    let g = abel_pair_integral(t, tp, r)?;
    Ok(g * g)
}

/// `∫_ℍ 1{d(x,z) ≤ t} 1{d(x,z′) ≤ t′} / √(sinh d(x,z) sinh d(x,z′)) dx` with
/// `d(z, z′) = d`.
pub fn sqrt_sinh_pair_integral(t: f64, tp: f64, d: f64) -> Result<f64> {
    if !(t > 0.0 && tp > 0.0 && d >= 0.0) {
        return Err(Error::InvalidParams(format!("need t, t' > 0 and d >= 0, got ({t}, {tp}, {d})")));
    }
    if d > t + tp {
        return Ok(0.0);
    }
    if d == 0.0 {
        return Ok(TAU * t.min(tp));
    }
    let lo = (d - tp).max(0.0);
    let hi = t.min(d + tp);
    if lo >= hi {
        return Ok(0.0);
    }
    let mut breaks = vec![lo];
    for b in [d, tp - d] {
        if b > lo && b < hi && breaks.iter().all(|&x| (x - b).abs() > 1e-12) {
            breaks.push(b);
        }
    }
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    let sh = (0.5 * tp).sinh();
    let outer = |rho: f64, _: f64, _: f64| -> f64 {
        let s = rho.sinh() * d.sinh();
        let a = (0.5 * (rho - d)).sinh();
        let room = sh * sh - a * a;
        if room <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        let x = (room / s).sqrt();
        let phi_max = if x >= 1.0 { PI } else { 2.0 * x.asin() };
        let inner = |phi: f64, _: f64, _: f64| -> f64 {
            let sp = (0.5 * phi).sin();
            let dd = 2.0 * (a * a + s * sp * sp).sqrt().asinh();
            1.0 / dd.sinh().sqrt()
        };
        match tanh_sinh(inner, 0.0, phi_max, 1e-13, 1e-10) {
            Ok((v, _)) => 2.0 * rho.sinh().sqrt() * v,
            Err(_) => f64::NAN,
        }
    };
    let (v, _) = tanh_sinh_split(outer, &breaks, 1e-12, 1e-9)?;
    if !v.is_finite() {
        return Err(Error::QuadratureFailure { estimate: v, error: f64::INFINITY });
    }
    Ok(v)
}

/// `K_t(x, y) = Σ_γ A(t, d(x, γy))` over elements respecting the sheets.
pub fn automorphic_kernel(cover: &CoverDescriptor, t: f64, x: SurfacePoint, y: SurfacePoint) -> Result<f64> {
    let reach = (t + SINGULAR_GAP).min(cover.cap());
    let ball = cover.enumerate_ball(x.z, y.z, reach)?;
    let mut sum = 0.0;
    for (g, _) in ball.connecting(x.sheet, y.sheet) {
        let d = dist(x.z, g.apply(y.z));
        if (d - t).abs() < SINGULAR_GAP {
            return Err(Error::SingularConfiguration { distance: d, t });
        }
        sum += abel(t, d);
    }
    Ok(sum)
}

/// Right-hand side `1_{[0,t+t′]}(d)/√sinh(max(|t−t′|, d))`.
pub fn pair_integral_bound(t: f64, tp: f64, d: f64) -> f64 {
    if d > t + tp {
        return 0.0;
    }
    let m = (t - tp).abs().max(d);
    if m == 0.0 {
        f64::INFINITY
    } else {
        1.0 / m.sinh().sqrt()
    }
}

/// `∫₀^{t+t′} sinh(r)(1+r)e^{−βr} F(t, t′, r) dr` for `t′ < t`.
pub fn f_weighted_integral(t: f64, tp: f64, beta: f64) -> Result<f64> {
    if !(tp > 0.0 && tp < t && beta > 0.0) {
        return Err(Error::InvalidParams(format!("need 0 < t' < t and beta > 0, got ({t}, {tp}, {beta})")));
    }
    let mut failure = None;
    let f = |r: f64, _: f64, _: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match f_func(t, tp, r) {
            Ok(v) => r.sinh() * (1.0 + r) * (-beta * r).exp() * v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let (v, _) = tanh_sinh_split(f, &[0.0, t - tp, t + tp], 1e-10, 1e-8)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(v)
}

/// `4β⁻² e^{−β(t−t′)/4}`
pub fn f_weighted_bound(t: f64, tp: f64, beta: f64) -> f64 {
    4.0 / (beta * beta) * (-0.25 * beta * (t - tp)).exp()
}

/// `A(t, t − gap)·√gap`, bounded as the gap closes.
pub fn abel_edge_ratio(t: f64, gap: f64) -> f64 {
    abel_gap(t, gap) * gap.sqrt()
}

/// Limit of [`abel_edge_ratio`] as the gap closes.
pub fn abel_edge_limit(t: f64) -> f64 {
    ABEL_PREFACTOR / t.sinh().sqrt()
}
