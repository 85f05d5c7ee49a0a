//! Geodesic flow on `T¹X = Γ\PSL(2,ℝ)` and Monte Carlo correlation decay.
//!
//! A state is a frame `g` with `g·(i, ↑) = (z, v)` plus a sheet label. The
//! flow multiplies on the right by `diag(e^{t/2}, e^{−t/2})`; after each step
//! of length at most one the base point is reduced back into the Dirichlet
//! domain and the sheet follows the reducing permutation.
//!
//! Expectations use the Liouville measure normalized to total mass one.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::fuchsian::{CoverDescriptor, SurfacePoint};
use crate::hypgeo::{ball_volume, point_to_polar, HPoint, Moebius, UnitTangent};
use crate::Estimate;

/// Longest single flow step before reduction.
pub const STEP_CAP: f64 = 1.0;
/// Longest total flow time accepted by [`correlation`].
pub const TOTAL_CAP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub frame: Moebius,
    pub sheet: usize,
}

impl FlowState {
    pub fn new(v: UnitTangent, sheet: usize) -> Self {
        FlowState { frame: Moebius::frame(v), sheet }
    }

    pub fn base(&self) -> HPoint {
        self.frame.apply(HPoint::I)
    }

    pub fn tangent(&self) -> UnitTangent {
        self.frame.to_tangent()
    }

    pub fn point(&self) -> SurfacePoint {
        SurfacePoint::new(self.base(), self.sheet)
    }

    /// Move the base point into the Dirichlet domain.
    pub fn reduced(&self, cover: &CoverDescriptor) -> FlowState {
        let (p, g, _) = cover.reduce(self.point());
        FlowState { frame: g * self.frame, sheet: p.sheet }
    }
}

/// Liouville-uniform state: area-uniform base point, uniform direction.
pub fn sample_state<R: Rng + ?Sized>(cover: &CoverDescriptor, rng: &mut R) -> FlowState {
    let p = cover.sample_point(rng);
    let angle = TAU * rng.random::<f64>();
    FlowState::new(UnitTangent::new(p.z, angle), p.sheet)
}

/// `φ_t(s)` in steps of at most [`STEP_CAP`], reducing after each step.
pub fn flow(s: FlowState, t: f64, cover: &CoverDescriptor) -> Result<FlowState> {
    if !t.is_finite() {
        return Err(Error::InvalidParams(format!("flow time must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(s);
    }
    let steps = (t.abs() / STEP_CAP).ceil() as usize;
    let dt = t / steps as f64;
    let a = Moebius::geodesic(dt);
    let mut cur = s;
    for _ in 0..steps {
        cur = FlowState { frame: cur.frame * a, sheet: cur.sheet }.reduced(cover);
    }
    Ok(cur)
}

/// `β(λ) = 1 − √(1 − 4λ)` for `λ ≤ 1/4`, else 1.
pub fn beta(lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParams(format!("beta needs lambda >= 0, got {lambda}")));
    }
    Ok(if lambda > 0.25 { 1.0 } else { 1.0 - (1.0 - 4.0 * lambda).sqrt() })
}

/// Constants of the mixing bound, with a band for the uncertainty in `λ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    pub lambda1: f64,
    pub lambda1_band: (f64, f64),
    pub beta: f64,
    pub constant: f64,
    pub times: Vec<f64>,
}

impl MixingParams {
    pub fn new(lambda1: f64, times: Vec<f64>) -> Result<Self> {
        Self::with_band(lambda1, (lambda1, lambda1), times)
    }

    pub fn with_band(lambda1: f64, band: (f64, f64), times: Vec<f64>) -> Result<Self> {
        if !(band.0 <= lambda1 && lambda1 <= band.1) {
            return Err(Error::InvalidParams("lambda1 must lie in its band".into()));
        }
        let b = beta(lambda1)?;
        if b <= 0.0 {
            return Err(Error::InvalidParams("beta must be positive (lambda1 > 0)".into()));
        }
        beta(band.0)?;
        Ok(MixingParams { lambda1, lambda1_band: band, beta: b, constant: 11.0 * b.exp(), times })
    }

    /// `11 e^β (1+t) e^{−βt}` maximised over the `λ₁` band.
    pub fn bound_factor(&self, t: f64) -> f64 {
        let f = |l: f64| {
            let b = beta(l).unwrap_or(self.beta);
            11.0 * b.exp() * (1.0 + t) * (-b * t).exp()
        };
        f(self.lambda1_band.0).max(f(self.lambda1_band.1)).max(f(self.lambda1))
    }
}

/// An observable on `T¹X`, evaluated on reduced states.
pub trait Observable: Sync {
    fn eval(&self, s: &FlowState) -> f64;
}

impl<F: Fn(&FlowState) -> f64 + Sync> Observable for F {
    fn eval(&self, s: &FlowState) -> f64 {
        self(s)
    }
}

/// Indicator of a geodesic ball on the surface, lifted to `T¹X`.
#[derive(Debug, Clone)]
pub struct BallIndicator<'a> {
    cover: &'a CoverDescriptor,
    center: SurfacePoint,
    radius: f64,
}

impl<'a> BallIndicator<'a> {
    /// `radius` must stay below the injectivity radius at `center`.
    pub fn new(cover: &'a CoverDescriptor, center: SurfacePoint, radius: f64) -> Result<Self> {
        let (center, _, _) = cover.reduce(center);
        let inj = cover.injectivity_radius(center)?;
        if !(radius > 0.0 && radius < inj) {
            return Err(Error::InvalidParams(format!("ball radius {radius} must lie in (0, {inj})")));
        }
        Ok(BallIndicator { cover, center, radius })
    }

    /// `‖1_B‖₂` under the probability measure.
    pub fn l2_norm(&self) -> f64 {
        (ball_volume(self.radius).unwrap_or(f64::NAN) / self.cover.volume()).sqrt()
    }

    /// `∫ 1_B` under the probability measure.
    pub fn mean(&self) -> f64 {
        self.l2_norm().powi(2)
    }
}

impl Observable for BallIndicator<'_> {
    fn eval(&self, s: &FlowState) -> f64 {
        match self.cover.quotient_dist(s.point(), self.center, self.radius) {
            Ok(d) if d <= self.radius => 1.0,
            _ => 0.0,
        }
    }
}

/// Centered correlation `∫ f∘φ_t · g − ∫f ∫g` as a sample covariance.
fn covariance(x: &[f64], y: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let value = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|p| (p - value).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate { value, stderr: (var / n).sqrt() }
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::InvalidParams("need at least 2 samples".into()));
    }
    Ok(())
}

/// Liouville Monte Carlo estimate of the centered correlation at time `t`.
pub fn correlation(
    cover: &CoverDescriptor,
    f: &dyn Observable,
    g: &dyn Observable,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(correlation_series(cover, f, g, &[t], n_samples, seed)?[0])
}

/// Correlations at several times from one sample, flowing incrementally.
pub fn correlation_series(
    cover: &CoverDescriptor,
    f: &dyn Observable,
    g: &dyn Observable,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_samples(n_samples)?;
    if let Some(&t) = times.iter().find(|t| !(t.abs() <= TOTAL_CAP)) {
        return Err(Error::CapExceeded { radius: t, cap: TOTAL_CAP });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<FlowState> = (0..n_samples).map(|_| sample_state(cover, &mut rng)).collect();
    let gy: Vec<f64> = starts.iter().map(|s| g.eval(s)).collect();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![Estimate { value: 0.0, stderr: 0.0 }; times.len()];
    // Positive and negative times flow from the same starts in opposite directions.
    for sign in [1.0, -1.0] {
        let mut cur = starts.clone();
        let mut now = 0.0;
        for &k in &order {
            let t = times[k];
            if (sign > 0.0 && t < 0.0) || (sign < 0.0 && t >= 0.0) {
                continue;
            }
            let dt = t - now;
            for s in cur.iter_mut() {
                *s = flow(*s, dt, cover)?;
            }
            now = t;
            let fx: Vec<f64> = cur.iter().map(|s| f.eval(s)).collect();
            out[k] = covariance(&fx, &gy);
        }
        order.reverse();
    }
    Ok(out)
}

/// One line of the mixing comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub resolved: bool,
}

impl MixingRow {
    /// `|estimate| ≤ bound + 3·stderr`.
    pub fn within_bound(&self) -> bool {
        self.estimate.abs() <= self.bound + 3.0 * self.stderr
    }
}

/// Compare measured correlations with `11 e^β (1+t) e^{−βt} ‖f‖‖g‖`; rows
/// whose bound is below three standard errors are marked unresolved.
pub fn mixing_table(
    cover: &CoverDescriptor,
    f: &dyn Observable,
    g: &dyn Observable,
    norms: (f64, f64),
    params: &MixingParams,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<MixingRow>> {
    let est = correlation_series(cover, f, g, &params.times, n_samples, seed)?;
    Ok(params
        .times
        .iter()
        .zip(est)
        .map(|(&t, e)| {
            let bound = params.bound_factor(t) * norms.0 * norms.1;
            MixingRow { t, estimate: e.value, stderr: e.stderr, bound, resolved: bound >= 3.0 * e.stderr }
        })
        .collect())
}

/// Least-squares slope of `log|estimate|` against `t` over resolved rows
/// whose estimate is above two standard errors; `None` with fewer than 3.
pub fn decay_slope(rows: &[MixingRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.resolved && r.estimate.abs() > 2.0 * r.stderr)
        .map(|r| (r.t, r.estimate.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(sxy / sxx)
}

/// Radius of the disc about `i` holding half the area of a domain of area `4π`.
pub fn half_area_radius() -> f64 {
    2.0 * (0.5f64).sqrt().asinh()
}

/// Cell in a 16-way partition of an eightfold symmetric base domain: eight
/// sectors about `i`, each split by the disc of radius [`half_area_radius`].
pub fn liouville_cell(z: HPoint) -> usize {
    let (r, th) = point_to_polar(HPoint::I, FRAC_PI_2, z);
    let sector = ((th.rem_euclid(TAU) / FRAC_PI_4) as usize).min(7);
    2 * sector + usize::from(r > half_area_radius())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of equal cell probabilities for the base points of `φ_t`
/// applied to Liouville samples. Valid for eightfold symmetric domains of
/// area `4π`, such as the Bolza octagon.
pub fn liouville_chi_square(cover: &CoverDescriptor, t: f64, n_samples: usize, seed: u64) -> Result<ChiSquareReport> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 16];
    for _ in 0..n_samples {
        let s = flow(sample_state(cover, &mut rng), t, cover)?;
        counts[liouville_cell(s.base())] += 1;
    }
    let e = n_samples as f64 / 16.0;
    let statistic: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new(15.0).expect("positive dof");
    Ok(ChiSquareReport { statistic, dof: 15, p_value: dist.sf(statistic) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::bolza_group;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn beta_cases() {
        assert_eq!(beta(0.5).unwrap(), 1.0);
        assert_eq!(beta(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(beta(3.0 / 16.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(beta(-0.1).is_err());
    }

    #[test]
    fn vertical_geodesic() {
        let cover = CoverDescriptor::trivial(Arc::new(bolza_group()));
        let s = FlowState::new(UnitTangent::new(HPoint::I, FRAC_PI_2), 0);
        let t = 0.5;
        let raw = FlowState { frame: s.frame * Moebius::geodesic(t), sheet: 0 };
        assert_abs_diff_eq!(raw.base().y(), t.exp(), epsilon = 1e-12);
        let f = flow(s, t, &cover).unwrap();
        assert_abs_diff_eq!(f.base().y(), t.exp(), epsilon = 1e-12);
        assert_eq!(flow(s, 0.0, &cover).unwrap(), s);
    }

    #[test]
    fn cells_are_centered() {
        assert_eq!(liouville_cell(HPoint::new(0.0, 1.01).unwrap()), 0);
        let far = crate::hypgeo::polar_to_point(HPoint::I, FRAC_PI_2, 1.5, 0.1);
        assert_eq!(liouville_cell(far), 1);
    }
}
