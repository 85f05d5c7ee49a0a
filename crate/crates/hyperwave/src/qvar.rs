//! Quantum variance sums over a spectral window: the diagonal sum, the
//! near-diagonal band and the band at separation `τ`, with the
//! Hilbert–Schmidt majorant obtained from time-averaged propagators.
//!
//! Observables are normalized to mean zero and `‖a‖∞ = 1` on each surface.
//! Pairs are ordered, so `(j, k)` and `(k, j)` both count.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuchsian::{CoverDescriptor, SurfacePoint};
use crate::hypgeo::HPoint;
use crate::kernels::{self, WindowSpec};
use crate::opcalc::{eigen_block, hs_norm, time_avg_conjugation, PropagatorSet};
use crate::spectral::{bump_profile, SpectralData};

/// Default grid of band half-widths.
pub const DELTA_GRID: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVarConfig {
    pub window: WindowSpec,
    pub big_t: f64,
    pub tau: f64,
    pub delta: f64,
}

impl QVarConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        let (a2, _) = self.window.outer_or_self();
        if !(a2 > 0.25) {
            return Err(Error::InvalidParams(format!("outer window must start above 1/4, got {a2}")));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParams(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.big_t > 0.0) {
            return Err(Error::InvalidParams(format!("T must be positive, got {}", self.big_t)));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidParams("tau must be finite".into()));
        }
        Ok(())
    }
}

/// Observable families on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    Constant { c: f64 },
    /// A bump on the base surface pulled back to every sheet.
    BaseBump { center: [f64; 2], radius: f64 },
}

/// Raw values of an observable at the sample points.
pub fn observable_values(spec: &ObservableSpec, points: &[SurfacePoint], cover: &CoverDescriptor) -> Result<Vec<f64>> {
    match spec {
        ObservableSpec::Constant { c } => Ok(vec![*c; points.len()]),
        ObservableSpec::BaseBump { center, radius } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidParams("observable radius must be positive".into()));
            }
            let base = CoverDescriptor::trivial(cover.base_arc());
            let c = SurfacePoint::new(HPoint::new(center[0], center[1])?, 0);
            points
                .iter()
                .map(|p| {
                    let d = base.quotient_dist(SurfacePoint::new(p.z, 0), c, *radius)?;
                    Ok(bump_profile(d, *radius))
                })
                .collect()
        }
    }
}

/// Subtract the discrete mean and scale to `‖a‖∞ = 1`; constants map to 0.
pub fn normalize_observable(a: &[f64]) -> Vec<f64> {
    let centered = center(a);
    let sup = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup <= 1e-14 * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        return vec![0.0; a.len()];
    }
    centered.iter().map(|v| v / sup).collect()
}

fn center(a: &[f64]) -> Vec<f64> {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|v| v - mean).collect()
}

fn window_block(s: &SpectralData, a: &[f64], window: &WindowSpec) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if a.len() != s.vectors.nrows() {
        return Err(Error::InvalidParams("observable length mismatch".into()));
    }
    let idx: Vec<usize> = (0..s.len()).filter(|&k| window.contains(s.eigenvalues[k])).collect();
    if idx.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let v = DMatrix::from_fn(s.vectors.nrows(), idx.len(), |r, c| s.vectors[(r, idx[c])]);
    let mut av = v.clone();
    for (i, mut row) in av.row_iter_mut().enumerate() {
        row *= a[i];
    }
    let lam = idx.iter().map(|&k| s.eigenvalues[k]).collect();
    Ok((lam, v.transpose() * av))
}

fn rhos(lam: &[f64]) -> Result<Vec<f64>> {
    lam.iter()
        .map(|&l| if l > 0.25 { Ok((l - 0.25).sqrt()) } else { Err(Error::UndefinedRho { lambda: l }) })
        .collect()
}

/// `(1/N)Σ_{λ_j∈I} |⟨aψ_j, ψ_j⟩ − ā|²`.
pub fn diagonal_variance(s: &SpectralData, a: &[f64], window: &WindowSpec) -> Result<f64> {
    let (lam, m) = window_block(s, &center(a), window)?;
    Ok((0..lam.len()).map(|j| m[(j, j)].powi(2)).sum::<f64>() / lam.len() as f64)
}

/// `(1/N)Σ` over ordered `j ≠ k` with `lo ≤ ρ_j − ρ_k < hi`.
pub fn band_sum(s: &SpectralData, a: &[f64], window: &WindowSpec, lo: f64, hi: f64) -> Result<f64> {
    pair_sum(s, a, window, |d| lo <= d && d < hi)
}

fn pair_sum(s: &SpectralData, a: &[f64], window: &WindowSpec, keep: impl Fn(f64) -> bool) -> Result<f64> {
    let (lam, m) = window_block(s, a, window)?;
    let rho = rhos(&lam)?;
    let mut sum = 0.0;
    for j in 0..lam.len() {
        for k in 0..lam.len() {
            if j != k && keep(rho[j] - rho[k]) {
                sum += m[(j, k)].powi(2);
            }
        }
    }
    Ok(sum / lam.len() as f64)
}

/// `(1/N)Σ_{j≠k, |ρ_j − ρ_k − τ| < δ} |⟨aψ_j, ψ_k⟩|²`.
pub fn offdiag_variance(s: &SpectralData, a: &[f64], window: &WindowSpec, tau: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParams(format!("delta must be positive, got {delta}")));
    }
    pair_sum(s, a, window, |d| (d - tau).abs() < delta)
}

/// `(1/N)Σ_{j≠k}|⟨aψ_j, ψ_k⟩|²` over the window.
pub fn full_offdiag(s: &SpectralData, a: &[f64], window: &WindowSpec) -> Result<f64> {
    let (lam, m) = window_block(s, a, window)?;
    let n = lam.len();
    let total: f64 = m.iter().map(|v| v * v).sum();
    let diag: f64 = (0..n).map(|j| m[(j, j)].powi(2)).sum();
    Ok((total - diag) / n as f64)
}

/// `|Σ_bands band_sum − full_offdiag|` for the half-open bands
/// `[kδ, (k+1)δ)` covering every gap `ρ_j − ρ_k`.
pub fn band_decomposition_defect(s: &SpectralData, a: &[f64], window: &WindowSpec, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParams(format!("delta must be positive, got {delta}")));
    }
    let (lam, _) = window_block(s, a, window)?;
    let rho = rhos(&lam)?;
    let spread = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - rho.iter().cloned().fold(f64::INFINITY, f64::min);
    let k_max = (spread / delta).floor() as i64 + 1;
    let mut total = 0.0;
    for k in -k_max..=k_max {
        total += band_sum(s, a, window, k as f64 * delta, (k + 1) as f64 * delta)?;
    }
    Ok((total - full_offdiag(s, a, window)?).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsevalReport {
    pub lhs: f64,
    pub ceiling: f64,
    pub holds: bool,
}

/// `N·(diagonal + full off-diagonal) ≤ Σ_i (a_i − ā)²`, the Frobenius norm
/// of the window block against that of the multiplication operator.
pub fn parseval_ceiling(s: &SpectralData, a: &[f64], window: &WindowSpec) -> Result<ParsevalReport> {
    let c = center(a);
    let (lam, _) = window_block(s, &c, window)?;
    let n = lam.len() as f64;
    let lhs = n * (diagonal_variance(s, a, window)? + full_offdiag(s, &c, window)?);
    let ceiling: f64 = c.iter().map(|v| v * v).sum();
    Ok(ParsevalReport { lhs, ceiling, holds: lhs <= ceiling + 1e-9 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChainReport {
    pub pairs: usize,
    /// `Σ |⟨aψ_j, ψ_k⟩|²` over the band pairs, diagonal included when `|τ| < δ`.
    pub sum: f64,
    /// `‖Π avg Π‖²_HS / inf |den|²`.
    pub majorant: f64,
    pub hs_sq: f64,
    pub min_denominator: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Compare the band sum with the Hilbert–Schmidt norm of the time-averaged
/// conjugation divided by the smallest scalar denominator over the band.
pub fn bound_chain_check(set: &PropagatorSet, a: &[f64], cfg: &QVarConfig, order: usize) -> Result<BoundChainReport> {
    cfg.validate()?;
    let c = center(a);
    let win = (cfg.window.a, cfg.window.b);
    let avg = time_avg_conjugation(set, &c, win, cfg.big_t, cfg.tau, order)?;
    let h = set.hv();
    let (idx, block) = eigen_block(h, &avg, win);
    if idx.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let lam: Vec<f64> = idx.iter().map(|&k| h.eigenvalues()[k]).collect();
    let rho = rhos(&lam)?;
    let n = h.dim();
    let u = h.eigenvectors();
    let ui = DMatrix::from_fn(n, idx.len(), |r, col| u[(r, idx[col])]);
    let mut au = ui.clone();
    for (i, mut row) in au.row_iter_mut().enumerate() {
        row *= c[i];
    }
    let truth = (ui.transpose() * au).transpose();
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut min_den = f64::INFINITY;
    for j in 0..idx.len() {
        for k in 0..idx.len() {
            if (rho[j] - rho[k] - cfg.tau).abs() < cfg.delta {
                let den = kernels::time_avg_pair(lam[k], lam[j], cfg.tau, cfg.big_t)?;
                if den.abs() < 1e-12 {
                    return Err(Error::DenominatorDegenerate { value: den });
                }
                min_den = min_den.min(den.abs());
                sum += truth[(j, k)].powi(2);
                pairs += 1;
            }
        }
    }
    let hs_sq = hs_norm(&block).powi(2);
    let majorant = if pairs == 0 { 0.0 } else { hs_sq / (min_den * min_den) };
    let ratio = if majorant > 0.0 { sum / majorant } else { 0.0 };
    Ok(BoundChainReport {
        pairs,
        sum,
        majorant,
        hs_sq,
        min_denominator: min_den,
        ratio,
        holds: sum <= majorant * (1.0 + 1e-6) + 1e-14,
    })
}

/// One row of the variance CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVarRow {
    pub degree: usize,
    pub genus: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub sum1: f64,
    pub sum2: f64,
    pub sum3: f64,
    pub tau: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub big_t: f64,
    pub potential_kind: String,
    pub seed: u64,
}

/// Sums (1), (2) and (3) for one spectral data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVarReport {
    pub row: QVarRow,
    pub observable: ObservableSpec,
    pub normalization: String,
    pub trusted_upper: f64,
}

pub const NORMALIZATION: &str = "mean zero, sup norm 1";

/// All three sums on a normalized observable.
pub fn qvar_report(s: &SpectralData, a: &[f64], cfg: &QVarConfig, observable: ObservableSpec) -> Result<QVarReport> {
    cfg.validate()?;
    let a = normalize_observable(a);
    let w = &cfg.window;
    let (lam, _) = window_block(s, &a, w)?;
    let row = QVarRow {
        degree: s.meta.degree,
        genus: s.meta.genus,
        n: lam.len(),
        sum1: diagonal_variance(s, &a, w)?,
        sum2: offdiag_variance(s, &a, w, 0.0, cfg.delta)?,
        sum3: offdiag_variance(s, &a, w, cfg.tau, cfg.delta)?,
        tau: cfg.tau,
        delta: cfg.delta,
        big_t: cfg.big_t,
        potential_kind: s.meta.potential_kind.clone(),
        seed: s.meta.seed,
    };
    Ok(QVarReport { row, observable, normalization: NORMALIZATION.into(), trusted_upper: s.meta.trusted_upper })
}

/// Spearman rank correlation with averaged ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Summary of a variance trend across covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub degrees: Vec<usize>,
    pub sum1: Vec<f64>,
    pub spearman: f64,
    /// `max/min` of the diagonal sum over repeated seeds on one surface.
    pub seed_dispersion: f64,
    /// Smallest relative change between consecutive degrees.
    pub min_gap_ratio: f64,
    pub calibrated: bool,
}

pub fn trend_summary(reports: &[QVarReport], repeats: &[QVarReport]) -> Result<TrendSummary> {
    let degrees: Vec<usize> = reports.iter().map(|r| r.row.degree).collect();
    if degrees.len() < 3 || degrees.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("trend needs at least 3 covers of increasing degree".into()));
    }
    if repeats.len() < 2 {
        return Err(Error::InvalidParams("calibration needs at least 2 repeated runs".into()));
    }
    let sum1: Vec<f64> = reports.iter().map(|r| r.row.sum1).collect();
    let x: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    let rep: Vec<f64> = repeats.iter().map(|r| r.row.sum1).collect();
    let (lo, hi) = rep.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let seed_dispersion = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let min_gap_ratio = sum1
        .windows(2)
        .map(|w| w[0].max(w[1]) / w[0].min(w[1]).max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    Ok(TrendSummary {
        spearman: spearman(&x, &sum1),
        degrees,
        sum1,
        seed_dispersion,
        min_gap_ratio,
        calibrated: seed_dispersion <= 2.0,
    })
}

/// The base-surface bump at `i` used by trend experiments.
pub fn default_observable() -> ObservableSpec {
    ObservableSpec::BaseBump { center: [0.0, 1.0], radius: 1.0 }
}
