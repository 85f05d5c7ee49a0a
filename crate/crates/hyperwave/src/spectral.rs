//! Point-cloud discretization of `−Δ_X + V` on a finite cover.
//!
//! Points are a low-discrepancy sample of the base Dirichlet domain copied to
//! every sheet, so each carries the quadrature weight `Vol(X)/N`. The
//! Laplacian is a heat-kernel graph Laplacian on quotient distances,
//! normalized by the flat second moment of its truncated Gaussian kernel.
//! Its eigenvalues can optionally be pulled back through the kernel's
//! spherical transform on ℍ, which removes the leading bandwidth bias while
//! keeping the eigenvectors.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuchsian::{CoverDescriptor, SurfacePoint};
use crate::hypgeo::{dist, HPoint};
use crate::kernels::WindowSpec;
use crate::opcalc::HermitianOperator;
use crate::quad::{adaptive_gk, composite_gauss_legendre};
use crate::Estimate;

/// Default fraction of the discrete spectrum treated as reliable.
pub const DEFAULT_TRUSTED_FRACTION: f64 = 0.1;

/// Kernel support radius in units of `√ε`.
pub const CUTOFF_SIGMAS: f64 = 6.0;

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    inv = r;
    inv
}

/// Quasi-uniform sample of the cover with sparse quotient distances.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    cover: Arc<CoverDescriptor>,
    points: Vec<SurfacePoint>,
    points_per_sheet: usize,
    seed: u64,
    candidates: usize,
    cutoff: f64,
    edges: Vec<(usize, usize, f64)>,
}

/// Draw `points_per_sheet` points in the base domain from a shifted Halton
/// sequence and copy them to every sheet; distances are kept up to `cutoff`.
pub fn sample_surface(
    cover: Arc<CoverDescriptor>,
    points_per_sheet: usize,
    seed: u64,
    cutoff: f64,
) -> Result<SurfaceSample> {
    if points_per_sheet < 50 {
        return Err(Error::InvalidParams(format!("points_per_sheet must be >= 50, got {points_per_sheet}")));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidParams(format!("distance cutoff must be positive, got {cutoff}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: (f64, f64) = (rng.random(), rng.random());
    let base = cover.base();
    let mut base_points = Vec::with_capacity(points_per_sheet);
    let mut k: u64 = 1;
    while base_points.len() < points_per_sheet {
        let u = (radical_inverse(k, 2) + shift.0).fract();
        let v = (radical_inverse(k, 3) + shift.1).fract();
        k += 1;
        let z = base.disc_point(u, v);
        if base.dirichlet_contains(z) {
            base_points.push(z);
        }
    }
    let candidates = (k - 1) as usize;
    let m = cover.degree();
    let points: Vec<SurfacePoint> = (0..m)
        .flat_map(|s| base_points.iter().map(move |&z| SurfacePoint::new(z, s)))
        .collect();
    let edges = cover.pair_distances(&points, cutoff)?;
    Ok(SurfaceSample { cover, points, points_per_sheet, seed, candidates, cutoff, edges })
}

/// Sample and then widen the distance cutoff to what the rule's kernel needs.
pub fn sample_for_rule(
    cover: Arc<CoverDescriptor>,
    points_per_sheet: usize,
    seed: u64,
    rule: &EpsilonRule,
) -> Result<SurfaceSample> {
    let spacing = (cover.base().area() / points_per_sheet.max(1) as f64).sqrt();
    let probe = match *rule {
        EpsilonRule::Fixed { eps } if eps > 0.0 => CUTOFF_SIGMAS * eps.sqrt(),
        _ => 3.0 * spacing,
    };
    let sample = sample_surface(cover, points_per_sheet, seed, probe)?;
    let eps = rule.epsilon(&sample)?;
    let need = CUTOFF_SIGMAS * eps.sqrt();
    if need > sample.cutoff() {
        sample.with_cutoff(need)
    } else {
        Ok(sample)
    }
}

impl SurfaceSample {
    /// Rebuild a sample from stored points, recomputing distances.
    pub fn from_points(
        cover: Arc<CoverDescriptor>,
        points: Vec<SurfacePoint>,
        seed: u64,
        candidates: usize,
        cutoff: f64,
    ) -> Result<Self> {
        let m = cover.degree();
        if points.is_empty() || points.len() % m != 0 || points.iter().any(|p| p.sheet >= m) {
            return Err(Error::InvalidParams("stored points do not fill every sheet equally".into()));
        }
        let points_per_sheet = points.len() / m;
        if candidates < points_per_sheet {
            return Err(Error::InvalidParams("candidate count below the number of accepted points".into()));
        }
        let edges = cover.pair_distances(&points, cutoff)?;
        Ok(SurfaceSample { cover, points, points_per_sheet, seed, candidates, cutoff, edges })
    }

    /// Number of Halton candidates drawn to accept the base points.
    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn cover(&self) -> &CoverDescriptor {
        &self.cover
    }

    pub fn cover_arc(&self) -> Arc<CoverDescriptor> {
        self.cover.clone()
    }

    pub fn points(&self) -> &[SurfacePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_per_sheet(&self) -> usize {
        self.points_per_sheet
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Sparse distances `(i, j, d)` with `i < j` and `d ≤ cutoff`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn volume(&self) -> f64 {
        self.cover.volume()
    }

    /// Quadrature weight `Vol(X)/N`.
    pub fn weight(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Base-domain area implied by the rejection rate, with its binomial error.
    pub fn domain_area_estimate(&self) -> Estimate {
        let p = self.points_per_sheet as f64 / self.candidates as f64;
        let disc = self.cover.base().disc_area();
        Estimate { value: disc * p, stderr: disc * (p * (1.0 - p) / self.candidates as f64).sqrt() }
    }

    /// Recompute distances with a larger cutoff.
    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        if cutoff != self.cutoff {
            self.edges = self.cover.pair_distances(&self.points, cutoff)?;
            self.cutoff = cutoff;
        }
        Ok(self)
    }

    /// Median over points of the nearest-neighbour distance (`+∞` if a
    /// point has no neighbour within the cutoff).
    pub fn median_nn_distance(&self) -> f64 {
        let mut nn = vec![f64::INFINITY; self.len()];
        for &(i, j, d) in &self.edges {
            nn[i] = nn[i].min(d);
            nn[j] = nn[j].min(d);
        }
        nn.sort_by(f64::total_cmp);
        nn[nn.len() / 2]
    }

    /// Surface mean `(1/N) Σ f(x_i)`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    /// Whether `InjRad(x_i) ≤ threshold` for each point.
    pub fn thin_mask(&self, threshold: f64) -> Result<Vec<bool>> {
        let big_r = self.cover.base().domain_radius();
        let hood = self.cover.neighborhood(2.0 * big_r + 2.0 * threshold)?;
        Ok(self
            .points
            .iter()
            .map(|p| {
                hood.iter().any(|(g, s)| {
                    g.identity_defect() > 1e-7
                        && s.apply(p.sheet) == p.sheet
                        && dist(p.z, g.apply(p.z)) <= 2.0 * threshold
                })
            })
            .collect())
    }
}

/// How the kernel bandwidth `ε` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `ε = factor · (median nearest-neighbour distance)²`
    MedianNn { factor: f64 },
    Fixed { eps: f64 },
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::MedianNn { factor: 4.0 }
    }
}

impl EpsilonRule {
    pub fn epsilon(&self, sample: &SurfaceSample) -> Result<f64> {
        let eps = match *self {
            EpsilonRule::MedianNn { factor } => {
                let nn = sample.median_nn_distance();
                if !nn.is_finite() {
                    return Err(Error::InvalidParams(
                        "sample cutoff too small to see nearest neighbours".into(),
                    ));
                }
                factor * nn * nn
            }
            EpsilonRule::Fixed { eps } => eps,
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParams(format!("epsilon must be positive, got {eps}")));
        }
        Ok(eps)
    }
}

/// Whether graph eigenvalues are pulled back through the kernel's spherical
/// transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenCorrection {
    None,
    #[default]
    Spherical,
}

/// The graph Laplacian together with its bandwidth.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub operator: HermitianOperator,
    pub eps: f64,
    pub kernel_cutoff: f64,
    pub correction: EigenCorrection,
}

/// `(1 − (1 + U)e^{−U})`, the share of the Gaussian second moment inside
/// the cutoff with `U = cutoff²/(4ε)`.
fn moment_factor(eps: f64, cutoff: f64) -> f64 {
    let u = cutoff * cutoff / (4.0 * eps);
    1.0 - (1.0 + u) * (-u).exp()
}

/// Heat-kernel graph Laplacian `w(D − W)/(4πε²·m)` on the sample.
pub fn graph_laplacian(sample: &SurfaceSample, eps: f64) -> Result<(DMatrix<f64>, f64)> {
    let cutoff = CUTOFF_SIGMAS * eps.sqrt();
    if cutoff > sample.cutoff() * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "kernel support {cutoff} exceeds sampled distance cutoff {}",
            sample.cutoff()
        )));
    }
    let n = sample.len();
    let scale = sample.weight() / (4.0 * PI * eps * eps * moment_factor(eps, cutoff));
    let mut l = DMatrix::zeros(n, n);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, d) in sample.edges() {
        if d > cutoff {
            continue;
        }
        let w = scale * (-d * d / (4.0 * eps)).exp();
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
        adj[i].push(j);
        adj[j].push(i);
    }
    let components = count_components(&adj);
    if components != 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    Ok((l, cutoff))
}

fn count_components(adj: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

/// Spherical function `φ_λ(ρ) = (1/π)∫₀^π (cosh ρ − sinh ρ cos θ)^{−s} dθ`
/// with `s(1 − s) = λ`, real for every real `λ`.
pub fn spherical_function(lambda: f64, rho: f64) -> f64 {
    let nodes = composite_gauss_legendre(0.0, PI, 24, 4);
    let (ch, sh) = (rho.cosh(), rho.sinh());
    let mu = lambda - 0.25;
    let sum: f64 = nodes
        .iter()
        .map(|&(th, w)| {
            let x = ch - sh * th.cos();
            let lx = x.ln();
            let v = if mu >= 0.0 {
                (-0.5 * lx).exp() * (mu.sqrt() * lx).cos()
            } else {
                let s = 0.5 + (-mu).sqrt();
                0.5 * ((-s * lx).exp() + (-(1.0 - s) * lx).exp())
            };
            w * v
        })
        .sum();
    sum / PI
}

/// Continuum symbol of the normalized graph Laplacian:
/// `M(λ) = (2π/c)∫₀^R e^{−ρ²/4ε}(1 − φ_λ(ρ)) sinh ρ dρ`.
pub fn kernel_symbol(lambda: f64, eps: f64, cutoff: f64) -> f64 {
    let c = 4.0 * PI * eps * eps * moment_factor(eps, cutoff);
    let nodes = composite_gauss_legendre(0.0, cutoff, 24, 4);
    let s: f64 = nodes
        .iter()
        .map(|&(r, w)| w * (-r * r / (4.0 * eps)).exp() * (1.0 - spherical_function(lambda, r)) * r.sinh())
        .sum();
    TAU * s / c
}

/// Monotone inverse of [`kernel_symbol`] by table lookup; values above the
/// symbol's range map to the top of the table.
#[derive(Debug, Clone)]
pub struct SymbolInverse {
    lambdas: Vec<f64>,
    symbols: Vec<f64>,
}

impl SymbolInverse {
    pub fn new(eps: f64, cutoff: f64) -> Self {
        let top = (40.0 / eps).sqrt();
        let n = 1500;
        let mut lambdas = Vec::with_capacity(n + 1);
        let mut symbols = Vec::with_capacity(n + 1);
        let mut best = 0.0f64;
        for k in 0..=n {
            let s = top * k as f64 / n as f64;
            let lam = s * s;
            let m = if k == 0 { 0.0 } else { kernel_symbol(lam, eps, cutoff) };
            if k > 0 && m <= best {
                break;
            }
            best = m;
            lambdas.push(lam);
            symbols.push(m);
        }
        SymbolInverse { lambdas, symbols }
    }

    pub fn invert(&self, mu: f64) -> f64 {
        if mu <= 0.0 {
            return mu;
        }
        let k = self.symbols.partition_point(|&m| m < mu);
        if k >= self.symbols.len() {
            return *self.lambdas.last().expect("table is non-empty");
        }
        let (m0, m1) = (self.symbols[k - 1], self.symbols[k]);
        let (l0, l1) = (self.lambdas[k - 1], self.lambdas[k]);
        l0 + (l1 - l0) * (mu - m0) / (m1 - m0)
    }

    /// Largest symbol value the table resolves.
    pub fn range(&self) -> f64 {
        *self.symbols.last().expect("table is non-empty")
    }
}

/// Assemble the free operator `H₀` on the sample.
pub fn assemble_free(sample: &SurfaceSample, rule: EpsilonRule, correction: EigenCorrection) -> Result<Discretization> {
    let eps = rule.epsilon(sample)?;
    let (l, kernel_cutoff) = graph_laplacian(sample, eps)?;
    let graph = HermitianOperator::new(l)?;
    let operator = match correction {
        EigenCorrection::None => graph,
        EigenCorrection::Spherical => {
            let inv = SymbolInverse::new(eps, kernel_cutoff);
            let values: Vec<f64> = graph.eigenvalues().iter().map(|&mu| inv.invert(mu)).collect();
            HermitianOperator::from_eigen(values, graph.eigenvectors().clone())?
        }
    };
    Ok(Discretization { operator, eps, kernel_cutoff, correction })
}

/// `H_V = H₀ + diag V`.
pub fn assemble_operator(free: &Discretization, v: &Potential) -> Result<HermitianOperator> {
    free.operator.shifted(&v.values)
}

/// Potential families on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant { c: f64 },
    /// One compactly supported bump placed on sheet 0, the same on every cover.
    InducedBump { center: [f64; 2], radius: f64, height: f64 },
    /// Bumps at separated surface points.
    PointCloud { centers: Vec<([f64; 2], usize)>, radius: f64, height: f64 },
    /// `ε · base`
    WeakCoupling { eps: f64, base: Box<PotentialSpec> },
    /// `c + w0 · 1{InjRad ≤ threshold}`
    ConstantPlusThin { c: f64, w0: f64, threshold: f64 },
}

impl PotentialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::Constant { .. } => "constant",
            PotentialSpec::InducedBump { .. } => "induced_bump",
            PotentialSpec::PointCloud { .. } => "point_cloud",
            PotentialSpec::WeakCoupling { .. } => "weak_coupling",
            PotentialSpec::ConstantPlusThin { .. } => "constant_plus_thin",
        }
    }
}

/// A potential evaluated on a sample with its recorded bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potential {
    pub spec: PotentialSpec,
    pub values: Vec<f64>,
    pub c_min: f64,
    pub c_max: f64,
    /// `‖V‖²_{L²}` from the sample, with a Monte Carlo standard error.
    pub l2_sq: Estimate,
}

impl Potential {
    pub fn zero(n: usize) -> Self {
        Potential {
            spec: PotentialSpec::Zero,
            values: vec![0.0; n],
            c_min: 0.0,
            c_max: 0.0,
            l2_sq: Estimate { value: 0.0, stderr: 0.0 },
        }
    }

    pub fn sup(&self) -> f64 {
        self.c_min.abs().max(self.c_max.abs())
    }
}

/// `(1 − (r/ρ)²)²` inside the unit bump.
pub fn bump_profile(r: f64, radius: f64) -> f64 {
    if r >= radius {
        0.0
    } else {
        let u = r / radius;
        (1.0 - u * u).powi(2)
    }
}

/// `∫_ℍ bump² dA` for a bump of height 1.
pub fn bump_l2_sq(radius: f64) -> Result<f64> {
    adaptive_gk(|r| TAU * bump_profile(r, radius).powi(2) * r.sinh(), 0.0, radius, 4, 1e-15, 1e-12, 1000)
}

fn point(c: [f64; 2]) -> Result<HPoint> {
    HPoint::new(c[0], c[1])
}

/// Evaluate a potential family on the sample.
pub fn make_potential(spec: &PotentialSpec, sample: &SurfaceSample) -> Result<Potential> {
    let (values, c_min, c_max) = evaluate(spec, sample)?;
    let w = sample.weight();
    let n = values.len() as f64;
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let l2_sq = Estimate { value: w * sq.iter().sum::<f64>(), stderr: sample.volume() * (var / n).sqrt() };
    Ok(Potential { spec: spec.clone(), values, c_min, c_max, l2_sq })
}

fn evaluate(spec: &PotentialSpec, sample: &SurfaceSample) -> Result<(Vec<f64>, f64, f64)> {
    let n = sample.len();
    let cover = sample.cover();
    match spec {
        PotentialSpec::Zero => Ok((vec![0.0; n], 0.0, 0.0)),
        PotentialSpec::Constant { c } => Ok((vec![*c; n], *c, *c)),
        PotentialSpec::InducedBump { center, radius, height } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidParams("bump radius must be positive".into()));
            }
            let (c, _, _) = cover.reduce(SurfacePoint::new(point(*center)?, 0));
            let inj = cover.injectivity_radius(c)?;
            if *radius >= inj {
                return Err(Error::InvalidParams(format!(
                    "bump radius {radius} must be below the injectivity radius {inj} at its centre"
                )));
            }
            let values = bump_values(sample, &[c], *radius, *height)?;
            Ok((values, height.min(0.0), height.max(0.0)))
        }
        PotentialSpec::PointCloud { centers, radius, height } => {
            if centers.is_empty() || !(*radius > 0.0) {
                return Err(Error::InvalidParams("point cloud needs centres and a positive radius".into()));
            }
            let mut pts = Vec::with_capacity(centers.len());
            for &(c, sheet) in centers {
                if sheet >= cover.degree() {
                    return Err(Error::InvalidParams(format!("sheet {sheet} out of range")));
                }
                let (p, _, _) = cover.reduce(SurfacePoint::new(point(c)?, sheet));
                let inj = cover.injectivity_radius(p)?;
                if *radius >= inj {
                    return Err(Error::InvalidParams(format!(
                        "bump radius {radius} must be below the injectivity radius {inj}"
                    )));
                }
                pts.push(p);
            }
            for i in 0..pts.len() {
                for j in 0..i {
                    let d = cover.quotient_dist(pts[i], pts[j], 2.0 * radius)?;
                    if d <= 2.0 * radius {
                        return Err(Error::InvalidParams(format!(
                            "centres {j} and {i} are {d} apart, need more than {}",
                            2.0 * radius
                        )));
                    }
                }
            }
            let values = bump_values(sample, &pts, *radius, *height)?;
            Ok((values, height.min(0.0), height.max(0.0)))
        }
        PotentialSpec::WeakCoupling { eps, base } => {
            let (values, lo, hi) = evaluate(base, sample)?;
            let values = values.into_iter().map(|v| eps * v).collect();
            let (a, b) = (eps * lo, eps * hi);
            Ok((values, a.min(b), a.max(b)))
        }
        PotentialSpec::ConstantPlusThin { c, w0, threshold } => {
            let mask = sample.thin_mask(*threshold)?;
            let values = mask.iter().map(|&t| c + if t { *w0 } else { 0.0 }).collect();
            Ok((values, c + w0.min(0.0), c + w0.max(0.0)))
        }
    }
}

fn bump_values(sample: &SurfaceSample, centers: &[SurfacePoint], radius: f64, height: f64) -> Result<Vec<f64>> {
    let cover = sample.cover();
    sample
        .points()
        .iter()
        .map(|&p| {
            let mut v = 0.0;
            for &c in centers {
                let d = cover.quotient_dist(p, c, radius)?;
                v += height * bump_profile(d, radius);
            }
            Ok(v)
        })
        .collect()
}

/// Metadata carried with every spectral export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationMeta {
    pub points: usize,
    pub degree: usize,
    pub genus: usize,
    pub volume: f64,
    pub weight: f64,
    pub eps: f64,
    pub kernel_cutoff: f64,
    pub correction: EigenCorrection,
    pub seed: u64,
    pub potential_kind: String,
    pub trusted_fraction: f64,
    pub trusted_upper: f64,
}

/// Eigenpairs of `H_V` in a window. Eigenvectors are stored in orthonormal
/// coordinates `v_j`; function values are `ψ_j(x_i) = v_j(i)/√w`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub window: (f64, f64),
    pub meta: DiscretizationMeta,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `ρ_j = √(λ_j − ¼)`, `None` at or below `¼`.
    pub fn rho(&self) -> Vec<Option<f64>> {
        self.eigenvalues.iter().map(|&l| (l > 0.25).then(|| (l - 0.25).sqrt())).collect()
    }

    pub fn below_quarter(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l <= 0.25).count()
    }

    /// Eigenfunction values `ψ_j(x_i)`, one column per eigenvalue.
    pub fn psi(&self) -> DMatrix<f64> {
        &self.vectors / self.meta.weight.sqrt()
    }

    /// `max |⟨ψ_j, ψ_k⟩ − δ_jk|` under the discrete measure.
    pub fn gram_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let k = g.nrows();
        (g - DMatrix::identity(k, k)).amax()
    }

    /// Matrix elements `⟨a ψ_j, ψ_k⟩`; entry `(j, k)`.
    pub fn matrix_elements(&self, a: &[f64]) -> DMatrix<f64> {
        let mut av = self.vectors.clone();
        for (i, mut row) in av.row_iter_mut().enumerate() {
            row *= a[i];
        }
        self.vectors.transpose() * av
    }

    /// Write `<stem>.json` and, when requested, the `<stem>.f64` sidecar.
    pub fn export(&self, dir: &Path, stem: &str, with_vectors: bool) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let vectors = if with_vectors {
            let path = dir.join(format!("{stem}.f64"));
            let mut bytes = Vec::with_capacity(8 * self.vectors.len());
            for i in 0..self.vectors.nrows() {
                for j in 0..self.vectors.ncols() {
                    bytes.extend_from_slice(&self.vectors[(i, j)].to_le_bytes());
                }
            }
            fs::File::create(&path).and_then(|mut f| f.write_all(&bytes)).map_err(io_err)?;
            written.push(path);
            Some(VectorSidecar {
                path: format!("{stem}.f64"),
                rows: self.vectors.nrows(),
                cols: self.vectors.ncols(),
                layout: "row-major f64 little-endian".into(),
            })
        } else {
            None
        };
        let doc = SpectralFile {
            eigenvalues: self.eigenvalues.clone(),
            rho: self.rho(),
            window: self.window,
            meta: self.meta.clone(),
            vectors,
        };
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidParams(e.to_string()))?;
        fs::write(&path, text).map_err(io_err)?;
        written.insert(0, path);
        Ok(written)
    }

    /// Read an export back; eigenvectors are required.
    pub fn import(json_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(json_path).map_err(io_err)?;
        let doc: SpectralFile = serde_json::from_str(&text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let side = doc
            .vectors
            .ok_or_else(|| Error::InvalidParams("spectral file has no eigenvector sidecar".into()))?;
        let dir = json_path.parent().unwrap_or(Path::new("."));
        let mut bytes = Vec::new();
        fs::File::open(dir.join(&side.path)).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err)?;
        if bytes.len() != 8 * side.rows * side.cols {
            return Err(Error::InvalidParams("eigenvector sidecar has the wrong size".into()));
        }
        let vals: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let vectors = DMatrix::from_row_slice(side.rows, side.cols, &vals);
        Ok(SpectralData { eigenvalues: doc.eigenvalues, vectors, window: doc.window, meta: doc.meta })
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidParams(format!("i/o: {e}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorSidecar {
    path: String,
    rows: usize,
    cols: usize,
    layout: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectralFile {
    eigenvalues: Vec<f64>,
    rho: Vec<Option<f64>>,
    window: (f64, f64),
    meta: DiscretizationMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectors: Option<VectorSidecar>,
}

/// Upper edge of the reliable band: the eigenvalue at `fraction` of the modes.
pub fn trusted_upper(h: &HermitianOperator, fraction: f64) -> f64 {
    let ev = h.eigenvalues();
    let k = ((fraction * ev.len() as f64).ceil() as usize).clamp(1, ev.len());
    ev[k - 1]
}

/// All eigenpairs with `λ ∈ [lo, hi]`; `WindowUnreliable` if `hi` exceeds
/// the trusted band.
pub fn solve_window(h: &HermitianOperator, window: (f64, f64), meta: DiscretizationMeta) -> Result<SpectralData> {
    if window.1 > meta.trusted_upper {
        return Err(Error::WindowUnreliable { b: window.1, trusted: meta.trusted_upper });
    }
    let idx = h.window_indices(window.0, window.1);
    let u = h.eigenvectors();
    let vectors = DMatrix::from_fn(h.dim(), idx.len(), |r, c| u[(r, idx[c])]);
    let eigenvalues = idx.iter().map(|&k| h.eigenvalues()[k]).collect();
    Ok(SpectralData { eigenvalues, vectors, window, meta })
}

/// `(1/2π)∫ tanh(πr) r dr` over `r ∈ [√(a−¼), √(b−¼)]`, the Weyl density of
/// eigenvalues per unit area in `[a, b]`.
pub fn weyl_density(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.25 && b >= a) {
        return Err(Error::InvalidParams(format!("Weyl density needs 1/4 < a <= b, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi) = ((a - 0.25).sqrt(), (b - 0.25).sqrt());
    let v = adaptive_gk(|r| (PI * r).tanh() * r, lo, hi, 4, 1e-15, 1e-12, 10_000)?;
    Ok(v / TAU)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CountingReport {
    pub count_hv: usize,
    pub count_h0_shrunk: usize,
    pub shrunk_window: (f64, f64),
    pub holds: bool,
}

/// `N(H_V, [a,b]) ≥ N(H₀, [a − min(0, C_min), b − C_max])`.
pub fn counting_lower_bound_check(
    h0_eigenvalues: &[f64],
    hv_eigenvalues: &[f64],
    window: &WindowSpec,
    c_min: f64,
    c_max: f64,
) -> Result<CountingReport> {
    let lo = window.a - c_min.min(0.0);
    let hi = window.b - c_max;
    if !(hi > lo) {
        return Err(Error::HypothesisViolated(format!(
            "b - C_max = {hi} must exceed a - min(0, C_min) = {lo}"
        )));
    }
    let count = |ev: &[f64], a: f64, b: f64| ev.iter().filter(|&&l| a <= l && l <= b).count();
    let count_hv = count(hv_eigenvalues, window.a, window.b);
    let count_h0_shrunk = count(h0_eigenvalues, lo, hi);
    Ok(CountingReport { count_hv, count_h0_shrunk, shrunk_window: (lo, hi), holds: count_hv >= count_h0_shrunk })
}

/// Eigenvalues of `H₀` as a plain vector.
pub fn eigenvalue_vec(h: &HermitianOperator) -> Vec<f64> {
    h.eigenvalues().iter().copied().collect()
}

/// `Vol{InjRad ≤ threshold}` estimated from the sample.
pub fn thin_volume(sample: &SurfaceSample, threshold: f64) -> Result<f64> {
    let mask = sample.thin_mask(threshold)?;
    Ok(sample.weight() * mask.iter().filter(|&&b| b).count() as f64)
}

/// Dense vector helper.
pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
