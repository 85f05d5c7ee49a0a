//! Dense functional calculus: wave propagators, the Duhamel integral,
//! spectral projectors and time-averaged conjugations, all through one
//! cached eigendecomposition per operator.

use std::sync::OnceLock;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels;
use crate::quad::composite_gauss_legendre;

/// Distance from a window edge below which an eigenvalue is flagged.
pub const WINDOW_EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Eigen {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// A real symmetric matrix with a lazily computed, ascending eigensystem.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    matrix: DMatrix<f64>,
    eigen: OnceLock<Eigen>,
}

impl HermitianOperator {
    /// Symmetrizes `m`; rejects non-square input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidParams(format!("operator must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("operator has non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(HermitianOperator { matrix: sym, eigen: OnceLock::new() })
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `U diag(values) Uᵀ` with the eigensystem already known; `values`
    /// must be ascending and `vectors` orthonormal.
    pub fn from_eigen(values: Vec<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let n = values.len();
        if vectors.nrows() != n || vectors.ncols() != n || n == 0 {
            return Err(Error::InvalidParams("eigensystem shape mismatch".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("eigenvalues must be finite and ascending".into()));
        }
        let mut scaled = vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[k];
        }
        let m = scaled * vectors.transpose();
        let matrix = (&m + m.transpose()) * 0.5;
        let eigen = OnceLock::new();
        let _ = eigen.set(Eigen { values: DVector::from_vec(values), vectors });
        Ok(HermitianOperator { matrix, eigen })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn eigen(&self) -> &Eigen {
        self.eigen.get_or_init(|| {
            let se = SymmetricEigen::new(self.matrix.clone());
            let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
            order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
            let n = order.len();
            let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
            let mut vectors = DMatrix::zeros(n, n);
            for (k, &i) in order.iter().enumerate() {
                let mut col = se.eigenvectors.column(i).into_owned();
                // Deterministic sign: largest-magnitude entry positive.
                let imax = col.iamax();
                if col[imax] < 0.0 {
                    col.neg_mut();
                }
                vectors.set_column(k, &col);
            }
            Eigen { values, vectors }
        })
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen().values
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigen().vectors
    }

    /// Largest `‖Hv − λv‖` over the eigenpairs.
    pub fn eigen_residual(&self) -> f64 {
        let e = self.eigen();
        let hv = &self.matrix * &e.vectors;
        (0..self.dim())
            .map(|k| (hv.column(k) - e.vectors.column(k) * e.values[k]).norm())
            .fold(0.0, f64::max)
    }

    /// `f(H) = U f(Λ) Uᵀ`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let e = self.eigen();
        let mut scaled = e.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(e.values[k]);
        }
        scaled * e.vectors.transpose()
    }

    /// Number of eigenvalues strictly below `alpha`.
    pub fn count_below(&self, alpha: f64) -> usize {
        self.eigenvalues().iter().filter(|&&l| l < alpha).count()
    }

    /// Indices of eigenvalues in the closed window `[a, b]`.
    pub fn window_indices(&self, a: f64, b: f64) -> Vec<usize> {
        self.eigenvalues()
            .iter()
            .enumerate()
            .filter(|(_, &l)| a <= l && l <= b)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn shifted(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.dim() {
            return Err(Error::InvalidParams("diagonal length mismatch".into()));
        }
        let mut m = self.matrix.clone();
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] += v;
        }
        Self::new(m)
    }
}

/// Frobenius norm.
pub fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Free,
    Potential,
}

/// Free operator `H₀`, potential `V` and `H_V = H₀ + diag V`.
#[derive(Debug, Clone)]
pub struct PropagatorSet {
    h0: HermitianOperator,
    v: DVector<f64>,
    hv: HermitianOperator,
}

impl PropagatorSet {
    pub fn new(h0: HermitianOperator, v: &[f64]) -> Result<Self> {
        let hv = h0.shifted(v)?;
        Ok(PropagatorSet { h0, v: DVector::from_column_slice(v), hv })
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn hv(&self) -> &HermitianOperator {
        &self.hv
    }

    pub fn potential(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn op(&self, which: Which) -> &HermitianOperator {
        match which {
            Which::Free => &self.h0,
            Which::Potential => &self.hv,
        }
    }

    /// `‖H_V − H₀ − diag V‖`
    pub fn consistency_defect(&self) -> f64 {
        let mut d = self.hv.matrix() - self.h0.matrix();
        for i in 0..self.v.len() {
            d[(i, i)] -= self.v[i];
        }
        d.norm()
    }

    /// Whether every eigenvalue of `H_V` lies in
    /// `[λ_min(H₀) + min V, λ_max(H₀) + max V]`.
    pub fn shift_bounds_hold(&self) -> bool {
        let e0 = self.h0.eigenvalues();
        let ev = self.hv.eigenvalues();
        let lo = e0[0] + self.v.min();
        let hi = e0[e0.len() - 1] + self.v.max();
        let slack = 1e-10 * (1.0 + lo.abs().max(hi.abs()));
        ev.iter().all(|&l| l >= lo - slack && l <= hi + slack)
    }

    /// `P(t) = h(t, H)`.
    pub fn propagate(&self, which: Which, t: f64) -> DMatrix<f64> {
        self.op(which).apply_fn(|l| kernels::h(t, l))
    }

    /// `S(t) = cos(t√(H − ¼))`.
    pub fn cosine_propagate(&self, which: Which, t: f64) -> DMatrix<f64> {
        self.op(which).apply_fn(|l| kernels::cosine(t, l))
    }

    /// `Q_V(t) = ∫₀ᵗ P_V(t₁) V P₀(t − t₁) dt₁` by `order`-point Gauss–Legendre.
    pub fn duhamel_q(&self, t: f64, order: usize) -> Result<DMatrix<f64>> {
        if order < 8 {
            return Err(Error::InvalidParams(format!("quadrature order must be >= 8, got {order}")));
        }
        let n = self.h0.dim();
        let mut q = DMatrix::zeros(n, n);
        if t == 0.0 {
            return Ok(q);
        }
        for (t1, w) in composite_gauss_legendre(0.0, t, order, 1) {
            let pv = self.propagate(Which::Potential, t1);
            let mut p0 = self.propagate(Which::Free, t - t1);
            for (i, mut row) in p0.row_iter_mut().enumerate() {
                row *= self.v[i];
            }
            q += (pv * p0) * w;
        }
        Ok(q)
    }

    /// `‖P_V(t) − P₀(t) + Q_V(t)‖_HS`
    pub fn duhamel_residual(&self, t: f64, order: usize) -> Result<f64> {
        let q = self.duhamel_q(t, order)?;
        Ok(hs_norm(&(self.propagate(Which::Potential, t) - self.propagate(Which::Free, t) + q)))
    }
}

/// An orthogonal spectral projector with its rank and any eigenvalues that
/// sit on a window edge.
#[derive(Debug, Clone)]
pub struct Projector {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub edge_eigenvalues: Vec<f64>,
}

/// `Π_I(H) = 1_I(H)`.
pub fn spectral_projector(h: &HermitianOperator, window: (f64, f64)) -> Projector {
    let (a, b) = window;
    let idx = h.window_indices(a, b);
    let u = h.eigenvectors();
    let n = h.dim();
    let mut matrix = DMatrix::zeros(n, n);
    for &k in &idx {
        let c = u.column(k);
        matrix += &c * c.transpose();
    }
    let edge_eigenvalues: Vec<f64> = h
        .eigenvalues()
        .iter()
        .copied()
        .filter(|l| (l - a).abs() <= WINDOW_EDGE_TOL || (l - b).abs() <= WINDOW_EDGE_TOL)
        .collect();
    for l in &edge_eigenvalues {
        warn!("window edge: eigenvalue {l} within {WINDOW_EDGE_TOL:e} of [{a}, {b}]");
    }
    Projector { matrix, rank: idx.len(), edge_eigenvalues }
}

/// Panels for Gauss–Legendre on `[0, T]` resolving oscillation at `freq`.
fn time_panels(big_t: f64, freq: f64) -> usize {
    ((big_t * freq / std::f64::consts::PI).ceil() as usize).max(1) + 1
}

/// `(1/T)∫₀ᵀ Π_I h̃_τ(t, H_V) a h(t, H_V) Π_I dt` as an `n×n` matrix,
/// integrated at the operator level with composite Gauss–Legendre.
pub fn time_avg_conjugation(
    set: &PropagatorSet,
    a: &[f64],
    window: (f64, f64),
    big_t: f64,
    tau: f64,
    order: usize,
) -> Result<DMatrix<f64>> {
    let h = set.hv();
    let n = h.dim();
    if a.len() != n {
        return Err(Error::InvalidParams("observable length mismatch".into()));
    }
    if !(big_t > 0.0) {
        return Err(Error::InvalidParams(format!("averaging time must be positive, got {big_t}")));
    }
    let idx = h.window_indices(window.0, window.1);
    let mut acc = DMatrix::zeros(n, n);
    if idx.is_empty() {
        return Ok(acc);
    }
    let u = h.eigenvectors();
    let lam = h.eigenvalues();
    let ui = DMatrix::from_fn(n, idx.len(), |r, c| u[(r, idx[c])]);
    let top = idx.iter().map(|&k| (lam[k] - 0.25).abs().sqrt()).fold(0.0, f64::max);
    let panels = time_panels(big_t, 2.0 * top + tau.abs());
    for (t, w) in composite_gauss_legendre(0.0, big_t, order, panels) {
        // Π h(t, H) = U_I diag(h(t, λ_I)) U_Iᵀ
        let mut left = ui.clone();
        let mut right = ui.clone();
        for (c, &k) in idx.iter().enumerate() {
            left.column_mut(c).scale_mut(kernels::h_mod(tau, t, lam[k]));
            right.column_mut(c).scale_mut(kernels::h(t, lam[k]));
        }
        let ptilde = &left * ui.transpose();
        let mut p = &right * ui.transpose();
        for (i, mut row) in p.row_iter_mut().enumerate() {
            row *= a[i];
        }
        acc += (ptilde * p) * w;
    }
    Ok(acc / big_t)
}

/// The window block of `Uᵀ M U`: entry `(j, k)` is `⟨M ψ_j, ψ_k⟩`.
pub fn eigen_block(h: &HermitianOperator, m: &DMatrix<f64>, window: (f64, f64)) -> (Vec<usize>, DMatrix<f64>) {
    let idx = h.window_indices(window.0, window.1);
    let u = h.eigenvectors();
    let n = h.dim();
    let ui = DMatrix::from_fn(n, idx.len(), |r, c| u[(r, idx[c])]);
    let block = ui.transpose() * m * &ui;
    (idx, block.transpose())
}

/// Matrix elements `⟨a ψ_j, ψ_k⟩` for window eigenvectors, in eigen order.
pub fn observable_block(h: &HermitianOperator, a: &[f64], window: (f64, f64)) -> (Vec<usize>, DMatrix<f64>) {
    eigen_block(h, &DMatrix::from_diagonal(&DVector::from_column_slice(a)), window)
}

/// Result of inverting the time-averaged conjugation back to matrix elements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reconstruction {
    pub pairs: usize,
    pub max_error: f64,
    pub min_denominator: f64,
}

/// Divide each window entry of the averaged conjugation by the scalar
/// average `(1/T)∫ h̃_τ(t, λ_k) h(t, λ_j) dt` and compare with `⟨a ψ_j, ψ_k⟩`.
pub fn reconstruct(
    set: &PropagatorSet,
    a: &[f64],
    window: (f64, f64),
    big_t: f64,
    tau: f64,
    order: usize,
) -> Result<Reconstruction> {
    let m = time_avg_conjugation(set, a, window, big_t, tau, order)?;
    let h = set.hv();
    let (idx, block) = eigen_block(h, &m, window);
    let (_, truth) = observable_block(h, a, window);
    let lam = h.eigenvalues();
    let mut out = Reconstruction { pairs: 0, max_error: 0.0, min_denominator: f64::INFINITY };
    for (j, &kj) in idx.iter().enumerate() {
        for (k, &kk) in idx.iter().enumerate() {
            let den = kernels::time_avg_pair(lam[kk], lam[kj], tau, big_t)?;
            out.min_denominator = out.min_denominator.min(den.abs());
            if den.abs() < 1e-12 {
                return Err(Error::DenominatorDegenerate { value: den });
            }
            let rec = block[(j, k)] / den;
            out.max_error = out.max_error.max((rec - truth[(j, k)]).abs());
            out.pairs += 1;
        }
    }
    Ok(out)
}

/// Eigenvalue counts below `alpha` for `H₀ + max V`, `H_V`, `H₀ + min V`.
pub fn sandwich_counts(set: &PropagatorSet, alpha: f64) -> (usize, usize, usize) {
    let e0 = set.h0().eigenvalues();
    let (vmin, vmax) = (set.potential().min(), set.potential().max());
    let upper = e0.iter().filter(|&&l| l + vmax < alpha).count();
    let lower = e0.iter().filter(|&&l| l + vmin < alpha).count();
    (upper, set.hv().count_below(alpha), lower)
}

/// Inputs to the main Hilbert–Schmidt estimate, measured on one instance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HsEstimateInputs {
    pub big_t: f64,
    pub beta1: f64,
    pub a_l2_sq: f64,
    pub a_sup: f64,
    pub thin_volume: f64,
    pub v_sup: f64,
    pub v_l2_sq: f64,
    pub r: f64,
    pub window_min: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HsEstimateReport {
    pub lhs: f64,
    pub mixing_term: f64,
    pub thin_term: f64,
    pub potential_term: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// `C = 1408e`
pub const HS_MIXING_CONSTANT: f64 = 1408.0 * std::f64::consts::E;

/// Compare `lhs = ‖∫₀ᵀ Π P̃ a P Π dt‖²_HS` with the three-term majorant.
pub fn main_hs_estimate(lhs: f64, x: &HsEstimateInputs) -> HsEstimateReport {
    let t = x.big_t;
    let ci = (200.0 * std::f64::consts::PI * 1f64.max(1.0 / (x.window_min - 0.25))).powi(2);
    let mixing_term = HS_MIXING_CONSTANT * t / x.beta1.powi(3) * x.a_l2_sq;
    let thin_term = 16.0 * std::f64::consts::PI * t.powi(3) * x.a_sup.powi(2) * x.thin_volume;
    let potential_term = ci
        * t.powi(7)
        * 1f64.max(x.v_sup.powi(4))
        * x.a_sup.powi(2)
        * ((4.0 * t + 0.5).exp() * x.thin_volume / (x.r * x.r) + x.v_l2_sq);
    let rhs = mixing_term + thin_term + potential_term;
    HsEstimateReport { lhs, mixing_term, thin_term, potential_term, rhs, ratio: lhs / rhs, holds: lhs <= rhs }
}

/// Time-integrated conjugation `∫₀ᵀ Π P̃ a P Π dt` squared HS norm from the
/// averaged matrix.
pub fn integrated_hs_sq(avg: &DMatrix<f64>, big_t: f64) -> f64 {
    let n = hs_norm(avg) * big_t;
    n * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_propagators() {
        let h0 = HermitianOperator::from_diagonal(&[1.25]).unwrap();
        let set = PropagatorSet::new(h0, &[0.0]).unwrap();
        assert_abs_diff_eq!(set.propagate(Which::Free, std::f64::consts::FRAC_PI_2)[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(set.cosine_propagate(Which::Free, std::f64::consts::PI)[(0, 0)], -1.0, epsilon = 1e-15);
        assert_eq!(set.propagate(Which::Free, 0.0)[(0, 0)], 0.0);
    }

    #[test]
    fn projector_on_diagonal() {
        let h = HermitianOperator::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let p = spectral_projector(&h, (1.5, 2.5));
        assert_eq!(p.rank, 1);
        assert_abs_diff_eq!(p.matrix[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.matrix.sum(), 1.0, epsilon = 1e-15);
        let q = spectral_projector(&h, (1.0, 2.5));
        assert_eq!(q.edge_eigenvalues, vec![1.0]);
    }
}
