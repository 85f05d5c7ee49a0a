use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: y must be positive and finite (got x={x}, y={y})")]
    InvalidPoint { x: f64, y: f64 },

    #[error("matrix is not in SL(2,R): det = {det}")]
    NotUnimodular { det: f64 },

    #[error("enumeration radius {radius} exceeds cap {cap}")]
    CapExceeded { radius: f64, cap: f64 },

    #[error("relator does not evaluate to the identity (defect {defect:.3e})")]
    RelatorViolated { defect: f64 },

    #[error("permutation action is not transitive (orbit of sheet 0 has {orbit} of {degree} sheets)")]
    NotTransitive { orbit: usize, degree: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("quadrature failed to reach tolerance (estimate {estimate:.6e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("singular configuration: distance {distance} within 1e-9 of t = {t}")]
    SingularConfiguration { distance: f64, t: f64 },

    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("window upper edge {b} exceeds trusted band {trusted}")]
    WindowUnreliable { b: f64, trusted: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no eigenvalues in window")]
    EmptyWindow,

    #[error("rho undefined for eigenvalue {lambda} <= 1/4")]
    UndefinedRho { lambda: f64 },

    #[error("reconstruction denominator degenerate: {value:.3e}")]
    DenominatorDegenerate { value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
