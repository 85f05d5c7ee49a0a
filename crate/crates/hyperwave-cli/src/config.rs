//! Experiment configuration read from TOML.
//!
//! Every section is optional. `run` executes the spectral stages only when
//! `[sampling]` is present, `qvar` only with `[qvar]` and `mixing` only with
//! `[flow]`; the lemma suite runs unless `verification.enabled = false`.
//! Explicit subcommands fall back to section defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hyperwave::fuchsian::{bolza_group, CoverDescriptor, SurfaceFile};
use hyperwave::geoflow::TOTAL_CAP;
use hyperwave::kernels::WindowSpec;
use hyperwave::lemmas::SUITE;
use hyperwave::qvar::{default_observable, ObservableSpec, DELTA_GRID};
use hyperwave::spectral::{EigenCorrection, EpsilonRule, PotentialSpec, DEFAULT_TRUSTED_FRACTION};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qvar: Option<QVarSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub verification: VerificationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// Surface file; the Bolza surface when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Degrees of the cyclic covers to build.
    #[serde(default = "default_degrees")]
    pub degrees: Vec<usize>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { file: None, degrees: default_degrees() }
    }
}

fn default_degrees() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_pps")]
    pub points_per_sheet: usize,
    #[serde(default)]
    pub epsilon: EpsilonRule,
    #[serde(default)]
    pub correction: EigenCorrection,
    #[serde(default = "default_trusted")]
    pub trusted_fraction: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            points_per_sheet: default_pps(),
            epsilon: EpsilonRule::default(),
            correction: EigenCorrection::default(),
            trusted_fraction: default_trusted(),
        }
    }
}

fn default_pps() -> usize {
    400
}

fn default_trusted() -> f64 {
    DEFAULT_TRUSTED_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<[f64; 2]>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { a: 1.0, b: 25.0, outer: None }
    }
}

impl WindowConfig {
    pub fn spec(&self) -> WindowSpec {
        WindowSpec { a: self.a, b: self.b, outer: self.outer.map(|[a, b]| (a, b)) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QVarSection {
    #[serde(rename = "T", default = "default_big_t")]
    pub big_t: f64,
    #[serde(default = "default_taus")]
    pub tau: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub delta: Vec<f64>,
    #[serde(default = "default_observable")]
    pub observable: ObservableSpec,
    /// Extra seeds on the first degree for the calibration of the trend.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Default for QVarSection {
    fn default() -> Self {
        QVarSection {
            big_t: default_big_t(),
            tau: default_taus(),
            delta: default_deltas(),
            observable: default_observable(),
            repeats: default_repeats(),
        }
    }
}

fn default_big_t() -> f64 {
    10.0
}

fn default_taus() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_deltas() -> Vec<f64> {
    DELTA_GRID.to_vec()
}

fn default_repeats() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub center: [f64; 2],
    #[serde(default)]
    pub sheet: usize,
    pub radius: f64,
}

impl Default for BallConfig {
    fn default() -> Self {
        BallConfig { center: [0.0, 1.0], sheet: 0, radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default)]
    pub f: BallConfig,
    #[serde(default)]
    pub g: BallConfig,
    /// Overrides the spectral estimate of `λ₁`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            samples: default_samples(),
            times: default_times(),
            f: BallConfig::default(),
            g: BallConfig::default(),
            lambda1: None,
        }
    }
}

fn default_samples() -> usize {
    20_000
}

fn default_times() -> Vec<f64> {
    (0..=12).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub only: Vec<String>,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig { enabled: true, only: Vec::new() }
    }
}

fn yes() -> bool {
    true
}

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            let field = e.span().map(|s| locate(&text, s.start)).unwrap_or_default();
            CliError::Config { field, message: e.message().to_string() }
        })?;
        if let Some(file) = &cfg.surface.file {
            if file.is_relative() {
                let dir = path.parent().unwrap_or(Path::new("."));
                cfg.surface.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn sampling(&self) -> SamplingConfig {
        self.sampling.clone().unwrap_or_default()
    }

    pub fn potential(&self) -> PotentialSpec {
        self.potential.clone().unwrap_or(PotentialSpec::Zero)
    }

    pub fn window(&self) -> WindowConfig {
        self.window.clone().unwrap_or_default()
    }

    pub fn qvar(&self) -> QVarSection {
        self.qvar.clone().unwrap_or_default()
    }

    pub fn flow(&self) -> FlowConfig {
        self.flow.clone().unwrap_or_default()
    }

    /// Range checks run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let degrees = &self.surface.degrees;
        if degrees.is_empty() || degrees.contains(&0) {
            return Err(bad("surface.degrees", "degrees must be positive and non-empty"));
        }
        if degrees.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("surface.degrees", "degrees must be strictly increasing"));
        }
        if let Some(file) = &self.surface.file {
            if !file.is_file() {
                return Err(bad("surface.file", format!("{} does not exist", file.display())));
            }
        }

        let s = self.sampling();
        if s.points_per_sheet < 50 {
            return Err(bad("sampling.points_per_sheet", "need at least 50 points per sheet"));
        }
        match s.epsilon {
            EpsilonRule::MedianNn { factor } if !(factor > 0.0 && factor.is_finite()) => {
                return Err(bad("sampling.epsilon.factor", "factor must be positive"));
            }
            EpsilonRule::Fixed { eps } if !(eps > 0.0 && eps.is_finite()) => {
                return Err(bad("sampling.epsilon.eps", "eps must be positive"));
            }
            _ => {}
        }
        if !(s.trusted_fraction > 0.0 && s.trusted_fraction < 1.0) {
            return Err(bad("sampling.trusted_fraction", "must lie in (0, 1)"));
        }

        validate_potential(&self.potential(), "potential")?;

        let w = self.window();
        if !(w.a > 0.25 && w.a.is_finite()) {
            return Err(bad("window.a", format!("a must exceed 1/4, got {}", w.a)));
        }
        if !(w.a < w.b) {
            return Err(bad("window.a", format!("a must be below b, got a = {} and b = {}", w.a, w.b)));
        }
        if !w.b.is_finite() {
            return Err(bad("window.b", "b must be finite"));
        }
        if let Some([ao, bo]) = w.outer {
            if !(ao > 0.25 && ao <= w.a && w.b <= bo && bo.is_finite()) {
                return Err(bad("window.outer", "outer window must contain [a, b] and lie above 1/4"));
            }
        }

        let q = self.qvar();
        if !(q.big_t > 0.0 && q.big_t.is_finite()) {
            return Err(bad("qvar.T", "T must be positive"));
        }
        if q.tau.is_empty() || q.tau.iter().any(|t| !t.is_finite()) {
            return Err(bad("qvar.tau", "tau must be a non-empty list of finite values"));
        }
        if q.delta.is_empty() || q.delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(bad("qvar.delta", "delta must be a non-empty list of positive values"));
        }
        match q.observable {
            ObservableSpec::BaseBump { center, radius } => {
                if !(center[1] > 0.0 && center[0].is_finite()) {
                    return Err(bad("qvar.observable.center", "centre must lie in the upper half plane"));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("qvar.observable.radius", "radius must be positive"));
                }
            }
            ObservableSpec::Constant { c } if !c.is_finite() => {
                return Err(bad("qvar.observable.c", "constant must be finite"));
            }
            _ => {}
        }

        let f = self.flow();
        if f.samples < 100 {
            return Err(bad("flow.samples", "need at least 100 samples"));
        }
        if f.times.is_empty() || f.times.iter().any(|t| !(t.abs() <= TOTAL_CAP)) {
            return Err(bad("flow.times", format!("times must be non-empty with |t| <= {TOTAL_CAP}")));
        }
        for (name, ball) in [("flow.f", &f.f), ("flow.g", &f.g)] {
            if !(ball.center[1] > 0.0 && ball.center[0].is_finite()) {
                return Err(bad(&format!("{name}.center"), "centre must lie in the upper half plane"));
            }
            if !(ball.radius > 0.0 && ball.radius.is_finite()) {
                return Err(bad(&format!("{name}.radius"), "radius must be positive"));
            }
            if ball.sheet >= *degrees.first().unwrap_or(&1) {
                return Err(bad(&format!("{name}.sheet"), "sheet must exist on the first cover"));
            }
        }
        if let Some(l) = f.lambda1 {
            if !(l > 0.0 && l.is_finite()) {
                return Err(bad("flow.lambda1", "lambda1 must be positive"));
            }
        }

        for (i, name) in self.verification.only.iter().enumerate() {
            if !SUITE.contains(&name.as_str()) {
                return Err(bad(
                    &format!("verification.only[{i}]"),
                    format!("unknown check {name:?}; expected one of {}", SUITE.join(", ")),
                ));
            }
        }
        Ok(())
    }

    /// The base surface and the covers named by `surface.degrees`. A
    /// surface file carrying its own cover yields that cover alone.
    pub fn covers(&self) -> Result<Vec<CoverDescriptor>, CliError> {
        let group = match &self.surface.file {
            None => bolza_group(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let file = SurfaceFile::from_json(&text).map_err(|e| bad("surface.file", e.to_string()))?;
                if file.cover.is_some() {
                    let cover = file.cover().map_err(|e| bad("surface.file", e.to_string()))?;
                    if self.surface.degrees != [cover.degree()] && self.surface.degrees != default_degrees() {
                        return Err(bad("surface.degrees", "surface file already fixes the cover"));
                    }
                    return Ok(vec![cover]);
                }
                file.group().map_err(|e| bad("surface.file", e.to_string()))?
            }
        };
        let base = Arc::new(group);
        self.surface
            .degrees
            .iter()
            .map(|&m| {
                if m == 1 {
                    Ok(CoverDescriptor::trivial(base.clone()))
                } else {
                    CoverDescriptor::cyclic(base.clone(), m).map_err(|e| bad("surface.degrees", e.to_string()))
                }
            })
            .collect()
    }
}

fn validate_potential(p: &PotentialSpec, path: &str) -> Result<(), CliError> {
    let finite = |v: f64, name: &str| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(bad(&format!("{path}.{name}"), "must be finite"))
        }
    };
    let positive = |v: f64, name: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(bad(&format!("{path}.{name}"), "must be positive"))
        }
    };
    let upper = |c: [f64; 2], name: &str| {
        if c[1] > 0.0 && c[0].is_finite() && c[1].is_finite() {
            Ok(())
        } else {
            Err(bad(&format!("{path}.{name}"), "centre must lie in the upper half plane"))
        }
    };
    match p {
        PotentialSpec::Zero => Ok(()),
        PotentialSpec::Constant { c } => finite(*c, "c"),
        PotentialSpec::InducedBump { center, radius, height } => {
            upper(*center, "center")?;
            positive(*radius, "radius")?;
            finite(*height, "height")
        }
        PotentialSpec::PointCloud { centers, radius, height } => {
            if centers.is_empty() {
                return Err(bad(&format!("{path}.centers"), "need at least one centre"));
            }
            for (c, _) in centers {
                upper(*c, "centers")?;
            }
            positive(*radius, "radius")?;
            finite(*height, "height")
        }
        PotentialSpec::WeakCoupling { eps, base } => {
            finite(*eps, "eps")?;
            validate_potential(base, &format!("{path}.base"))
        }
        PotentialSpec::ConstantPlusThin { c, w0, threshold } => {
            finite(*c, "c")?;
            finite(*w0, "w0")?;
            positive(*threshold, "threshold")
        }
    }
}

/// Dotted key path of the table entry enclosing byte `offset`.
fn locate(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len();
        if pos > offset {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn empty_config_is_valid() {
        let cfg = parse("");
        cfg.validate().unwrap();
        assert!(cfg.sampling.is_none() && cfg.verification.enabled);
    }

    #[test]
    fn reversed_window_names_a() {
        let cfg = parse("[window]\na = 5.0\nb = 2.0\n");
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "window.a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn potential_sections_parse() {
        let cfg = parse("[potential]\nkind = \"induced_bump\"\ncenter = [0.3, 1.2]\nradius = 0.5\nheight = 1.0\n");
        assert_eq!(cfg.potential().kind(), "induced_bump");
        let cfg = parse("[potential]\nkind = \"induced_bump\"\ncenter = [0.3, 1.2]\nradius = -0.5\nheight = 1.0\n");
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "potential.radius"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_point_at_the_key() {
        let text = "[sampling]\npoints_per_sheet = \"many\"\n";
        let err = toml::from_str::<ExperimentConfig>(text).unwrap_err();
        assert_eq!(locate(text, err.span().unwrap().start), "sampling.points_per_sheet");
    }

    #[test]
    fn unknown_check_is_rejected() {
        let cfg = parse("[verification]\nonly = [\"counting\", \"nope\"]\n");
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "verification.only[1]"),
            other => panic!("{other:?}"),
        }
    }
}
