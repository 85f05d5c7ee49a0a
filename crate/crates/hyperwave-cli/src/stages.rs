//! Pipeline stages. Each stage reads the artifacts of the previous one from
//! the output directory and returns the assertion failures it found.

use std::sync::Arc;

use hyperwave::fuchsian::{CoverDescriptor, SurfaceFile, SurfacePoint};
use hyperwave::geoflow::{decay_slope, mixing_table, BallIndicator, MixingParams, MixingRow};
use hyperwave::hypgeo::HPoint;
use hyperwave::lemmas::{run_suite, Kind, LemmaOutcome};
use hyperwave::qvar::{
    band_decomposition_defect, observable_values, parseval_ceiling, qvar_report, trend_summary, ParsevalReport,
    QVarConfig, QVarReport, QVarRow, TrendSummary,
};
use hyperwave::spectral::{
    assemble_free, assemble_operator, counting_lower_bound_check, eigenvalue_vec, make_potential, sample_for_rule,
    solve_window, trusted_upper, weyl_density, CountingReport, DiscretizationMeta, EigenCorrection, EpsilonRule,
    SpectralData, SurfaceSample,
};
use hyperwave::Estimate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{LatticeCache, OutDir};
use crate::config::{BallConfig, ExperimentConfig};
use crate::error::{CliError, InModule};

/// Tolerance for the Parseval and band identities.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Assertion failures collected over stages.
#[derive(Debug, Default)]
pub struct Failures(pub Vec<String>);

impl Failures {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }
}

/// One sampled surface: the primary seed on every degree plus the repeated
/// seeds on the first degree.
#[derive(Debug, Clone)]
pub struct RunId {
    pub degree: usize,
    pub seed: u64,
    pub stem: String,
    pub repeat: bool,
}

pub fn runs(cfg: &ExperimentConfig, covers: &[CoverDescriptor]) -> Vec<RunId> {
    let mut out: Vec<RunId> = covers
        .iter()
        .map(|c| RunId { degree: c.degree(), seed: cfg.seed, stem: format!("d{}", c.degree()), repeat: false })
        .collect();
    if let Some(first) = covers.first() {
        let m = first.degree();
        for k in 1..=cfg.qvar().repeats as u64 {
            out.push(RunId { degree: m, seed: cfg.seed + k, stem: format!("d{m}_r{k}"), repeat: true });
        }
    }
    out
}

fn cover_name(m: usize) -> String {
    format!("cover_d{m}.json")
}

fn load_cover(out: &OutDir, m: usize) -> Result<Arc<CoverDescriptor>, CliError> {
    let name = cover_name(m);
    let file: SurfaceFile = out.read_json(&name)?;
    let cover = file.cover().map_err(|e| CliError::bad_artifact(&out.path(&name), e))?;
    if cover.degree() != m {
        return Err(CliError::bad_artifact(&out.path(&name), format!("expected degree {m}")));
    }
    Ok(Arc::new(cover))
}

pub fn build_cover(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    for cover in cfg.covers()? {
        let path = out.write_json(&cover_name(cover.degree()), &SurfaceFile::from_cover(&cover))?;
        println!("cover degree {} genus {} -> {}", cover.degree(), cover.genus(), path.display());
    }
    Ok(Failures::default())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleFile {
    pub degree: usize,
    pub seed: u64,
    pub points_per_sheet: usize,
    pub candidates: usize,
    pub cutoff: f64,
    pub epsilon: EpsilonRule,
    pub points: Vec<SurfacePoint>,
}

pub fn sample(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let s = cfg.sampling();
    let cache = LatticeCache::from_env();
    let covers = cfg.covers()?;
    let ids = runs(cfg, &covers);
    let mut loaded = Vec::new();
    for c in &covers {
        let cover = load_cover(out, c.degree())?;
        cache.load(&cover)?;
        loaded.push(cover);
    }
    let files: Vec<SampleFile> = ids
        .par_iter()
        .map(|id| {
            let cover = loaded.iter().find(|c| c.degree() == id.degree).expect("cover per run").clone();
            let sample = sample_for_rule(cover, s.points_per_sheet, id.seed, &s.epsilon).in_module("spectral")?;
            Ok(SampleFile {
                degree: id.degree,
                seed: id.seed,
                points_per_sheet: sample.points_per_sheet(),
                candidates: sample.candidates(),
                cutoff: sample.cutoff(),
                epsilon: s.epsilon,
                points: sample.points().to_vec(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    for (id, f) in ids.iter().zip(&files) {
        let path = out.write_json(&format!("sample_{}.json", id.stem), f)?;
        println!("sample {} points {} -> {}", id.stem, f.points.len(), path.display());
    }
    for cover in &loaded {
        cache.store(cover)?;
    }
    Ok(Failures::default())
}

fn load_sample(out: &OutDir, id: &RunId, cover: Arc<CoverDescriptor>) -> Result<(SampleFile, SurfaceSample), CliError> {
    let name = format!("sample_{}.json", id.stem);
    let f: SampleFile = out.read_json(&name)?;
    if f.degree != id.degree || f.seed != id.seed {
        return Err(CliError::bad_artifact(&out.path(&name), "degree or seed does not match the config"));
    }
    let s = SurfaceSample::from_points(cover, f.points.clone(), f.seed, f.candidates, f.cutoff)
        .map_err(|e| CliError::bad_artifact(&out.path(&name), e))?;
    Ok((f, s))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeylComparison {
    pub window: (f64, f64),
    pub count: usize,
    pub expected: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialSummary {
    pub kind: String,
    pub c_min: f64,
    pub c_max: f64,
    pub l2_sq: Estimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenFile {
    pub degree: usize,
    pub genus: usize,
    pub seed: u64,
    pub points: usize,
    pub volume: f64,
    pub eps: f64,
    pub kernel_cutoff: f64,
    pub correction: EigenCorrection,
    pub trusted_fraction: f64,
    pub trusted_upper: f64,
    pub lambda1: f64,
    pub potential: PotentialSummary,
    /// Weyl comparison for `H₀` on the configured window.
    pub weyl: WeylComparison,
    pub sandwich: CountingReport,
    pub h0_eigenvalues: Vec<f64>,
    pub hv_eigenvalues: Vec<f64>,
}

pub fn eigensolve(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let s = cfg.sampling();
    let spec = cfg.potential();
    let window = cfg.window().spec();
    let cache = LatticeCache::from_env();
    let covers = cfg.covers()?;
    let ids = runs(cfg, &covers);
    let mut loaded = Vec::new();
    for c in &covers {
        let cover = load_cover(out, c.degree())?;
        cache.load(&cover)?;
        loaded.push(cover);
    }
    let mut inputs = Vec::new();
    for id in &ids {
        let cover = loaded.iter().find(|c| c.degree() == id.degree).expect("cover per run").clone();
        inputs.push(load_sample(out, id, cover)?);
    }
    let results: Vec<(EigenFile, SpectralData)> = ids
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(id, (file, sample))| {
            let free = assemble_free(sample, file.epsilon, s.correction).in_module("spectral")?;
            let v = make_potential(&spec, sample).in_module("spectral")?;
            let h = assemble_operator(&free, &v).in_module("spectral")?;
            let h0 = eigenvalue_vec(&free.operator);
            let hv = eigenvalue_vec(&h);
            let trusted = trusted_upper(&h, s.trusted_fraction);
            let cover = sample.cover();
            let meta = DiscretizationMeta {
                points: sample.len(),
                degree: id.degree,
                genus: cover.genus(),
                volume: sample.volume(),
                weight: sample.weight(),
                eps: free.eps,
                kernel_cutoff: free.kernel_cutoff,
                correction: free.correction,
                seed: id.seed,
                potential_kind: spec.kind().into(),
                trusted_fraction: s.trusted_fraction,
                trusted_upper: trusted,
            };
            let data = solve_window(&h, window.outer_or_self(), meta).in_module("spectral")?;
            let expected = sample.volume() * weyl_density(window.a, window.b).in_module("spectral")?;
            let count = h0.iter().filter(|&&l| window.contains(l)).count();
            let sandwich = counting_lower_bound_check(&h0, &hv, &window, v.c_min, v.c_max).in_module("spectral")?;
            let eigen = EigenFile {
                degree: id.degree,
                genus: cover.genus(),
                seed: id.seed,
                points: sample.len(),
                volume: sample.volume(),
                eps: free.eps,
                kernel_cutoff: free.kernel_cutoff,
                correction: free.correction,
                trusted_fraction: s.trusted_fraction,
                trusted_upper: trusted,
                lambda1: h0.get(1).copied().unwrap_or(f64::NAN),
                potential: PotentialSummary { kind: spec.kind().into(), c_min: v.c_min, c_max: v.c_max, l2_sq: v.l2_sq },
                weyl: WeylComparison { window: (window.a, window.b), count, expected, ratio: count as f64 / expected },
                sandwich,
                h0_eigenvalues: h0,
                hv_eigenvalues: hv,
            };
            Ok((eigen, data))
        })
        .collect::<Result<_, CliError>>()?;
    let mut failures = Failures::default();
    for (id, (eigen, data)) in ids.iter().zip(&results) {
        out.write_json(&format!("eigen_{}.json", id.stem), eigen)?;
        data.export(out.root(), &format!("spectra_{}", id.stem), true).in_module("spectral")?;
        println!(
            "eigensolve {}: lambda1 {:.4}, trusted up to {:.2}, {} pairs in window, Weyl ratio {:.3}, sandwich {}",
            id.stem,
            eigen.lambda1,
            eigen.trusted_upper,
            data.len(),
            eigen.weyl.ratio,
            if eigen.sandwich.holds { "holds" } else { "FAILS" }
        );
        failures.check(eigen.sandwich.holds, || {
            format!(
                "counting sandwich fails on {}: N(H_V) = {} < {}",
                id.stem, eigen.sandwich.count_hv, eigen.sandwich.count_h0_shrunk
            )
        });
    }
    for cover in &loaded {
        cache.store(cover)?;
    }
    Ok(failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QVarRunReport {
    pub stem: String,
    pub repeat: bool,
    pub reports: Vec<QVarReport>,
    pub parseval: ParsevalReport,
    /// `(δ, defect)` of the band decomposition.
    pub band_defects: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendFile {
    pub summary: TrendSummary,
    pub repeat_seeds: Vec<u64>,
    /// Spearman ≤ 0 with the seed dispersion below the smallest
    /// inter-degree ratio.
    pub strict: bool,
    pub normalization: String,
}

pub fn qvar(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let q = cfg.qvar();
    let window = cfg.window().spec();
    let covers = cfg.covers()?;
    let ids = runs(cfg, &covers);
    let mut failures = Failures::default();
    let mut run_reports = Vec::new();
    let mut rows: Vec<QVarRow> = Vec::new();
    for id in &ids {
        let spectra = out.require(&format!("spectra_{}.json", id.stem))?;
        let data = SpectralData::import(&spectra).map_err(|e| CliError::bad_artifact(&spectra, e))?;
        let sample_name = format!("sample_{}.json", id.stem);
        let sample: SampleFile = out.read_json(&sample_name)?;
        if sample.points.len() != data.vectors.nrows() {
            return Err(CliError::bad_artifact(&spectra, "eigenvectors do not match the sample"));
        }
        let cover = load_cover(out, id.degree)?;
        let a = observable_values(&q.observable, &sample.points, &cover).in_module("qvar")?;
        let mut reports = Vec::new();
        for &tau in &q.tau {
            for &delta in &q.delta {
                let qc = QVarConfig { window: window.clone(), big_t: q.big_t, tau, delta };
                let r = qvar_report(&data, &a, &qc, q.observable.clone()).in_module("qvar")?;
                rows.push(r.row.clone());
                reports.push(r);
            }
        }
        let an = hyperwave::qvar::normalize_observable(&a);
        let parseval = parseval_ceiling(&data, &an, &window).in_module("qvar")?;
        failures.check(parseval.holds, || {
            format!("Parseval ceiling fails on {}: {} > {}", id.stem, parseval.lhs, parseval.ceiling)
        });
        let mut band_defects = Vec::new();
        for &delta in &q.delta {
            let d = band_decomposition_defect(&data, &an, &window, delta).in_module("qvar")?;
            failures.check(d <= IDENTITY_TOL, || format!("band decomposition defect {d:e} on {} at delta {delta}", id.stem));
            band_defects.push((delta, d));
        }
        println!(
            "qvar {}: {} eigenvalues in window, sum1 {:.6}",
            id.stem,
            reports.first().map(|r| r.row.n).unwrap_or(0),
            reports.first().map(|r| r.row.sum1).unwrap_or(f64::NAN)
        );
        run_reports.push(QVarRunReport { stem: id.stem.clone(), repeat: id.repeat, reports, parseval, band_defects });
    }
    out.write_csv("qvar.csv", &rows)?;
    out.write_json("qvar.json", &run_reports)?;

    let primary: Vec<QVarReport> =
        run_reports.iter().filter(|r| !r.repeat).map(|r| r.reports[0].clone()).collect();
    let first_degree = ids.first().map(|i| i.degree);
    let repeats: Vec<QVarReport> = run_reports
        .iter()
        .zip(&ids)
        .filter(|(_, id)| Some(id.degree) == first_degree)
        .map(|(r, _)| r.reports[0].clone())
        .collect();
    if primary.len() >= 3 && repeats.len() >= 2 {
        let summary = trend_summary(&primary, &repeats).in_module("qvar")?;
        let strict = summary.spearman <= 0.0 && summary.seed_dispersion < summary.min_gap_ratio;
        println!(
            "trend: sum1 {:?} over degrees {:?}, Spearman {:.3}, seed dispersion {:.3}, calibrated {}",
            summary.sum1, summary.degrees, summary.spearman, summary.seed_dispersion, summary.calibrated
        );
        failures.check(summary.calibrated, || {
            format!("trend calibration fails: seed dispersion {:.3} above 2", summary.seed_dispersion)
        });
        let file = TrendFile {
            repeat_seeds: repeats.iter().map(|r| r.row.seed).collect(),
            summary,
            strict,
            normalization: hyperwave::qvar::NORMALIZATION.into(),
        };
        out.write_json("trend.json", &file)?;
    }
    Ok(failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingFile {
    pub degree: usize,
    pub lambda1: f64,
    pub lambda1_source: String,
    pub beta: f64,
    pub constant: f64,
    pub samples: usize,
    pub seed: u64,
    pub norms: (f64, f64),
    pub decay_slope: Option<f64>,
    pub all_within_bound: bool,
    pub rows: Vec<MixingRow>,
}

pub fn mixing(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let f = cfg.flow();
    let covers = cfg.covers()?;
    let m = covers[0].degree();
    let cover = load_cover(out, m)?;
    let (lambda1, source) = match f.lambda1 {
        Some(l) => (l, "config".to_string()),
        None => {
            let name = format!("eigen_d{m}.json");
            let e: EigenFile = out.read_json(&name)?;
            (e.lambda1, name)
        }
    };
    let params = MixingParams::new(lambda1, f.times.clone()).in_module("geoflow")?;
    let (fi, gi) = (ball(&cover, &f.f)?, ball(&cover, &f.g)?);
    let norms = (fi.l2_norm(), gi.l2_norm());
    let rows = mixing_table(&cover, &fi, &gi, norms, &params, f.samples, cfg.seed).in_module("geoflow")?;
    let all_within_bound = rows.iter().all(MixingRow::within_bound);
    let mut failures = Failures::default();
    for r in &rows {
        failures.check(r.within_bound(), || {
            format!("mixing bound fails at t = {}: |{:e}| > {:e} + 3*{:e}", r.t, r.estimate, r.bound, r.stderr)
        });
    }
    out.write_csv("mixing.csv", &rows)?;
    let file = MixingFile {
        degree: m,
        lambda1,
        lambda1_source: source,
        beta: params.beta,
        constant: params.constant,
        samples: f.samples,
        seed: cfg.seed,
        norms,
        decay_slope: decay_slope(&rows),
        all_within_bound,
        rows,
    };
    out.write_json("mixing.json", &file)?;
    println!(
        "mixing on degree {m}: lambda1 {lambda1:.4}, beta {}, {} times, within bound: {all_within_bound}",
        params.beta,
        file.rows.len()
    );
    Ok(failures)
}

fn ball<'a>(cover: &'a CoverDescriptor, b: &BallConfig) -> Result<BallIndicator<'a>, CliError> {
    let z = HPoint::new(b.center[0], b.center[1]).in_module("hypgeo")?;
    BallIndicator::new(cover, SurfacePoint::new(z, b.sheet), b.radius).in_module("geoflow")
}

pub fn verify_lemmas(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let outcomes: Vec<LemmaOutcome> = run_suite(&cfg.verification.only, cfg.seed).in_module("lemmas")?;
    let mut log = String::new();
    let mut failures = Failures::default();
    for o in &outcomes {
        let line = o.line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
        failures.check(o.kind == Kind::Diagnostic || o.passed, || format!("lemma check {} failed", o.name));
    }
    out.write_bytes("verification.log", log.as_bytes())?;
    out.write_json("verification.json", &outcomes)?;
    Ok(failures)
}

/// One line of `summary.csv`, keyed by cover degree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub degree: usize,
    pub genus: usize,
    pub points: usize,
    pub eps: f64,
    pub trusted_upper: f64,
    pub lambda1: f64,
    pub weyl_count: usize,
    pub weyl_expected: f64,
    pub weyl_ratio: f64,
    pub sandwich_holds: bool,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub sum1: Option<f64>,
    pub sum2: Option<f64>,
    pub sum3: Option<f64>,
}

pub fn report(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let covers = cfg.covers()?;
    let qrows: Vec<QVarRow> = if out.path("qvar.csv").is_file() { out.read_csv("qvar.csv")? } else { Vec::new() };
    let mut rows = Vec::new();
    for c in &covers {
        let m = c.degree();
        let e: EigenFile = out.read_json(&format!("eigen_d{m}.json"))?;
        let base = SummaryRow {
            degree: m,
            genus: e.genus,
            points: e.points,
            eps: e.eps,
            trusted_upper: e.trusted_upper,
            lambda1: e.lambda1,
            weyl_count: e.weyl.count,
            weyl_expected: e.weyl.expected,
            weyl_ratio: e.weyl.ratio,
            sandwich_holds: e.sandwich.holds,
            n: None,
            tau: None,
            delta: None,
            sum1: None,
            sum2: None,
            sum3: None,
        };
        let mine: Vec<&QVarRow> = qrows.iter().filter(|r| r.degree == m && r.seed == e.seed).collect();
        if mine.is_empty() {
            rows.push(base.clone());
        }
        for r in mine {
            rows.push(SummaryRow {
                n: Some(r.n),
                tau: Some(r.tau),
                delta: Some(r.delta),
                sum1: Some(r.sum1),
                sum2: Some(r.sum2),
                sum3: Some(r.sum3),
                ..base.clone()
            });
        }
    }
    let path = out.write_csv("summary.csv", &rows)?;
    println!("summary of {} degrees -> {}", covers.len(), path.display());
    Ok(Failures::default())
}

/// Every stage enabled by the config, in pipeline order.
pub fn run(cfg: &ExperimentConfig, out: &OutDir) -> Result<Failures, CliError> {
    let mut all = Failures::default();
    if cfg.verification.enabled {
        all.0.extend(verify_lemmas(cfg, out)?.0);
    }
    if cfg.sampling.is_some() {
        build_cover(cfg, out)?;
        sample(cfg, out)?;
        all.0.extend(eigensolve(cfg, out)?.0);
        if cfg.qvar.is_some() {
            all.0.extend(qvar(cfg, out)?.0);
        }
    }
    if cfg.flow.is_some() {
        if cfg.sampling.is_none() {
            build_cover(cfg, out)?;
        }
        all.0.extend(mixing(cfg, out)?.0);
    }
    if cfg.sampling.is_some() {
        report(cfg, out)?;
    }
    Ok(all)
}
