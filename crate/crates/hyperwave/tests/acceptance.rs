//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::sync::Arc;
use std::time::Instant;

use hyperwave::fuchsian::{bolza_group, CoverDescriptor, FuchsianGroup, SurfacePoint};
use hyperwave::geoflow::{decay_slope, mixing_table, BallIndicator, MixingParams};
use hyperwave::hypgeo::HPoint;
use hyperwave::kernels::WindowSpec;
use hyperwave::lemmas::{self, LemmaOutcome};
use hyperwave::qvar::{
    band_decomposition_defect, default_observable, normalize_observable, observable_values, parseval_ceiling,
    qvar_report, trend_summary, QVarConfig, DELTA_GRID,
};
use hyperwave::spectral::*;

const SEED: u64 = 0;

struct Line {
    name: &'static str,
    passed: bool,
    detail: String,
    secs: f64,
}

fn lemma_line(name: &'static str, start: Instant, r: hyperwave::Result<LemmaOutcome>) -> Line {
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok(o) => Line { name, passed: o.passed, detail: format!("{} checks, worst {:.4e} {}", o.checks, o.worst, o.detail), secs },
        Err(e) => Line { name, passed: false, detail: format!("error: {e}"), secs },
    }
}

fn lemma_group(name: &'static str, runs: &[fn() -> hyperwave::Result<LemmaOutcome>]) -> Line {
    let start = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    for run in runs {
        match run() {
            Ok(o) => {
                passed &= o.passed;
                parts.push(format!("{} {}/{} worst {:.4}", o.name, if o.passed { "ok" } else { "FAIL" }, o.checks, o.worst));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("error: {e}"));
            }
        }
    }
    Line { name, passed, detail: parts.join("; "), secs: start.elapsed().as_secs_f64() }
}

fn meta(sample: &SurfaceSample, free: &Discretization, kind: &str, h: &hyperwave::opcalc::HermitianOperator) -> DiscretizationMeta {
    DiscretizationMeta {
        points: sample.len(),
        degree: sample.cover().degree(),
        genus: sample.cover().genus(),
        volume: sample.volume(),
        weight: sample.weight(),
        eps: free.eps,
        kernel_cutoff: free.kernel_cutoff,
        correction: free.correction,
        seed: sample.seed(),
        potential_kind: kind.into(),
        trusted_fraction: DEFAULT_TRUSTED_FRACTION,
        trusted_upper: trusted_upper(h, DEFAULT_TRUSTED_FRACTION),
    }
}

struct Run {
    sample: SurfaceSample,
    free: Discretization,
    data: SpectralData,
    h0: Vec<f64>,
    hv: Vec<f64>,
    c_min: f64,
    c_max: f64,
}

fn solve(cover: Arc<CoverDescriptor>, pps: usize, seed: u64, spec: &PotentialSpec, window: &WindowSpec) -> hyperwave::Result<Run> {
    let rule = EpsilonRule::default();
    let sample = sample_for_rule(cover, pps, seed, &rule)?;
    let free = assemble_free(&sample, rule, EigenCorrection::Spherical)?;
    let v = make_potential(spec, &sample)?;
    let h = assemble_operator(&free, &v)?;
    let m = meta(&sample, &free, spec.kind(), &h);
    let data = solve_window(&h, window.outer_or_self(), m)?;
    Ok(Run { h0: eigenvalue_vec(&free.operator), hv: eigenvalue_vec(&h), sample, free, data, c_min: v.c_min, c_max: v.c_max })
}

struct Weyl {
    line: Line,
    lambda1: Option<f64>,
    sandwich: Vec<(String, bool)>,
}

fn weyl(base: &Arc<FuchsianGroup>) -> Weyl {
    let start = Instant::now();
    let cover = Arc::new(CoverDescriptor::trivial(base.clone()));
    let rule = EpsilonRule::default();
    let r = (|| -> hyperwave::Result<(f64, f64, usize, f64, f64, bool)> {
        let sample = sample_for_rule(cover, 2000, SEED, &rule)?;
        let free = assemble_free(&sample, rule, EigenCorrection::Spherical)?;
        let ev = eigenvalue_vec(&free.operator);
        let top = trusted_upper(&free.operator, DEFAULT_TRUSTED_FRACTION);
        let (a, b) = (1.0, top);
        let count = ev.iter().filter(|&&l| a <= l && l <= b).count();
        let expected = sample.volume() * weyl_density(a, b)?;
        // A constant shift is the simplest potential on the fine sample.
        let v = make_potential(&PotentialSpec::Constant { c: -0.5 }, &sample)?;
        let hv = eigenvalue_vec(&assemble_operator(&free, &v)?);
        let w = WindowSpec::new(a, b)?;
        let s = counting_lower_bound_check(&ev, &hv, &w, v.c_min, v.c_max)?;
        Ok((ev[1], top, count, expected, count as f64 / expected, s.holds))
    })();
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok((l1, top, count, expected, ratio, holds)) => Weyl {
            line: Line {
                name: "weyl",
                passed: (ratio - 1.0).abs() <= 0.3,
                detail: format!("window [1, {top:.2}]: count {count} vs {expected:.1} (ratio {ratio:.4}); lambda1 {l1:.4}"),
                secs,
            },
            lambda1: Some(l1),
            sandwich: vec![("bolza N=2000 constant -0.5".into(), holds)],
        },
        Err(e) => Weyl {
            line: Line { name: "weyl", passed: false, detail: format!("error: {e}"), secs },
            lambda1: None,
            sandwich: vec![],
        },
    }
}

fn mixing(base: &Arc<FuchsianGroup>, lambda1: Option<f64>) -> Line {
    let start = Instant::now();
    let cover = CoverDescriptor::trivial(base.clone());
    let r = (|| -> hyperwave::Result<(bool, String)> {
        let l1 = lambda1.ok_or_else(|| hyperwave::Error::InvalidParams("no lambda1 from the spectral run".into()))?;
        let params = MixingParams::new(l1, (1..=12).map(f64::from).collect())?;
        if params.beta != 1.0 {
            return Ok((false, format!("lambda1 {l1} gives beta {}", params.beta)));
        }
        let f = BallIndicator::new(&cover, SurfacePoint::new(HPoint::I, 0), 1.0)?;
        let n = f.l2_norm();
        let rows = mixing_table(&cover, &f, &f, (n, n), &params, 100_000, SEED)?;
        let worst = rows.iter().map(|r| r.estimate.abs() / (r.bound + 3.0 * r.stderr)).fold(0.0, f64::max);
        let slope = decay_slope(&rows).map_or("none".into(), |s| format!("{s:.3}"));
        Ok((
            rows.iter().all(|r| r.within_bound()),
            format!("lambda1 {l1:.4}, beta 1, 12 times, worst |c|/(bound+3se) {worst:.3e}, decay slope {slope}"),
        ))
    })();
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok((passed, detail)) => Line { name: "mixing", passed, detail, secs },
        Err(e) => Line { name: "mixing", passed: false, detail: format!("error: {e}"), secs },
    }
}

struct Trend {
    trend: Line,
    identities: Line,
    sandwich: Vec<(String, bool)>,
    secs: f64,
}

fn trend(base: &Arc<FuchsianGroup>) -> Trend {
    let start = Instant::now();
    let bump = PotentialSpec::InducedBump { center: [0.3, 1.2], radius: 0.5, height: 1.0 };
    let window = WindowSpec::new(1.0, 25.0).expect("valid window");
    let obs = default_observable();
    let mut sandwich = Vec::new();
    let mut worst_identity = 0.0f64;
    let mut identities_ok = true;
    let r = (|| -> hyperwave::Result<(String, bool)> {
        let mut primary = Vec::new();
        let mut repeats = Vec::new();
        let mut plan: Vec<(usize, u64)> = [1, 2, 4].iter().map(|&m| (m, SEED)).collect();
        plan.extend([(1, SEED + 1), (1, SEED + 2)]);
        for (m, seed) in plan {
            let cover = Arc::new(CoverDescriptor::cyclic(base.clone(), m)?);
            let run = solve(cover.clone(), 400, seed, &bump, &window)?;
            let s = counting_lower_bound_check(&run.h0, &run.hv, &window, run.c_min, run.c_max)?;
            sandwich.push((format!("degree {m} seed {seed} induced bump"), s.holds));
            let a = observable_values(&obs, run.sample.points(), &cover)?;
            let an = normalize_observable(&a);
            let p = parseval_ceiling(&run.data, &an, &window)?;
            identities_ok &= p.holds;
            for delta in DELTA_GRID {
                let d = band_decomposition_defect(&run.data, &an, &window, delta)?;
                worst_identity = worst_identity.max(d);
                identities_ok &= d <= 1e-9;
            }
            let cfg = QVarConfig { window: window.clone(), big_t: 10.0, tau: 0.0, delta: DELTA_GRID[0] };
            let rep = qvar_report(&run.data, &a, &cfg, obs.clone())?;
            if m == 1 {
                repeats.push(rep.clone());
            }
            if seed == SEED {
                primary.push(rep);
            }
            // The other potential families on the coarsest sample.
            if m == 1 && seed == SEED {
                for spec in [
                    PotentialSpec::WeakCoupling { eps: -0.3, base: Box::new(bump.clone()) },
                    PotentialSpec::ConstantPlusThin { c: -0.2, w0: 1.5, threshold: 1.53 },
                    PotentialSpec::Constant { c: 0.7 },
                ] {
                    let v = make_potential(&spec, &run.sample)?;
                    let hv = eigenvalue_vec(&assemble_operator(&run.free, &v)?);
                    let s = counting_lower_bound_check(&run.h0, &hv, &window, v.c_min, v.c_max)?;
                    sandwich.push((format!("degree 1 {}", spec.kind()), s.holds));
                }
            }
        }
        let t = trend_summary(&primary, &repeats)?;
        let strict = t.spearman <= 0.0 && t.seed_dispersion < t.min_gap_ratio;
        let text = format!(
            "sum1 {:?} over degrees {:?}; Spearman {:.3}; seed dispersion {:.3} (bar 2); min inter-degree ratio {:.3}; strict trend {strict}",
            t.sum1.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>(),
            t.degrees,
            t.spearman,
            t.seed_dispersion,
            t.min_gap_ratio,
        );
        Ok((text, t.calibrated))
    })();
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok((detail, calibrated)) => {
            Trend {
                trend: Line { name: "trend", passed: calibrated, detail, secs },
                identities: Line {
                    name: "parseval_band",
                    passed: identities_ok,
                    detail: format!("5 runs, 4 band widths, worst band defect {worst_identity:.3e}"),
                    secs: 0.0,
                },
                sandwich,
                secs,
            }
        }
        Err(e) => Trend {
            trend: Line { name: "trend", passed: false, detail: format!("error: {e}"), secs },
            identities: Line { name: "parseval_band", passed: false, detail: "trend runs failed".into(), secs: 0.0 },
            sandwich,
            secs,
        },
    }
}

fn main() {
    let base = Arc::new(bolza_group());
    let mut lines = Vec::new();

    let t = Instant::now();
    lines.push(lemma_line("counting", t, lemmas::counting(SEED)));
    let t = Instant::now();
    lines.push(lemma_line("duhamel", t, lemmas::duhamel(SEED)));
    let t = Instant::now();
    lines.push(lemma_line("time_avg", t, lemmas::time_avg()));
    lines.push(lemma_group("integrals", &[lemmas::pair_integral, lemmas::sqrt_sinh, lemmas::f_weighted]));

    let w = weyl(&base);
    lines.push(mixing(&base, w.lambda1));
    let t = Instant::now();
    lines.push(lemma_line("reconstruction", t, lemmas::reconstruction(SEED)));

    let tr = trend(&base);
    let t = Instant::now();
    let random = lemmas::sandwich(SEED);
    let mut cases: Vec<(String, bool)> = w.sandwich.clone();
    cases.extend(tr.sandwich.iter().cloned());
    let failing: Vec<&str> = cases.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    let (rand_ok, rand_n) = random.as_ref().map_or((false, 0), |o| (o.passed, o.checks));
    lines.push(Line {
        name: "sandwich",
        passed: failing.is_empty() && rand_ok && !cases.is_empty(),
        detail: format!(
            "{} discretized instances, failing {:?}; {} random matrix checks {}",
            cases.len(),
            failing,
            rand_n,
            if rand_ok { "hold" } else { "FAIL" }
        ),
        secs: t.elapsed().as_secs_f64() + tr.secs,
    });
    lines.push(w.line);
    lines.push(tr.identities);
    lines.push(tr.trend);

    let mut failed = 0;
    for l in &lines {
        println!("{} {:<15} [{:>6.1}s] {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.secs, l.detail);
        failed += usize::from(!l.passed);
    }
    println!("acceptance: {} of {} criteria pass", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
