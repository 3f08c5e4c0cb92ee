//! One function per subcommand. Each returns whether all checked tolerances held.

use crate::config::{
    Check, ExperimentConfig, Mode, ScalingSource, TransformAction, TransformInput,
    TransformSection, VerifySection,
};
use crate::output::{Artifacts, Cell, Report};
use anyhow::{anyhow, bail, Context, Result};
use infhit::scaling::estimate_return_sequence;
use infhit::simulate::{
    estimate_cdf, estimate_tails_and_wandering, sample_entrance_times, Normalization, RunParams,
    StartLaw,
};
use infhit::transform::{fixed_point, forward, invert};
use infhit::verify::{
    check_convergence, check_decomposition, check_return_vs_hitting, check_robustness,
    check_tightness, Settings, VerificationOutcome,
};
use infhit::{Error, LimitLaw, ScalingFunction, SubDistribution, SystemModel, TransformKind, TransformSpec};

/// Stream reserved for the wandering-rate estimate, away from the per-target streams.
const SCALING_STREAM: u64 = 1 << 40;

pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: &'a mut Artifacts,
    pub report: &'a mut Report,
}

fn params(cfg: &ExperimentConfig, stream: u64) -> RunParams {
    RunParams {
        n_samples: cfg.n_samples,
        cap: cfg.cap,
        seed: cfg.seed(),
        stream,
        stepping: cfg.stepping,
    }
}

fn settings(cfg: &ExperimentConfig) -> Settings {
    Settings {
        n_samples: cfg.n_samples,
        cap: cfg.cap,
        grid: cfg.grid.build(),
        seed: cfg.seed(),
        stepping: cfg.stepping,
        tolerances: cfg.tolerances,
    }
}

fn describe(s: &ScalingFunction) -> String {
    format!(
        "a(s) = {:.6e} s^{} ln(s + e)^{}",
        s.coefficient(),
        s.index(),
        s.log_exponent()
    )
}

/// Resolves the configured scaling, simulating the wandering rate if asked to.
fn resolve_scaling(ctx: &mut Run) -> Result<ScalingFunction> {
    let cfg = ctx.cfg;
    match cfg.scaling {
        ScalingSource::Known => cfg
            .system
            .known_scaling()
            .ok_or_else(|| anyhow!("scaling: no closed form for {}", cfg.system.name())),
        ScalingSource::Explicit { .. } => Ok(cfg.explicit_scaling()?.expect("explicit")),
        ScalingSource::Estimated {
            n_max,
            n_samples,
            alpha,
        } => {
            let p = RunParams {
                n_samples,
                ..params(cfg, SCALING_STREAM)
            };
            let tails = estimate_tails_and_wandering(&cfg.system, n_max, &p)?;
            let rows = tails
                .w
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    vec![
                        Cell::Count(i as u64 + 1),
                        Cell::Real(tails.q[i + 1]),
                        Cell::Real(tails.standard_error[i + 1]),
                        Cell::Real(w),
                    ]
                })
                .collect();
            ctx.out.csv("wandering.csv", &["n", "q", "q_se", "w"], rows)?;
            let fit = estimate_return_sequence(&tails.w, alpha)?;
            ctx.report.line(format!(
                "fitted index {:.4} over n in [{}, {}), rms residual {:.3e}",
                fit.fitted_index, fit.window.0 + 1, fit.window.1 + 1, fit.residual
            ));
            Ok(fit.scaling)
        }
    }
}

fn normalization(mode: Mode, scaling: ScalingFunction) -> Normalization {
    if mode.distorted() {
        Normalization::Distorted(scaling)
    } else {
        Normalization::Gamma(scaling)
    }
}

fn start_laws(mode: Mode) -> &'static [(StartLaw, &'static str)] {
    match mode {
        Mode::Return => &[(StartLaw::MuE, "return")],
        Mode::Hitting => &[(StartLaw::MuY, "hitting")],
        Mode::Both | Mode::Distorted => &[(StartLaw::MuE, "return"), (StartLaw::MuY, "hitting")],
    }
}

pub fn simulate(ctx: &mut Run) -> Result<bool> {
    let cfg = ctx.cfg;
    let targets = cfg.require_targets()?;
    let scaling = resolve_scaling(ctx)?;
    let norm = normalization(cfg.mode, scaling);
    ctx.report.line(format!("system: {}", cfg.system.name()));
    ctx.report.line(format!("scaling: {}", describe(&scaling)));
    for (i, target) in targets.iter().enumerate() {
        let k = i + 1;
        for &(law, label) in start_laws(cfg.mode) {
            let sample = sample_entrance_times(&cfg.system, target, law, &params(cfg, k as u64))?;
            let normalized = sample.normalized(&norm);
            let rows = sample
                .times
                .iter()
                .zip(&normalized)
                .enumerate()
                .map(|(j, (phi, x))| {
                    vec![
                        Cell::Count(j as u64),
                        phi.map_or(Cell::Missing, Cell::Count),
                        Cell::Flag(phi.is_none()),
                        x.map_or(Cell::Missing, Cell::Real),
                    ]
                })
                .collect();
            ctx.out.csv(
                &format!("samples_k{k}_{label}.csv"),
                &["sample_index", "phi", "censored", "normalized_value"],
                rows,
            )?;
            let cdf = SubDistribution::from_samples(cfg.grid.build(), &normalized)?;
            ctx.out.cdf(&format!("cdf_k{k}_{label}.csv"), "F", &cdf)?;
            let censored = cdf.censored_fraction();
            ctx.report.line(format!(
                "k={k} {label}: mu(E) = {:.6e}, window = {:.4}, censored = {censored:.4}, F(t_max) = {:.4}",
                sample.measure,
                sample.window(&norm),
                cdf.total_mass()
            ));
            if censored > cfg.tolerances.censored_mass {
                ctx.report.invalid.push(format!(
                    "censored mass of {label} law at k={k} is {censored:.4}, above {}",
                    cfg.tolerances.censored_mass
                ));
            }
        }
    }
    // excessive censoring was recorded as invalid above
    Ok(true)
}

fn transform_section(cfg: &ExperimentConfig) -> Result<TransformSection> {
    cfg.transform
        .ok_or_else(|| anyhow!("transform: section missing"))
}

fn transform_input(ctx: &mut Run, input: TransformInput) -> Result<SubDistribution> {
    let cfg = ctx.cfg;
    let grid = cfg.grid.build();
    match input {
        TransformInput::Law => {
            let law = cfg.law.ok_or_else(|| anyhow!("law: required for transform.input = \"law\""))?;
            Ok(SubDistribution::from_law(grid, &law)?)
        }
        TransformInput::Simulated => {
            let targets = cfg.require_targets()?;
            let scaling = resolve_scaling(ctx)?;
            let norm = normalization(cfg.mode, scaling);
            let k = targets.len();
            let est = estimate_cdf(
                &cfg.system,
                &targets[k - 1],
                StartLaw::MuE,
                &norm,
                grid,
                &params(cfg, k as u64),
            )?;
            ctx.report.line(format!(
                "input: empirical return law at k={k}, censored {:.4}",
                est.cdf.censored_fraction()
            ));
            Ok(est.cdf)
        }
    }
}

fn columns(input: &SubDistribution, output: &SubDistribution) -> Vec<Vec<Cell>> {
    input
        .grid()
        .iter()
        .zip(input.values().iter().zip(output.values()))
        .map(|(&t, (&a, &b))| vec![Cell::Real(t), Cell::Real(a), Cell::Real(b)])
        .collect()
}

fn law_distance(law: Option<LimitLaw>, f: &SubDistribution) -> Option<f64> {
    law.map(|l| {
        f.grid()
            .iter()
            .zip(f.values())
            .map(|(&t, v)| (v - l.cdf(t)).abs())
            .fold(0.0, f64::max)
    })
}

pub fn transform(ctx: &mut Run) -> Result<bool> {
    let cfg = ctx.cfg;
    let section = transform_section(cfg)?;
    let spec = TransformSpec::new(section.operator).context("transform.operator")?;
    ctx.report.line(format!("operator: {:?}", section.operator));
    match section.action {
        TransformAction::Forward | TransformAction::Invert => {
            let input = transform_input(ctx, section.input)?;
            let output = if section.action == TransformAction::Forward {
                let out = forward(&spec, &input)?;
                ctx.report.value("clipped", out.clipped);
                out.law
            } else {
                let inv = invert(&spec, &input)?;
                ctx.report.value("clamped", inv.clamped);
                ctx.report.value("remonotonized", inv.remonotonized);
                inv.law
            };
            ctx.report.value("sup |F_out - F_in|", output.sup_distance(&input));
            ctx.out
                .csv("transform.csv", &["t", "F_in", "F_out"], columns(&input, &output))?;
        }
        TransformAction::FixedPoint => {
            let alpha = match section.operator {
                TransformKind::Hlv => 1.0,
                TransformKind::Fractional { alpha } => alpha,
                _ => bail!("transform.operator: fixed points exist for hlv and fractional only"),
            };
            let fp = fixed_point(alpha, &cfg.grid.build(), section.tol)?;
            ctx.report.value("residual", fp.change);
            ctx.report.line(format!("working mesh: {} nodes", fp.mesh_size));
            if let Some(d) = law_distance(cfg.law, &fp.law) {
                ctx.report.value("sup |F - law|", d);
            }
            ctx.out.cdf("fixed_point.csv", "F", &fp.law)?;
        }
    }
    Ok(true)
}

pub fn laws(ctx: &mut Run) -> Result<bool> {
    let cfg = ctx.cfg;
    let law = cfg.law.ok_or_else(|| anyhow!("law: required for the laws command"))?;
    let f = SubDistribution::from_law(cfg.grid.build(), &law)?;
    ctx.out.cdf("laws.csv", "H", &f)?;
    ctx.report.line(format!("law: {law:?}"));
    for t in [0.5, 1.0, 2.0, 5.0] {
        if t <= cfg.grid.t_max {
            ctx.report.line(format!("F({t}) = {:.10}", law.cdf(t)));
        }
    }
    Ok(true)
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Missing, Cell::Real)
}

fn emit_outcome(ctx: &mut Run, out: &VerificationOutcome) -> Result<()> {
    let rows = out
        .stages
        .iter()
        .map(|s| {
            vec![
                Cell::Count(s.k as u64),
                Cell::Real(s.measure),
                Cell::Real(s.window),
                opt(s.transform_to_hitting),
                opt(s.return_to_law),
                opt(s.hitting_to_law),
                opt(s.return_to_hitting),
                opt(s.perturbed_return),
                opt(s.perturbed_hitting),
                Cell::Real(s.censored_return),
                Cell::Real(s.censored_hitting),
            ]
        })
        .collect();
    ctx.out.csv(
        "stages.csv",
        &[
            "k",
            "measure",
            "window",
            "transform_to_hitting",
            "return_to_law",
            "hitting_to_law",
            "return_to_hitting",
            "perturbed_return",
            "perturbed_hitting",
            "censored_return",
            "censored_hitting",
        ],
        rows,
    )?;
    for s in &out.stages {
        let mut parts = vec![format!("k={} mu(E)={:.3e} window={:.3}", s.k, s.measure, s.window)];
        for (name, v) in [
            ("d(T(return),hitting)", s.transform_to_hitting),
            ("d(return,law)", s.return_to_law),
            ("d(hitting,law)", s.hitting_to_law),
            ("d(return,hitting)", s.return_to_hitting),
            ("d(return,return')", s.perturbed_return),
            ("d(hitting,hitting')", s.perturbed_hitting),
        ] {
            if let Some(v) = v {
                parts.push(format!("{name}={v:.5}"));
            }
        }
        parts.push(format!(
            "censored={:.4}/{:.4}",
            s.censored_return, s.censored_hitting
        ));
        ctx.report.line(parts.join(" "));
    }
    for (name, v) in &out.metrics {
        ctx.report.value(name, *v);
    }
    for (name, law) in [
        ("return_law.csv", &out.return_law),
        ("hitting_law.csv", &out.hitting_law),
        ("transformed_return_law.csv", &out.transformed),
    ] {
        if let Some(l) = law {
            ctx.out.cdf(name, "F", l)?;
        }
    }
    ctx.report.failures.extend(out.failures.iter().cloned());
    ctx.report.invalid.extend(out.invalid.iter().cloned());
    Ok(())
}

pub fn verify(ctx: &mut Run) -> Result<bool> {
    let cfg = ctx.cfg;
    let section: VerifySection = cfg.verify.clone().unwrap_or(VerifySection {
        check: Check::default(),
        perturbations: Vec::new(),
        pairs: Vec::new(),
        set_a: Vec::new(),
        set_b: Vec::new(),
        n_max: 8,
    });
    ctx.report.line(format!("check: {:?}", section.check));
    ctx.report.line(format!("system: {}", cfg.system.name()));
    if section.check == Check::Decomposition {
        let SystemModel::FiniteMarkovShift(chain) = &cfg.system else {
            bail!("verify.check: decomposition needs a finite_markov_shift system");
        };
        let d = check_decomposition(chain, &section.set_a, &section.set_b, section.n_max)?;
        let rows = d
            .defects
            .iter()
            .enumerate()
            .map(|(n, &v)| vec![Cell::Count(n as u64), Cell::Real(v)])
            .collect();
        ctx.out.csv("decomposition.csv", &["n", "defect"], rows)?;
        ctx.report.value("max defect", d.max_defect);
        let tol = cfg.tolerances.decomposition;
        if !(d.max_defect <= tol) {
            ctx.report
                .failures
                .push(format!("max defect = {:.3e} exceeds {tol}", d.max_defect));
        }
        return Ok(ctx.report.passed());
    }
    let targets = cfg.require_targets()?;
    let s = settings(cfg);
    let distorted = cfg.mode.distorted();
    let outcome = match section.check {
        Check::Tightness => {
            if section.pairs.is_empty() {
                bail!("verify.pairs: required for the tightness check");
            }
            check_tightness(&cfg.system, &targets[targets.len() - 1], &section.pairs, &s)?
        }
        check => {
            let scaling = resolve_scaling(ctx)?;
            ctx.report.line(format!("scaling: {}", describe(&scaling)));
            match check {
                Check::ReturnVsHitting => {
                    check_return_vs_hitting(&cfg.system, targets, &scaling, distorted, &s)?
                }
                Check::Convergence => check_convergence(
                    &cfg.system,
                    targets,
                    cfg.law.as_ref(),
                    &scaling,
                    distorted,
                    &s,
                )?,
                Check::Robustness => check_robustness(
                    &cfg.system,
                    targets,
                    &section.perturbations,
                    &scaling,
                    distorted,
                    &s,
                )?,
                Check::Tightness | Check::Decomposition => unreachable!("handled above"),
            }
        }
    };
    emit_outcome(ctx, &outcome)?;
    Ok(ctx.report.passed())
}

pub fn scaling(ctx: &mut Run) -> Result<bool> {
    let cfg = ctx.cfg;
    let resolved = match resolve_scaling(ctx) {
        Ok(s) => s,
        Err(e) => match e.downcast_ref::<Error>() {
            Some(Error::InconsistentTail { .. }) => {
                ctx.report.failures.push(e.to_string());
                return Ok(false);
            }
            _ => return Err(e),
        },
    };
    ctx.report.line(format!("scaling: {}", describe(&resolved)));
    if let Some(known) = cfg.system.known_scaling() {
        ctx.report.line(format!("closed form: {}", describe(&known)));
        if matches!(cfg.scaling, ScalingSource::Estimated { .. }) {
            ctx.report.value(
                "fitted c / closed-form c",
                resolved.coefficient() / known.coefficient(),
            );
        }
    }
    let grid: Vec<f64> = (0..=60).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
    let rows = grid
        .iter()
        .map(|&n| {
            vec![
                Cell::Real(n),
                Cell::Real(resolved.eval(n)),
                Cell::Real(resolved.inverse(resolved.eval(n))),
                Cell::Real(resolved.gamma(1.0 / n)),
            ]
        })
        .collect();
    ctx.out
        .csv("scaling.csv", &["s", "a", "b_of_a", "gamma_of_inverse"], rows)?;
    Ok(true)
}
