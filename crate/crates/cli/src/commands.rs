use std::collections::BTreeSet;

use anyhow::{anyhow, bail, Context, Result};
use beltlab::dynamics::{
    default_seeds, integrate, matched_ends_scan, periodic_orbit_search, Flow, IntegrateOptions, SearchOptions, Section, TraverseOptions,
};
use beltlab::sampling::SamplePlan;
use beltlab::{certify, Certificate, Construction, Error as CoreError, ProfileKind, VerifyReport};
use serde::Serialize;
use serde_json::json;

use crate::files::{emit, emit_report, load_model, to_json, write_atomic, ModelFile, ReportFile, Seeds};
use crate::{BindingName, BuildArgs, ConstructionName, FlowArgs, IntegrationArgs, Outcome, PeriodicArgs, TrapArgs, VerifyArgs};

fn construction_of(a: &BuildArgs) -> Result<Construction> {
    use ConstructionName as C;
    let given = [
        ("--n", a.n.is_some()),
        ("--v", a.v.is_some()),
        ("--index", a.index.is_some()),
        ("--step2", a.step2),
        ("--binding", a.binding.is_some()),
        ("--eps", a.eps.is_some()),
        ("--b", a.b.is_some()),
    ];
    let accepted: &[&str] = match a.construction {
        C::T3Contact | C::Aperiodic | C::BindingFar => &[],
        C::Suspension => &["--v"],
        C::BindingNeighborhood => &["--binding", "--eps", "--v"],
        C::StandardPlug | C::VpPlug => &["--n", "--b"],
        C::RoundMorse => &["--n", "--index", "--step2"],
        C::ContactWrap => &["--n"],
    };
    if let Some((flag, _)) = given.iter().find(|(f, on)| *on && !accepted.contains(f)) {
        bail!("{flag} does not apply to {:?}", a.construction);
    }
    let slope = || a.v.clone().ok_or_else(|| anyhow!("--v is required for a suspension"));
    Ok(match a.construction {
        C::T3Contact => Construction::T3ContactBinding,
        C::Suspension => Construction::suspension(slope()?),
        C::BindingNeighborhood => {
            let binding = match a.binding.ok_or_else(|| anyhow!("--binding is required"))? {
                BindingName::T3Contact => {
                    if a.v.is_some() {
                        bail!("--v only applies to a suspension binding");
                    }
                    Construction::T3ContactBinding
                }
                BindingName::Suspension => Construction::suspension(slope()?),
            };
            let mut c = Construction::binding_neighborhood(binding);
            if let (Some(e), Construction::BindingNeighborhood { f, .. }) = (a.eps, &mut c) {
                *f = ProfileKind::F { eps: e };
            }
            c
        }
        C::StandardPlug => {
            let mut c = Construction::wilson_standard(a.n.unwrap_or(5));
            if let (Some(v), Construction::WilsonStandardPlug { b, .. }) = (a.b, &mut c) {
                *b = v;
            }
            c
        }
        C::VpPlug => {
            let mut c = Construction::vp_plug(a.n.unwrap_or(5));
            if let (Some(v), Construction::WilsonVpPlug { b, .. }) = (a.b, &mut c) {
                *b = v;
            }
            c
        }
        C::RoundMorse => {
            let n = a.n.unwrap_or(2);
            if a.step2 {
                if a.index.is_some_and(|i| i != 0) {
                    bail!("--step2 needs index 0");
                }
                Construction::round_morse_step2(n)
            } else {
                Construction::round_morse(n, a.index.unwrap_or(0))
            }
        }
        C::Aperiodic => Construction::aperiodic(),
        C::BindingFar => Construction::binding_far_insertion(),
        C::ContactWrap => Construction::ContactWrap { n: a.n.unwrap_or(1) },
    })
}

pub fn build(a: &BuildArgs) -> Result<Outcome> {
    let c = construction_of(a)?;
    match c.build() {
        Ok(model) => {
            let file = ModelFile::of(&model, a.note.clone());
            write_atomic(&a.output, to_json(&file)?.as_bytes())?;
            eprintln!(
                "built {} (dimension {}, {} build checks passed) -> {}",
                model.name(),
                model.dim(),
                model.build_checks.len(),
                a.output.display()
            );
            Ok(Outcome::Success)
        }
        Err(CoreError::BuildCertificate { model, check, detail }) => {
            let report = ReportFile::new(
                "build",
                None,
                Seeds {
                    scheme: "halton+faces".into(),
                    seed: Some(0),
                },
                serde_json::to_value(&c)?,
                json!({ "passed": false, "model": model, "check": check, "detail": detail }),
            );
            emit_report(None, &report)?;
            Ok(Outcome::CertificateFailure)
        }
        Err(e) => Err(e).context("building the model"),
    }
}

#[derive(Serialize)]
struct VerifyResult {
    passed: bool,
    checks: Vec<VerifyReport>,
}

pub fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let (file, model) = load_model(&a.model)?;
    let mut checks: Vec<Certificate> = vec![];
    for name in &a.checks {
        let c: Certificate = name.trim().parse()?;
        if !checks.contains(&c) {
            checks.push(c);
        }
    }
    if checks.is_empty() {
        bail!("no checks requested");
    }
    if a.sampling.samples == 0 {
        bail!("--samples must be positive");
    }
    let plan = SamplePlan::new(a.sampling.samples, a.sampling.seed);
    let mut reports = vec![];
    for c in &checks {
        let r = certify(&model, *c, &plan, a.tol).with_context(|| format!("check `{c}` does not apply to `{}`", model.name()))?;
        eprintln!(
            "{:<13} {}  worst residual {:.3e}{}",
            c.name(),
            if r.passed() { "PASS" } else { "FAIL" },
            r.worst_residual(),
            r.margins
                .iter()
                .map(|m| format!(", {} >= {:.3e}", m.name, m.value))
                .collect::<String>()
        );
        reports.push(r);
    }
    let passed = reports.iter().all(VerifyReport::passed);
    let report = ReportFile::new(
        "verify",
        Some(&file),
        Seeds {
            scheme: plan.scheme().into(),
            seed: Some(plan.seed),
        },
        json!({
            "checks": checks.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "samples": plan.count,
            "boundary_samples": plan.boundary,
            "tolerance": a.tol,
        }),
        VerifyResult { passed, checks: reports },
    );
    emit(a.output.as_deref(), to_json(&report)?.as_bytes())?;
    Ok(if passed { Outcome::Success } else { Outcome::CertificateFailure })
}

fn integration_options(a: &IntegrationArgs) -> Result<IntegrateOptions> {
    if !(a.rtol > 0.0 && a.atol > 0.0 && a.h_max > 0.0) {
        bail!("--rtol, --atol and --h-max must be positive");
    }
    Ok(IntegrateOptions {
        rtol: a.rtol,
        atol: a.atol,
        h_max: a.h_max,
        ..Default::default()
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

fn no_seeds(scheme: &str) -> Seeds {
    Seeds {
        scheme: scheme.into(),
        seed: None,
    }
}

pub fn flow(a: &FlowArgs) -> Result<Outcome> {
    let (file, model) = load_model(&a.model)?;
    if a.from.len() != model.dim() {
        bail!(
            "--from has {} values; {} has {} coordinates ({})",
            a.from.len(),
            model.name(),
            model.dim(),
            model.chart.names().join(", ")
        );
    }
    if !a.time.is_finite() || a.time < 0.0 {
        bail!("-T must be a nonnegative time");
    }
    let opts = IntegrateOptions {
        stop_at_faces: !a.through_faces,
        ..integration_options(&a.integration)?
    };
    let tr = integrate(&model.x, &a.from, a.time, &opts)?;
    let flow = Flow::new(&model.x);
    let periods: Vec<Option<f64>> = (0..model.dim()).map(|i| flow.period(i)).collect();
    let mut header = vec!["t".to_string()];
    header.extend(tr.names.iter().cloned());
    header.extend(tr.periodic.iter().map(|&i| format!("winding_{}", tr.names[i])));
    let rows = (0..tr.times.len()).map(|k| {
        let mut row = vec![num(tr.times[k])];
        row.extend(tr.unwrapped(k, &periods).into_iter().map(num));
        row.extend(tr.windings[k].iter().map(|w| w.to_string()));
        row
    });
    emit(a.output.as_deref(), &csv_bytes(&header, rows)?)?;
    let last = tr.times.len() - 1;
    eprintln!("{} samples, ended at t = {} ({:?})", tr.times.len(), tr.end_time(), tr.termination);
    let report = ReportFile::new(
        "flow",
        Some(&file),
        no_seeds("initial point"),
        json!({ "from": a.from, "time": a.time, "integrate": opts }),
        json!({
            "method": tr.method,
            "samples": tr.times.len(),
            "end_time": tr.end_time(),
            "end_point": tr.unwrapped(last, &periods),
            "termination": tr.termination,
            "stats": tr.stats,
        }),
    );
    emit_report(a.report.as_deref(), &report)?;
    Ok(Outcome::Success)
}

pub fn trap(a: &TrapArgs) -> Result<Outcome> {
    let (file, model) = load_model(&a.model)?;
    let plug = model
        .plug
        .clone()
        .ok_or_else(|| anyhow!("model `{}` carries no plug annotation; trap needs a plug", model.name()))?;
    if a.grid == 0 {
        bail!("--grid must be positive");
    }
    if !(a.t_max > 0.0) {
        bail!("--Tmax must be positive");
    }
    let opts = TraverseOptions {
        t_max: a.t_max,
        integrate: IntegrateOptions {
            record: false,
            ..integration_options(&a.integration)?
        },
    };
    let scan = matched_ends_scan(&model, a.grid, &opts)?;
    let mut header: Vec<String> = ["i", "j"].map(String::from).to_vec();
    header.extend(scan.axes.iter().cloned());
    header.extend(["outcome", "value", "transit_time", "in_window"].map(String::from));
    let rows = scan.cells.iter().map(|c| {
        vec![
            c.i.to_string(),
            c.j.to_string(),
            num(c.entry[plug.scan[0]]),
            num(c.entry[plug.scan[1]]),
            if c.trapped { "trapped" } else { "exit" }.to_string(),
            num(c.value),
            c.transit_time.map(num).unwrap_or_default(),
            c.in_window.map(|b| b.to_string()).unwrap_or_default(),
        ]
    });
    emit(a.output.as_deref(), &csv_bytes(&header, rows)?)?;
    eprintln!(
        "{} cells: {} exit, {} trapped (fraction {}), max matched-ends displacement {:.3e}",
        scan.cells.len(),
        scan.exits,
        scan.trapped,
        scan.trapped_fraction,
        scan.max_displacement
    );
    let mut summary = serde_json::to_value(&scan)?;
    if let Some(o) = summary.as_object_mut() {
        o.remove("cells");
        o.insert("rows".into(), json!(scan.cells.len()));
    }
    let report = ReportFile::new(
        "trap",
        Some(&file),
        no_seeds("entry-face cell centres"),
        json!({ "grid": a.grid, "t_max": a.t_max, "integrate": opts.integrate }),
        summary,
    );
    emit_report(a.report.as_deref(), &report)?;
    Ok(Outcome::Success)
}

pub fn periodic(a: &PeriodicArgs) -> Result<Outcome> {
    let (file, model) = load_model(&a.model)?;
    let section = Section::of(&model)?;
    if a.max_period == 0 {
        bail!("--max-period must be at least 1");
    }
    let seeds = default_seeds(&model, a.spread)?;
    let opts = SearchOptions {
        max_period: a.max_period,
        tol: a.tol,
        ..Default::default()
    };
    let rep = periodic_orbit_search(&model, &seeds, &opts)?;
    let names: Vec<String> = model.chart.names().into_iter().map(String::from).collect();
    let mut header: Vec<String> = ["period", "residual", "seed"].map(String::from).to_vec();
    header.extend(names.iter().cloned());
    let rows = rep.candidates.iter().map(|c| {
        let mut row = vec![c.period.to_string(), num(c.residual), c.seed.to_string()];
        row.extend(c.point.iter().copied().map(num));
        row
    });
    emit(a.output.as_deref(), &csv_bytes(&header, rows)?)?;
    eprintln!("{}", rep.summary());
    let distinct: BTreeSet<usize> = rep.candidates.iter().map(|c| c.period).collect();
    let report = ReportFile::new(
        "periodic",
        Some(&file),
        no_seeds(&format!("3^{} lattice, spread {}", model.dim() - 1, a.spread)),
        json!({ "section": section, "max_period": a.max_period, "tol": a.tol, "spread": a.spread, "search": opts }),
        json!({ "summary": rep.summary(), "periods": distinct, "search": rep }),
    );
    emit_report(a.report.as_deref(), &report)?;
    Ok(Outcome::Success)
}
