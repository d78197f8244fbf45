use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

use nbeats::diagnostics::DiagnosticsReport;
use nbeats::io::atomic_write;
use nbeats::training::EvalReport;

use crate::commands::{SweepArtifact, OUTPUT_SCHEMA_VERSION};
use crate::ReportArgs;

const SKIPPED: [&str; 3] = ["manifest.json", "checkpoints.json", "training.json"];

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
            continue;
        }
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".json") && !name.ends_with(".timing.json") && !SKIPPED.contains(&name) {
            out.push(p);
        }
    }
    Ok(())
}

enum Artifact {
    Eval(Box<EvalReport>),
    Sweep(Box<SweepArtifact>),
    Diagnostics(Box<DiagnosticsReport>),
}

fn classify(path: &Path) -> Result<Option<Artifact>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let Ok(value) = serde_json::from_slice::<Value>(&bytes) else {
        return Ok(None);
    };
    let Some(version) = value.get("schema_version").and_then(Value::as_u64) else {
        return Ok(None);
    };
    if version != u64::from(OUTPUT_SCHEMA_VERSION) {
        bail!("{}: schema version {version} (expected {OUTPUT_SCHEMA_VERSION})", path.display());
    }
    if let Ok(r) = serde_json::from_value::<EvalReport>(value.clone()) {
        return Ok(Some(Artifact::Eval(Box::new(r))));
    }
    if let Ok(s) = serde_json::from_value::<SweepArtifact>(value.clone()) {
        return Ok(Some(Artifact::Sweep(Box::new(s))));
    }
    if let Ok(d) = serde_json::from_value::<DiagnosticsReport>(value) {
        return Ok(Some(Artifact::Diagnostics(Box::new(d))));
    }
    Ok(None)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn preamble(digests: &[String], seeds: &[u64]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!("# config_digests: {}\n# seeds: {}\n", digests.join(" "), seeds.join(" "))
}

pub fn run(a: ReportArgs) -> Result<()> {
    let mut files = Vec::new();
    collect_json(&a.artifacts, &mut files)?;
    let mut evals = Vec::new();
    let mut sweeps = Vec::new();
    let mut diags = Vec::new();
    for f in &files {
        match classify(f)? {
            Some(Artifact::Eval(r)) => evals.push(*r),
            Some(Artifact::Sweep(s)) => sweeps.push(*s),
            Some(Artifact::Diagnostics(d)) => diags.push(*d),
            None => eprintln!("skipping {}: not a report artifact", f.display()),
        }
    }
    if evals.is_empty() && sweeps.is_empty() && diags.is_empty() {
        bail!("no evaluation, sweep or diagnostics outputs under {}", a.artifacts.display());
    }

    if !evals.is_empty() {
        let digests: Vec<String> = evals.iter().map(|r| r.config_digest.clone()).collect();
        let seeds: Vec<u64> = evals.iter().flat_map(|r| r.seeds.iter().copied()).collect();
        let mut csv = preamble(&digests, &seeds);
        csv.push_str("source,target,split,metric,value,smape,smape_m3,mape,mase,owa,nd,naive2_smape,naive2_mase,members,config_digest\n");
        for r in &evals {
            for row in r.rows.iter().chain(std::iter::once(&r.aggregate)) {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.source,
                    r.target,
                    row.split,
                    r.metric.name(),
                    opt(row.value(r.metric).ok()),
                    row.smape,
                    row.smape_m3,
                    row.mape,
                    opt(row.mase),
                    opt(row.owa),
                    opt(row.nd),
                    row.naive2_smape,
                    opt(row.naive2_mase),
                    r.member_count,
                    r.config_digest
                )?;
            }
        }
        atomic_write(&a.out.join("table.csv"), csv.as_bytes())?;
    }

    if !sweeps.is_empty() {
        let digests: Vec<String> = sweeps.iter().map(|s| s.table.config_digest.clone()).collect();
        let seeds: Vec<u64> = sweeps
            .iter()
            .flat_map(|s| s.table.rows.iter().flat_map(|r| r.seeds.iter().copied()))
            .collect();
        let mut csv = preamble(&digests, &seeds);
        csv.push_str("source,target,frequency,metric,block_count,sharing,value,mean,std,members,config_digest\n");
        for s in &sweeps {
            for r in &s.table.rows {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    s.source,
                    s.target,
                    s.frequency,
                    s.table.metric.name(),
                    r.block_count,
                    if r.share_weights { "shared" } else { "unique" },
                    r.value,
                    r.bootstrap_mean,
                    r.bootstrap_std,
                    r.members,
                    s.table.config_digest
                )?;
            }
        }
        atomic_write(&a.out.join("sweep_plot.csv"), csv.as_bytes())?;
    }

    if !diags.is_empty() {
        let digests: Vec<String> = diags.iter().map(|d| d.checkpoint_digest.clone()).collect();
        let seeds: Vec<u64> = diags.iter().map(|d| d.seed).collect();
        let mut csv = preamble(&digests, &seeds);
        csv.push_str("checkpoint_digest,epsilon,mean_residual,max_residual,order\n");
        for d in &diags {
            for row in &d.linearization {
                writeln!(
                    csv,
                    "{},{:?},{:?},{:?},{}",
                    d.checkpoint_digest,
                    row.epsilon,
                    row.mean_residual,
                    row.max_residual,
                    opt(d.linearization_order)
                )?;
            }
        }
        atomic_write(&a.out.join("diagnostics.csv"), csv.as_bytes())?;
    }
    println!(
        "{} evaluation, {} sweep and {} diagnostics output(s) -> {}",
        evals.len(),
        sweeps.len(),
        diags.len(),
        a.out.display()
    );
    Ok(())
}
