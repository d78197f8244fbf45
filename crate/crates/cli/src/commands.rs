use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nbeats::data::{
    convert as convert_files, load_corpus, map_frequency, save_corpus, source_series, synth_corpus, ConvertOptions,
    Corpus, DatasetKind, Frequency, SynthFamily,
};
use nbeats::diagnostics::{diagnose as run_diagnostics, DiagnoseOptions};
use nbeats::io::{atomic_write, write_json};
use nbeats::metrics::MetricKind;
use nbeats::model::checkpoint;
use nbeats::training::{
    block_sweep, default_workers, load_checkpoint_set, read_checkpoint_set, save_checkpoint_set, train_source,
    training_plan, zero_shot_eval, EvalReport, MemberSummary, PlannedSplit, Precision, SweepPair, SweepTable,
};
use nbeats::Scalar;

use crate::config::{RunConfig, RunConfigFile};
use crate::{ConvertArgs, DiagnoseArgs, Family, RunArgs, SweepArgs, TrainArgs, ZeroshotArgs};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

fn workers(flag: Option<usize>) -> usize {
    flag.filter(|n| *n > 0).unwrap_or_else(default_workers)
}

/// Wall-clock time lives next to an output so the output itself stays
/// byte-identical across reruns.
#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    workers: usize,
    wall_clock_seconds: f64,
}

fn write_timing(path: &Path, command: &str, workers: usize, started: Instant) -> Result<()> {
    let timing = Timing {
        command,
        workers,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(path, &timing)?;
    Ok(())
}

/// CSV body prefixed by `#` lines naming the config digest and seeds.
pub fn with_provenance(config_digest: &str, seeds: &[u64], body: &str) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!("# config_digest: {config_digest}\n# seeds: {}\n{body}", seeds.join(" "))
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn resolve_run(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfigFile::load(run.config.as_deref())?.resolve(run.profile)?;
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(run.iterations => cfg.train.iterations);
    set!(run.batch_size => cfg.train.batch_size);
    set!(run.learning_rate => cfg.train.learning_rate);
    set!(run.width => cfg.train.width);
    set!(run.blocks => cfg.train.block_count);
    set!(run.layers => cfg.train.layers);
    set!(run.share_weights => cfg.train.share_weights);
    set!(run.seed => cfg.train.seed);
    set!(run.lookbacks => cfg.ensemble.lookback_multiples);
    set!(run.losses => cfg.ensemble.losses);
    set!(run.repeats => cfg.ensemble.repeats);
    set!(run.precision => cfg.precision);
    if run.source.is_some() {
        cfg.source = run.source.clone();
    }
    if run.target.is_some() {
        cfg.target = run.target.clone();
    }
    if run.out.is_some() {
        cfg.out = run.out.clone();
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn workers_for(run: &RunArgs) -> Result<usize> {
    let file = RunConfigFile::load(run.config.as_deref())?;
    Ok(workers(run.workers.or(file.workers)))
}

pub fn convert(a: ConvertArgs) -> Result<()> {
    let mut corpus = match a.synthetic {
        Some(family) => {
            let fam = match family {
                Family::Source => SynthFamily::source(),
                Family::Target => SynthFamily::target(),
            };
            synth_corpus(&fam, a.count, a.seed)?
        }
        None => {
            if a.inputs.is_empty() {
                bail!("convert needs at least one --input file");
            }
            let opts = ConvertOptions {
                frequency: a.frequency,
                horizon: a.horizon,
                dataset: a.dataset.clone().map(DatasetKind::from),
                name: a.name.clone(),
            };
            convert_files(a.layout.expect("clap requires a layout").into(), &a.inputs, &opts)?
        }
    };
    if let Some(name) = a.name {
        corpus.name = name;
    }
    let manifest = save_corpus(&corpus, &a.out)?;
    let groups: Vec<String> = corpus
        .frequencies()
        .map(|f| format!("{f} ({} series, H={})", corpus.group(f).map_or(0, <[_]>::len), corpus.horizon(f).unwrap_or(0)))
        .collect();
    println!("{}: {}", manifest.display(), groups.join(", "));
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainingLog {
    schema_version: u32,
    run: RunConfig,
    plan: Vec<PlannedSplit>,
    config_digest: String,
    seeds: Vec<u64>,
    members: Vec<MemberSummary>,
}

fn train_as<T: Scalar>(cfg: &RunConfig, source: &Corpus, plan: &[PlannedSplit], out: &Path, workers: usize) -> Result<()> {
    let (trained, members) = train_source::<T>(source, plan, &cfg.train, &cfg.ensemble, workers)?;
    save_checkpoint_set(&trained, cfg.precision, out)?;
    let log = TrainingLog {
        schema_version: OUTPUT_SCHEMA_VERSION,
        run: cfg.clone(),
        plan: plan.to_vec(),
        config_digest: trained.config_digest(),
        seeds: trained.seeds(),
        members,
    };
    write_json(&out.join("training.json"), &log)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = resolve_run(&a.run)?;
    let workers = workers_for(&a.run)?;
    let source_path = cfg.source.clone().context("train needs --source (or `source` in the config)")?;
    let out = cfg.out.clone().context("train needs --out (or `out` in the config)")?;
    let source = load_corpus(&source_path)?;
    let target = cfg.target.as_deref().map(load_corpus).transpose()?;
    let plan = training_plan(&source, target.as_ref())?;
    eprintln!(
        "training {} members x {} split(s) on {workers} worker(s)",
        cfg.ensemble.member_count(),
        plan.len()
    );
    match cfg.precision {
        Precision::F32 => train_as::<f32>(&cfg, &source, &plan, &out, workers)?,
        Precision::F64 => train_as::<f64>(&cfg, &source, &plan, &out, workers)?,
    }
    write_timing(&out.join("train.timing.json"), "train", workers, started)?;
    println!("{}", out.join(nbeats::training::CHECKPOINT_SET_FILE).display());
    Ok(())
}

fn zeroshot_as<T: Scalar>(checkpoints: &Path, target: &Corpus, metric: MetricKind, workers: usize) -> Result<EvalReport> {
    let (_, source) = load_checkpoint_set::<T>(checkpoints)?;
    Ok(zero_shot_eval(&source, target, metric, workers)?)
}

/// Output stem of an evaluation report.
pub fn eval_stem(report: &EvalReport) -> String {
    format!("eval_{}_to_{}", slug(&report.source), slug(&report.target))
}

pub fn zeroshot(a: ZeroshotArgs) -> Result<()> {
    let started = Instant::now();
    let workers = workers(a.workers);
    let set = read_checkpoint_set(&a.checkpoints)?;
    let target = load_corpus(&a.target)?;
    let report = match set.precision {
        Precision::F32 => zeroshot_as::<f32>(&a.checkpoints, &target, a.metric, workers)?,
        Precision::F64 => zeroshot_as::<f64>(&a.checkpoints, &target, a.metric, workers)?,
    };
    if !report.weights_unchanged() {
        bail!("checkpoint digest changed during evaluation");
    }
    let stem = eval_stem(&report);
    write_json(&a.out.join(format!("{stem}.json")), &report)?;
    atomic_write(
        &a.out.join(format!("{stem}.csv")),
        with_provenance(&report.config_digest, &report.seeds, &report.to_csv()).as_bytes(),
    )?;
    write_timing(&a.out.join(format!("{stem}.timing.json")), "zeroshot", workers, started)?;
    let headline = report.headline.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} -> {}: {} {headline} (Naive2 sMAPE {:.4}, {} members)",
        report.source,
        report.target,
        report.metric.name(),
        report.aggregate.naive2_smape,
        report.member_count
    );
    Ok(())
}

/// Sweep table plus the run it came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepArtifact {
    pub schema_version: u32,
    pub source: String,
    pub target: String,
    pub frequency: Frequency,
    pub run: RunConfig,
    pub table: SweepTable,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = resolve_run(&a.run)?;
    let workers = workers_for(&a.run)?;
    if let Some(b) = &a.block_counts {
        cfg.sweep.block_counts = b.clone();
    }
    if let Some(s) = a.sharing {
        cfg.sweep.sharing = s.values();
    }
    if let Some(r) = a.resamples {
        cfg.sweep.resamples = r;
    }
    if let Some(m) = a.metric {
        cfg.metric = m;
    }
    if a.frequency.is_some() {
        cfg.frequency = a.frequency;
    }
    let source = load_corpus(cfg.source.as_deref().context("sweep needs --source")?)?;
    let target = load_corpus(cfg.target.as_deref().context("sweep needs --target")?)?;
    let out: PathBuf = cfg.out.clone().context("sweep needs --out")?;
    let frequency = match cfg.frequency {
        Some(f) => f,
        None => {
            let all: Vec<Frequency> = target.frequencies().collect();
            match all.as_slice() {
                [f] => *f,
                _ => bail!("target has several splits; pick one with --frequency"),
            }
        }
    };
    cfg.frequency = Some(frequency);
    let split = map_frequency(&source, frequency)?;
    let series = source_series(&source, split)?;
    let target_series = target
        .group(frequency)
        .with_context(|| format!("target corpus has no {frequency} split"))?;
    let horizon = target.horizon(frequency).expect("non-empty group");
    let planned = PlannedSplit { split, horizon };
    let pair = SweepPair {
        source: &series,
        target: target_series,
        horizon,
        seasonality: planned.seasonality(),
    };
    let table = match cfg.precision {
        Precision::F32 => block_sweep::<f32>(&pair, &cfg.sweep, &cfg.train, &cfg.ensemble, cfg.metric, workers)?,
        Precision::F64 => block_sweep::<f64>(&pair, &cfg.sweep, &cfg.train, &cfg.ensemble, cfg.metric, workers)?,
    };
    let stem = format!("sweep_{}_to_{}_{}", slug(&source.name), slug(&target.name), slug(frequency.name()));
    let seeds: Vec<u64> = table.rows.iter().flat_map(|r| r.seeds.iter().copied()).collect();
    atomic_write(
        &out.join(format!("{stem}.csv")),
        with_provenance(&table.config_digest, &seeds, &table.to_csv()).as_bytes(),
    )?;
    let artifact = SweepArtifact {
        schema_version: OUTPUT_SCHEMA_VERSION,
        source: source.name.clone(),
        target: target.name.clone(),
        frequency,
        run: cfg,
        table,
    };
    write_json(&out.join(format!("{stem}.json")), &artifact)?;
    write_timing(&out.join(format!("{stem}.timing.json")), "sweep", workers, started)?;
    for r in &artifact.table.rows {
        println!(
            "L={:<3} {:<6} {} {:.4} (bootstrap {:.4} +/- {:.4})",
            r.block_count,
            if r.share_weights { "shared" } else { "unique" },
            artifact.table.metric.name(),
            r.value,
            r.bootstrap_mean,
            r.bootstrap_std
        );
    }
    Ok(())
}

pub fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let started = Instant::now();
    let workers = workers(a.workers);
    let model = if a.checkpoint.extension().is_some_and(|e| e == "nbck") {
        checkpoint::load::<f64>(&a.checkpoint)?
    } else {
        let (_, source) = load_checkpoint_set::<f64>(&a.checkpoint)?;
        let mut members: Vec<_> = source.members().cloned().collect();
        if a.member >= members.len() {
            bail!("member {} out of range (set has {})", a.member, members.len());
        }
        members.swap_remove(a.member)
    };
    let opts = DiagnoseOptions {
        probes: a.probes,
        seed: a.seed,
        collapse_max_blocks: a.max_blocks,
        ..DiagnoseOptions::default()
    };
    let pool = rayon_pool(workers)?;
    let report = pool.install(|| run_diagnostics(&model, &opts))?;
    write_json(&a.out, &report)?;
    write_timing(&a.out.with_extension("timing.json"), "diagnose", workers, started)?;
    let order = report.linearization_order.map_or("n/a".to_string(), |o| format!("{o:.3}"));
    let collapse = report.collapse.iter().map(|c| c.max_rel_diff).fold(0.0, f64::max);
    println!(
        "linearization order {order}, worst collapse error {collapse:.2e}, shift recursion error {:.2e}",
        report.shift_recursion_error
    );
    Ok(())
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}
