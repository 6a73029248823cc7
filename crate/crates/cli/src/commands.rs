use std::io::Write;
use std::path::Path;

use anyhow::Context;
use matldc::dataio::{load_csv, make_splits, synth_generate, write_csv, Dataset, Fold, SynthConfig};
use matldc::trainer::{
    evaluate, fit_fold, k_csv, k_sweep, noise_csv, noise_sweep, run_protocol, Checkpoint, ConfusionMatrix, OpTrace,
    RunOptions,
};
use serde::Serialize;
use toml::Value;

use crate::artifacts::Writer;
use crate::config::{self, Override, RunFile};
use crate::exit::{from_lib, CliError};
use crate::{Command, Common};

type Res<T> = Result<T, CliError>;

pub fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Train { common, target } => train(&common, target),
        Command::Eval { common, checkpoint } => eval(&common, checkpoint.as_deref()),
        Command::Protocol { common } => protocol(&common),
        Command::NoiseSweep { common } => sweep_noise(&common),
        Command::KSweep { common } => sweep_k(&common),
        Command::Synth { common } => synth(&common),
    }
}

fn load_run(common: &Common, synth: bool, extra: Vec<Override>) -> Res<RunFile> {
    if common.config.is_none() && !synth {
        return Err(CliError::Config("a run file is required for this command".into()));
    }
    let mut overrides = common.overrides(synth);
    overrides.extend(extra);
    let mut run = config::load(common.config.as_deref(), &overrides)?;
    if !common.disable.is_empty() {
        for d in &common.disable {
            let a = matldc::trainer::Ablation::parse(d).map_err(|e| from_lib(e, "--disable"))?;
            run.train.disable.insert(a);
        }
    }
    if synth && run.data.synth.is_none() {
        let mut s = SynthConfig::default();
        if let Some(seed) = common.seed {
            s.seed = seed;
        }
        run.data.synth = Some(s);
    }
    run.validate(!synth)?;
    Ok(run)
}

fn load_data(run: &RunFile) -> Res<Dataset<f64>> {
    if let Some(path) = &run.data.csv {
        if !path.exists() {
            return Err(CliError::MissingFile(format!("{}: data file not found", path.display())));
        }
        return load_csv(path, &run.data.schema()).map_err(|e| from_lib(e, format!("loading {}", path.display())));
    }
    let s = run.data.synth.as_ref().expect("validated");
    synth_generate(s).map_err(|e| from_lib(e, "generating synthetic data"))
}

fn options(common: &Common) -> RunOptions {
    RunOptions { jobs: common.jobs.max(1), diagnostics: common.dump_diagnostics }
}

fn select_fold(ds: &Dataset<f64>, run: &RunFile) -> Res<Fold> {
    let plan = make_splits(ds, run.protocol).map_err(|e| from_lib(e, "building folds"))?;
    let ids = &ds.id_maps().subjects;
    let dense = match run.fold.target_subject {
        None => 0,
        Some(id) => ids.iter().position(|&s| s == id).ok_or_else(|| {
            CliError::Config(format!("`fold.target_subject`: subject {id} is not in the data"))
        })?,
    };
    Ok(plan.folds.into_iter().find(|f| f.target_subject == dense).expect("one fold per subject"))
}

fn say(line: impl AsRef<str>) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", line.as_ref());
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    target_subject_id: i64,
    source_subject_ids: Vec<i64>,
    checkpoint: &'a Path,
    epochs: &'a [matldc::trainer::EpochLog],
}

fn train(common: &Common, target: Option<i64>) -> Res<()> {
    let extra = target.map(|t| Override::new("fold.target_subject", Value::Integer(t))).into_iter().collect();
    let run = load_run(common, false, extra)?;
    let ds = load_data(&run)?;
    let fold = select_fold(&ds, &run)?;
    let state = fit_fold(&ds, &fold, &run.train, options(common), &mut OpTrace::default())
        .map_err(|e| from_lib(e, "training"))?;
    let w = Writer::new("train", &run)?;
    let ckpt = w.path("checkpoint.json");
    Checkpoint::new(run.train.clone(), state.clone())
        .save(&ckpt)
        .map_err(|e| from_lib(e, format!("writing {}", ckpt.display())))?;
    let ids = &ds.id_maps().subjects;
    w.json(
        "train.json",
        &TrainSummary {
            target_subject_id: ids[fold.target_subject],
            source_subject_ids: state.source_subjects.iter().map(|&s| ids[s]).collect(),
            checkpoint: &ckpt,
            epochs: &state.epochs,
        },
    )?;
    let last = state.epochs.last().expect("at least one epoch");
    say(format!(
        "trained {} epochs holding out subject {}; final loss {:.4}; checkpoint {}",
        state.epochs.len(),
        ids[fold.target_subject],
        last.loss.total,
        ckpt.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    target_subject_id: i64,
    n_samples: usize,
    accuracy: f64,
    confusion: ConfusionMatrix,
}

fn eval(common: &Common, checkpoint: Option<&Path>) -> Res<()> {
    let run = load_run(common, false, Vec::new())?;
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| run.output.join("checkpoint.json"));
    if !path.exists() {
        return Err(CliError::MissingFile(format!("{}: checkpoint not found", path.display())));
    }
    let ckpt: Checkpoint<f64> = Checkpoint::load(&path).map_err(|e| from_lib(e, format!("loading {}", path.display())))?;
    let ds = load_data(&run)?;
    let plan = make_splits(&ds, run.protocol).map_err(|e| from_lib(e, "building folds"))?;
    let fold = plan
        .folds
        .iter()
        .find(|f| f.source_subjects == ckpt.state.source_subjects)
        .ok_or_else(|| anyhow::anyhow!("the checkpoint's source subjects do not match any fold of this dataset"))?;
    let idx = fold.target_indices(&ds);
    let rows: Vec<&[f64]> = idx.iter().map(|&i| ds.samples()[i].features.as_slice()).collect();
    let x = matldc::Matrix::from_rows(&rows)
        .map_err(|e| from_lib(e, "assembling target rows"))?;
    let labels: Vec<usize> = idx.iter().map(|&i| ds.samples()[i].class_label).collect();
    let ev = evaluate(&ckpt.state, &x, &labels).map_err(|e| from_lib(e, "evaluating"))?;

    let w = Writer::new("eval", &run)?;
    let class_ids = &ds.id_maps().labels;
    let mut body = String::from("sample_index,true_label,predicted_label,superdomain,max_affinity,max_prob\n");
    for ((&i, &y), p) in idx.iter().zip(&labels).zip(&ev.predictions) {
        body.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            class_ids[y],
            class_ids[p.label],
            p.superdomain,
            p.max_affinity(),
            p.max_prob()
        ));
    }
    w.csv("predictions.csv", &body)?;
    let target_id = ds.id_maps().subjects[fold.target_subject];
    w.json(
        "eval.json",
        &EvalSummary { target_subject_id: target_id, n_samples: idx.len(), accuracy: ev.accuracy, confusion: ev.confusion },
    )?;
    say(format!("subject {target_id}: accuracy {:.2}% over {} samples", 100.0 * ev.accuracy, idx.len()));
    Ok(())
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    report: &'a matldc::trainer::RunReport,
}

fn protocol(common: &Common) -> Res<()> {
    let run = load_run(common, false, Vec::new())?;
    let ds = load_data(&run)?;
    let report = run_protocol(&ds, run.protocol, &run.train, options(common)).map_err(|e| from_lib(e, "protocol run"))?;
    if report.target_reads_before_eval() != 0 {
        return Err(anyhow::anyhow!("held-out subjects were read before evaluation").into());
    }
    let w = Writer::new("protocol", &run)?;
    w.json("report.json", &ReportDoc { report: &report })?;
    w.csv("folds.csv", &report.folds_csv())?;
    w.csv("epochs.csv", &report.epochs_csv())?;
    for f in &report.folds {
        say(format!("subject {}: {:.2}%", f.target_subject_id, 100.0 * f.accuracy));
    }
    say(report.table_line("matldc"));
    Ok(())
}

#[derive(Serialize)]
struct NoiseDoc<'a> {
    rows: &'a [matldc::trainer::NoiseRow],
}

fn sweep_noise(common: &Common) -> Res<()> {
    let run = load_run(common, false, Vec::new())?;
    let ds = load_data(&run)?;
    let rows = noise_sweep(&ds, run.protocol, &run.noise_sweep.etas, &run.train, options(common))
        .map_err(|e| from_lib(e, "noise sweep"))?;
    let w = Writer::new("noise-sweep", &run)?;
    w.json("noise.json", &NoiseDoc { rows: &rows })?;
    w.csv("noise.csv", &noise_csv(&rows))?;
    for r in &rows {
        say(format!("eta {:.2}: pointwise {}  pairwise {}", r.eta, r.pointwise.percent(), r.pairwise.percent()));
    }
    Ok(())
}

#[derive(Serialize)]
struct KDoc<'a> {
    rows: &'a [matldc::trainer::KRow],
}

fn sweep_k(common: &Common) -> Res<()> {
    let run = load_run(common, false, Vec::new())?;
    let ds = load_data(&run)?;
    let rows =
        k_sweep(&ds, run.protocol, &run.k_sweep.ks, &run.train, options(common)).map_err(|e| from_lib(e, "K sweep"))?;
    let w = Writer::new("k-sweep", &run)?;
    w.json("k.json", &KDoc { rows: &rows })?;
    w.csv("k.csv", &k_csv(&rows))?;
    for r in &rows {
        say(format!("K {}: {}", r.k, r.accuracy.percent()));
    }
    Ok(())
}

fn synth(common: &Common) -> Res<()> {
    let run = load_run(common, true, Vec::new())?;
    let s = run.data.synth.as_ref().expect("set above");
    let ds = synth_generate::<f64>(s).map_err(|e| from_lib(e, "generating synthetic data"))?;
    let w = Writer::new("synth", &run)?;
    let path = w.path("synth.csv");
    let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_csv(&ds, file, &w.comment_lines()).map_err(|e| from_lib(e, format!("writing {}", path.display())))?;
    say(format!("{} samples, {} subjects -> {}", ds.len(), ds.n_subjects(), path.display()));
    Ok(())
}
