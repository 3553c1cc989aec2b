use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use treeconv::baselines::{dt_fit, flatten_all, Knn, TreeConfig};
use treeconv::casas::{
    cv_folds, filter_value, parse_line, read_corpus, split_files, write_events_csv, DatasetSplit, LogFile,
    ParsedLine, SensorVocabulary, ACTIVITY_NAMES,
};
use treeconv::metrics::{evaluate, write_metrics_csv, Evaluation, Summary};
use treeconv::model::{load_params_for, network_gradient_check, predict as model_predict, save_params};
use treeconv::synth::{write_corpus, SynthProfile};
use treeconv::training::{self, fit_with, write_loss_log, write_sweep_csv, SweepRow};
use treeconv::windowing::make_windows;
use treeconv::{LabelPair, SampleWindow};

use crate::config::{Method, RunConfig};
use crate::{CliError, Command, ProfileArgs};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const CHECKPOINT_NAME: &str = "model.ckpt";

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(c) => ingest(&c.resolve()?),
        Command::Train(c) => train(&c.resolve()?),
        Command::Eval(c) => eval(&c.resolve()?),
        Command::Sweep(c) => sweep(&c.resolve()?),
        Command::Predict { common, history, line } => predict(&common.resolve()?, &history, &line),
        Command::Gradcheck(c) => gradcheck(&c.resolve()?),
        Command::Synth { common, profile } => synth(&common.resolve()?, &profile),
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|()| w.flush()).map_err(|e| io_error(path, e))
}

/// Refuses output locations inside the dataset, so no command adds to or
/// overwrites its input.
fn check_outside_data(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let Some(data) = &cfg.data else {
        return Ok(());
    };
    let Ok(data) = fs::canonicalize(data) else {
        return Ok(());
    };
    let out = fs::canonicalize(out)
        .or_else(|_| std::path::absolute(out))
        .map_err(|e| io_error(out, e))?;
    if out.starts_with(&data) {
        return Err(CliError::Usage(format!(
            "output directory {} lies inside the dataset {}",
            out.display(),
            data.display()
        )));
    }
    Ok(())
}

/// Creates the output directory and echoes the resolved configuration into it.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = require(&cfg.out, "out")?.to_path_buf();
    check_outside_data(cfg, &out)?;
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let path = out.join("config.txt");
    fs::write(&path, cfg.to_text()).map_err(|e| io_error(&path, e))?;
    Ok(out)
}

fn load_corpus(cfg: &RunConfig, vocab: &SensorVocabulary) -> Result<Vec<LogFile>, CliError> {
    let files = read_corpus(require(&cfg.data, "data")?, vocab)?;
    for f in files.iter().filter(|f| f.unlabeled > 0) {
        eprintln!("warning: {}: skipped {} unannotated line(s)", f.name, f.unlabeled);
    }
    Ok(files)
}

fn windows_of<'a>(files: impl IntoIterator<Item = &'a LogFile>, cfg: &RunConfig, vocab: usize) -> Vec<SampleWindow> {
    files
        .into_iter()
        .flat_map(|f| make_windows(&filter_value(&f.events, &cfg.value), cfg.k, vocab))
        .collect()
}

fn select<'a>(files: &'a [LogFile], names: &[String]) -> Vec<&'a LogFile> {
    files.iter().filter(|f| names.contains(&f.name)).collect()
}

fn names(files: &[LogFile]) -> Vec<String> {
    files.iter().map(|f| f.name.clone()).collect()
}

struct Split {
    plan: DatasetSplit,
    train: Vec<SampleWindow>,
    test: Vec<SampleWindow>,
}

fn split(cfg: &RunConfig, files: &[LogFile], vocab: usize) -> Result<Split, CliError> {
    let plan = split_files(&names(files), cfg.split_ratio, cfg.seed)?;
    Ok(windows_for(plan, cfg, files, vocab))
}

fn windows_for(plan: DatasetSplit, cfg: &RunConfig, files: &[LogFile], vocab: usize) -> Split {
    let train = windows_of(select(files, &plan.train_files), cfg, vocab);
    let test = windows_of(select(files, &plan.test_files), cfg, vocab);
    eprintln!(
        "split: {} training files ({} windows), {} test files ({} windows)",
        plan.train_files.len(),
        train.len(),
        plan.test_files.len(),
        test.len()
    );
    Split { plan, train, test }
}

fn write_split(out: &Path, plan: &DatasetSplit) -> Result<(), CliError> {
    write_with(&out.join("split.csv"), |w| {
        writeln!(w, "file,set")?;
        for f in &plan.train_files {
            writeln!(w, "{f},train")?;
        }
        for f in &plan.test_files {
            writeln!(w, "{f},test")?;
        }
        Ok(())
    })
}

fn report(out: &Path, rows: &[(String, Summary)], pooled: &Evaluation) -> Result<(), CliError> {
    for c in pooled.resident.degenerate_classes() {
        eprintln!("warning: resident {} has no true or no predicted events; its zero-denominator scores are 0", c + 1);
    }
    write_with(&out.join("metrics.csv"), |w| write_metrics_csv(w, rows))?;
    write_with(&out.join("resident_confusion.csv"), |w| pooled.resident.write_csv(w))?;
    write_with(&out.join("activity_confusion.csv"), |w| pooled.activity.write_csv(w))?;
    if let Some((method, summary)) = rows.last() {
        println!("{method}");
        print!("{summary}");
    }
    Ok(())
}

fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let files = load_corpus(cfg, &vocab)?;
    let out = prepare_out(cfg)?;
    let mut per_sensor = vec![0usize; vocab.len()];
    let mut rows = Vec::new();
    for f in &files {
        let kept = filter_value(&f.events, &cfg.value);
        for e in &kept {
            per_sensor[e.sensor] += 1;
        }
        write_with(&out.join(format!("{}.csv", f.name)), |w| write_events_csv(w, &f.events, &vocab))?;
        rows.push((f.name.clone(), f.events.len(), kept.len(), f.unlabeled));
    }
    write_with(&out.join("counts.csv"), |w| {
        writeln!(w, "file,events,on_events,unlabeled")?;
        for (name, events, on, unlabeled) in &rows {
            writeln!(w, "{name},{events},{on},{unlabeled}")?;
        }
        Ok(())
    })?;
    write_with(&out.join("vocabulary.csv"), |w| {
        writeln!(w, "index,tag,on_events")?;
        for (i, n) in per_sensor.iter().enumerate() {
            writeln!(w, "{i},{},{n}", vocab.tag(i))?;
        }
        Ok(())
    })?;
    println!("{:<24} {:>8} {:>8} {:>10}", "file", "events", cfg.value, "unlabeled");
    for (name, events, on, unlabeled) in &rows {
        println!("{name:<24} {events:>8} {on:>8} {unlabeled:>10}");
    }
    let unused: Vec<&str> = (0..vocab.len()).filter(|&i| per_sensor[i] == 0).map(|i| vocab.tag(i)).collect();
    println!(
        "{} files, {} {} events; sensors never seen: {}",
        rows.len(),
        rows.iter().map(|r| r.2).sum::<usize>(),
        cfg.value,
        if unused.is_empty() { "none".to_string() } else { unused.join(" ") }
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let files = load_corpus(cfg, &vocab)?;
    let data = split(cfg, &files, vocab.len())?;
    let out = prepare_out(cfg)?;
    let checkpoint = cfg.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_NAME));
    check_outside_data(cfg, &checkpoint)?;
    write_split(&out, &data.plan)?;

    let fit = fit_with(&data.train, &cfg.train_config(), |s| {
        eprintln!(
            "epoch {:>3}  avg {:.6}  max {:.6}  min {:.6}",
            s.epoch + 1,
            s.avg_loss,
            s.max_batch_loss,
            s.min_batch_loss
        );
    })?;
    save_params(&fit.model, &checkpoint)?;
    write_with(&out.join("loss_log.csv"), |w| write_loss_log(w, &fit.log))?;
    eprintln!("checkpoint written to {}", checkpoint.display());

    let e = evaluate(&data.test, &fit.model)?;
    report(&out, &[(Method::Tsc.name().to_string(), e.summary())], &e)
}

fn evaluate_baseline(method: Method, cfg: &RunConfig, train: &[SampleWindow], test: &[SampleWindow]) -> Result<Evaluation, CliError> {
    let train = flatten_all(train);
    let test = flatten_all(test);
    let pairs: Vec<(LabelPair, LabelPair)> = match method {
        Method::Knn => {
            let knn = Knn::new(train, cfg.neighbors)?;
            test.iter()
                .map(|s| Ok((s.label, knn.predict(&s.features)?)))
                .collect::<Result<_, CliError>>()?
        }
        Method::Dt => {
            let tree = dt_fit(
                &train,
                TreeConfig {
                    max_depth: cfg.max_depth,
                    min_leaf: cfg.min_leaf,
                },
            )?;
            eprintln!("decision tree: depth {}, {} nodes", tree.depth(), tree.node_count());
            test.iter()
                .map(|s| Ok((s.label, tree.predict(&s.features)?)))
                .collect::<Result<_, CliError>>()?
        }
        Method::Tsc => unreachable!("tsc is not a baseline"),
    };
    Ok(Evaluation::from_pairs(pairs)?)
}

fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let files = load_corpus(cfg, &vocab)?;
    let method = cfg.method;

    let Some(n) = cfg.cv else {
        let data = split(cfg, &files, vocab.len())?;
        let e = match method {
            Method::Tsc => {
                let path = require(&cfg.checkpoint, "checkpoint")?;
                let model = load_params_for(path, cfg.k, vocab.len())?;
                evaluate(&data.test, &model)?
            }
            _ => evaluate_baseline(method, cfg, &data.train, &data.test)?,
        };
        let out = prepare_out(cfg)?;
        write_split(&out, &data.plan)?;
        return report(&out, &[(method.name().to_string(), e.summary())], &e);
    };

    if method == Method::Tsc && cfg.checkpoint.is_some() {
        eprintln!("note: --cv trains one model per fold; --checkpoint is ignored");
    }
    let out = prepare_out(cfg)?;
    let mut pooled = Evaluation::default();
    let mut rows = Vec::new();
    for (i, plan) in cv_folds(&names(&files), n, cfg.seed)?.into_iter().enumerate() {
        eprintln!("fold {}/{n}", i + 1);
        let data = windows_for(plan, cfg, &files, vocab.len());
        let e = match method {
            Method::Tsc => {
                let model = training::fit(&data.train, &cfg.train_config())?.model;
                evaluate(&data.test, &model)?
            }
            _ => evaluate_baseline(method, cfg, &data.train, &data.test)?,
        };
        pooled.merge(&e);
        rows.push((format!("{}/fold{}", method.name(), i + 1), e.summary()));
    }
    rows.push((method.name().to_string(), pooled.summary()));
    report(&out, &rows, &pooled)
}

fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let files = load_corpus(cfg, &vocab)?;
    let data = split(cfg, &files, vocab.len())?;
    let out = prepare_out(cfg)?;
    let total = cfg.sweep.points().len();
    let mut done = 0;
    let rows = training::sweep(&data.train, &cfg.sweep, &cfg.train_config(), |r| {
        done += 1;
        eprintln!(
            "[{done}/{total}] alpha {} beta {} gamma {}: loss max {:.6} avg {:.6} min {:.6}",
            r.batch_size, r.l2_weight, r.learning_rate, r.max_loss, r.avg_loss, r.min_loss
        );
    })?;
    write_with(&out.join("sweep.csv"), |w| write_sweep_csv(w, &rows))?;
    if let Some(best) = rows
        .iter()
        .min_by(|a: &&SweepRow, b| a.avg_loss.total_cmp(&b.avg_loss))
    {
        println!(
            "lowest average loss {:.6} at alpha={} beta={} gamma={}",
            best.avg_loss, best.batch_size, best.l2_weight, best.learning_rate
        );
    }
    Ok(())
}

/// Sensor and value of a parsed line, labeled or not.
fn reading(parsed: ParsedLine) -> Option<(usize, String)> {
    match parsed {
        ParsedLine::Event(e) => Some((e.sensor, e.value)),
        ParsedLine::Unlabeled { sensor, value } => Some((sensor, value)),
        ParsedLine::Blank => None,
    }
}

fn predict(cfg: &RunConfig, history: &Path, line: &str) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let model = load_params_for(path, cfg.k, vocab.len())?;

    let text = fs::read_to_string(history).map_err(|e| io_error(history, e))?;
    let mut sensors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let parsed = parse_line(raw, i + 1, &vocab)
            .map_err(|e| CliError::Data(format!("{}:{}: {}", history.display(), e.line, e.kind)))?;
        if let Some((sensor, value)) = reading(parsed) {
            if value == cfg.value {
                sensors.push(sensor);
            }
        }
    }
    let (target, value) = parse_line(line, 1, &vocab)
        .map_err(|e| CliError::Data(format!("--line: {}", e.kind)))
        .map(reading)?
        .ok_or_else(|| CliError::Usage("--line is empty".into()))?;
    if value != cfg.value {
        eprintln!("warning: target value {value:?} is not {:?}", cfg.value);
    }
    sensors.push(target);

    let window = SampleWindow::from_sensors(&sensors, cfg.k, vocab.len(), LabelPair::new(0, 0));
    let pred = model_predict(&model, &window)?;
    let label = pred.label();
    eprintln!(
        "resident {} (p={:.4}), activity {} {} (p={:.4}), {} padded slot(s)",
        label.resident + 1,
        pred.resident_probs.data()[label.resident],
        label.activity + 1,
        ACTIVITY_NAMES[label.activity],
        pred.activity_probs.data()[label.activity],
        window.pad_count
    );
    println!("{label}");
    Ok(())
}

fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let vocab = SensorVocabulary::casas();
    let report = network_gradient_check(cfg.k, vocab.len(), cfg.seed, cfg.probes, cfg.beta)?;
    if cfg.out.is_some() {
        let out = prepare_out(cfg)?;
        write_with(&out.join("gradcheck.csv"), |w| {
            writeln!(w, "param,index,analytic,numeric,rel_error")?;
            for p in &report.probes {
                writeln!(w, "{},{},{:e},{:e},{:e}", p.param, p.index, p.analytic, p.numeric, p.rel_error)?;
            }
            Ok(())
        })?;
    }
    println!(
        "max relative error {:.3e} over {} probes (k={}, tolerance {:e})",
        report.max_rel_error,
        report.probes.len(),
        cfg.k,
        GRADCHECK_TOLERANCE
    );
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        let worst = report.worst().expect("at least one probe");
        Err(CliError::Numeric(format!(
            "gradient check failed at {}[{}]: analytic {:e}, numeric {:e}",
            worst.param, worst.index, worst.analytic, worst.numeric
        )))
    }
}

fn synth(cfg: &RunConfig, args: &ProfileArgs) -> Result<(), CliError> {
    let d = SynthProfile::default();
    let profile = SynthProfile {
        sensors: args.sensors.unwrap_or(d.sensors),
        residents: args.residents.unwrap_or(d.residents),
        activities: args.activities.unwrap_or(d.activities),
        events_per_file: args.events_per_file.unwrap_or(d.events_per_file),
        files: args.files.unwrap_or(d.files),
        noise: args.noise.unwrap_or(d.noise),
        resident_swap: args.resident_swap.unwrap_or(d.resident_swap),
    };
    let out = require(&cfg.out, "out")?;
    let paths = write_corpus(out, &profile, cfg.seed)?;
    // Hidden, so the corpus reader does not treat it as a log file.
    let echo = out.join(".config.txt");
    let text = format!(
        "{}# files = {}\n# events_per_file = {}\n# sensors = {}\n# residents = {}\n# activities = {}\n\
         # noise = {}\n# resident_swap = {}\n",
        cfg.to_text(),
        profile.files,
        profile.events_per_file,
        profile.sensors,
        profile.residents,
        profile.activities,
        profile.noise,
        profile.resident_swap
    );
    fs::write(&echo, text).map_err(|e| io_error(&echo, e))?;
    println!("wrote {} files to {}", paths.len(), out.display());
    Ok(())
}
