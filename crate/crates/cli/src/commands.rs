use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use gemcap_core::capnet::{
    evaluate, load_checkpoint, probes::gradient_suite, run_grid, save_checkpoint,
    train as train_model, CaptionModel, GridBase, GridSpec, SplitEval, Task,
};
use gemcap_core::dataforge::{
    apply_augment, build_dataset, read_png, render_sample, write_png, AugmentOp, Dataset,
    RenderSpec, Split,
};
use gemcap_core::evalkit::{render_report, report_json, MetricsReport};
use gemcap_core::lexicon::{
    validate_description, Category, DescriptionLevel, JewelryClass, Lexicon, Validation,
};
use gemcap_core::tensor::Rng;

use crate::config::{write_config, Format, RunConfig};
use crate::failure::Failure;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(Failure::io(dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(Failure::io(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn gen_data(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let lex = Lexicon::default();
    let dataset = build_dataset(&config.dataset_config(), &lex)?;
    dataset.save(out)?;
    println!(
        "wrote {} samples to {}",
        dataset.len(),
        out.join("manifest.jsonl").display()
    );
    Ok(())
}

pub fn augment_preview(config: &RunConfig, class: JewelryClass, out: &Path) -> Result<(), Failure> {
    create_dir(out)?;
    let seed = config.dataset.seed;
    let spec = RenderSpec::sample(class, &mut Rng::split(seed, 0));
    let image = render_sample(&spec, config.dataset.size, config.dataset.size)?;
    write_png(&out.join("original.png"), &image)?;
    let mut ops = Vec::new();
    for (k, name) in AugmentOp::KINDS.iter().enumerate() {
        let op = AugmentOp::sample_kind(k, &mut Rng::split(seed, 1 + k as u64));
        write_png(
            &out.join(format!("{name}.png")),
            &apply_augment(&image, &op)?,
        )?;
        ops.push(op);
    }
    write_text(&out.join("ops.json"), &to_json(&ops))?;
    println!(
        "wrote original and {} augmentations to {}",
        ops.len(),
        out.display()
    );
    Ok(())
}

/// Everything written to `report.json`.
#[derive(Debug, Serialize)]
struct EvalReport {
    task: Task,
    split: Split,
    samples: usize,
    loss: f64,
    metrics: MetricsReport,
}

impl EvalReport {
    fn text(&self) -> String {
        format!(
            "Task {}\nSplit {:?} ({} samples)\nLoss {:.4}\n{}",
            self.task,
            self.split,
            self.samples,
            self.loss,
            self.metrics.to_text()
        )
    }

    /// Class CCR for classifiers, caption exact match for captioners.
    fn score(&self) -> f64 {
        self.metrics.caption_exact_match.unwrap_or(self.metrics.ccr)
    }
}

/// The class a caption names through its jewelry type, if any.
fn caption_class(caption: &str, lex: &Lexicon) -> Option<JewelryClass> {
    lex.tokenize(caption).iter().find_map(|t| {
        let term = t.replace('_', " ");
        lex.entry(&term, Category::JewelryType)
            .and_then(|_| lex.class_of(&term))
    })
}

/// Captioning reports score classes through the jewelry type each caption
/// names. A caption naming none counts against the next class in order.
fn metrics(
    model: &CaptionModel,
    eval: &SplitEval,
    lex: &Lexicon,
) -> Result<MetricsReport, Failure> {
    if model.task == Task::Classification {
        return Ok(MetricsReport::classification(
            &eval.predicted,
            &eval.labels,
        )?);
    }
    let mut unnamed = 0;
    let predicted: Vec<JewelryClass> = eval
        .captions
        .iter()
        .zip(&eval.labels)
        .map(|(c, &label)| {
            caption_class(c, lex).unwrap_or_else(|| {
                unnamed += 1;
                let i = JewelryClass::ALL
                    .iter()
                    .position(|&k| k == label)
                    .unwrap_or(0);
                JewelryClass::ALL[(i + 1) % JewelryClass::ALL.len()]
            })
        })
        .collect();
    let mut report = MetricsReport::classification(&predicted, &eval.labels)?;
    report.caption_exact_match = Some(eval.ccr);
    if unnamed > 0 {
        report.warnings.push(format!(
            "{unnamed} captions name no jewelry type; scored as misclassified"
        ));
    }
    Ok(report)
}

fn score_split(
    model: &CaptionModel,
    dataset: &Dataset,
    split: Split,
    lex: &Lexicon,
) -> Result<EvalReport, Failure> {
    let samples = dataset.split(split);
    let eval = evaluate(model, &samples, lex)?;
    Ok(EvalReport {
        task: model.task,
        split,
        samples: samples.len(),
        loss: eval.loss,
        metrics: metrics(model, &eval, lex)?,
    })
}

fn image_side(dataset: &Dataset) -> Result<usize, Failure> {
    match dataset.samples.first().map(|s| s.image.shape()) {
        Some([3, h, w]) if h == w => Ok(*h),
        Some(shape) => Err(Failure::Runtime(format!(
            "expected square RGB images, got {shape:?}"
        ))),
        None => Err(Failure::Runtime("dataset is empty".into())),
    }
}

/// Loads `--data`, or generates the configured dataset into `out`.
fn obtain_dataset(
    config: &mut RunConfig,
    data: Option<&Path>,
    out: &Path,
    lex: &Lexicon,
) -> Result<Dataset, Failure> {
    let dataset = match data {
        Some(manifest) => Dataset::load(manifest)?,
        None => {
            let d = build_dataset(&config.dataset_config(), lex)?;
            d.save(out)?;
            d
        }
    };
    config.dataset.size = image_side(&dataset)?;
    Ok(dataset)
}

pub fn train(mut config: RunConfig, data: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let lex = Lexicon::default();
    create_dir(&out.join("checkpoints"))?;
    let dataset = obtain_dataset(&mut config, data, out, &lex)?;
    config.validate()?;
    write_config(&config, out)?;
    let log_path = out.join("log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(Failure::io(&log_path))?);
    let mut log_error = None;
    let mut observer = |e: &gemcap_core::capnet::EpochLog| {
        eprintln!(
            "epoch {:>3}  train loss {:.4}  val loss {:.4}  val ccr {:.4}",
            e.epoch, e.train_loss, e.val_loss, e.val_ccr
        );
        let line = serde_json::to_string(e).expect("epoch log serializes");
        if let Err(err) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(err);
        }
    };
    let outcome = train_model(
        &dataset,
        &config.encoder(),
        &config.decoder(),
        &config.train_config()?,
        &lex,
        Some(&mut observer),
    )?;
    if let Some(err) = log_error {
        return Err(Failure::io(&log_path)(err));
    }
    save_checkpoint(
        &outcome.checkpoint,
        &out.join("checkpoints").join("model.ckpt"),
    )?;
    let report = score_split(&outcome.checkpoint.model, &dataset, Split::Test, &lex)?;
    write_text(&out.join("report.txt"), &report.text())?;
    write_text(&out.join("report.json"), &to_json(&report))?;
    let s = &outcome.checkpoint.summary;
    println!(
        "best epoch {} of {}; test score {:.4}; artifacts in {}",
        s.best_epoch,
        s.epochs_run,
        report.score(),
        out.display()
    );
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    data: &Path,
    split: Split,
    format: Format,
    min_ccr: Option<f64>,
) -> Result<(), Failure> {
    let lex = Lexicon::default();
    let ckpt = load_checkpoint(checkpoint)?;
    let dataset = Dataset::load(data)?;
    let report = score_split(&ckpt.model, &dataset, split, &lex)?;
    match format {
        Format::Text => print!("{}", report.text()),
        Format::Json => print!("{}", to_json(&report)),
    }
    match min_ccr {
        Some(min) if !(report.score() >= min) => Err(Failure::Check(format!(
            "score {:.4} below required {min:.4}",
            report.score()
        ))),
        _ => Ok(()),
    }
}

fn diagnose(caption: &str, level: DescriptionLevel, lex: &Lexicon) -> Option<String> {
    match validate_description(caption, level, lex) {
        Validation::Valid => None,
        Validation::Invalid { reason, position } => Some(format!(
            "{caption:?} is not a valid {} description: {reason} (token {position})",
            level.name()
        )),
    }
}

/// Greedy caption first; then up to `retries` sampled decodes, each from its
/// own stream of `seed`. The first caption that validates is printed.
pub fn caption(
    image: &Path,
    checkpoint: &Path,
    level: Option<DescriptionLevel>,
    retries: usize,
    temperature: f64,
    seed: u64,
) -> Result<(), Failure> {
    let lex = Lexicon::default();
    let model = load_checkpoint(checkpoint)?.model;
    let level = match (level, model.task) {
        (Some(l), _) => l,
        (None, Task::Captioning(l)) => l,
        (None, Task::Classification) => {
            return Err(Failure::Runtime(
                "checkpoint is a classifier; caption needs a captioning model".into(),
            ))
        }
    };
    if !(temperature > 0.0) {
        return Err(Failure::Usage(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let picture = read_png(image)?;
    let max_len = model.decoder.config.max_len;
    let mut text = model.caption(&picture)?;
    let mut problem = diagnose(&text, level, &lex);
    for attempt in 0..retries {
        if problem.is_none() {
            break;
        }
        let mut rng = Rng::split(seed, attempt as u64);
        let ids = model.sample_decode(&picture, max_len, temperature, &mut rng)?;
        text = model.ids_to_caption(&ids)?;
        problem = diagnose(&text, level, &lex);
    }
    match problem {
        None => {
            println!("{text}");
            Ok(())
        }
        Some(p) => Err(Failure::Runtime(p)),
    }
}

pub fn grad_check(probes: usize, seed: u64) -> Result<(), Failure> {
    if probes == 0 {
        return Err(Failure::Usage("--probes must be positive".into()));
    }
    let mut failed = Vec::new();
    for check in gradient_suite(probes, seed) {
        let verdict = if check.passed() { "pass" } else { "FAIL" };
        println!(
            "{verdict} {:<18} {}/{} probes  worst rel err {:.2e} in {}",
            check.layer,
            check.probes - check.failures,
            check.probes,
            check.worst.max_rel_err,
            check.worst.worst_block
        );
        if !check.passed() {
            failed.push(check.layer);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

fn threads() -> Result<usize, Failure> {
    match std::env::var("GEMCAP_THREADS") {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("GEMCAP_THREADS={v:?} is not a count"))),
    }
}

pub fn grid(
    mut config: RunConfig,
    spec: GridSpec,
    plan_only: bool,
    data: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if plan_only {
        println!(
            "{:>5} {:<6} {:<5} {:>7} {:>5} {:>7} {:<9}",
            "Point", "Scale", "RNN", "Neurons", "Batch", "LR", "Optimizer"
        );
        for p in spec.points() {
            println!(
                "{:>5} {:<6} {:<5} {:>7} {:>5} {:>7} {:<9}",
                p.index,
                p.scale.name(),
                p.cell.to_string(),
                p.neurons,
                p.batch,
                p.learning_rate,
                p.optimizer.name()
            );
        }
        return Ok(());
    }
    let threads = threads()?;
    let lex = Lexicon::default();
    let dir = out.unwrap_or(Path::new("grid"));
    create_dir(dir)?;
    let dataset = obtain_dataset(&mut config, data, dir, &lex)?;
    write_config(&config, dir)?;
    let base = GridBase {
        task: config.task(),
        embed_dim: config.model.embed_dim,
        max_len: config.model.max_len,
        max_epochs: config.train.max_epochs,
        patience: config.train.patience,
        seed: config.train.seed,
    };
    let rows = run_grid(&dataset, &spec, &base, &lex, threads)?;
    let table = render_report(&rows)?;
    write_text(&dir.join("report.txt"), &table)?;
    write_text(&dir.join("report.json"), &to_json(&report_json(&rows)?))?;
    match config.eval.format {
        Format::Text => print!("{table}"),
        Format::Json => print!("{}", to_json(&report_json(&rows)?)),
    }
    Ok(())
}

pub fn dump_lexicon() -> Result<(), Failure> {
    println!("{}", Lexicon::default().to_json()?);
    Ok(())
}
