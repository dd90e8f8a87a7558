//! The six pipeline verbs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hwcheck::checkpoint::Checkpoint;
use hwcheck::classifier::{train_classifier as fit_classifier, Classifier};
use hwcheck::evaluation::{
    build_test_set, calibrate as calibrate_curve, pr_curve, report_set, score_set, summarize, EvalReport, ScenarioName,
    ScenarioSpec,
};
use hwcheck::hwr::train_hwr as fit_hwr;
use hwcheck::render::GlyphRenderer;
use hwcheck::textgen::{build_dataset, derive_seed, sample_words, seeded_rng, DatasetManifest, MANIFEST_FILE};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Stream};
use crate::{CliError, Split};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::User(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn split_path(config: &RunConfig, name: &str) -> PathBuf {
    config.data_dir().join(name)
}

fn test_set_path(config: &RunConfig, spec: &ScenarioSpec) -> PathBuf {
    config.data_dir().join("test").join(format!("{}_s{}", spec.name.as_str(), spec.severity))
}

/// Replaces a previous dataset in `dir` so no stale images survive.
fn save_dataset(set: &DatasetManifest, dir: &Path) -> Result<()> {
    if dir.join(MANIFEST_FILE).exists() {
        fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    set.save(dir)?;
    eprintln!(
        "{}: {} examples, {} misspelled, severities {:?}",
        dir.display(),
        set.len(),
        set.incorrect_count(),
        set.severity_distribution()
    );
    Ok(())
}

fn load_dataset(dir: &Path, what: &str) -> Result<DatasetManifest> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::User(format!(
            "{what} dataset not found at {} (run gen-data first)",
            dir.display()
        )));
    }
    let set = DatasetManifest::load(dir)?;
    if set.is_empty() {
        return Err(CliError::User(format!("{what} dataset at {} is empty", dir.display())));
    }
    Ok(set)
}

fn load_checkpoint(path: &Path, what: &str) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(CliError::User(format!("{what} checkpoint not found at {}", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

pub fn gen_data(config: &RunConfig, split: Split) -> Result<()> {
    let words = config.words()?;
    let renderer = GlyphRenderer::default();
    let d = &config.data;
    let plain = |name: &str, stream: Stream, count: usize, fraction: f64| -> Result<()> {
        let seed = config.stream_seed(stream);
        let chosen = sample_words(&words, count, &mut seeded_rng(derive_seed(seed, u64::MAX)))?;
        let set = build_dataset(&chosen, fraction, d.severity, &renderer, seed)?;
        save_dataset(&set, &split_path(config, name))
    };
    let all = split == Split::All;
    if all || split == Split::Hwr {
        plain("hwr", Stream::HwrData, d.hwr_count, 0.0)?;
    }
    if all || split == Split::HwrVal {
        plain("hwr-val", Stream::HwrValData, d.hwr_val_count, 0.0)?;
    }
    if all || split == Split::Train {
        plain("train", Stream::TrainData, d.train_count, d.incorrect_fraction)?;
    }
    if all || split == Split::Val {
        plain("val", Stream::ValData, d.val_count, d.incorrect_fraction)?;
    }
    if all || split == Split::Test {
        let seed = config.stream_seed(Stream::TestData);
        for spec in config.scenarios()? {
            let set = build_test_set(&spec, d.test_count, &words, &renderer, seed)?;
            save_dataset(&set, &test_set_path(config, &spec))?;
        }
    }
    Ok(())
}

/// Appends one JSON object per line to a fresh log file.
struct JsonLog {
    path: PathBuf,
    file: fs::File,
}

impl JsonLog {
    fn create(path: PathBuf) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok(Self { path, file })
    }

    fn record<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let mut line = serde_json::to_vec(value).map_err(|e| CliError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| io_err(&self.path, e))
    }
}

pub fn train_hwr(config: &RunConfig) -> Result<()> {
    let train = load_dataset(&split_path(config, "hwr"), "hwr")?;
    let val = load_dataset(&split_path(config, "hwr-val"), "hwr-val")?;
    let mut log = JsonLog::create(config.logs_dir().join("hwr.jsonl"))?;
    let mut log_error = None;
    let out = fit_hwr(&train, &val, config.hwr_config()?, &config.hwr_schedule(), &mut |e| {
        eprintln!(
            "hwr epoch {}: loss {:.4}, val CER {:.4}, val word accuracy {:.3}",
            e.epoch, e.train_loss, e.val_cer, e.val_word_accuracy
        );
        if let Err(err) = log.record(e) {
            log_error.get_or_insert(err);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    let path = config.hwr_checkpoint();
    write_file(&path, out.recognizer.to_checkpoint()?.to_bytes()?)?;
    eprintln!("best epoch {}; wrote {}", out.best_epoch, path.display());
    Ok(())
}

pub fn train_classifier(config: &RunConfig) -> Result<()> {
    let extractor = load_checkpoint(&config.hwr_checkpoint(), "recognizer")?;
    let train = load_dataset(&split_path(config, "train"), "train")?;
    let val = load_dataset(&split_path(config, "val"), "val")?;
    let mut log = JsonLog::create(config.logs_dir().join("classifier.jsonl"))?;
    let mut log_error = None;
    let out = fit_classifier(&train, &val, &extractor, config.head_config()?, &config.classifier_schedule(), &mut |e| {
        eprintln!(
            "classifier epoch {}: loss {:.4}, val loss {:.4}, val accuracy {:.3}",
            e.epoch, e.train_loss, e.val_loss, e.val_accuracy
        );
        if let Err(err) = log.record(e) {
            log_error.get_or_insert(err);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let path = config.classifier_checkpoint();
    write_file(&path, out.classifier.to_checkpoint()?.to_bytes()?)?;
    eprintln!("best epoch {}; wrote {}", out.best_epoch, path.display());
    Ok(())
}

fn load_classifier(config: &RunConfig) -> Result<Classifier> {
    let head = load_checkpoint(&config.classifier_checkpoint(), "classifier")?;
    let extractor = load_checkpoint(&config.hwr_checkpoint(), "recognizer")?;
    Ok(Classifier::from_checkpoints(&head, &extractor)?)
}

/// One line of `thresholds.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub scenario: ScenarioName,
    pub severity: u8,
    pub min_recall: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub constraint_met: bool,
}

pub fn calibrate(config: &RunConfig) -> Result<()> {
    let classifier = load_classifier(config)?;
    let mut entries = Vec::new();
    for spec in config.scenarios()? {
        let set = load_dataset(&test_set_path(config, &spec), "test")?;
        let scored = score_set(&classifier, &set)?;
        let c = calibrate_curve(&pr_curve(&scored.scores, &scored.labels)?, spec.min_recall)?;
        if !c.constraint_met {
            eprintln!(
                "warning: {} severity {}: no threshold reaches recall {}",
                spec.name.as_str(),
                spec.severity,
                spec.min_recall
            );
        }
        entries.push(ThresholdEntry {
            scenario: spec.name,
            severity: spec.severity,
            min_recall: spec.min_recall,
            threshold: c.threshold,
            precision: c.precision,
            recall: c.recall,
            constraint_met: c.constraint_met,
        });
    }
    let path = config.reports_dir().join("thresholds.json");
    let json = serde_json::to_string_pretty(&entries).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&path, json + "\n")?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn read_thresholds(path: &Path) -> Result<Vec<ThresholdEntry>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn evaluate(config: &RunConfig) -> Result<()> {
    let classifier = load_classifier(config)?;
    let thresholds = config.evaluate.thresholds.as_deref().map(read_thresholds).transpose()?;
    let mut reports = Vec::new();
    for spec in config.scenarios()? {
        let set = load_dataset(&test_set_path(config, &spec), "test")?;
        let threshold = match &thresholds {
            None => None,
            Some(list) => Some(
                list.iter()
                    .find(|t| t.scenario == spec.name && t.severity == spec.severity)
                    .map(|t| t.threshold)
                    .ok_or_else(|| {
                        CliError::User(format!(
                            "thresholds file has no entry for {} severity {}",
                            spec.name.as_str(),
                            spec.severity
                        ))
                    })?,
            ),
        };
        let r = report_set(&spec, &score_set(&classifier, &set)?, threshold)?;
        eprintln!(
            "{} severity {}: precision {:.4}, recall {:.4} at threshold {:.4}; baseline precision {:.4} (measured {:.4})",
            spec.name.as_str(),
            spec.severity,
            r.precision,
            r.recall,
            r.threshold,
            r.baseline.expected_precision,
            r.baseline.precision
        );
        reports.push(r);
    }
    let report = summarize(reports)?;
    let path = config.reports_dir().join("report.json");
    write_file(&path, report.to_json()? + "\n")?;
    emit(config, &report)
}

pub fn report(config: &RunConfig) -> Result<()> {
    let path = config.reports_dir().join("report.json");
    if !path.exists() {
        return Err(CliError::User(format!("{} not found (run evaluate first)", path.display())));
    }
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let report: EvalReport =
        serde_json::from_slice(&bytes).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    emit(config, &report)
}

/// CSV, one SVG per test set and the comparison table.
fn emit(config: &RunConfig, report: &EvalReport) -> Result<()> {
    let dir = config.reports_dir();
    write_file(&dir.join("report.csv"), report.to_csv())?;
    for set in &report.sets {
        write_file(&dir.join("plots").join(format!("{}.svg", set.stem())), set.svg())?;
    }
    write_file(&dir.join("comparison.md"), comparison_table(report))?;
    eprintln!("wrote reports to {}", dir.display());
    Ok(())
}

pub fn comparison_table(report: &EvalReport) -> String {
    let mut s = String::from(
        "| scenario | severity | threshold | precision | recall | baseline precision | baseline measured | baseline recall | improvement |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in &report.sets {
        s += &format!(
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:+.1}% |\n",
            r.scenario.name.as_str(),
            r.scenario.severity,
            r.threshold,
            r.precision,
            r.recall,
            r.baseline.expected_precision,
            r.baseline.precision,
            r.baseline.recall,
            100.0 * r.improvement
        );
    }
    s += "\n| scenario | precision (mean over severities) | baseline precision | improvement |\n|---|---|---|---|\n";
    for m in &report.summaries {
        s += &format!(
            "| {} | {:.4} | {:.4} | {:+.1}% |\n",
            m.scenario.as_str(),
            m.precision,
            m.baseline_precision,
            100.0 * m.improvement
        );
    }
    s
}
