//! Run configuration: a TOML file of `[section]` tables with `key = value`
//! lines, plus `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use hwcheck::classifier::{ClassifierSchedule, HeadConfig};
use hwcheck::engine::CellKind;
use hwcheck::evaluation::{ScenarioName, ScenarioSpec};
use hwcheck::hwr::{ConvBlock, HwrConfig, HwrSchedule};
use hwcheck::textgen::{derive_seed, load_wordlist, parse_wordlist, DEFAULT_WORDLIST};
use hwcheck::Alphabet;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub hwr: HwrSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Master seed. There is no clock-based default.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// One word per line; the bundled list when absent.
    pub wordlist: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            wordlist: None,
            output_dir: PathBuf::from("out"),
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Correct words for recognizer training and its validation.
    pub hwr_count: usize,
    pub hwr_val_count: usize,
    pub train_count: usize,
    pub val_count: usize,
    /// Examples per test set.
    pub test_count: usize,
    pub incorrect_fraction: f64,
    /// Severity of the misspellings in the classifier's train and val sets.
    pub severity: u8,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            min_word_len: 3,
            max_word_len: 12,
            hwr_count: 4000,
            hwr_val_count: 200,
            train_count: 4000,
            val_count: 600,
            test_count: 1500,
            incorrect_fraction: 0.5,
            severity: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HwrSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub patience: usize,
    /// Filters per conv block; every block is followed by a 2x2 pool.
    pub conv_filters: Vec<usize>,
    pub recurrent_hidden: usize,
    pub cell: CellKind,
}

impl Default for HwrSection {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 8,
            learning_rate: 3e-3,
            final_learning_rate: 3e-4,
            patience: 3,
            conv_filters: vec![8, 16],
            recurrent_hidden: 32,
            cell: CellKind::Gru,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub patience: usize,
    pub conv_filters: [usize; 4],
    pub dropout_rate: f64,
    pub init_from_recognizer: bool,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            final_learning_rate: 4e-5,
            patience: 4,
            conv_filters: [8, 8, 16, 16],
            dropout_rate: 0.1,
            init_from_recognizer: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub min_recall: f64,
    pub scenarios: Vec<String>,
    pub severities: Vec<u8>,
    /// Thresholds written by `calibrate`; each set calibrates itself when absent.
    pub thresholds: Option<PathBuf>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            min_recall: 0.99,
            scenarios: vec!["moderate".into(), "difficult".into()],
            severities: vec![1, 2, 3],
            thresholds: None,
        }
    }
}

/// Splits `section.key=value`. Values are read as TOML and fall back to a
/// bare string, so `paths.output_dir=out/a` needs no quoting.
fn parse_override(raw: &str) -> Result<(String, String, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::User(format!("override {raw:?} is not of the form section.key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::User(format!("override key {key:?} needs a section, as in hwr.epochs")))?;
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((section.to_string(), field.to_string(), parsed))
}

impl RunConfig {
    /// Reads `file` (if any) and applies overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (section, field, value) = parse_override(raw)?;
            let entry = table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(field, value);
                }
                _ => return Err(CliError::User(format!("{section} is not a section"))),
            }
        }
        if !table.get("run").and_then(|r| r.get("seed")).is_some() {
            return Err(CliError::User("a seed is required: set run.seed in the config or pass --seed".into()));
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::User(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.min_word_len == 0 || d.min_word_len > d.max_word_len {
            return Err(CliError::User("data.min_word_len must be in 1..=data.max_word_len".into()));
        }
        if !(0.0..=1.0).contains(&d.incorrect_fraction) {
            return Err(CliError::User("data.incorrect_fraction must lie in [0, 1]".into()));
        }
        if !(1..=3).contains(&d.severity) {
            return Err(CliError::User("data.severity must be 1, 2 or 3".into()));
        }
        if !(0.0..=1.0).contains(&self.evaluate.min_recall) {
            return Err(CliError::User("evaluate.min_recall must lie in [0, 1]".into()));
        }
        self.scenarios()?;
        self.hwr_config()?.validate()?;
        self.head_config()?.validate()?;
        Ok(())
    }

    pub fn output_dir(&self) -> &Path {
        &self.paths.output_dir
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.paths.checkpoint_dir.clone().unwrap_or_else(|| self.paths.output_dir.join("checkpoints"))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths.output_dir.join("data")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.paths.output_dir.join("reports")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.paths.output_dir.join("logs")
    }

    pub fn hwr_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("hwr.ck")
    }

    pub fn classifier_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("classifier.ck")
    }

    /// Seed of a named pipeline stream.
    pub fn stream_seed(&self, stream: Stream) -> u64 {
        derive_seed(self.run.seed, stream as u64)
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::lowercase()
    }

    pub fn words(&self) -> Result<Vec<String>, CliError> {
        let a = self.alphabet();
        let (lo, hi) = (self.data.min_word_len, self.data.max_word_len);
        let words = match &self.paths.wordlist {
            Some(p) => load_wordlist(p, &a, lo, hi)?,
            None => parse_wordlist(DEFAULT_WORDLIST, &a, lo, hi),
        };
        if words.is_empty() {
            return Err(CliError::User(format!("word list has no usable words of length {lo}..={hi}")));
        }
        Ok(words)
    }

    pub fn hwr_config(&self) -> Result<HwrConfig, CliError> {
        let mut c = HwrConfig::desk(self.alphabet());
        c.conv_blocks = self.hwr.conv_filters.iter().map(|&filters| ConvBlock { filters, pool: true }).collect();
        c.recurrent_hidden = self.hwr.recurrent_hidden;
        c.cell = self.hwr.cell;
        Ok(c)
    }

    pub fn hwr_schedule(&self) -> HwrSchedule {
        let h = &self.hwr;
        HwrSchedule {
            epochs: h.epochs,
            batch_size: h.batch_size,
            learning_rate: h.learning_rate,
            final_learning_rate: h.final_learning_rate,
            patience: h.patience,
            seed: self.stream_seed(Stream::HwrTraining),
        }
    }

    pub fn head_config(&self) -> Result<HeadConfig, CliError> {
        let hwr = self.hwr_config()?;
        Ok(HeadConfig {
            time_steps: hwr.time_steps(),
            alphabet_size: hwr.alphabet.len(),
            feature_dim: hwr.feature_dim(),
            conv_filters: self.classifier.conv_filters,
            dropout_rate: self.classifier.dropout_rate,
        })
    }

    pub fn classifier_schedule(&self) -> ClassifierSchedule {
        let c = &self.classifier;
        ClassifierSchedule {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            final_learning_rate: c.final_learning_rate,
            patience: c.patience,
            seed: self.stream_seed(Stream::ClassifierTraining),
            init_from_recognizer: c.init_from_recognizer,
        }
    }

    /// Selected test sets, scenario-major.
    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>, CliError> {
        let mut out = Vec::new();
        for name in &self.evaluate.scenarios {
            let name = ScenarioName::parse(name)?;
            for &s in &self.evaluate.severities {
                if !(1..=3).contains(&s) {
                    return Err(CliError::User(format!("severity {s} is not 1, 2 or 3")));
                }
                let mut spec = ScenarioSpec::named(name, s);
                spec.min_recall = self.evaluate.min_recall;
                out.push(spec);
            }
        }
        if out.is_empty() {
            return Err(CliError::User("no test sets selected".into()));
        }
        Ok(out)
    }
}

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    HwrData = 1,
    HwrValData = 2,
    TrainData = 3,
    ValData = 4,
    /// Shared by every test set so all six draw the same source words.
    TestData = 5,
    HwrTraining = 10,
    ClassifierTraining = 11,
}
