//! Word sampling, misspelling injection and dataset assembly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::render::{pgm, WordImage, WordRenderer};

/// Bundled list of common lowercase English words, one per line.
pub const DEFAULT_WORDLIST: &str = include_str!("../data/words.txt");

/// Deterministic per-stream seed derived from a master seed (splitmix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix(stream))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parses a word list, keeping lines made of alphabet symbols within the
/// length bounds.
pub fn parse_wordlist(text: &str, alphabet: &Alphabet, min_len: usize, max_len: usize) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|w| {
            let n = w.chars().count();
            n >= min_len && n <= max_len && alphabet.contains_all(w)
        })
        .map(str::to_string)
        .collect()
}

pub fn load_wordlist(path: &Path, alphabet: &Alphabet, min_len: usize, max_len: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_wordlist(&text, alphabet, min_len, max_len))
}

/// Randomness consumed by a single substitution.
pub trait MistakeSource {
    /// Position in `0..len`.
    fn position(&mut self, len: usize) -> usize;
    /// A lowercase letter.
    fn letter(&mut self) -> char;
}

impl<R: RngCore + ?Sized> MistakeSource for R {
    fn position(&mut self, len: usize) -> usize {
        self.random_range(0..len)
    }

    fn letter(&mut self) -> char {
        (b'a' + self.random_range(0..26u8)) as char
    }
}

/// Replaces one uniformly chosen character with a different random lowercase
/// letter. Length is preserved and the Hamming distance is exactly one.
pub fn generate_mistake<S: MistakeSource + ?Sized>(word: &str, source: &mut S) -> Result<String> {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Err(Error::Argument("cannot misspell an empty word".into()));
    }
    let pos = source.position(chars.len());
    let original = chars[pos];
    let mut replacement = source.letter();
    while replacement == original {
        replacement = source.letter();
    }
    chars[pos] = replacement;
    Ok(chars.into_iter().collect())
}

/// `level` composed substitutions. Compositions that land back on the
/// original word are regenerated, so the result always differs from `word`.
pub fn apply_severity<S: MistakeSource + ?Sized>(word: &str, level: u8, source: &mut S) -> Result<String> {
    if level < 1 {
        return Err(Error::Argument(format!("severity must be at least 1, got {level}")));
    }
    if word.is_empty() {
        return Err(Error::Argument("cannot misspell an empty word".into()));
    }
    loop {
        let mut out = word.to_string();
        for _ in 0..level {
            out = generate_mistake(&out, source)?;
        }
        if out != word {
            return Ok(out);
        }
    }
}

/// `n` uniform draws with replacement.
pub fn sample_words<R: Rng + ?Sized>(wordlist: &[String], n: usize, rng: &mut R) -> Result<Vec<String>> {
    if wordlist.is_empty() {
        return Err(Error::Argument("empty word list".into()));
    }
    Ok((0..n).map(|_| wordlist[rng.random_range(0..wordlist.len())].clone()).collect())
}

pub fn hamming(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).filter(|(x, y)| x != y).count() + a.chars().count().abs_diff(b.chars().count())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Correct,
    Incorrect,
}

impl Truth {
    /// Classification target: misspelled is the positive class.
    pub fn label(self) -> f64 {
        match self {
            Truth::Correct => 0.0,
            Truth::Incorrect => 1.0,
        }
    }

    pub fn is_incorrect(self) -> bool {
        self == Truth::Incorrect
    }
}

/// One classification sample: the image shows `rendered_text` while `text`
/// is the word the writer was supposed to produce.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub image: WordImage,
    pub text: String,
    pub truth: Truth,
    pub severity: u8,
    pub rendered_text: String,
    pub seed: u64,
}

impl Example {
    pub fn check_invariants(&self) -> Result<()> {
        let ok = match self.truth {
            Truth::Correct => self.rendered_text == self.text && self.severity == 0,
            Truth::Incorrect => self.rendered_text != self.text && self.severity >= 1,
        } && self.rendered_text.chars().count() == self.text.chars().count();
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "inconsistent example {:?}/{:?} ({:?}, severity {})",
                self.text, self.rendered_text, self.truth, self.severity
            )))
        }
    }
}

/// Builds one example from its own seed.
pub fn make_example(
    word: &str,
    incorrect: bool,
    severity: u8,
    renderer: &dyn WordRenderer,
    seed: u64,
) -> Result<Example> {
    let mut rng = seeded_rng(seed);
    let (truth, rendered_text, severity) = if incorrect {
        (Truth::Incorrect, apply_severity(word, severity, &mut rng)?, severity)
    } else {
        (Truth::Correct, word.to_string(), 0)
    };
    let image = renderer.render(&rendered_text, &mut rng)?;
    Ok(Example {
        image,
        text: word.to_string(),
        truth,
        severity,
        rendered_text,
        seed,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub examples: Vec<Example>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn incorrect_count(&self) -> usize {
        self.examples.iter().filter(|e| e.truth.is_incorrect()).count()
    }

    /// Fraction of incorrect examples.
    pub fn balance(&self) -> f64 {
        if self.examples.is_empty() {
            0.0
        } else {
            self.incorrect_count() as f64 / self.examples.len() as f64
        }
    }

    /// Example count per severity level (0 = correct).
    pub fn severity_distribution(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.examples {
            *counts.entry(e.severity).or_insert(0) += 1;
        }
        counts
    }

    pub fn correct_only(&self) -> DatasetManifest {
        DatasetManifest {
            examples: self.examples.iter().filter(|e| e.truth == Truth::Correct).cloned().collect(),
            seed: self.seed,
        }
    }

    /// Writes `manifest.jsonl` plus one PGM per example under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        let mut lines = Vec::new();
        for (i, e) in self.examples.iter().enumerate() {
            let rel = format!("images/{i:06}.pgm");
            pgm::write(&dir.join(&rel), &e.image)?;
            let record = ManifestRecord {
                image_path: rel,
                text: e.text.clone(),
                truth: e.truth,
                severity: e.severity,
                rendered_text: e.rendered_text.clone(),
                seed: e.seed,
            };
            serde_json::to_writer(&mut lines, &record).map_err(|e| Error::Parse(e.to_string()))?;
            lines.push(b'\n');
        }
        let path = dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&lines).map_err(|e| Error::io(&path, e))?;
        let summary = serde_json::json!({
            "seed": self.seed,
            "examples": self.len(),
            "incorrect": self.incorrect_count(),
            "balance": self.balance(),
            "severity_distribution": self.severity_distribution(),
        });
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_vec_pretty(&summary).expect("summary serializes")).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut examples = Vec::new();
        let mut seed = None;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: ManifestRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), n + 1)))?;
            let image = pgm::read(&dir.join(&r.image_path))?;
            let example = Example {
                image,
                text: r.text,
                truth: r.truth,
                severity: r.severity,
                rendered_text: r.rendered_text,
                seed: r.seed,
            };
            example.check_invariants()?;
            seed.get_or_insert(r.seed);
            examples.push(example);
        }
        let summary: Option<serde_json::Value> = fs::read(dir.join("summary.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok());
        let seed = summary
            .and_then(|s| s.get("seed").and_then(|v| v.as_u64()))
            .or(seed)
            .unwrap_or(0);
        Ok(Self { examples, seed })
    }
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One line of `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub text: String,
    pub truth: Truth,
    pub severity: u8,
    pub rendered_text: String,
    pub seed: u64,
}

/// Each word independently becomes incorrect with probability
/// `incorrect_fraction`; the image always shows what was actually written.
pub fn build_dataset(
    words: &[String],
    incorrect_fraction: f64,
    severity: u8,
    renderer: &dyn WordRenderer,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&incorrect_fraction) {
        return Err(Error::Argument(format!("incorrect fraction {incorrect_fraction} outside [0, 1]")));
    }
    let mut examples = Vec::with_capacity(words.len());
    for (i, word) in words.iter().enumerate() {
        let example_seed = derive_seed(seed, i as u64);
        let incorrect = seeded_rng(derive_seed(example_seed, u64::MAX)).random::<f64>() < incorrect_fraction;
        examples.push(make_example(word, incorrect, severity, renderer, example_seed)?);
    }
    Ok(DatasetManifest { examples, seed })
}

/// Where a split's dataset lives inside an output directory.
pub fn split_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}
