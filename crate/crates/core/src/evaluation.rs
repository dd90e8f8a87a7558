//! Assessment scenarios, the two-step recognizer baseline, precision-recall
//! curves, recall-constrained calibration and report output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::hwr::{greedy_decode, Recognizer};
use crate::render::{WordImage, WordRenderer};
use crate::textgen::{derive_seed, make_example, sample_words, seeded_rng, DatasetManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Moderate,
    Difficult,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Moderate => "moderate",
            ScenarioName::Difficult => "difficult",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "moderate" => Ok(ScenarioName::Moderate),
            "difficult" => Ok(ScenarioName::Difficult),
            other => Err(Error::Argument(format!("unknown scenario {other:?} (moderate or difficult)"))),
        }
    }
}

/// An assessment setting: mistakes to correct words `m:c` at one severity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub mistakes: u32,
    pub correct: u32,
    pub min_recall: f64,
    pub severity: u8,
}

impl ScenarioSpec {
    /// One mistake per five correct words.
    pub fn moderate(severity: u8) -> Self {
        Self {
            name: ScenarioName::Moderate,
            mistakes: 1,
            correct: 5,
            min_recall: 0.99,
            severity,
        }
    }

    /// One mistake per two correct words.
    pub fn difficult(severity: u8) -> Self {
        Self {
            name: ScenarioName::Difficult,
            mistakes: 1,
            correct: 2,
            min_recall: 0.99,
            severity,
        }
    }

    pub fn named(name: ScenarioName, severity: u8) -> Self {
        match name {
            ScenarioName::Moderate => Self::moderate(severity),
            ScenarioName::Difficult => Self::difficult(severity),
        }
    }

    pub fn mean_mistakes(&self) -> f64 {
        f64::from(self.mistakes) / f64::from(self.mistakes + self.correct)
    }

    /// Both scenarios at severities 1 to 3.
    pub fn all() -> Vec<Self> {
        let mut v = Vec::new();
        for name in [ScenarioName::Moderate, ScenarioName::Difficult] {
            for s in 1..=3 {
                v.push(Self::named(name, s));
            }
        }
        v
    }
}

/// `(M, C)` misspelled and correct counts for a set of `total` words, with M
/// rounded half up.
pub fn scenario_counts(spec: &ScenarioSpec, total: usize) -> Result<(usize, usize)> {
    if total == 0 {
        return Err(Error::Argument("a test set needs at least one word".into()));
    }
    let (m, n) = (spec.mistakes as usize, (spec.mistakes + spec.correct) as usize);
    let mistakes = (2 * m * total + n) / (2 * n);
    Ok((mistakes, total - mistakes))
}

/// `total` words sampled from `wordlist`; the first M are misspelled at the
/// scenario's severity. Word sample and per-index seeds depend only on
/// `seed`, so sets built with one seed share their source words.
pub fn build_test_set(
    spec: &ScenarioSpec,
    total: usize,
    wordlist: &[String],
    renderer: &dyn WordRenderer,
    seed: u64,
) -> Result<DatasetManifest> {
    let (m, _) = scenario_counts(spec, total)?;
    if spec.severity == 0 {
        return Err(Error::Argument("test-set severity must be at least 1".into()));
    }
    let words = sample_words(wordlist, total, &mut seeded_rng(derive_seed(seed, u64::MAX)))?;
    let examples = words
        .iter()
        .enumerate()
        .map(|(i, w)| make_example(w, i < m, spec.severity, renderer, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest { examples, seed })
}

/// Two-step decision: positive (misspelled) iff the recognized word differs
/// from the expected text.
pub fn baseline_classify(recognizer: &Recognizer, image: &WordImage, text: &str) -> Result<bool> {
    Ok(recognizer.recognize(image)? != text)
}

/// Expected baseline precision on a set of `t` words with mistake ratio
/// `m:c`, for a recognizer that reads `p` of `t` words correctly.
///
/// Every misspelling is flagged and each correct word is misread with
/// probability `(t - p) / t`. Both expected counts are taken as whole
/// examples (rounded half up), giving `M / (M + FP)`; without the rounding
/// this is `m / (m + c (t - p) / t)`.
pub fn baseline_precision(m: u32, c: u32, p: usize, t: usize) -> Result<f64> {
    if m == 0 || c == 0 || t == 0 || p > t {
        return Err(Error::Argument(format!("invalid baseline inputs m={m} c={c} P={p} T={t}")));
    }
    let spec = ScenarioSpec {
        mistakes: m,
        correct: c,
        ..ScenarioSpec::moderate(1)
    };
    let (mistakes, correct) = scenario_counts(&spec, t)?;
    let (correct, t64) = (correct as u128, t as u128);
    let false_positives = (2 * correct * (t - p) as u128 + t64) / (2 * t64);
    if false_positives == 0 {
        return Ok(1.0);
    }
    Ok(mistakes as f64 / (mistakes as f64 + false_positives as f64))
}

/// Relative precision gain over the baseline.
pub fn improvement(ours: f64, baseline: f64) -> f64 {
    (ours - baseline) / baseline
}

/// Misspelled words expected to slip through in an assessment of `n_words`.
pub fn expected_undetected(mean_mistakes: f64, recall: f64, n_words: usize) -> f64 {
    n_words as f64 * mean_mistakes * (1.0 - recall)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, ascending by threshold; a score at or above
/// the threshold counts as positive.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Argument("precision-recall curve needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    points.reverse();
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// False when no point reaches the recall requirement.
    pub constraint_met: bool,
}

/// Highest-precision point with recall at least `min_recall`, preferring the
/// larger threshold on ties. Falls back to the lowest threshold.
pub fn calibrate(curve: &[PrPoint], min_recall: f64) -> Result<Calibration> {
    let lowest = curve.first().ok_or_else(|| Error::Argument("empty precision-recall curve".into()))?;
    let best = curve
        .iter()
        .filter(|p| p.recall >= min_recall)
        .max_by(|a, b| a.precision.total_cmp(&b.precision).then(a.threshold.total_cmp(&b.threshold)));
    Ok(match best {
        Some(p) => Calibration {
            threshold: p.threshold,
            precision: p.precision,
            recall: p.recall,
            constraint_met: true,
        },
        None => Calibration {
            threshold: lowest.threshold,
            precision: lowest.precision,
            recall: lowest.recall,
            constraint_met: false,
        },
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn tally(predicted: impl IntoIterator<Item = bool>, labels: &[bool]) -> Self {
        let mut c = Counts::default();
        for (p, &l) in predicted.into_iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// 1 when nothing is flagged.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

/// Per-example outputs of both approaches on one test set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    /// True for misspelled examples.
    pub labels: Vec<bool>,
    /// Baseline decision per example.
    pub baseline_positive: Vec<bool>,
    /// Recognizer output equals the rendered word.
    pub recognized: Vec<bool>,
    pub severities: Vec<u8>,
}

/// Runs the extractor once per example and derives both the classifier score
/// and the baseline decision from the shared features.
pub fn score_set(classifier: &Classifier, set: &DatasetManifest) -> Result<ScoredSet> {
    if set.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    let mut out = ScoredSet::default();
    let alphabet = classifier.alphabet();
    for e in &set.examples {
        let features = classifier.extractor.extract_features(&e.image)?;
        out.scores.push(classifier.score_features(&features, &e.text)?);
        let decoded = greedy_decode(&classifier.extractor.logits_from_features(&features)?, alphabet);
        out.baseline_positive.push(decoded != e.text);
        out.recognized.push(decoded == e.rendered_text);
        out.labels.push(e.truth.is_incorrect());
        out.severities.push(e.severity);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    /// Words the recognizer read exactly, out of the set size.
    pub recognized: usize,
    pub total: usize,
    /// Closed-form precision from the measured recognition rate.
    pub expected_precision: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub scenario: ScenarioSpec,
    pub threshold: f64,
    pub constraint_met: bool,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub baseline: BaselineReport,
    /// Relative gain over the closed-form baseline precision.
    pub improvement: f64,
    pub expected_undetected_20: f64,
    pub pr_curve: Vec<PrPoint>,
}

/// Report for one scored set. Without a supplied threshold the set is
/// calibrated on its own scores to the scenario's minimum recall.
pub fn report_set(spec: &ScenarioSpec, scored: &ScoredSet, threshold: Option<f64>) -> Result<SetReport> {
    if scored.scores.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    let curve = pr_curve(&scored.scores, &scored.labels)?;
    let (threshold, constraint_met) = match threshold {
        Some(t) => (t, true),
        None => {
            let c = calibrate(&curve, spec.min_recall)?;
            (c.threshold, c.constraint_met)
        }
    };
    let counts = Counts::tally(scored.scores.iter().map(|&s| s >= threshold), &scored.labels);
    let base = Counts::tally(scored.baseline_positive.iter().copied(), &scored.labels);
    let total = scored.scores.len();
    let recognized = scored.recognized.iter().filter(|&&r| r).count();
    let expected = baseline_precision(spec.mistakes, spec.correct, recognized, total)?;
    let recall = counts.recall();
    Ok(SetReport {
        scenario: *spec,
        threshold,
        constraint_met: constraint_met && recall >= spec.min_recall,
        counts,
        precision: counts.precision(),
        recall,
        baseline: BaselineReport {
            counts: base,
            precision: base.precision(),
            recall: base.recall(),
            recognized,
            total,
            expected_precision: expected,
        },
        improvement: improvement(counts.precision(), expected),
        expected_undetected_20: expected_undetected(spec.mean_mistakes(), recall, 20),
        pr_curve: curve,
    })
}

/// Severity-averaged results of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioName,
    pub per_severity: BTreeMap<u8, f64>,
    pub precision: f64,
    pub baseline_precision: f64,
    pub baseline_measured_precision: f64,
    pub baseline_recall: f64,
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sets: Vec<SetReport>,
    pub summaries: Vec<ScenarioSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Groups set reports by scenario and averages over severity levels.
pub fn summarize(sets: Vec<SetReport>) -> Result<EvalReport> {
    if sets.is_empty() {
        return Err(Error::Argument("no test sets evaluated".into()));
    }
    let mut names: Vec<ScenarioName> = sets.iter().map(|s| s.scenario.name).collect();
    names.sort();
    names.dedup();
    let summaries = names
        .into_iter()
        .map(|name| {
            let group: Vec<&SetReport> = sets.iter().filter(|s| s.scenario.name == name).collect();
            let precision = mean(group.iter().map(|s| s.precision));
            let baseline = mean(group.iter().map(|s| s.baseline.expected_precision));
            ScenarioSummary {
                scenario: name,
                per_severity: group.iter().map(|s| (s.scenario.severity, s.precision)).collect(),
                precision,
                baseline_precision: baseline,
                baseline_measured_precision: mean(group.iter().map(|s| s.baseline.precision)),
                baseline_recall: mean(group.iter().map(|s| s.baseline.recall)),
                improvement: improvement(precision, baseline),
            }
        })
        .collect();
    Ok(EvalReport { sets, summaries })
}

/// Scores and reports every `(scenario, set)` pair, calibrating each set.
pub fn evaluate(classifier: &Classifier, test_sets: &[(ScenarioSpec, DatasetManifest)]) -> Result<EvalReport> {
    let mut reports = Vec::with_capacity(test_sets.len());
    for (spec, set) in test_sets {
        reports.push(report_set(spec, &score_set(classifier, set)?, None)?);
    }
    summarize(reports)
}

pub const CSV_HEADER: &str = "scenario,severity,TP,FP,TN,FN,precision,recall,baseline_precision,improvement";

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// One row per test set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.sets {
            let c = s.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                s.scenario.name.as_str(),
                s.scenario.severity,
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                s.precision,
                s.recall,
                s.baseline.expected_precision,
                s.improvement
            );
        }
        out
    }
}

/// Standalone SVG line plot of a precision-recall curve with the calibrated
/// operating point and, if given, the baseline's point.
pub fn pr_svg(title: &str, curve: &[PrPoint], operating: Option<(f64, f64)>, baseline: Option<(f64, f64)>) -> String {
    const SIZE: f64 = 360.0;
    const LEFT: f64 = 56.0;
    const TOP: f64 = 36.0;
    let px = |r: f64| LEFT + r.clamp(0.0, 1.0) * SIZE;
    let py = |p: f64| TOP + (1.0 - p.clamp(0.0, 1.0)) * SIZE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = LEFT + SIZE + 24.0,
        h = TOP + SIZE + 52.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + SIZE / 2.0, escape(title));
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{t}" x2="{x}" y2="{b}" stroke="#ddd"/><line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#ddd"/>"##,
            x = px(v),
            y = py(v),
            t = TOP,
            b = TOP + SIZE,
            l = LEFT,
            r = LEFT + SIZE
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#, px(v), TOP + SIZE + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, LEFT - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">recall</text>"#, LEFT + SIZE / 2.0, TOP + SIZE + 36.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">precision</text>"#,
        y = TOP + SIZE / 2.0
    );
    let pts: Vec<String> = curve.iter().map(|p| format!("{:.2},{:.2}", px(p.recall), py(p.precision))).collect();
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{}"/>"##, pts.join(" "));
    if let Some((r, p)) = operating {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f5fa8"><title>classifier</title></circle>"##, px(r), py(p));
    }
    if let Some((r, p)) = baseline {
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="#c0392b"><title>baseline</title></rect>"##,
            px(r) - 4.0,
            py(p) - 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl SetReport {
    pub fn svg(&self) -> String {
        let title = format!("{} scenario, severity {}", self.scenario.name.as_str(), self.scenario.severity);
        pr_svg(
            &title,
            &self.pr_curve,
            Some((self.recall, self.precision)),
            Some((self.baseline.recall, self.baseline.precision)),
        )
    }

    /// File stem used for per-set artifacts.
    pub fn stem(&self) -> String {
        format!("{}_s{}", self.scenario.name.as_str(), self.scenario.severity)
    }
}
