//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The plain functions are ordinary Rust and are what the tests exercise;
//! the `#[wasm_bindgen]` wrappers only convert errors for JavaScript.

use hwcheck::evaluation::{baseline_precision, expected_undetected, scenario_counts, ScenarioName, ScenarioSpec};
use hwcheck::render::{sample_style, GlyphRenderer};
use hwcheck::textgen::{apply_severity, seeded_rng};
use hwcheck::Alphabet;
use wasm_bindgen::prelude::*;

/// A rendered word as RGBA bytes, ready for `ImageData`.
#[wasm_bindgen]
pub struct RenderedWord {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl RenderedWord {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Copies the pixels out; dark ink on white.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

fn check_word(word: &str) -> hwcheck::Result<()> {
    let a = Alphabet::lowercase();
    if word.is_empty() || !a.contains_all(word) {
        return Err(hwcheck::Error::Argument("use lowercase letters a-z only".into()));
    }
    Ok(())
}

/// Renders `text` in a style drawn from `seed`.
pub fn render(text: &str, seed: u32) -> hwcheck::Result<RenderedWord> {
    check_word(text)?;
    let renderer = GlyphRenderer::default();
    let mut rng = seeded_rng(u64::from(seed));
    let style = sample_style(&mut rng);
    let image = renderer.render_word(text, &style, &mut rng)?;
    let rgba = image
        .levels()
        .iter()
        .flat_map(|&v| {
            let g = 255 - v;
            [g, g, g, 255]
        })
        .collect();
    Ok(RenderedWord {
        width: image.width(),
        height: image.height(),
        rgba,
    })
}

/// `severity` composed letter substitutions of `word`.
pub fn misspell_word(word: &str, severity: u8, seed: u32) -> hwcheck::Result<String> {
    check_word(word)?;
    apply_severity(word, severity, &mut seeded_rng(u64::from(seed)))
}

/// Test-set composition and baseline expectations as a JSON object.
pub fn scenario(name: &str, total: u32, recognized: u32, recall: f64) -> hwcheck::Result<String> {
    let spec = ScenarioSpec::named(ScenarioName::parse(name)?, 1);
    if recognized > total {
        return Err(hwcheck::Error::Argument("recognized words cannot exceed the total".into()));
    }
    if !(0.0..=1.0).contains(&recall) {
        return Err(hwcheck::Error::Argument("recall must lie in [0, 1]".into()));
    }
    let (m, c) = scenario_counts(&spec, total as usize)?;
    let precision = baseline_precision(spec.mistakes, spec.correct, recognized as usize, total as usize)?;
    Ok(serde_json::json!({
        "mistakes": m,
        "correct": c,
        "word_accuracy": f64::from(recognized) / f64::from(total),
        "baseline_precision": precision,
        "undetected_per_20_words": expected_undetected(spec.mean_mistakes(), recall, 20),
    })
    .to_string())
}

fn js(e: hwcheck::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn render_word(text: &str, seed: u32) -> Result<RenderedWord, JsError> {
    render(text, seed).map_err(js)
}

#[wasm_bindgen]
pub fn misspell(word: &str, severity: u8, seed: u32) -> Result<String, JsError> {
    misspell_word(word, severity, seed).map_err(js)
}

#[wasm_bindgen]
pub fn scenario_json(name: &str, total: u32, recognized: u32, recall: f64) -> Result<String, JsError> {
    scenario(name, total, recognized, recall).map_err(js)
}
