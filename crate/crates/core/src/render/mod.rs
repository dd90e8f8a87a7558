//! Parametric glyph rasterizer producing styled word images.

mod font;
pub mod pgm;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::engine::Tensor;
use crate::error::{Error, Result};
pub use font::{glyph_cells, has_glyph, GLYPH_COLS, GLYPH_ROWS};

pub const SLANT_RANGE: (f64, f64) = (-0.35, 0.35);
pub const THICKNESS_RANGE: (f64, f64) = (1.0, 3.0);
pub const JITTER_RANGE: (f64, f64) = (0.0, 2.0);
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
pub const NOISE_RANGE: (f64, f64) = (0.0, 0.1);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    /// Shear angle in radians; positive leans right.
    pub slant: f64,
    /// Stroke width in pixels.
    pub stroke_thickness: f64,
    /// Standard deviation of the per-character vertical offset, in pixels.
    pub baseline_jitter: f64,
    /// Glyph size relative to the nominal cell.
    pub scale: f64,
    /// Standard deviation of additive per-pixel noise.
    pub ink_noise: f64,
}

impl StyleParams {
    /// Upright, mid-weight, noiseless style.
    pub fn plain() -> Self {
        Self {
            slant: 0.0,
            stroke_thickness: 2.0,
            baseline_jitter: 0.0,
            scale: 1.0,
            ink_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("slant", self.slant, SLANT_RANGE),
            ("stroke_thickness", self.stroke_thickness, THICKNESS_RANGE),
            ("baseline_jitter", self.baseline_jitter, JITTER_RANGE),
            ("scale", self.scale, SCALE_RANGE),
            ("ink_noise", self.ink_noise, NOISE_RANGE),
        ];
        for (name, v, (lo, hi)) in checks {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Argument(format!("style {name}={v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Each field drawn uniformly from its range.
pub fn sample_style<R: Rng + ?Sized>(rng: &mut R) -> StyleParams {
    let mut draw = |(lo, hi): (f64, f64)| Uniform::new_inclusive(lo, hi).expect("valid range").sample(rng);
    StyleParams {
        slant: draw(SLANT_RANGE),
        stroke_thickness: draw(THICKNESS_RANGE),
        baseline_jitter: draw(JITTER_RANGE),
        scale: draw(SCALE_RANGE),
        ink_noise: draw(NOISE_RANGE),
    }
}

/// Grayscale word image, 1 = ink. Pixels are stored at 8-bit depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl WordImage {
    pub fn from_levels(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::dim(format!("{} pixels for a {height}x{width} image", pixels.len())));
        }
        Ok(Self { height, width, pixels })
    }

    /// Quantizes reals in `[0, 1]` to 8-bit levels.
    pub fn from_reals(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::from_levels(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn levels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> f64 {
        f64::from(self.pixels[y * self.width + x]) / 255.0
    }

    /// `H x W x 1` tensor of reals in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        Tensor::new(&[self.height, self.width, 1], data).expect("image dims are nonzero")
    }

    /// Number of columns holding any pixel above `level`.
    pub fn ink_columns(&self, level: u8) -> usize {
        (0..self.width)
            .filter(|&x| (0..self.height).any(|y| self.pixels[y * self.width + x] > level))
            .count()
    }

    /// Rightmost column holding any pixel above `level`.
    pub fn ink_extent(&self, level: u8) -> Option<usize> {
        (0..self.width)
            .rev()
            .find(|&x| (0..self.height).any(|y| self.pixels[y * self.width + x] > level))
    }
}

/// Canvas geometry of the rasterizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphRenderer {
    pub height: usize,
    pub width: usize,
    /// Glyph cell width in pixels at scale 1.
    pub cell_width: f64,
    /// Glyph cell height in pixels at scale 1.
    pub cell_height: f64,
    /// Blank cells between neighbouring glyphs.
    pub spacing: f64,
    /// Left margin in pixels.
    pub margin: f64,
}

impl Default for GlyphRenderer {
    fn default() -> Self {
        Self {
            height: 32,
            width: 128,
            cell_width: 1.3,
            cell_height: 2.3,
            spacing: 1.0,
            margin: 2.0,
        }
    }
}

/// Source of word images for dataset assembly.
pub trait WordRenderer {
    fn render(&self, text: &str, rng: &mut dyn RngCore) -> Result<WordImage>;
}

impl WordRenderer for GlyphRenderer {
    /// Samples a style, then renders with it.
    fn render(&self, text: &str, rng: &mut dyn RngCore) -> Result<WordImage> {
        let style = sample_style(rng);
        self.render_word(text, &style, rng)
    }
}

impl GlyphRenderer {
    /// Rasterizes `text` left to right. The same `(text, style, rng state)`
    /// always yields the same image.
    pub fn render_word<R: Rng + ?Sized>(&self, text: &str, style: &StyleParams, rng: &mut R) -> Result<WordImage> {
        if text.is_empty() {
            return Err(Error::Argument("cannot render empty text".into()));
        }
        style.validate()?;
        let sx = self.cell_width * style.scale;
        let sy = self.cell_height * style.scale;
        let shear = style.slant.tan();
        let glyph_h = GLYPH_ROWS as f64 * sy;
        let top = (self.height as f64 - glyph_h) / 2.0;
        let baseline = top + font::BASELINE_ROW as f64 * sy;
        let jitter = Normal::new(0.0, style.baseline_jitter.max(1e-12)).expect("valid std-dev");
        let advance = (GLYPH_COLS as f64 + self.spacing) * sx;

        let mut segments = Vec::new();
        for (i, c) in text.chars().enumerate() {
            let strokes = font::glyph_strokes(c).ok_or(Error::UnknownGlyph(c))?;
            let dy = if style.baseline_jitter > 0.0 { jitter.sample(rng) } else { 0.0 };
            let x0 = i as f64 * advance;
            for [a, b] in strokes {
                let map = |(gx, gy): (f64, f64)| {
                    let y = top + gy * sy + dy;
                    (x0 + gx * sx + shear * (baseline - y), y)
                };
                segments.push([map(a), map(b)]);
            }
        }

        let radius = style.stroke_thickness / 2.0;
        let min_x = segments
            .iter()
            .flat_map(|s| [s[0].0, s[1].0])
            .fold(f64::INFINITY, f64::min);
        let shift = self.margin + radius - min_x;
        for s in &mut segments {
            s[0].0 += shift;
            s[1].0 += shift;
        }
        let max_x = segments
            .iter()
            .flat_map(|s| [s[0].0, s[1].0])
            .fold(f64::NEG_INFINITY, f64::max);
        let extent = (max_x + radius).ceil() as usize + 1;
        if extent > self.width {
            return Err(Error::Width {
                width: extent,
                canvas: self.width,
            });
        }

        let mut canvas = vec![0.0f64; self.height * self.width];
        let reach = radius + 0.5;
        for &[(ax, ay), (bx, by)] in &segments {
            let y_lo = ((ay.min(by) - reach).floor().max(0.0)) as usize;
            let y_hi = ((ay.max(by) + reach).ceil().min(self.height as f64 - 1.0)).max(0.0) as usize;
            let x_lo = ((ax.min(bx) - reach).floor().max(0.0)) as usize;
            let x_hi = ((ax.max(bx) + reach).ceil().min(self.width as f64 - 1.0)).max(0.0) as usize;
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d = segment_distance((x as f64 + 0.5, y as f64 + 0.5), (ax, ay), (bx, by));
                    let v = (reach - d).clamp(0.0, 1.0);
                    let px = &mut canvas[y * self.width + x];
                    if v > *px {
                        *px = v;
                    }
                }
            }
        }
        if style.ink_noise > 0.0 {
            let noise = Normal::new(0.0, style.ink_noise).expect("valid std-dev");
            for px in &mut canvas {
                *px = (*px + noise.sample(rng)).clamp(0.0, 1.0);
            }
        }
        WordImage::from_reals(self.height, self.width, &canvas)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// `rows x A` one-hot matrix of `text`; rows past the text are zero.
pub fn one_hot_encode(text: &str, alphabet: &Alphabet, rows: usize) -> Result<Tensor> {
    let indices = alphabet.encode(text)?;
    if indices.len() > rows {
        return Err(Error::Encoding(format!("text of {} characters exceeds {rows} rows", indices.len())));
    }
    let a = alphabet.len();
    let mut m = Tensor::zeros(&[rows, a]);
    for (i, &k) in indices.iter().enumerate() {
        m.data_mut()[i * a + k] = 1.0;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn noiseless_render_is_reproducible() {
        let r = GlyphRenderer::default();
        let a = r.render_word("hello", &StyleParams::plain(), &mut rng(1)).unwrap();
        let b = r.render_word("hello", &StyleParams::plain(), &mut rng(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ink_grows_with_text() {
        let r = GlyphRenderer::default();
        let style = StyleParams::plain();
        let mut prev_cols = 0;
        let mut prev_extent = 0;
        for n in 1..=12 {
            let text: String = "abcdefghijkl".chars().take(n).collect();
            let img = r.render_word(&text, &style, &mut rng(0)).unwrap();
            let cols = img.ink_columns(0);
            let extent = img.ink_extent(0).unwrap();
            assert!(cols > prev_cols && extent > prev_extent, "length {n}");
            prev_cols = cols;
            prev_extent = extent;
        }
    }

    #[test]
    fn widest_style_fits_twelve_letters() {
        let r = GlyphRenderer::default();
        let style = StyleParams {
            slant: 0.35,
            stroke_thickness: 3.0,
            baseline_jitter: 0.0,
            scale: 1.2,
            ink_noise: 0.0,
        };
        r.render_word("mmmmmmmmmmmm", &style, &mut rng(0)).unwrap();
        let neg = StyleParams { slant: -0.35, ..style };
        r.render_word("wwwwwwwwwwww", &neg, &mut rng(0)).unwrap();
        assert!(matches!(
            r.render_word(&"m".repeat(16), &style, &mut rng(0)),
            Err(Error::Width { .. })
        ));
    }

    #[test]
    fn unknown_glyph_is_named() {
        let r = GlyphRenderer::default();
        match r.render_word("ab7", &StyleParams::plain(), &mut rng(0)) {
            Err(Error::UnknownGlyph(c)) => assert_eq!(c, '7'),
            other => panic!("expected glyph error, got {other:?}"),
        }
    }

    #[test]
    fn distinct_letters_differ() {
        let r = GlyphRenderer::default();
        let a = r.render_word("a", &StyleParams::plain(), &mut rng(0)).unwrap();
        let b = r.render_word("b", &StyleParams::plain(), &mut rng(0)).unwrap();
        let diff: f64 = (0..a.height())
            .flat_map(|y| (0..a.width()).map(move |x| (y, x)))
            .map(|(y, x)| (a.pixel(y, x) - b.pixel(y, x)).abs())
            .sum();
        assert!(diff > 20.0, "pixel difference {diff}");
    }

    #[test]
    fn one_hot_pads_with_zero_rows() {
        let abc = Alphabet::encoding_only("abc").unwrap();
        let m = one_hot_encode("a", &abc, 4).unwrap();
        assert_eq!(m.shape(), &[4, 3]);
        assert_eq!(m.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(one_hot_encode("abcab", &abc, 4), Err(Error::Encoding(_))));
        assert!(matches!(one_hot_encode("abd", &abc, 4), Err(Error::Encoding(_))));
    }
}
