//! Writes a handful of styled word images as PGM files.
use hwcheck::render::{pgm, sample_style, GlyphRenderer};
use hwcheck::textgen::seeded_rng;

fn main() -> hwcheck::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "samples".into());
    std::fs::create_dir_all(&out).map_err(|e| hwcheck::Error::Io { path: out.clone().into(), source: e })?;
    let renderer = GlyphRenderer::default();
    let words = ["hello", "quickly", "jumping", "misspelled", "wxyzabcdefgh", "minimum"];
    for (i, w) in words.iter().enumerate() {
        let mut rng = seeded_rng(i as u64);
        let style = sample_style(&mut rng);
        let img = renderer.render_word(w, &style, &mut rng)?;
        pgm::write(std::path::Path::new(&format!("{out}/{i}_{w}.pgm")), &img)?;
    }
    Ok(())
}
