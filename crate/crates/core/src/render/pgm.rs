//! Binary 8-bit portable graymap (P5) encoding. Ink is stored dark on a
//! white page, so file level `255 - v` holds image level `v`.

use std::fs;
use std::path::Path;

use super::WordImage;
use crate::error::{Error, Result};

pub fn encode(image: &WordImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.levels().iter().map(|&v| 255 - v));
    out
}

pub fn decode(bytes: &[u8]) -> Result<WordImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("unsupported PGM magic {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM field {s:?}")));
    let (width, height, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(Error::Parse(format!("only 8-bit PGM is supported, maxval {max}")));
    }
    let raster = bytes.get(pos..pos + width * height).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
    WordImage::from_levels(height, width, raster.iter().map(|&v| 255 - v).collect())
}

pub fn write(path: &Path, image: &WordImage) -> Result<()> {
    fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<WordImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
