//! 5x9 bitmap glyphs for lowercase letters. Rows 0-1 hold ascenders, rows
//! 2-6 the x-height band and rows 7-8 descenders; the baseline sits under row 6.

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 9;
pub const BASELINE_ROW: usize = 7;

const GLYPHS: [(char, [&str; GLYPH_ROWS]); 26] = [
    ('a', [".....", ".....", ".###.", "....#", ".####", "#...#", ".####", ".....", "....."]),
    ('b', ["#....", "#....", "####.", "#...#", "#...#", "#...#", "####.", ".....", "....."]),
    ('c', [".....", ".....", ".####", "#....", "#....", "#....", ".####", ".....", "....."]),
    ('d', ["....#", "....#", ".####", "#...#", "#...#", "#...#", ".####", ".....", "....."]),
    ('e', [".....", ".....", ".###.", "#...#", "#####", "#....", ".###.", ".....", "....."]),
    ('f', ["..##.", ".#...", "####.", ".#...", ".#...", ".#...", ".#...", ".....", "....."]),
    ('g', [".....", ".....", ".####", "#...#", "#...#", "#...#", ".####", "....#", ".###."]),
    ('h', ["#....", "#....", "####.", "#...#", "#...#", "#...#", "#...#", ".....", "....."]),
    ('i', ["..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###.", ".....", "....."]),
    ('j', ["...#.", ".....", "..##.", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('k', ["#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#.", ".....", "....."]),
    ('l', [".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###.", ".....", "....."]),
    ('m', [".....", ".....", "##.#.", "#.#.#", "#.#.#", "#.#.#", "#.#.#", ".....", "....."]),
    ('n', [".....", ".....", "####.", "#...#", "#...#", "#...#", "#...#", ".....", "....."]),
    ('o', [".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###.", ".....", "....."]),
    ('p', [".....", ".....", "####.", "#...#", "#...#", "#...#", "####.", "#....", "#...."]),
    ('q', [".....", ".....", ".####", "#...#", "#...#", "#...#", ".####", "....#", "....#"]),
    ('r', [".....", ".....", "#.##.", "##..#", "#....", "#....", "#....", ".....", "....."]),
    ('s', [".....", ".....", ".####", "#....", ".###.", "....#", "####.", ".....", "....."]),
    ('t', [".#...", ".#...", "####.", ".#...", ".#...", ".#..#", "..##.", ".....", "....."]),
    ('u', [".....", ".....", "#...#", "#...#", "#...#", "#..##", ".##.#", ".....", "....."]),
    ('v', [".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#..", ".....", "....."]),
    ('w', [".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#.", ".....", "....."]),
    ('x', [".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", ".....", "....."]),
    ('y', [".....", ".....", "#...#", "#...#", "#...#", "#...#", ".####", "....#", ".###."]),
    ('z', [".....", ".....", "#####", "...#.", "..#..", ".#...", "#####", ".....", "....."]),
];

/// Ink cells of `c` as `(col, row)` pairs, or `None` without a glyph.
pub fn glyph_cells(c: char) -> Option<Vec<(usize, usize)>> {
    let (_, rows) = GLYPHS.iter().find(|(g, _)| *g == c)?;
    let mut cells = Vec::new();
    for (r, line) in rows.iter().enumerate() {
        for (col, b) in line.bytes().enumerate() {
            if b == b'#' {
                cells.push((col, r));
            }
        }
    }
    Some(cells)
}

pub fn has_glyph(c: char) -> bool {
    GLYPHS.iter().any(|(g, _)| *g == c)
}

/// Stroke skeleton: segments between 4-connected ink cells, plus diagonal
/// links where no orthogonal path exists. Isolated cells become points.
pub fn glyph_strokes(c: char) -> Option<Vec<[(f64, f64); 2]>> {
    let cells = glyph_cells(c)?;
    let ink = |col: isize, row: isize| -> bool {
        col >= 0 && row >= 0 && cells.contains(&(col as usize, row as usize))
    };
    let center = |col: usize, row: usize| (col as f64 + 0.5, row as f64 + 0.5);
    let mut segments = Vec::new();
    for &(col, row) in &cells {
        let (ci, ri) = (col as isize, row as isize);
        let mut linked = false;
        for (dc, dr) in [(1, 0), (0, 1), (1, 1), (-1, 1)] {
            let (nc, nr) = (ci + dc, ri + dr);
            if !ink(nc, nr) {
                continue;
            }
            if dc != 0 && dr != 0 && (ink(ci + dc, ri) || ink(ci, ri + dr)) {
                continue;
            }
            segments.push([center(col, row), center(nc as usize, nr as usize)]);
            linked = true;
        }
        let has_incoming = [(-1, 0), (0, -1), (-1, -1), (1, -1)]
            .iter()
            .any(|&(dc, dr)| ink(ci + dc, ri + dr));
        if !linked && !has_incoming {
            segments.push([center(col, row), center(col, row)]);
        }
    }
    Some(segments)
}
