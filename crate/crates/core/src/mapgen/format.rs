//! Benchmark `.map` text format:
//!
//! ```text
//! type octile
//! height H
//! width W
//! map
//! <H rows of W glyphs, '.' free, '@' obstacle>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::GridMap;
use crate::error::{Error, Result};

pub fn write_map(map: &GridMap) -> String {
    let mut out = String::with_capacity(map.len() + map.height() + 48);
    let _ = writeln!(out, "type octile");
    let _ = writeln!(out, "height {}", map.height());
    let _ = writeln!(out, "width {}", map.width());
    out.push_str("map\n");
    for r in 0..map.height() {
        for c in 0..map.width() {
            out.push(if map.obstacles[r * map.width() + c] { '@' } else { '.' });
        }
        out.push('\n');
    }
    out
}

pub fn write_map_file(map: &GridMap, path: &Path) -> Result<()> {
    std::fs::write(path, write_map(map)).map_err(|e| Error::io(path, e))
}

pub fn read_map_file(path: &Path) -> Result<GridMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_map(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn header_value(line_no: usize, line: Option<&str>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| parse_err(line_no, format!("missing `{key}` header")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad {key} value `{v}`"))),
        _ => Err(parse_err(line_no, format!("expected `{key} <n>`, found `{line}`"))),
    }
}

pub fn read_map(text: &str) -> Result<GridMap> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.split_whitespace().collect::<Vec<_>>() == ["type", "octile"] => {}
        other => {
            return Err(parse_err(
                1,
                format!("expected `type octile`, found `{}`", other.unwrap_or("")),
            ))
        }
    }
    let height = header_value(2, lines.next(), "height")?;
    let width = header_value(3, lines.next(), "width")?;
    match lines.next() {
        Some(l) if l.trim() == "map" => {}
        other => return Err(parse_err(4, format!("expected `map`, found `{}`", other.unwrap_or("")))),
    }
    let mut obstacles = Vec::with_capacity(width * height);
    for r in 0..height {
        let line_no = 5 + r;
        let row = lines
            .next()
            .ok_or_else(|| parse_err(line_no, format!("expected {height} map rows, found {r}")))?;
        let row = row.strip_suffix('\r').unwrap_or(row);
        if row.chars().count() != width {
            return Err(parse_err(
                line_no,
                format!("row has {} cells, expected {width}", row.chars().count()),
            ));
        }
        for ch in row.chars() {
            obstacles.push(match ch {
                '.' => false,
                '@' => true,
                other => return Err(parse_err(line_no, format!("unknown glyph `{other}`"))),
            });
        }
    }
    if let Some((i, extra)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(5 + height + i, format!("unexpected trailing row `{extra}`")));
    }
    GridMap::new(width, height, obstacles).map_err(|e| parse_err(2, e.to_string()))
}
