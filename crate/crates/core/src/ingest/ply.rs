//! Minimal binary little-endian PLY with a single `vertex` element of
//! float32 `x`, `y`, `z`.

use std::path::Path;

use crate::error::{Error, Result};

const HEADER_PREFIX: &str = "ply\nformat binary_little_endian 1.0\n";

pub fn encode_ply(points: &[[f32; 3]]) -> Vec<u8> {
    let header = format!(
        "{HEADER_PREFIX}element vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    let mut out = Vec::with_capacity(header.len() + points.len() * 12);
    out.extend_from_slice(header.as_bytes());
    for p in points {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_ply(bytes: &[u8], path: &Path) -> Result<Vec<[f32; 3]>> {
    let corrupt = |reason: &str| Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| corrupt("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("header is not UTF-8"))?;
    let body = &bytes[end + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(corrupt("missing ply magic"));
    }
    let mut count = None;
    let mut props = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", ..] => return Err(corrupt("only binary_little_endian 1.0 is supported")),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| corrupt("bad vertex count"))?);
            }
            ["element", ..] => return Err(corrupt("unexpected element")),
            ["property", ty, name] => props.push((*ty, *name)),
            [] => {}
            _ => return Err(corrupt("unrecognised header line")),
        }
    }
    if !format_ok {
        return Err(corrupt("missing format line"));
    }
    if props != [("float", "x"), ("float", "y"), ("float", "z")] {
        return Err(corrupt("vertex properties must be float x, y, z"));
    }
    let count = count.ok_or_else(|| corrupt("missing vertex element"))?;
    if body.len() != count * 12 {
        return Err(corrupt(&format!(
            "body has {} bytes, expected {}",
            body.len(),
            count * 12
        )));
    }
    Ok(body
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]);
            [f(0), f(4), f(8)]
        })
        .collect())
}

pub fn write_ply(path: &Path, points: &[[f32; 3]]) -> Result<()> {
    std::fs::write(path, encode_ply(points)).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<Vec<[f32; 3]>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&bytes, path)
}
