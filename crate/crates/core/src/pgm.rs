//! Binary PGM (P5, 16-bit) image I/O for ground truths, reconstructions and
//! sinograms. Values are linearly mapped onto the full sample range on
//! write; reads return samples scaled to [0, 1].

use crate::operators::ImageGrid;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Writes a column-stacked image as a 16-bit binary PGM, mapping the value
/// range [min, max] onto [0, 65535].
pub fn write_pgm16(path: &Path, grid: ImageGrid, data: &[f64]) -> io::Result<()> {
    assert_eq!(data.len(), grid.len(), "image size mismatch");
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", grid.width, grid.height)?;
    let mut raster = Vec::with_capacity(grid.len() * 2);
    for i in 0..grid.height {
        for j in 0..grid.width {
            let v = (data[grid.index(i, j)] - lo) / span;
            let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
            raster.extend_from_slice(&q.to_be_bytes());
        }
    }
    out.write_all(&raster)
}

/// Reads a 16-bit binary PGM; returns the grid and samples scaled to [0, 1].
pub fn read_pgm16(path: &Path) -> io::Result<(ImageGrid, Vec<f64>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header_tokens = Vec::new();
    // header: magic, width, height, maxval; '#' starts a comment line
    while header_tokens.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "truncated PGM header",
            ));
        }
        let body = line.split('#').next().unwrap_or("");
        header_tokens.extend(body.split_whitespace().map(str::to_owned));
    }
    if header_tokens[0] != "P5" {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "not a binary PGM (P5) file",
        ));
    }
    let width: usize = parse_tok(&header_tokens[1])?;
    let height: usize = parse_tok(&header_tokens[2])?;
    let maxval: u32 = parse_tok(&header_tokens[3])?;
    if maxval != 65535 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("expected 16-bit samples (maxval 65535), got {maxval}"),
        ));
    }
    let grid = ImageGrid { height, width };
    let mut raw = vec![0u8; grid.len() * 2];
    reader.read_exact(&mut raw)?;
    let mut data = vec![0.0; grid.len()];
    for i in 0..height {
        for j in 0..width {
            let k = (i * width + j) * 2;
            let v = u16::from_be_bytes([raw[k], raw[k + 1]]);
            data[grid.index(i, j)] = v as f64 / 65535.0;
        }
    }
    Ok((grid, data))
}

fn parse_tok<T: std::str::FromStr>(tok: &str) -> io::Result<T> {
    tok.parse()
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("bad PGM token {tok}")))
}
