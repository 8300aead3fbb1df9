//! Binary PPM (P6) frames and PGM (P5) label masks, 8-bit.

use crate::error::{Error, Result};
use crate::pipeline::Frame;
use crate::tensor::LabelMask;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub fn write_ppm(path: &Path, frame: &Frame) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{} {}\n255\n", frame.width(), frame.height())?;
    f.write_all(frame.rgb())?;
    Ok(())
}

pub fn write_pgm(path: &Path, mask: &LabelMask) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    f.write_all(mask.data())?;
    Ok(())
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace(&mut self) {
        while self.at < self.bytes.len() {
            let b = self.bytes[self.at];
            if b == b'#' {
                while self.at < self.bytes.len() && self.bytes[self.at] != b'\n' {
                    self.at += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.at += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_whitespace();
        let start = self.at;
        while self.at < self.bytes.len() && !self.bytes[self.at].is_ascii_whitespace() {
            self.at += 1;
        }
        if start == self.at {
            return Err(Error::argument("truncated PNM header"));
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .map_err(|_| Error::argument("invalid PNM header"))
    }

    fn number(&mut self) -> Result<usize> {
        self.token()?
            .parse()
            .map_err(|_| Error::argument("invalid number in PNM header"))
    }
}

fn read_pnm(path: &Path, magic: &str) -> Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut hdr = HeaderReader {
        bytes: &bytes,
        at: 0,
    };
    if hdr.token()? != magic {
        return Err(Error::argument(format!(
            "{}: expected {} file",
            path.display(),
            magic
        )));
    }
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval != 255 {
        return Err(Error::argument("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates header and raster
    let data_start = hdr.at + 1;
    let channels = if magic == "P6" { 3 } else { 1 };
    let expected = width * height * channels;
    if bytes.len() < data_start + expected {
        return Err(Error::argument(format!(
            "{}: truncated raster",
            path.display()
        )));
    }
    Ok((
        height,
        width,
        bytes[data_start..data_start + expected].to_vec(),
    ))
}

pub fn read_ppm(path: &Path) -> Result<Frame> {
    let (h, w, data) = read_pnm(path, "P6")?;
    Frame::new(h, w, data)
}

pub fn read_pgm(path: &Path) -> Result<LabelMask> {
    let (h, w, data) = read_pnm(path, "P5")?;
    LabelMask::new(h, w, data)
}

/// Read all PGM masks in a directory in ascending filename order.
pub fn read_mask_dir(dir: &Path) -> Result<Vec<LabelMask>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::argument(format!(
            "no .pgm files in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_pgm(p)).collect()
}
