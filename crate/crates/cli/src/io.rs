//! Image files and all-or-nothing output.
//!
//! Two image formats: 16-bit binary PGM (`P5`, maxval 65535, `[0, 1]`
//! mapped linearly, rows along the first array axis) and a lossless raw
//! format, a text line `f64 <n_x> <n_y>` followed by little-endian doubles
//! in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use wasstv::Image;

pub fn encode_f64(img: &Image) -> Vec<u8> {
    let (nx, ny) = img.dim();
    let mut out = format!("f64 {nx} {ny}\n").into_bytes();
    out.reserve(nx * ny * 8);
    for v in img.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let (nx, ny) = img.dim();
    let mut out = format!("P5\n{ny} {nx}\n65535\n").into_bytes();
    out.reserve(nx * ny * 2);
    for v in img.values.iter() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < count {
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
            bail!("truncated header");
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the payload
    Ok((tokens, pos + 1))
}

fn parse_dim(s: &str) -> Result<usize> {
    let v: usize = s.parse().with_context(|| format!("bad dimension {s:?}"))?;
    if v == 0 {
        bail!("zero dimension");
    }
    Ok(v)
}

pub fn decode_f64(bytes: &[u8]) -> Result<Image> {
    let (tok, start) = header_tokens(bytes, 3)?;
    if tok[0] != "f64" {
        bail!("not a raw f64 image");
    }
    let (nx, ny) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() != nx * ny * 8 {
        bail!("expected {} payload bytes, found {}", nx * ny * 8, payload.len());
    }
    let vals = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Image::from_array(Array2::from_shape_vec((nx, ny), vals)?))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let (tok, start) = header_tokens(bytes, 4)?;
    if tok[0] != "P5" {
        bail!("only binary PGM (P5) is supported");
    }
    let (ny, nx) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    let maxval: u32 = tok[3].parse().context("bad PGM maxval")?;
    if maxval == 0 || maxval > 65535 {
        bail!("PGM maxval {maxval} out of range");
    }
    let wide = maxval > 255;
    let payload = bytes.get(start..).unwrap_or(&[]);
    let need = nx * ny * if wide { 2 } else { 1 };
    if payload.len() < need {
        bail!("PGM payload too short: need {need} bytes, found {}", payload.len());
    }
    let scale = 1.0 / maxval as f64;
    let vals: Vec<f64> = if wide {
        payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        payload[..need].iter().map(|&b| b as f64 * scale).collect()
    };
    Ok(Image::from_array(Array2::from_shape_vec((nx, ny), vals)?))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let img = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(b"f64") {
        decode_f64(&bytes)
    } else {
        bail!("unrecognized image format (expected P5 PGM or f64 raw)");
    };
    img.with_context(|| format!("parsing {}", path.display()))
}

/// Output files collected in memory and committed together at the end, each
/// through a temporary sibling and a rename. Nothing is written if the
/// command fails before [`Outputs::commit`].
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_image(&mut self, stem: &Path, img: &Image) {
        self.add(stem.with_extension("pgm"), encode_pgm(img));
        self.add(stem.with_extension("f64"), encode_f64(img));
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut staged = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)
                        .with_context(|| format!("creating {}", dir.display()))?;
                }
                let tmp = tmp_name(path);
                fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
                staged.push((tmp, path.clone()));
            }
            for (tmp, path) in &staged {
                fs::rename(tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        Ok(self.files.into_iter().map(|(p, _)| p).collect())
    }
}

fn tmp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}
