//! IDX image/label containers (big-endian, as distributed with MNIST).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::dataset::{Dataset, Matrix};

/// Expected 0/1 counts over the combined MNIST train and test files.
pub const MNIST_ZERO_ONE_COUNTS: (usize, usize) = (6903, 7877);

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Returns `(count, rows, cols, pixels)`.
fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    if bytes.len() < 16 || be_u32(bytes, 0) != 0x0000_0803 {
        return Err(Error::Data("not an IDX image file (magic 0x803)".into()));
    }
    let n = be_u32(bytes, 4) as usize;
    let r = be_u32(bytes, 8) as usize;
    let c = be_u32(bytes, 12) as usize;
    let body = &bytes[16..];
    if body.len() != n * r * c {
        return Err(Error::Data(format!("image file holds {} bytes, header says {}", body.len(), n * r * c)));
    }
    Ok((n, r, c, body))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < 8 || be_u32(bytes, 0) != 0x0000_0801 {
        return Err(Error::Data("not an IDX label file (magic 0x801)".into()));
    }
    let n = be_u32(bytes, 4) as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Data(format!("label file holds {} bytes, header says {n}", body.len())));
    }
    Ok(body)
}

fn select(images: &[u8], labels: &[u8], classes: (u8, u8)) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let (n, r, c, px) = parse_images(images)?;
    let lab = parse_labels(labels)?;
    if lab.len() != n {
        return Err(Error::Data(format!("{n} images but {} labels", lab.len())));
    }
    let d = r * c;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &l) in lab.iter().enumerate() {
        let target = if l == classes.0 {
            0.0
        } else if l == classes.1 {
            1.0
        } else {
            continue;
        };
        x.extend(px[i * d..(i + 1) * d].iter().map(|&p| p as f64 / 255.0));
        y.push(target);
    }
    Ok((x, y, d))
}

/// Keeps the two classes, maps `classes.0 -> 0`, `classes.1 -> 1` and scales
/// pixels to `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, classes: (u8, u8)) -> Result<Dataset> {
    let (x, y, d) = select(&fs::read(images)?, &fs::read(labels)?, classes)?;
    finish(x, y, d, classes)
}

fn finish(x: Vec<f64>, y: Vec<f64>, d: usize, classes: (u8, u8)) -> Result<Dataset> {
    for (cls, target) in [(classes.0, 0.0), (classes.1, 1.0)] {
        if !y.contains(&target) {
            return Err(Error::Data(format!("class {cls} not present")));
        }
    }
    let n = y.len();
    Dataset::new(Matrix::from_vec(n, d, x)?, y)
}

/// Loads `train-*` and `t10k-*` from an MNIST directory and concatenates them.
/// For classes 0/1 the per-class counts are checked against the known totals.
pub fn load_mnist_dir(dir: impl AsRef<Path>, classes: (u8, u8)) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut d = 0;
    for prefix in ["train", "t10k"] {
        let images = fs::read(dir.join(format!("{prefix}-images-idx3-ubyte")))?;
        let labels = fs::read(dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
        let (px, lab, dd) = select(&images, &labels, classes)?;
        x.extend(px);
        y.extend(lab);
        d = dd;
    }
    let ds = finish(x, y, d, classes)?;
    if classes == (0, 1) {
        let ones = ds.y.iter().filter(|&&v| v == 1.0).count();
        let counts = (ds.n() - ones, ones);
        if counts != MNIST_ZERO_ONE_COUNTS {
            return Err(Error::Data(format!(
                "class counts {counts:?}, expected {MNIST_ZERO_ONE_COUNTS:?}"
            )));
        }
    }
    Ok(ds)
}
