//! IDX files as used by the MNIST distribution.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images flattened to rows of `rows·cols` pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mnist {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Mnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.rows * self.cols
    }

    /// Images at `indices` as a `[len × features]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let f = self.features();
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(&self.pixels[i * f..(i + 1) * f]);
        }
        Tensor::new(&[indices.len(), f], data).expect("nonempty batch")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i] as usize).collect()
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let actual = read_u32(bytes, 0, what)?;
    if actual != expected {
        return Err(Error::BadMagic { expected, actual });
    }
    Ok(())
}

/// Returns `(count, rows, cols, raw pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Truncated(format!("images: expected {need} pixel bytes, found {}", body.len())));
    }
    Ok((n, rows, cols, &body[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let n = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated(format!("labels: expected {n} bytes, found {}", body.len())));
    }
    Ok(&body[..n])
}

pub fn write_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn decode_mnist(images: &[u8], labels: &[u8]) -> Result<Mnist> {
    let (n, rows, cols, raw) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::extent("load_mnist_idx", format!("label {bad} outside 0..=9")));
    }
    Ok(Mnist {
        rows,
        cols,
        pixels: raw.iter().map(|&p| p as f64 / 255.0).collect(),
        labels: labels.to_vec(),
    })
}

pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Mnist> {
    decode_mnist(&fs::read(images)?, &fs::read(labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 2 * 3).map(|i| (i * 20) as u8).collect();
        (write_idx_images(2, 3, &pixels), write_idx_labels(&[5, 0]))
    }

    #[test]
    fn round_trip() {
        let (im, lb) = tiny();
        let m = decode_mnist(&im, &lb).unwrap();
        assert_eq!((m.len(), m.rows, m.cols), (2, 2, 3));
        assert_eq!(m.labels, vec![5, 0]);
        assert_eq!(m.pixels[1], 20.0 / 255.0);
        assert_eq!(m.batch(&[1]).shape(), &[1, 6]);
    }

    #[test]
    fn bad_magic_names_both_values() {
        let (mut im, lb) = tiny();
        im[3] = 0x01;
        let err = decode_mnist(&im, &lb).unwrap_err();
        assert!(matches!(
            err,
            Error::BadMagic {
                expected: IMAGES_MAGIC,
                actual: 0x801
            }
        ));
        let msg = err.to_string();
        assert!(msg.contains("0x00000803") && msg.contains("0x00000801"), "{msg}");
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let (im, lb) = tiny();
        assert!(matches!(decode_mnist(&im[..im.len() - 1], &lb), Err(Error::Truncated(_))));
        assert!(matches!(decode_mnist(&im[..10], &lb), Err(Error::Truncated(_))));
        let short = write_idx_labels(&[1]);
        assert!(matches!(decode_mnist(&im, &short), Err(Error::CountMismatch { images: 2, labels: 1 })));
    }
}
