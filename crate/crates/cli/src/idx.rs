//! IDX reader (the MNIST distribution format).
//!
//! Both files are big-endian: a `u32` magic, then `u32` dimensions, then
//! unsigned bytes. Images use magic `0x00000803` with dimensions
//! `count, rows, cols`; labels use `0x00000801` with dimension `count`.

use std::fs;
use std::path::Path;

use ecgr_core::data::Dataset;

use crate::error::{CliError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> CliError {
        CliError::Format { path: self.path.to_path_buf(), offset: offset as u64, message: message.into() }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let chunk = self.bytes.get(self.offset..end).ok_or_else(|| self.fail(self.offset, "truncated header"))?;
        self.offset = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let at = self.offset;
        let magic = self.u32()?;
        if magic != expected {
            return Err(self.fail(at, format!("magic {magic:#010x}, expected {expected:#010x}")));
        }
        Ok(())
    }

    fn body(&self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(self.fail(self.bytes.len(), format!("truncated body: need {len} bytes, have {available}")));
        }
        Ok(&self.bytes[self.offset..self.offset + len])
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Loads an image/label pair. Pixels are scaled to `[0, 1]`; the class count
/// is one more than the largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;

    let mut images = Reader { path: images_path, bytes: &image_bytes, offset: 0 };
    images.magic(IMAGES_MAGIC)?;
    let count = images.u32()? as usize;
    let rows = images.u32()? as usize;
    let cols = images.u32()? as usize;
    let dim = rows * cols;
    let pixels = images.body(count * dim)?;

    let mut labels = Reader { path: labels_path, bytes: &label_bytes, offset: 0 };
    labels.magic(LABELS_MAGIC)?;
    let label_count = labels.u32()? as usize;
    if label_count != count {
        return Err(labels.fail(4, format!("{label_count} labels for {count} images")));
    }
    let raw_labels = labels.body(count)?;

    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Ok(Dataset::new(dim, num_classes, features, labels)?)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::path::PathBuf;

    pub(crate) fn write_pair(dir: &Path, images: &[[u8; 4]], labels: &[u8]) -> (PathBuf, PathBuf) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn loads_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), &[[0, 255, 51, 102], [255, 255, 0, 0]], &[3, 1]);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.num_classes(), 4);
        assert_eq!(ds.features(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[3, 1]);
    }

    #[test]
    fn wrong_magic_is_reported_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), &[[0; 4]], &[0]);
        let mut bytes = fs::read(&ip).unwrap();
        bytes[3] = 0x01;
        fs::write(&ip, bytes).unwrap();
        match load_idx(&ip, &lp) {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
        // Labels file given where images are expected.
        assert!(matches!(load_idx(&lp, &lp), Err(CliError::Format { offset: 0, .. })));
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), &[[0; 4], [1; 4]], &[0]);
        assert!(matches!(load_idx(&ip, &lp), Err(CliError::Format { offset: 4, .. })));

        let (ip, lp) = write_pair(dir.path(), &[[0; 4], [1; 4]], &[0, 1]);
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(CliError::Format { .. })));
        fs::write(&ip, &bytes[..6]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(CliError::Format { offset: 4, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(matches!(load_idx(&missing, &missing), Err(CliError::Io { .. })));
    }

    /// Runs only when `MNIST_DIR` points at the original distribution files.
    #[test]
    fn mnist_train_set_if_present() {
        let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) else {
            return;
        };
        let ds = load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte")).unwrap();
        assert_eq!(ds.len(), 60_000);
        assert_eq!(ds.num_classes(), 10);
        assert_eq!(ds.dim(), 784);
    }
}
