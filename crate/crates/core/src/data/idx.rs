//! Big-endian IDX files in the MNIST layout.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Dataset;

/// Unsigned bytes, three dimensions.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Unsigned bytes, one dimension.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(self.fail(self.bytes.len(), "truncated header"));
        };
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        match self.bytes.get(self.pos..end) {
            Some(data) => {
                self.pos = end;
                Ok(data)
            }
            None => Err(self.fail(
                self.bytes.len(),
                format!("truncated payload: expected {len} bytes from offset {}", self.pos),
            )),
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32()?;
        if magic != expected {
            return Err(self.fail(0, format!("magic {magic:#010x}, expected {expected:#010x}")));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label pair. Pixels are scaled to `[0, 1]` and every image
/// is flattened to `rows * cols` features.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images)?;
    let mut r = Reader {
        path: images,
        bytes: &image_bytes,
        pos: 0,
    };
    r.magic(IDX_IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let features = rows * cols;
    let pixels = r.payload(count * features)?;

    let label_bytes = read_file(labels)?;
    let mut l = Reader {
        path: labels,
        bytes: &label_bytes,
        pos: 0,
    };
    l.magic(IDX_LABELS_MAGIC)?;
    let label_count = l.u32()? as usize;
    if label_count != count {
        return Err(l.fail(
            4,
            format!("{label_count} labels for {count} images in {}", images.display()),
        ));
    }
    let raw_labels = l.payload(count)?;

    let inputs = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(inputs, features, labels, classes)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[u8]) -> Result<()> {
    let features = rows * cols;
    if features == 0 || !images.len().is_multiple_of(features) {
        return Err(Error::Shape(format!(
            "{} pixel bytes do not tile {rows}x{cols} images",
            images.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [images.len() / features, rows, cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    out.extend_from_slice(images);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images = dir.join("img.idx");
        let labels = dir.join("lbl.idx");
        let pixels: Vec<u8> = (0..3 * 4).map(|i| (i * 20) as u8).collect();
        write_idx_images(&images, 2, 2, &pixels).unwrap();
        write_idx_labels(&labels, &[9, 0, 3]).unwrap();
        (images, labels)
    }

    #[test]
    fn round_trips_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let d = load_idx(&images, &labels).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.labels(), &[9, 0, 3]);
        assert_eq!(d.n_classes(), 10);
        assert_eq!(d.sample(1), &[80.0 / 255.0, 100.0 / 255.0, 120.0 / 255.0, 140.0 / 255.0]);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let bytes = fs::read(&images).unwrap();
        fs::write(&images, &bytes[..bytes.len() - 1]).unwrap();
        match load_idx(&images, &labels) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() - 1),
            other => panic!("expected format error, got {other:?}"),
        }
        fs::write(&images, &bytes[..6]).unwrap();
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::Format { offset: 6, .. })
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let err = load_idx(&labels, &images).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        write_idx_labels(&labels, &[1, 2]).unwrap();
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(err.to_string().contains("2 labels for 3 images"), "{err}");
    }
}
