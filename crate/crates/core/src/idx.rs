//! IDX files, the distribution format of MNIST.
//!
//! Layout: a big-endian u32 magic (`0x00000803` for rank-3 u8 images,
//! `0x00000801` for rank-1 u8 labels), one big-endian u32 per dimension, then
//! the row-major payload.

use std::fs;
use std::path::Path;

use crate::encoding::{LabeledImage, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Format {
            what,
            offset: offset as u64,
            reason: "truncated header".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format {
            what,
            offset: 0,
            reason: format!("magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Parses an image file into `count` row-major 28x28 byte buffers.
pub fn parse_images(bytes: &[u8]) -> Result<Vec<[u8; IMAGE_PIXELS]>> {
    const WHAT: &str = "IDX image file";
    check_magic(bytes, IMAGES_MAGIC, WHAT)?;
    let count = read_u32(bytes, 4, WHAT)? as usize;
    let rows = read_u32(bytes, 8, WHAT)? as usize;
    let cols = read_u32(bytes, 12, WHAT)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Format {
            what: WHAT,
            offset: 8,
            reason: format!("images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}"),
        });
    }
    let body = &bytes[16..];
    let needed = count * IMAGE_PIXELS;
    if body.len() < needed {
        let complete = body.len() / IMAGE_PIXELS;
        return Err(Error::Format {
            what: WHAT,
            offset: (16 + complete * IMAGE_PIXELS) as u64,
            reason: format!("truncated inside image {complete} of {count}"),
        });
    }
    Ok(body[..needed]
        .chunks_exact(IMAGE_PIXELS)
        .map(|c| c.try_into().expect("exact chunk"))
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "IDX label file";
    check_magic(bytes, LABELS_MAGIC, WHAT)?;
    let count = read_u32(bytes, 4, WHAT)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format {
            what: WHAT,
            offset: (8 + body.len()) as u64,
            reason: format!("truncated: {} of {count} labels", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a matching pair of image and label files.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledImage>> {
    let images = parse_images(&read(images_path)?)?;
    let labels = parse_labels(&read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Format {
            what: "IDX pair",
            offset: 4,
            reason: format!("{} images but {} labels", images.len(), labels.len()),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(px, label)| LabeledImage {
            pixels: Box::new(px),
            label,
        })
        .collect())
}

pub fn encode_images(images: &[LabeledImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_PIXELS);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(&img.pixels[..]);
    }
    out
}

pub fn encode_labels(images: &[LabeledImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + images.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend(images.iter().map(|img| img.label));
    out
}

/// Writes a dataset as an IDX image/label pair. Also used as the cache
/// format for preprocessed image directories.
pub fn write_idx(images: &[LabeledImage], images_path: &Path, labels_path: &Path) -> Result<()> {
    fs::write(images_path, encode_images(images)).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_labels(images)).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Vec<LabeledImage> {
        (0..n)
            .map(|k| {
                let px: Vec<u8> = (0..IMAGE_PIXELS).map(|i| ((i * 7 + k * 13) % 256) as u8).collect();
                LabeledImage::new(&px, (k % 10) as u8).unwrap()
            })
            .collect()
    }

    #[test]
    fn label_magic_rejected_by_image_parser() {
        let bytes = encode_labels(&sample(3));
        let err = parse_images(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncation_reports_offset() {
        let mut bytes = encode_images(&sample(3));
        bytes.truncate(16 + IMAGE_PIXELS + 100);
        match parse_images(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, (16 + IMAGE_PIXELS) as u64),
            e => panic!("unexpected {e}"),
        }
        let mut labels = encode_labels(&sample(3));
        labels.pop();
        assert!(parse_labels(&labels).is_err());
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let mut bytes = encode_images(&sample(1));
        bytes[11] = 27;
        assert!(parse_images(&bytes).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, encode_images(&sample(3))).unwrap();
        fs::write(&lp, encode_labels(&sample(2))).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
    }
}
