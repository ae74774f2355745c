//! Natural-image ingestion: grayscale, 3x3 Gaussian smoothing and a bilinear
//! resize to 28x28, plus loading of `root/<class>/<file>` trees.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{dataset_bundle, dataset_from_bundle, Bundle};
use crate::encoding::{balance_by_duplication, LabeledImage, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};

type Plane = ImageBuffer<Luma<f32>, Vec<f32>>;

/// Annotation masks live under this directory of the dataset root.
pub const ANNOTATIONS_DIR: &str = "annotations";

/// Luminance in [0, 1] with the 0.299 / 0.587 / 0.114 weights.
pub fn luminance(img: &DynamicImage) -> Plane {
    let rgb = img.to_rgb8();
    ImageBuffer::from_fn(rgb.width(), rgb.height(), |x, y| {
        let [r, g, b] = rgb.get_pixel(x, y).0;
        Luma([(0.299 * f32::from(r) + 0.587 * f32::from(g) + 0.114 * f32::from(b)) / 255.0])
    })
}

/// Separable [1 2 1] / 4 smoothing in both directions, edges replicated.
// imageops::filter3x3 leaves the border at zero, which darkens small images.
pub fn gaussian3x3(src: &Plane) -> Plane {
    let (w, h) = src.dimensions();
    let at = |img: &Plane, x: i64, y: i64| {
        img.get_pixel(x.clamp(0, w as i64 - 1) as u32, y.clamp(0, h as i64 - 1) as u32).0[0]
    };
    let horiz = ImageBuffer::from_fn(w, h, |x, y| {
        let (x, y) = (i64::from(x), i64::from(y));
        Luma([(at(src, x - 1, y) + 2.0 * at(src, x, y) + at(src, x + 1, y)) / 4.0])
    });
    ImageBuffer::from_fn(w, h, |x, y| {
        let (x, y) = (i64::from(x), i64::from(y));
        Luma([(at(&horiz, x, y - 1) + 2.0 * at(&horiz, x, y) + at(&horiz, x, y + 1)) / 4.0])
    })
}

/// Zeroes everything outside the mask and crops to the mask's bounding box.
/// A mask of a different size is stretched to the image first.
pub fn apply_mask(img: &DynamicImage, mask: &GrayImage) -> Option<DynamicImage> {
    let (w, h) = (img.width(), img.height());
    let mask = if mask.dimensions() == (w, h) {
        mask.clone()
    } else {
        imageops::resize(mask, w, h, FilterType::Nearest)
    };
    let mut bbox: Option<(u32, u32, u32, u32)> = None;
    for (x, y, p) in mask.enumerate_pixels() {
        if p.0[0] > 0 {
            let b = bbox.get_or_insert((x, y, x, y));
            *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
    }
    let (x0, y0, x1, y1) = bbox?;
    let mut rgb = img.to_rgb8();
    for (x, y, p) in rgb.enumerate_pixels_mut() {
        if mask.get_pixel(x, y).0[0] == 0 {
            p.0 = [0, 0, 0];
        }
    }
    let cropped = imageops::crop_imm(&rgb, x0, y0, x1 - x0 + 1, y1 - y0 + 1).to_image();
    Some(DynamicImage::ImageRgb8(cropped))
}

/// Grayscale, smooth and resize any image to 28x28 intensities.
pub fn preprocess_image(img: &DynamicImage, mask: Option<&GrayImage>) -> Result<[u8; IMAGE_PIXELS]> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Empty("image"));
    }
    let masked;
    let img = match mask.map(|m| apply_mask(img, m)) {
        Some(Some(m)) => {
            masked = m;
            &masked
        }
        Some(None) => {
            log::warn!("empty annotation mask ignored");
            img
        }
        None => img,
    };
    let gray = gaussian3x3(&luminance(img));
    let side = IMAGE_SIDE as u32;
    let small = imageops::resize(&gray, side, side, FilterType::Triangle);
    let mut out = [0u8; IMAGE_PIXELS];
    for (o, p) in out.iter_mut().zip(small.pixels()) {
        *o = (p.0[0] * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

fn find_mask(root: &Path, class: &str, file: &Path) -> Option<GrayImage> {
    let stem = file.file_stem()?;
    let dir = root.join(ANNOTATIONS_DIR).join(class);
    let hit = sorted_entries(&dir).ok()?.into_iter().find(|p| p.file_stem() == Some(stem))?;
    match image::open(&hit) {
        Ok(m) => Some(m.to_luma8()),
        Err(e) => {
            log::warn!("skipping unreadable mask {}: {e}", hit.display());
            None
        }
    }
}

/// A preprocessed directory tree split into train and test parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDirDataset {
    pub classes: Vec<String>,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

/// Loads `root/<class>/*`. Classes are numbered in sorted name order. A
/// seeded random `test_fraction` of each class is held out for testing.
/// Unreadable files are skipped with a warning.
pub fn load_image_dir(root: &Path, test_fraction: f64, seed: u64) -> Result<ImageDirDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != ANNOTATIONS_DIR))
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Empty("image directory"));
    }
    if class_dirs.len() > usize::from(u8::MAX) {
        return Err(Error::param("data.image_root", "more than 255 classes"));
    }
    let mut ds = ImageDirDataset {
        classes: Vec::new(),
        train: Vec::new(),
        test: Vec::new(),
    };
    for (label, dir) in class_dirs.iter().enumerate() {
        let class = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let mut images = Vec::new();
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            let img = match image::open(&file) {
                Ok(i) => i,
                Err(e) => {
                    log::warn!("skipping unreadable image {}: {e}", file.display());
                    continue;
                }
            };
            let mask = find_mask(root, &class, &file);
            match preprocess_image(&img, mask.as_ref()) {
                Ok(px) => images.push(LabeledImage {
                    pixels: Box::new(px),
                    label: label as u8,
                }),
                Err(e) => log::warn!("skipping {}: {e}", file.display()),
            }
        }
        if images.len() < 2 {
            return Err(Error::Image {
                path: dir.clone(),
                reason: format!("class `{class}` needs at least 2 readable images"),
            });
        }
        images.shuffle(&mut rng);
        let n_test = ((images.len() as f64 * test_fraction).round() as usize).clamp(1, images.len() - 1);
        ds.test.extend(images.split_off(images.len() - n_test));
        ds.train.extend(images);
        ds.classes.push(class);
    }
    Ok(ds)
}

fn cache_files(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    (dir.join(format!("train-{seed}.spk")), dir.join(format!("test-{seed}.spk")))
}

/// Loads, balances and optionally caches an image directory. The cache is a
/// pair of dataset bundles, `train-<seed>.spk` and `test-<seed>.spk`, in
/// `cache`.
pub fn load_balanced(
    root: &Path,
    test_fraction: f64,
    seed: u64,
    train_per_class: usize,
    test_per_class: usize,
    cache: Option<&Path>,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    if let Some(dir) = cache {
        let (tp, sp) = cache_files(dir, seed);
        if tp.exists() && sp.exists() {
            log::info!("using preprocessed cache in {}", dir.display());
            return Ok((
                dataset_from_bundle(&Bundle::load(&tp)?)?,
                dataset_from_bundle(&Bundle::load(&sp)?)?,
            ));
        }
    }
    let ds = load_image_dir(root, test_fraction, seed)?;
    let train = balance_by_duplication(&ds.train, train_per_class)?;
    let test = balance_by_duplication(&ds.test, test_per_class)?;
    if let Some(dir) = cache {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (tp, sp) = cache_files(dir, seed);
        dataset_bundle(&train).save(&tp)?;
        dataset_bundle(&test).save(&sp)?;
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn constant_image_stays_constant() {
        for c in [0u8, 77, 255] {
            let img = DynamicImage::ImageLuma8(GrayImage::from_pixel(28, 28, Luma([c])));
            let px = preprocess_image(&img, None).unwrap();
            assert!(px.iter().all(|&p| p == c), "value {c}");
            let again = DynamicImage::ImageLuma8(GrayImage::from_raw(28, 28, px.to_vec()).unwrap());
            assert_eq!(preprocess_image(&again, None).unwrap(), px);
        }
    }

    #[test]
    fn luminance_weights() {
        let red = DynamicImage::ImageRgb8(RgbImage::from_pixel(300, 200, Rgb([255, 0, 0])));
        let green = DynamicImage::ImageRgb8(RgbImage::from_pixel(300, 200, Rgb([0, 255, 0])));
        let r = preprocess_image(&red, None).unwrap();
        let g = preprocess_image(&green, None).unwrap();
        // 0.299 * 255 = 76.245, 0.587 * 255 = 149.685
        assert!(r.iter().all(|&p| p == 76));
        assert!(g.iter().all(|&p| p == 150));
    }

    #[test]
    fn mask_crops_to_object() {
        let mut img = RgbImage::from_pixel(40, 40, Rgb([255, 255, 255]));
        for y in 10..20 {
            for x in 10..20 {
                img.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
        let mut mask = GrayImage::new(40, 40);
        for y in 10..20 {
            for x in 10..20 {
                mask.put_pixel(x, y, Luma([1]));
            }
        }
        let px = preprocess_image(&DynamicImage::ImageRgb8(img), Some(&mask)).unwrap();
        assert!(px.iter().all(|&p| p == 0));
    }

    fn write_tree(root: &Path) {
        for (class, base) in [("cats", 10u8), ("dogs", 100u8)] {
            fs::create_dir_all(root.join(class)).unwrap();
            for k in 0..5u8 {
                GrayImage::from_pixel(30, 20, Luma([base + k]))
                    .save(root.join(class).join(format!("{k}.png")))
                    .unwrap();
            }
        }
        fs::write(root.join("dogs").join("broken.png"), b"not a png").unwrap();
    }

    #[test]
    fn seeded_split_per_class() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path());
        let a = load_image_dir(dir.path(), 0.2, 7).unwrap();
        assert_eq!(a.classes, ["cats", "dogs"]);
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a.test.iter().map(|i| i.label).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(a, load_image_dir(dir.path(), 0.2, 7).unwrap());

        let mut seen: Vec<u8> = a.train.iter().chain(&a.test).map(|i| i.pixels[0]).collect();
        seen.sort();
        assert_eq!(seen, [10, 11, 12, 13, 14, 100, 101, 102, 103, 104]);

        let held_out = |seed| -> Vec<u8> {
            let d = load_image_dir(dir.path(), 0.2, seed).unwrap();
            d.test.iter().map(|i| i.pixels[0]).collect()
        };
        assert!((0..20).any(|s| held_out(s) != held_out(7)));
    }

    #[test]
    fn balanced_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path());
        let cache = dir.path().join("cache");
        let fresh = load_balanced(dir.path(), 0.2, 3, 6, 2, Some(&cache)).unwrap();
        assert_eq!((fresh.0.len(), fresh.1.len()), (12, 4));
        assert!(cache.join("train-3.spk").exists());
        assert_eq!(load_balanced(dir.path(), 0.2, 3, 6, 2, Some(&cache)).unwrap(), fresh);
    }
}
