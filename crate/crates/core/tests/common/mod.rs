#![allow(dead_code)]

use spikeprune::encoding::{LabeledImage, IMAGE_PIXELS, IMAGE_SIDE};
use spikeprune::network::{NetworkParams, PresentationParams, Topology};

/// Class `c` lights a horizontal band of rows; bands do not overlap.
pub fn band_image(class: u8, n_classes: u8, jitter: usize) -> LabeledImage {
    let rows = IMAGE_SIDE / usize::from(n_classes);
    let mut px = vec![0u8; IMAGE_PIXELS];
    let top = usize::from(class) * rows;
    for r in top..top + rows {
        for c in 0..IMAGE_SIDE {
            if (r + c + jitter) % 5 != 0 {
                px[r * IMAGE_SIDE + c] = 255;
            }
        }
    }
    LabeledImage::new(&px, class).unwrap()
}

/// `per_class` images of each band class, interleaved by class.
pub fn band_dataset(n_classes: u8, per_class: usize) -> Vec<LabeledImage> {
    (0..per_class)
        .flat_map(|k| (0..n_classes).map(move |c| band_image(c, n_classes, k)))
        .collect()
}

pub fn small_params(n_exc: usize) -> NetworkParams {
    NetworkParams {
        topology: Topology::new(IMAGE_PIXELS, n_exc),
        ..NetworkParams::default()
    }
}

/// Shorter presentations for fast tests.
pub fn quick_presentation() -> PresentationParams {
    PresentationParams {
        stimulus_ms: 100.0,
        rest_ms: 50.0,
        ..PresentationParams::default()
    }
}
