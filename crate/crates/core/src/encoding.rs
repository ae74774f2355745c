//! Images, rate coding and Poisson input spikes.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// A 28x28 grayscale image with its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub pixels: Box<[u8; IMAGE_PIXELS]>,
    pub label: u8,
}

impl LabeledImage {
    pub fn new(pixels: &[u8], label: u8) -> Result<Self> {
        let arr: [u8; IMAGE_PIXELS] = pixels.try_into().map_err(|_| Error::ShapeMismatch {
            expected: IMAGE_PIXELS,
            actual: pixels.len(),
        })?;
        Ok(Self {
            pixels: Box::new(arr),
            label,
        })
    }
}

/// Per-input firing rates in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|r| r * factor).collect())
    }
}

/// Default intensity-to-rate scale: 255 maps to 63.75 Hz.
pub const DEFAULT_RATE_SCALE: f64 = 0.25;

pub fn pixels_to_rates(image: &LabeledImage) -> RateVector {
    pixels_to_rates_scaled(&image.pixels[..], DEFAULT_RATE_SCALE)
}

pub fn pixels_to_rates_scaled(pixels: &[u8], hz_per_level: f64) -> RateVector {
    RateVector(pixels.iter().map(|&p| f64::from(p) * hz_per_level).collect())
}

/// Checks that a Bernoulli-per-step draw is a sane approximation for `rates`.
pub fn check_poisson_step(rates: &RateVector, dt: f64) -> Result<()> {
    let p_max = rates.max() * dt / 1000.0;
    if rates.0.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::param("rates", "must be finite and non-negative"));
    }
    if p_max >= 0.5 {
        return Err(Error::param(
            "rates",
            format!("max rate x dt = {p_max:.3} per step is too coarse for a Bernoulli draw"),
        ));
    }
    Ok(())
}

/// Draws one time step of independent Bernoulli spikes. `dt` in ms.
pub fn poisson_step<R: Rng + ?Sized>(
    rates: &RateVector,
    dt: f64,
    rng: &mut R,
    out: &mut Vec<bool>,
) -> Result<()> {
    check_poisson_step(rates, dt)?;
    out.clear();
    out.extend(rates.0.iter().map(|&r| {
        let p = r * dt / 1000.0;
        p > 0.0 && rng.gen::<f64>() < p
    }));
    Ok(())
}

/// Pads every class by cyclic duplication up to `per_class` images.
///
/// Classes already at or above the target are left as they are. The output
/// is ordered by class id, and within a class by original order.
pub fn balance_by_duplication(data: &[LabeledImage], per_class: usize) -> Result<Vec<LabeledImage>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut groups: BTreeMap<u8, Vec<&LabeledImage>> = BTreeMap::new();
    for img in data {
        groups.entry(img.label).or_default().push(img);
    }
    let n_classes = usize::from(*groups.keys().last().unwrap_or(&0)) + 1;
    if groups.len() != n_classes {
        return Err(Error::Empty("class"));
    }
    let mut out = Vec::with_capacity(n_classes * per_class);
    for imgs in groups.values() {
        let target = per_class.max(imgs.len());
        out.extend(imgs.iter().cycle().take(target).map(|&img| img.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(v: u8, label: u8) -> LabeledImage {
        LabeledImage::new(&[v; IMAGE_PIXELS], label).unwrap()
    }

    #[test]
    fn rate_conversion() {
        assert_eq!(pixels_to_rates(&constant(0, 0)).max(), 0.0);
        let mut px = [0u8; IMAGE_PIXELS];
        px[0] = 255;
        px[1] = 128;
        let r = pixels_to_rates(&LabeledImage::new(&px, 0).unwrap());
        assert_eq!(r.0[0], 63.75);
        assert_eq!(r.0[1], 32.0);
    }

    #[test]
    fn zero_rate_never_fires_and_seed_is_deterministic() {
        let mut rates = RateVector::zeros(10);
        rates.0[3] = 63.75;
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        for _ in 0..700 {
            poisson_step(&rates, 0.5, &mut a, &mut sa).unwrap();
            poisson_step(&rates, 0.5, &mut b, &mut sb).unwrap();
            assert_eq!(sa, sb);
            assert!(sa.iter().enumerate().all(|(i, &s)| !s || i == 3));
        }
    }

    #[test]
    fn coarse_steps_rejected() {
        let rates = RateVector(vec![2000.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(poisson_step(&rates, 0.5, &mut rng, &mut Vec::new()).is_err());
    }

    #[test]
    fn balancing() {
        let data: Vec<_> = (0..40).map(|i| constant(i as u8, 0)).chain((0..1000).map(|_| constant(9, 1))).collect();
        let out = balance_by_duplication(&data, 1000).unwrap();
        assert_eq!(out.len(), 2000);
        let class0: Vec<_> = out.iter().filter(|im| im.label == 0).collect();
        for v in 0..40u8 {
            assert_eq!(class0.iter().filter(|im| im.pixels[0] == v).count(), 25);
        }

        let equal: Vec<_> = (0..3).flat_map(|c| (0..5).map(move |_| constant(c, c))).collect();
        assert_eq!(balance_by_duplication(&equal, 5).unwrap(), equal);

        let gap = vec![constant(1, 0), constant(1, 2)];
        assert!(balance_by_duplication(&gap, 5).is_err());
    }
}
