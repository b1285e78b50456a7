use super::pgm::GrayImage;
use crate::error::{Error, Result};

/// Bilinear resize to a `side x side` square with corner-aligned sampling:
/// output pixel `o` samples source coordinate `o * (src - 1) / (side - 1)`.
/// A single-pixel output samples the source centre.
pub fn resize_bilinear(image: &GrayImage, side: usize) -> Result<GrayImage> {
    if side == 0 {
        return Err(Error::Dimension("resize target must be positive".into()));
    }
    if image.width == 0 || image.height == 0 {
        return Err(Error::Dimension("cannot resize an empty image".into()));
    }
    if image.width == side && image.height == side {
        return Ok(image.clone());
    }
    let coord = |o: usize, src: usize| -> f64 {
        if side == 1 {
            (src as f64 - 1.0) / 2.0
        } else {
            o as f64 * (src as f64 - 1.0) / (side as f64 - 1.0)
        }
    };
    let mut pixels = Vec::with_capacity(side * side);
    for oy in 0..side {
        let sy = coord(oy, image.height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(image.height - 1);
        let fy = sy - y0 as f64;
        for ox in 0..side {
            let sx = coord(ox, image.width);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(image.width - 1);
            let fx = sx - x0 as f64;
            let top = image.get(x0, y0) as f64 * (1.0 - fx) + image.get(x1, y0) as f64 * fx;
            let bottom = image.get(x0, y1) as f64 * (1.0 - fx) + image.get(x1, y1) as f64 * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage::new(side, side, pixels))
}

const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-vector standardization to zero mean and unit variance (population
/// variance, floored at 1e-8).
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.max(VARIANCE_FLOOR).sqrt();
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Scales pixels to [0, 1] and standardizes per image; row-major output.
pub fn normalize(image: &GrayImage) -> Vec<f64> {
    let scaled: Vec<f64> = image.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    standardize(&scaled)
}

/// Where standardization statistics come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Each image uses its own mean and variance.
    #[default]
    PerImage,
    /// One mean and variance over every pixel of the collection.
    PerDataset,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::PerImage => "per-image",
            Normalization::PerDataset => "per-dataset",
        }
    }

    pub fn parse(s: &str) -> Option<Normalization> {
        [Normalization::PerImage, Normalization::PerDataset].into_iter().find(|n| n.name() == s)
    }
}

/// Normalizes a collection of images under `mode`.
pub fn normalize_all(images: &[&GrayImage], mode: Normalization) -> Vec<Vec<f64>> {
    match mode {
        Normalization::PerImage => images.iter().map(|img| normalize(img)).collect(),
        Normalization::PerDataset => {
            let scaled: Vec<Vec<f64>> = images
                .iter()
                .map(|img| img.pixels.iter().map(|&p| p as f64 / 255.0).collect())
                .collect();
            let n: usize = scaled.iter().map(Vec::len).sum();
            let mean = scaled.iter().flatten().sum::<f64>() / n.max(1) as f64;
            let var = scaled.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
            let sd = var.max(VARIANCE_FLOOR).sqrt();
            scaled
                .into_iter()
                .map(|row| row.into_iter().map(|v| (v - mean) / sd).collect())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn resize_examples() {
        let img = GrayImage::new(2, 2, vec![0, 100, 100, 200]);
        assert_eq!(resize_bilinear(&img, 2).unwrap(), img);
        assert_eq!(resize_bilinear(&img, 1).unwrap().pixels, vec![100]);
        assert!(resize_bilinear(&img, 0).is_err());
        // corners are preserved when upsampling
        let up = resize_bilinear(&img, 3).unwrap();
        assert_eq!(up.pixels, vec![0, 50, 100, 50, 100, 150, 100, 150, 200]);
    }

    #[test]
    fn dataset_normalization_shares_statistics() {
        let a = GrayImage::new(2, 1, vec![0, 0]);
        let b = GrayImage::new(2, 1, vec![255, 255]);
        let out = normalize_all(&[&a, &b], Normalization::PerDataset);
        assert_eq!(out, vec![vec![-1.0, -1.0], vec![1.0, 1.0]]);
        let per = normalize_all(&[&a, &b], Normalization::PerImage);
        assert_eq!(per, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = GrayImage::filled(5, 3, 77);
        for side in [1, 2, 7, 16] {
            assert!(resize_bilinear(&img, side).unwrap().pixels.iter().all(|&p| p == 77));
        }
    }

    #[test]
    fn normalize_examples() {
        assert!(normalize(&GrayImage::filled(3, 3, 40)).iter().all(|&v| v == 0.0));
        assert_eq!(normalize(&GrayImage::new(2, 1, vec![0, 255])), vec![-1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn normalized_moments(pixels in proptest::collection::vec(any::<u8>(), 4..64)) {
            prop_assume!(pixels.iter().any(|&p| p != pixels[0]));
            let n = pixels.len();
            let v = normalize(&GrayImage::new(n, 1, pixels));
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-12);
            prop_assert!((var - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn standardize_ignores_affine_maps(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..40),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread > 1e-3);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            for (u, v) in standardize(&xs).iter().zip(standardize(&ys)) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
