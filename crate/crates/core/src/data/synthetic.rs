use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::image::{normalize_all, Normalization};
use super::manifest::{DatasetManifest, ManifestEntry};
use super::pgm::{write_pgm, GrayImage};
use crate::episodes::{Example, LabeledDataset};
use crate::error::{Error, Result};
use crate::report::write_atomic;
use crate::rng::{derive_seed, SimRng};

/// Parameters of the synthetic grating benchmark.
///
/// Every (modality, class) pair gets its own sinusoidal grating
/// (orientation, frequency, phase); examples are that grating plus i.i.d.
/// Gaussian pixel noise with standard deviation `noise_level * amplitude`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub class_names: Vec<String>,
    pub examples_per_class: usize,
    pub resolution: usize,
    /// Grating amplitude in gray levels around mid-gray 128.
    pub amplitude: f64,
    /// Noise standard deviation as a multiple of the amplitude.
    pub noise_level: f64,
    pub modalities: Vec<String>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            class_names: vec!["normal".into(), "covid".into()],
            examples_per_class: 200,
            resolution: 16,
            amplitude: 50.0,
            noise_level: 1.0,
            modalities: vec!["xray".into()],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() < 2 {
            return Err(Error::InvalidEpisode("synthetic data needs at least 2 classes".into()));
        }
        if self.resolution < 4 {
            return Err(Error::Dimension(format!("resolution must be >= 4, got {}", self.resolution)));
        }
        if self.examples_per_class == 0 {
            return Err(Error::InsufficientData("examples_per_class must be positive".into()));
        }
        if self.modalities.is_empty() {
            return Err(Error::InvalidEpisode("at least one modality is required".into()));
        }
        if !(self.noise_level >= 0.0 && self.amplitude > 0.0 && self.amplitude <= 127.0) {
            return Err(Error::InvalidEpisode("amplitude must lie in (0, 127] and noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Noise-free grating of one (modality, class) pair, in gray levels.
    pub fn template(&self, modality: usize, class: usize) -> Vec<f64> {
        let k = self.num_classes() as f64;
        let m = modality as f64;
        let c = class as f64;
        let orientation = PI * c / k + m * PI / (2.0 * k);
        let frequency = 1.5 + (class % 2) as f64 + 0.75 * m;
        let phase = 0.9 * c + 1.3 * m;
        let n = self.resolution as f64;
        let (cos, sin) = (orientation.cos(), orientation.sin());
        let mut out = Vec::with_capacity(self.resolution * self.resolution);
        for y in 0..self.resolution {
            for x in 0..self.resolution {
                let u = (x as f64 * cos + y as f64 * sin) / n;
                out.push(128.0 + self.amplitude * (2.0 * PI * frequency * u + phase).sin());
            }
        }
        out
    }
}

/// One synthetic image with its class and modality.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub image: GrayImage,
    pub label: usize,
    pub modality: usize,
}

/// Images in (modality, class, example) order.
pub fn synthesize_images(spec: &SyntheticSpec) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    let noise_sd = spec.noise_level * spec.amplitude;
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("finite noise level");
    let mut out = Vec::new();
    for m in 0..spec.modalities.len() {
        for c in 0..spec.num_classes() {
            let template = spec.template(m, c);
            let mut rng = SimRng::seed_from_u64(derive_seed(spec.seed, "synthetic", &[m as u64, c as u64]));
            for _ in 0..spec.examples_per_class {
                let pixels = template
                    .iter()
                    .map(|&t| {
                        let v = if noise_sd > 0.0 { t + noise.sample(&mut rng) } else { t };
                        v.round().clamp(0.0, 255.0) as u8
                    })
                    .collect();
                out.push(SyntheticImage {
                    image: GrayImage::new(spec.resolution, spec.resolution, pixels),
                    label: c,
                    modality: m,
                });
            }
        }
    }
    Ok(out)
}

/// Normalized synthetic dataset; each example is tagged with its modality.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    generate_synthetic_with(spec, Normalization::PerImage)
}

pub fn generate_synthetic_with(spec: &SyntheticSpec, mode: Normalization) -> Result<LabeledDataset> {
    let images = synthesize_images(spec)?;
    let refs: Vec<&GrayImage> = images.iter().map(|s| &s.image).collect();
    let examples = normalize_all(&refs, mode)
        .into_iter()
        .zip(&images)
        .enumerate()
        .map(|(i, (input, s))| Example::new(i as u64, input, s.label).with_tags(vec![spec.modalities[s.modality].clone()]))
        .collect();
    LabeledDataset::new(examples, spec.class_names.clone())
}

/// Writes every synthetic image as PGM under `<manifest dir>/images` and
/// a manifest listing them. Returns the manifest.
pub fn export_synthetic(spec: &SyntheticSpec, manifest_path: &Path) -> Result<DatasetManifest> {
    let root = manifest_path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut entries = Vec::new();
    for (i, s) in synthesize_images(spec)?.iter().enumerate() {
        let modality = &spec.modalities[s.modality];
        let label = &spec.class_names[s.label];
        let dir = root.join("images").join(modality).join(label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{i:06}.pgm"));
        write_pgm(&path, &s.image).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            path,
            label: label.clone(),
            modality: modality.clone(),
            client: None,
        });
    }
    let manifest = DatasetManifest { entries };
    write_atomic(manifest_path, manifest.render(&root).as_bytes())?;
    Ok(manifest)
}
