//! Dataset ingestion, preprocessing, synthetic data and client partitioning.

mod image;
mod manifest;
mod partition;
mod pgm;
mod synthetic;

pub use image::{normalize, normalize_all, resize_bilinear, standardize, Normalization};
pub use manifest::{client_tag, DatasetManifest, ManifestEntry};
pub use partition::{largest_remainder, partition_clients};
pub use pgm::{encode_pgm, load_pgm, parse_pgm, write_pgm, GrayImage, PgmError};
pub use synthetic::{export_synthetic, generate_synthetic, generate_synthetic_with, synthesize_images, SyntheticImage, SyntheticSpec};
