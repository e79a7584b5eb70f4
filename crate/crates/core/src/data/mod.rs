//! Samples, datasets, preprocessing, file formats and the synthetic scene
//! generator.

pub mod domains;
pub mod image;
pub mod io;
pub mod manifest;
pub mod preprocess;
pub mod sample;
pub mod scene;

pub use domains::{generate_dataset, make_domains, DomainConfig, Domains, SceneDistribution};
pub use image::{center_crop, resize_bilinear, resize_nearest};
pub use io::{load_pfm, load_ppm, save_pfm, save_ppm};
pub use manifest::{load_dataset, write_dataset, ManifestEntry};
pub use preprocess::{preprocess, Preprocess};
pub use sample::{mix_seed, DatasetHandle, DepthSample};
pub use scene::{generate_scene, SceneRecipe};
