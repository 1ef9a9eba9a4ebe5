//! Synthetic multi-modal phantoms, evaluation metrics, and dataset
//! persistence.

mod io;
mod metrics;
mod phantom;

pub use io::{dataset_manifest, load_bundle, load_tensor, save_bundle, save_tensor, split_for_id, DatasetManifest, ManifestEntry, Split};
pub use metrics::{dice, psnr, DiceScores, PSNR_CAP_DB};
pub use phantom::{generate_phantom, ModalityBundle, PhantomConfig, StyleParams, MODALITY_NAMES, NUM_MODALITIES};
