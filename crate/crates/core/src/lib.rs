//! Content-based image retrieval with Radon barcodes.
//!
//! Images are normalized to a square power-of-two grid, projected with a
//! discrete Radon transform and turned into binary barcodes, either by
//! thresholding each projection at the median of its nonzero values (RBC) or
//! by thresholding the hidden activations of a trained autoencoder at 0.5
//! (ARBC). Retrieval is nearest neighbour in Hamming space; quality is scored
//! with the hierarchical IRMA code error.

pub mod autoencoder;
pub mod barcode;
pub mod cli;
pub mod imageio;
pub mod index;
pub mod irma;
pub mod pipeline;
pub mod radon;
pub mod store;
pub mod synth;

pub use autoencoder::{init_model, train, AutoencoderModel, TrainingConfig};
pub use barcode::{arbc_encode, hamming_distance, rbc_encode, Barcode, BitVec, Method};
pub use imageio::{load_grayscale, normalize_image, NormalizedImage};
pub use index::{BarcodeIndex, LshConfig, LshTables};
pub use irma::{build_branching, image_error, parse_irma, total_error, BranchingTable, IrmaCode};
pub use radon::{flatten, normalize_projections, radon_transform, RadonConfig, RadonFeatures};
