//! End-to-end glue: manifest → normalized images → Radon features → barcodes
//! → index → hierarchical error.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::autoencoder::AutoencoderModel;
use crate::barcode::{arbc_encode, rbc_encode, BarcodeError, BitVec, Method};
use crate::imageio::{load_grayscale, normalize_image, DatasetManifest, ImageIoError, RawRaster};
use crate::index::{BarcodeIndex, IndexError};
use crate::irma::{parse_irma, total_error, BranchingTable, ErrorReport, IrmaCode, IrmaError};
use crate::radon::{flatten, normalize_projections, radon_transform, RadonConfig, RadonFeatures};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("image {id}: {source}")]
    Image { id: String, source: ImageIoError },
    #[error("image {id}: {source}")]
    Barcode { id: String, source: BarcodeError },
    #[error("image {id}: {source}")]
    Code { id: String, source: IrmaError },
    #[error("image {0} has no IRMA code")]
    MissingCode(String),
    #[error("method {0} needs a model")]
    ModelRequired(Method),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Metric(#[from] IrmaError),
}

/// Raster size and projection angles shared by every image of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub side: usize,
    pub radon: RadonConfig,
}

impl FeatureSpec {
    pub fn feature_len(&self) -> usize {
        crate::radon::feature_len(self.side, self.radon.num_angles())
    }
}

/// Raw and normalized projections of one raster.
pub fn raster_features(
    raster: &RawRaster,
    spec: &FeatureSpec,
) -> Result<RadonFeatures, ImageIoError> {
    let img = normalize_image(raster, spec.side)?;
    Ok(normalize_projections(radon_transform(&img, &spec.radon)))
}

/// Loads and transforms every manifest entry, preserving manifest order.
pub fn manifest_features(
    manifest: &DatasetManifest,
    spec: &FeatureSpec,
) -> Result<Vec<RadonFeatures>, PipelineError> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            load_grayscale(&e.image_path)
                .and_then(|r| raster_features(&r, spec))
                .map_err(|source| PipelineError::Image {
                    id: e.image_id.clone(),
                    source,
                })
        })
        .collect()
}

/// Flattened autoencoder inputs.
pub fn feature_vectors(features: &[RadonFeatures]) -> Vec<Vec<f64>> {
    features.par_iter().map(flatten).collect()
}

pub fn encode_one(
    features: &RadonFeatures,
    method: Method,
    model: Option<&AutoencoderModel>,
) -> Result<BitVec, BarcodeError> {
    match method {
        Method::Rbc => Ok(rbc_encode(features).bits().clone()),
        Method::Arbc(layer) => {
            let model = model.expect("caller checks model presence");
            Ok(arbc_encode(model, &flatten(features), layer)?
                .bits()
                .clone())
        }
    }
}

/// Encodes all `features` (ids parallel to them) with `method`.
pub fn encode_all(
    ids: &[String],
    features: &[RadonFeatures],
    method: Method,
    model: Option<&AutoencoderModel>,
) -> Result<Vec<BitVec>, PipelineError> {
    if matches!(method, Method::Arbc(_)) && model.is_none() {
        return Err(PipelineError::ModelRequired(method));
    }
    ids.par_iter()
        .zip(features)
        .map(|(id, f)| {
            encode_one(f, method, model).map_err(|source| PipelineError::Barcode {
                id: id.clone(),
                source,
            })
        })
        .collect()
}

/// Expected barcode length of `method` under `spec`.
pub fn barcode_length(
    spec: &FeatureSpec,
    method: Method,
    model: Option<&AutoencoderModel>,
) -> usize {
    match (method, model) {
        (Method::Rbc, _) => spec.feature_len(),
        (Method::Arbc(layer), Some(m)) => m.layer_dims().get(layer).copied().unwrap_or(0),
        (Method::Arbc(_), None) => 0,
    }
}

pub fn build_index(
    ids: &[String],
    codes: Vec<BitVec>,
    method: Method,
    barcode_length: usize,
) -> Result<BarcodeIndex, IndexError> {
    let mut index = BarcodeIndex::new(method, barcode_length);
    for (id, code) in ids.iter().zip(codes) {
        index.insert(id.clone(), code)?;
    }
    Ok(index)
}

/// Parses the IRMA code of every entry; a missing code is an error.
pub fn manifest_codes(manifest: &DatasetManifest) -> Result<Vec<IrmaCode>, PipelineError> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let text = e
                .irma_code
                .as_deref()
                .ok_or_else(|| PipelineError::MissingCode(e.image_id.clone()))?;
            parse_irma(text).map_err(|source| PipelineError::Code {
                id: e.image_id.clone(),
                source,
            })
        })
        .collect()
}

/// Top-1 exhaustive retrieval for each query, scored with the hierarchical
/// error against the first hit's code.
pub fn evaluate_top1(
    index: &BarcodeIndex,
    index_codes: &HashMap<String, IrmaCode>,
    queries: &[(String, BitVec, IrmaCode)],
    table: &BranchingTable,
) -> Result<ErrorReport, PipelineError> {
    let hits = queries
        .par_iter()
        .map(|(_, code, _)| {
            index
                .search_exhaustive(code, 1)
                .map(|mut h| h.remove(0).image_id)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut triples = Vec::with_capacity(queries.len());
    for ((qid, _, truth), hit) in queries.iter().zip(&hits) {
        let retrieved = index_codes
            .get(hit)
            .ok_or_else(|| PipelineError::MissingCode(hit.clone()))?;
        triples.push((qid.as_str(), truth, retrieved));
    }
    Ok(total_error(triples, table)?)
}
