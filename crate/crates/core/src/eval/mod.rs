//! Ranking-based evaluation: distances, protocol masking, CMC/mAP, re-ranking
//! and result export.

mod distance;
mod features;
mod metrics;
mod report;
mod rerank;

pub use distance::{l2_distance_matrix, DistanceMatrix};
pub use features::{read_features, write_features, FeatureSet};
pub use metrics::{cmc, evaluate, mean_average_precision, protocol_mask, CmcResult, EvalReport, MapResult, MatchMask};
pub use report::{cmc_svg, metrics_rows, read_cmc_csv, read_metrics_csv, write_cmc_csv, write_metrics_csv};
pub use rerank::{k_reciprocal_rerank, RerankParams};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How a query/gallery pair of feature sets is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub max_rank: usize,
    /// Drop gallery items sharing identity and camera with the query.
    pub camera_exclusion: bool,
    pub rerank: bool,
    pub rerank_params: RerankParams,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            max_rank: 20,
            camera_exclusion: true,
            rerank: false,
            rerank_params: RerankParams::default(),
        }
    }
}

/// Plain L2 evaluation and, when enabled, the re-ranked one. Re-ranking
/// parameters are clamped to the gallery size.
pub fn evaluate_features(query: &FeatureSet, gallery: &FeatureSet, settings: &EvalSettings) -> Result<(EvalReport, Option<EvalReport>)> {
    let mask = if settings.camera_exclusion {
        protocol_mask(&query.meta, &gallery.meta)
    } else {
        MatchMask::all(query.meta.len(), gallery.meta.len())
    };
    let qids = query.ids();
    let gids = gallery.ids();
    let dist = l2_distance_matrix(&query.features, &gallery.features)?;
    let base = evaluate(&dist, &mask, &qids, &gids, settings.max_rank)?;
    let reranked = if settings.rerank {
        let params = settings.rerank_params.clamped(gallery.features.rows());
        let dist = k_reciprocal_rerank(&query.features, &gallery.features, params)?;
        let mut report = evaluate(&dist, &mask, &qids, &gids, settings.max_rank)?;
        report.reranked = true;
        Some(report)
    } else {
        None
    };
    Ok((base, reranked))
}
