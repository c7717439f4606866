//! CMC and mAP under the query/gallery protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::DistanceMatrix;
use crate::data::SampleMeta;
use crate::error::{ensure_len, Error, Result};

/// Which gallery items may be ranked for each query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchMask {
    rows: usize,
    cols: usize,
    admissible: Vec<bool>,
}

impl MatchMask {
    pub fn all(num_queries: usize, num_gallery: usize) -> Self {
        Self {
            rows: num_queries,
            cols: num_gallery,
            admissible: vec![true; num_queries * num_gallery],
        }
    }

    pub fn from_fn(num_queries: usize, num_gallery: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let admissible = (0..num_queries)
            .flat_map(|q| (0..num_gallery).map(move |g| (q, g)))
            .map(|(q, g)| f(q, g))
            .collect();
        Self {
            rows: num_queries,
            cols: num_gallery,
            admissible,
        }
    }

    pub fn is_admissible(&self, q: usize, g: usize) -> bool {
        self.admissible[q * self.cols + g]
    }

    pub fn num_queries(&self) -> usize {
        self.rows
    }

    pub fn num_gallery(&self) -> usize {
        self.cols
    }
}

/// Gallery items sharing both identity and camera with the query are inadmissible.
pub fn protocol_mask(query: &[SampleMeta], gallery: &[SampleMeta]) -> MatchMask {
    MatchMask::from_fn(query.len(), gallery.len(), |q, g| {
        let (a, b) = (query[q], gallery[g]);
        !(a.identity == b.identity && a.camera == b.camera)
    })
}

fn check_shapes(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32]) -> Result<()> {
    ensure_len("mask rows", dist.num_queries(), mask.num_queries())?;
    ensure_len("mask columns", dist.num_gallery(), mask.num_gallery())?;
    ensure_len("query labels", dist.num_queries(), qids.len())?;
    ensure_len("gallery labels", dist.num_gallery(), gids.len())?;
    Ok(())
}

/// Relevance flags of the admissible gallery items in ranked order, or `None`
/// when the query has no admissible positive.
fn ranked_relevance(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32], q: usize) -> Option<Vec<bool>> {
    let rel: Vec<bool> = dist
        .ranking(q)
        .into_iter()
        .filter(|&g| mask.is_admissible(q, g))
        .map(|g| gids[g] == qids[q])
        .collect();
    rel.contains(&true).then_some(rel)
}

fn average_precision(rel: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &r) in rel.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / hits as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmcResult {
    /// `curve[k − 1]` is the rank-k accuracy.
    pub curve: Vec<f64>,
    pub evaluated: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map: f64,
    /// Average precision per query; `None` for excluded queries.
    pub per_query: Vec<Option<f64>>,
    pub evaluated: usize,
    pub excluded: usize,
}

fn per_query(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32]) -> Vec<Option<Vec<bool>>> {
    (0..dist.num_queries())
        .into_par_iter()
        .map(|q| ranked_relevance(dist, mask, qids, gids, q))
        .collect()
}

fn no_queries() -> Error {
    Error::invalid("no query has an admissible positive match")
}

pub fn cmc(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32], max_rank: usize) -> Result<CmcResult> {
    check_shapes(dist, mask, qids, gids)?;
    if max_rank == 0 {
        return Err(Error::invalid("max_rank must be >= 1"));
    }
    let rels = per_query(dist, mask, qids, gids);
    cmc_from(&rels, max_rank).ok_or_else(no_queries)
}

fn cmc_from(rels: &[Option<Vec<bool>>], max_rank: usize) -> Option<CmcResult> {
    let mut hits = vec![0usize; max_rank];
    let mut evaluated = 0;
    for rel in rels.iter().flatten() {
        evaluated += 1;
        let first = rel.iter().position(|&r| r).expect("has a positive");
        for h in hits.iter_mut().skip(first) {
            *h += 1;
        }
    }
    (evaluated > 0).then(|| CmcResult {
        curve: hits.iter().map(|&h| h as f64 / evaluated as f64).collect(),
        evaluated,
        excluded: rels.len() - evaluated,
    })
}

pub fn mean_average_precision(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32]) -> Result<MapResult> {
    check_shapes(dist, mask, qids, gids)?;
    let rels = per_query(dist, mask, qids, gids);
    map_from(&rels).ok_or_else(no_queries)
}

fn map_from(rels: &[Option<Vec<bool>>]) -> Option<MapResult> {
    let per_query: Vec<Option<f64>> = rels.iter().map(|r| r.as_deref().map(average_precision)).collect();
    let aps: Vec<f64> = per_query.iter().flatten().copied().collect();
    (!aps.is_empty()).then(|| MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        evaluated: aps.len(),
        excluded: rels.len() - aps.len(),
        per_query,
    })
}

/// mAP, CMC and the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub num_queries: usize,
    pub num_evaluated: usize,
    pub num_excluded: usize,
    pub max_rank: usize,
    pub reranked: bool,
}

impl EvalReport {
    pub fn rank(&self, k: usize) -> f64 {
        self.cmc[(k.max(1) - 1).min(self.cmc.len() - 1)]
    }
}

/// Computes both metrics from one ranking pass.
pub fn evaluate(dist: &DistanceMatrix, mask: &MatchMask, qids: &[u32], gids: &[u32], max_rank: usize) -> Result<EvalReport> {
    check_shapes(dist, mask, qids, gids)?;
    if max_rank == 0 {
        return Err(Error::invalid("max_rank must be >= 1"));
    }
    let rels = per_query(dist, mask, qids, gids);
    let c = cmc_from(&rels, max_rank).ok_or_else(no_queries)?;
    let m = map_from(&rels).ok_or_else(no_queries)?;
    Ok(EvalReport {
        map: m.map,
        cmc: c.curve,
        num_queries: dist.num_queries(),
        num_evaluated: c.evaluated,
        num_excluded: c.excluded,
        max_rank,
        reranked: false,
    })
}
