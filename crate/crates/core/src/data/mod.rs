//! Samples, train/query/gallery splits, and the ways to obtain them.

mod augment;
mod market;
mod synthetic;
mod table;

pub use augment::{denormalize, normalize, random_erase, random_flip, resize, ErasingParams, ImagePipeline, IMAGENET_MEAN, IMAGENET_STD};
pub use market::{load_market_dir, parse_market_filename};
pub use synthetic::{generate_confusable, SyntheticSpec};
pub use table::{read_dataset_table, write_dataset_table};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height × width × channels raster stored in HWC order with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be nonzero"));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                context: "image buffer",
                expected: height * width * channels,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=255.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel value {} at offset {i} outside [0, 255]",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Features(Vec<f64>),
    Image(RasterImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub payload: Payload,
    pub identity: u32,
    pub camera: u32,
}

impl Sample {
    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            identity: self.identity,
            camera: self.camera,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleMeta {
    pub identity: u32,
    pub camera: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub query: Vec<Sample>,
    pub gallery: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Query => &self.query,
            Split::Gallery => &self.gallery,
        }
    }

    pub fn identities(&self, split: Split) -> BTreeSet<u32> {
        self.split(split).iter().map(|s| s.identity).collect()
    }

    pub fn num_identities(&self, split: Split) -> usize {
        self.identities(split).len()
    }

    pub fn metas(&self, split: Split) -> Vec<SampleMeta> {
        self.split(split).iter().map(Sample::meta).collect()
    }

    /// Checks that query and gallery are nonempty and share identities.
    pub fn validate_eval_splits(&self) -> Result<()> {
        if self.query.is_empty() || self.gallery.is_empty() {
            return Err(Error::invalid("query and gallery splits must be nonempty"));
        }
        let gallery = self.identities(Split::Gallery);
        if !self.query.iter().any(|s| gallery.contains(&s.identity)) {
            return Err(Error::invalid(
                "no query identity appears in the gallery; evaluation would be vacuous",
            ));
        }
        Ok(())
    }
}
