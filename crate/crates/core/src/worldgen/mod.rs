//! Synthetic territories from a template: discrete layers by regional
//! quantile mapping, continuous feature fields, and quota/spacing-constrained
//! point placement.
//!
//! Everything is generated on a square parameter grid. Cell `(col, row)` has
//! its centre at `((col + 0.5) * cell, (row + 0.5) * cell)` metres with the
//! origin at the south-west corner; rasters are row-major, row 0 southernmost.

mod layers;
mod place;
mod template;
mod world;

pub use layers::{danger_band, island_height, regional_quantile, DiscreteLayer};
pub use place::{derive_features, place_points, Features, PlacedPoint, Placement, PlacementRequest};
pub use template::{BandFeatures, ClassKind, ClassSpec, Histogram, LayerSpecs, Subclass, WorldTemplate};
pub use world::{generate_world, ClassSummary, GeneratedWorld, LayerSummary, WorldSeeds};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("cannot parse template: {0}")]
    Parse(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DangerBand {
    Green,
    Yellow,
    Red,
    Black,
}

impl DangerBand {
    pub const ALL: [DangerBand; 4] = [DangerBand::Green, DangerBand::Yellow, DangerBand::Red, DangerBand::Black];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i.min(3)]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DangerBand::Green => "green",
            DangerBand::Yellow => "yellow",
            DangerBand::Red => "red",
            DangerBand::Black => "black",
        }
    }
}
