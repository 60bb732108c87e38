//! Streaming dynamic clustering for dense pedestrian tracks.
//!
//! Tracker output (per-frame pedestrian positions) is compressed into a small
//! set of clusters whose centroids move by the mean displacement of their
//! members, yielding smooth centroid trajectories that can stand in for the
//! raw tracks in downstream trajectory prediction. The crate also ships the
//! evaluation metrics for that trade-off (CMDD, CTEO, CTEL, count series,
//! ADE/FDE), a constant-velocity predictor and a random-subsampling baseline,
//! a synthetic scene generator with tracker-noise injection, and MOT-format
//! file I/O.
//!
//! All numeric code is generic over the scalar type via [`Real`]; the
//! `*32`/`*64` aliases at the crate root pin `f32`/`f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod agglomerative;
pub mod centroid;
pub mod config;
pub mod engine;
pub mod geometry;
pub mod io;
pub mod lof;
pub mod metrics;
pub mod predictor;
pub mod synth;
pub mod types;

/// Floating-point scalar the whole pipeline is generic over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

pub use config::EngineConfig;
pub use engine::Engine;
pub use geometry::Point2;
pub use metrics::MetricsReport;
pub use synth::SceneSpec;
pub use types::{
    CentroidSample, CentroidTrack, ClusterId, ClusterState, ClusterStatus, EngineEvent,
    EvictionReason, FrameIndex, Observation, PedestrianId, PedestrianState,
};

pub type Point32 = Point2<f32>;
pub type Point64 = Point2<f64>;
pub type Config32 = EngineConfig<f32>;
pub type Config64 = EngineConfig<f64>;
pub type Engine32 = Engine<f32>;
pub type Engine64 = Engine<f64>;
pub type Report32 = MetricsReport<f32>;
pub type Report64 = MetricsReport<f64>;
