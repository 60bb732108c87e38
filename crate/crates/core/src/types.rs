//! Shared domain types: identifiers, pedestrian and cluster state, centroid
//! tracks, and engine events.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::geometry::{direction_angle, Point2};
use crate::Real;

/// Frame index, rebased to 0 at ingestion.
pub type FrameIndex = u64;

/// Pedestrian identifier. Input file ids are preserved.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PedestrianId(pub u64);

/// Cluster identifier, assigned by the engine and never reused within a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl std::fmt::Display for PedestrianId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One pedestrian observation: id plus scene-pixel location for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<R: Real> {
    pub id: PedestrianId,
    pub x: R,
    pub y: R,
}

impl<R: Real> Observation<R> {
    pub fn new(id: u64, x: R, y: R) -> Self {
        Self {
            id: PedestrianId(id),
            x,
            y,
        }
    }

    pub fn point(&self) -> Point2<R> {
        Point2::new(self.x, self.y)
    }
}

/// Full per-frame state of one pedestrian.
///
/// The direction vector `(vx, vy)` is the current location minus the location
/// at the pedestrian's previous observed frame; on a first observation it is
/// zero with `has_history == false`. `theta` is the direction angle in
/// degrees `[0, 360)`, `None` while the direction vector is zero or unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianState<R: Real> {
    pub id: PedestrianId,
    pub frame: FrameIndex,
    pub x: R,
    pub y: R,
    pub vx: R,
    pub vy: R,
    pub theta: Option<R>,
    pub has_history: bool,
    pub cluster: Option<ClusterId>,
}

impl<R: Real> PedestrianState<R> {
    /// Build a state from the previous and current location of the same id.
    pub fn from_motion(
        id: PedestrianId,
        frame: FrameIndex,
        prev: Option<Point2<R>>,
        curr: Point2<R>,
    ) -> Self {
        let (vx, vy) = match prev {
            Some(p) => (curr.x - p.x, curr.y - p.y),
            None => (R::zero(), R::zero()),
        };
        Self {
            id,
            frame,
            x: curr.x,
            y: curr.y,
            vx,
            vy,
            theta: direction_angle(vx, vy),
            has_history: prev.is_some(),
            cluster: None,
        }
    }

    pub fn point(&self) -> Point2<R> {
        Point2::new(self.x, self.y)
    }
}

/// Lifecycle of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterStatus {
    /// Has members and at least one was observed recently.
    Active,
    /// No member observed for one or more frames; centroid advances by the
    /// last recorded delta.
    Coasting,
    /// Coasted past the limit. Never regains members.
    Retired,
}

/// Centroid location and direction of one cluster at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidSample<R: Real> {
    pub frame: FrameIndex,
    pub x: R,
    pub y: R,
    /// Direction angle in degrees `[0, 360)`; `None` until the cluster has
    /// moved or any member heading is known.
    pub theta: Option<R>,
    /// Roster size at this frame (serialized as the confidence column).
    pub members: usize,
}

impl<R: Real> CentroidSample<R> {
    pub fn point(&self) -> Point2<R> {
        Point2::new(self.x, self.y)
    }
}

/// Time-ordered centroid samples of one cluster. Frame indices are strictly
/// increasing and gap-free while the cluster is active or coasting.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTrack<R: Real> {
    pub cluster_id: ClusterId,
    pub samples: Vec<CentroidSample<R>>,
}

impl<R: Real> CentroidTrack<R> {
    pub fn new(cluster_id: ClusterId) -> Self {
        Self {
            cluster_id,
            samples: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&CentroidSample<R>> {
        self.samples.last()
    }

    pub fn push(&mut self, sample: CentroidSample<R>) {
        debug_assert!(
            self.samples
                .last()
                .map(|s| sample.frame > s.frame)
                .unwrap_or(true),
            "centroid samples must have strictly increasing frames"
        );
        self.samples.push(sample);
    }
}

/// A live cluster: roster, centroid history, and lifecycle bookkeeping.
#[derive(Debug, Clone)]
pub struct ClusterState<R: Real> {
    pub id: ClusterId,
    pub members: BTreeSet<PedestrianId>,
    pub track: CentroidTrack<R>,
    pub created_frame: FrameIndex,
    pub status: ClusterStatus,
    /// Mean member displacement applied at the most recent update; reused
    /// while coasting.
    pub last_delta: (R, R),
    /// Consecutive frames with no member observed.
    pub absent_frames: u64,
}

impl<R: Real> ClusterState<R> {
    pub fn centroid(&self) -> Option<&CentroidSample<R>> {
        self.track.last()
    }
}

/// Per-frame observation stream, keyed by rebased frame index. Frames with
/// no observations may simply be absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameSeries<R: Real> {
    pub frames: std::collections::BTreeMap<FrameIndex, Vec<Observation<R>>>,
}

impl<R: Real> FrameSeries<R> {
    pub fn new() -> Self {
        Self {
            frames: std::collections::BTreeMap::new(),
        }
    }

    pub fn push(&mut self, frame: FrameIndex, obs: Observation<R>) {
        self.frames.entry(frame).or_default().push(obs);
    }

    pub fn get(&self, frame: FrameIndex) -> &[Observation<R>] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_frame(&self) -> Option<FrameIndex> {
        self.frames.keys().next_back().copied()
    }

    pub fn n_observations(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// Distinct pedestrian ids across all frames.
    pub fn ids(&self) -> BTreeSet<PedestrianId> {
        self.frames
            .values()
            .flat_map(|v| v.iter().map(|o| o.id))
            .collect()
    }

    /// Per-pedestrian trajectory: time-ordered (frame, point) pairs.
    pub fn tracks(&self) -> std::collections::BTreeMap<PedestrianId, Vec<(FrameIndex, Point2<R>)>> {
        let mut out: std::collections::BTreeMap<PedestrianId, Vec<(FrameIndex, Point2<R>)>> =
            std::collections::BTreeMap::new();
        for (&frame, obs) in &self.frames {
            for o in obs {
                out.entry(o.id).or_default().push((frame, o.point()));
            }
        }
        out
    }
}

/// Reason a member left a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionReason {
    /// Flagged by the periodic outlier evaluation.
    Outlier,
    /// Unobserved past the coasting limit.
    Lost,
}

/// Observable state change emitted by the engine, one JSON object per line
/// in serialized event logs. Replaying the log reproduces per-frame
/// membership exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    ClusterCreated {
        frame: FrameIndex,
        cluster: ClusterId,
        members: Vec<PedestrianId>,
    },
    MemberAdded {
        frame: FrameIndex,
        cluster: ClusterId,
        ped: PedestrianId,
    },
    MemberEvicted {
        frame: FrameIndex,
        cluster: ClusterId,
        ped: PedestrianId,
        reason: EvictionReason,
    },
    ClusterRetired {
        frame: FrameIndex,
        cluster: ClusterId,
    },
}

impl EngineEvent {
    pub fn frame(&self) -> FrameIndex {
        match self {
            EngineEvent::ClusterCreated { frame, .. }
            | EngineEvent::MemberAdded { frame, .. }
            | EngineEvent::MemberEvicted { frame, .. }
            | EngineEvent::ClusterRetired { frame, .. } => *frame,
        }
    }
}
