//! Evaluation metric suite: centroid trajectory error occurrence and length
//! (CTEO/CTEL), cluster member distance deviation (CMDD), per-frame
//! pedestrian count comparison, and ADE/FDE for predictions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{euclidean_distance, smallest_angular_distance, Point2};
use crate::types::{
    CentroidSample, CentroidTrack, ClusterId, EngineEvent, FrameIndex, FrameSeries, PedestrianId,
};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no track has at least two samples")]
    NoUsableTracks,
    #[error("no (frame, cluster) pair reaches the membership floor")]
    NoQualifyingClusters,
    #[error("trajectory length mismatch: predicted {predicted}, truth {truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Which per-step displacement a trajectory-error metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Euclidean step length in pixels.
    Location,
    /// Smallest angular distance between consecutive headings, degrees.
    Direction,
}

fn step_distance<R: Real>(
    prev: &CentroidSample<R>,
    curr: &CentroidSample<R>,
    mode: DistanceMode,
) -> Option<R> {
    match mode {
        DistanceMode::Location => Some(euclidean_distance(prev.point(), curr.point())),
        DistanceMode::Direction => match (prev.theta, curr.theta) {
            (Some(a), Some(b)) => Some(smallest_angular_distance(b, a)),
            _ => None,
        },
    }
}

/// Fraction of consecutive-frame steps whose displacement exceeds
/// `threshold`, averaged over tracks. Steps without a defined value (missing
/// headings in direction mode) count as non-exceeding. Tracks with fewer
/// than two samples are skipped; if every track is skipped this errors.
pub fn cteo<R: Real>(
    tracks: &[CentroidTrack<R>],
    threshold: R,
    mode: DistanceMode,
) -> Result<R, MetricsError> {
    let mut per_track = Vec::new();
    for track in tracks {
        if track.samples.len() < 2 {
            continue;
        }
        let steps = track.samples.len() - 1;
        let mut exceed = 0usize;
        for pair in track.samples.windows(2) {
            if let Some(d) = step_distance(&pair[0], &pair[1], mode) {
                if d > threshold {
                    exceed += 1;
                }
            }
        }
        per_track.push(R::from_usize(exceed).unwrap() / R::from_usize(steps).unwrap());
    }
    if per_track.is_empty() {
        return Err(MetricsError::NoUsableTracks);
    }
    let n = R::from_usize(per_track.len()).unwrap();
    Ok(per_track.into_iter().fold(R::zero(), |a, v| a + v) / n)
}

/// Sum of the per-step displacement over exceeding steps, averaged over
/// tracks. The gate and the summed quantity use the same mode.
pub fn ctel<R: Real>(
    tracks: &[CentroidTrack<R>],
    threshold: R,
    mode: DistanceMode,
) -> Result<R, MetricsError> {
    let mut per_track = Vec::new();
    for track in tracks {
        if track.samples.len() < 2 {
            continue;
        }
        let mut total = R::zero();
        for pair in track.samples.windows(2) {
            if let Some(d) = step_distance(&pair[0], &pair[1], mode) {
                if d > threshold {
                    total = total + d;
                }
            }
        }
        per_track.push(total);
    }
    if per_track.is_empty() {
        return Err(MetricsError::NoUsableTracks);
    }
    let n = R::from_usize(per_track.len()).unwrap();
    Ok(per_track.into_iter().fold(R::zero(), |a, v| a + v) / n)
}

/// Locations and headings of one cluster's members at one frame, paired with
/// the centroid they are measured against.
#[derive(Debug, Clone)]
pub struct ClusterFrame<R: Real> {
    pub frame: FrameIndex,
    pub cluster: ClusterId,
    pub centroid: CentroidSample<R>,
    pub members: Vec<(Point2<R>, Option<R>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmddResult<R> {
    /// Grand mean member-to-centroid Euclidean distance, pixels.
    pub location: R,
    /// Grand mean member-to-centroid angular distance, degrees; absent when
    /// no qualifying pair had headings on both sides.
    pub direction: Option<R>,
    /// Number of qualifying (frame, cluster) pairs.
    pub pairs: usize,
}

/// Mean member-to-centroid deviation over every (frame, cluster) pair with
/// at least `min_members` members, then the grand mean over pairs.
pub fn cmdd<R: Real>(
    frames: &[ClusterFrame<R>],
    min_members: usize,
) -> Result<CmddResult<R>, MetricsError> {
    let mut loc_betas: Vec<R> = Vec::new();
    let mut dir_betas: Vec<R> = Vec::new();
    for entry in frames {
        if entry.members.len() < min_members {
            continue;
        }
        let n = R::from_usize(entry.members.len()).unwrap();
        let mut loc_sum = R::zero();
        for (p, _) in &entry.members {
            loc_sum = loc_sum + euclidean_distance(*p, entry.centroid.point());
        }
        loc_betas.push(loc_sum / n);

        if let Some(ct) = entry.centroid.theta {
            let with_heading: Vec<R> = entry.members.iter().filter_map(|(_, t)| *t).collect();
            if !with_heading.is_empty() {
                let m = R::from_usize(with_heading.len()).unwrap();
                let sum = with_heading
                    .into_iter()
                    .fold(R::zero(), |a, t| a + smallest_angular_distance(t, ct));
                dir_betas.push(sum / m);
            }
        }
    }
    if loc_betas.is_empty() {
        return Err(MetricsError::NoQualifyingClusters);
    }
    let pairs = loc_betas.len();
    let n = R::from_usize(pairs).unwrap();
    let location = loc_betas.into_iter().fold(R::zero(), |a, v| a + v) / n;
    let direction = if dir_betas.is_empty() {
        None
    } else {
        let m = R::from_usize(dir_betas.len()).unwrap();
        Some(dir_betas.into_iter().fold(R::zero(), |a, v| a + v) / m)
    };
    Ok(CmddResult {
        location,
        direction,
        pairs,
    })
}

/// Average and final displacement error between equal-length trajectories.
pub fn ade_fde<R: Real>(
    predicted: &[Point2<R>],
    truth: &[Point2<R>],
) -> Result<(R, R), MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    let mut sum = R::zero();
    let mut last = R::zero();
    for (p, t) in predicted.iter().zip(truth.iter()) {
        last = euclidean_distance(*p, *t);
        sum = sum + last;
    }
    Ok((sum / R::from_usize(predicted.len()).unwrap(), last))
}

/// Incremental replay of an engine event log into per-frame membership.
pub struct MembershipReplay {
    by_frame: BTreeMap<FrameIndex, Vec<EngineEvent>>,
    pending: Vec<FrameIndex>,
    cursor: usize,
    membership: BTreeMap<PedestrianId, ClusterId>,
}

impl MembershipReplay {
    pub fn new(events: &[EngineEvent]) -> Self {
        let mut by_frame: BTreeMap<FrameIndex, Vec<EngineEvent>> = BTreeMap::new();
        for e in events {
            by_frame.entry(e.frame()).or_default().push(e.clone());
        }
        let pending = by_frame.keys().copied().collect();
        Self {
            by_frame,
            pending,
            cursor: 0,
            membership: BTreeMap::new(),
        }
    }

    /// Apply all events up to and including `frame`; frames must be queried
    /// in non-decreasing order.
    pub fn advance_to(&mut self, frame: FrameIndex) -> &BTreeMap<PedestrianId, ClusterId> {
        while self.cursor < self.pending.len() && self.pending[self.cursor] <= frame {
            let f = self.pending[self.cursor];
            for e in &self.by_frame[&f] {
                match e {
                    EngineEvent::ClusterCreated { cluster, members, .. } => {
                        for m in members {
                            self.membership.insert(*m, *cluster);
                        }
                    }
                    EngineEvent::MemberAdded { cluster, ped, .. } => {
                        self.membership.insert(*ped, *cluster);
                    }
                    EngineEvent::MemberEvicted { ped, .. } => {
                        self.membership.remove(ped);
                    }
                    EngineEvent::ClusterRetired { .. } => {}
                }
            }
            self.cursor += 1;
        }
        &self.membership
    }
}

/// Per-frame (clustered pedestrian count, raw observation count), dense from
/// frame 0 to the last observed frame. The clustered count tallies this
/// frame's observations whose id belongs to a cluster, so it never exceeds
/// the raw count.
pub fn count_series<R: Real>(
    events: &[EngineEvent],
    series: &FrameSeries<R>,
) -> Vec<(FrameIndex, usize, usize)> {
    let Some(max) = series.max_frame() else {
        return Vec::new();
    };
    let mut replay = MembershipReplay::new(events);
    let mut out = Vec::with_capacity(max as usize + 1);
    for frame in 0..=max {
        let membership = replay.advance_to(frame);
        let obs = series.get(frame);
        let clustered = obs
            .iter()
            .filter(|o| membership.contains_key(&o.id))
            .count();
        out.push((frame, clustered, obs.len()));
    }
    out
}

/// Fraction of (frame, clustered pedestrian) pairs whose ground-truth group
/// matches the per-frame majority group of their cluster, from `from_frame`
/// onward. Scores how faithfully clusters track labeled groups.
pub fn membership_agreement(
    membership_per_frame: &BTreeMap<FrameIndex, BTreeMap<PedestrianId, ClusterId>>,
    labels: &BTreeMap<FrameIndex, BTreeMap<PedestrianId, u64>>,
    from_frame: FrameIndex,
) -> Option<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (frame, assignment) in membership_per_frame.range(from_frame..) {
        let Some(frame_labels) = labels.get(frame) else {
            continue;
        };
        let mut per_cluster: BTreeMap<ClusterId, Vec<(PedestrianId, u64)>> = BTreeMap::new();
        for (ped, cid) in assignment {
            if let Some(&group) = frame_labels.get(ped) {
                per_cluster.entry(*cid).or_default().push((*ped, group));
            }
        }
        for members in per_cluster.values() {
            let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
            for (_, g) in members {
                *votes.entry(*g).or_insert(0) += 1;
            }
            let majority = votes
                .iter()
                .max_by_key(|(g, n)| (**n, std::cmp::Reverse(**g)))
                .map(|(g, _)| *g)
                .expect("non-empty cluster");
            for (_, g) in members {
                total += 1;
                if *g == majority {
                    correct += 1;
                }
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(correct as f64 / total as f64)
    }
}

/// Everything one evaluation run produces, ready for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<R: Real> {
    pub cmdd_location: Option<R>,
    pub cmdd_direction: Option<R>,
    pub cmdd_pairs: usize,
    pub cteo_location: Option<R>,
    pub cteo_direction: Option<R>,
    pub ctel_location: Option<R>,
    pub ctel_direction: Option<R>,
    /// Thresholds the CTEO/CTEL columns were computed at.
    pub threshold_loc: R,
    pub threshold_dir: R,
    pub count_series: Vec<(FrameIndex, usize, usize)>,
    pub ade: Option<R>,
    pub fde: Option<R>,
    pub n_clusters_single: usize,
    pub n_clusters_multi: usize,
    pub n_peds: usize,
}
