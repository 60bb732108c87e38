//! The streaming dynamic-clustering state machine: per-frame ingestion,
//! periodic outlier evaluation, nearest-cluster reassignment, the temporary
//! pool with threshold-triggered re-clustering, and cluster lifecycle.
//!
//! Frame processing order:
//!   1. ingest observations (direction vectors, member displacement
//!      contributions, assignment attempts for unclustered pedestrians);
//!   2. on evaluation boundaries, sweep lost members, run LOF per cluster,
//!      reassign or pool the flagged outliers, and re-cluster the pool once
//!      it reaches the trigger size;
//!   3. advance every centroid by the delta rule, coasting and retiring
//!      memberless clusters.
//!
//! Between evaluation boundaries membership only ever grows, so centroid
//! tracks stay smooth while the roster catches up with the scene.
//!
//! All state lives in ordered maps and every phase iterates in id order, so
//! identical input streams produce identical event logs.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::agglomerative::nested_cluster;
use crate::centroid::{delta_update, init_centroid};
use crate::config::EngineConfig;
use crate::geometry::{euclidean_distance, smallest_angular_distance, Point2};
use crate::lof::evaluate_cluster;
use crate::types::{
    CentroidTrack, ClusterId, ClusterState, ClusterStatus, EngineEvent, EvictionReason,
    FrameIndex, FrameSeries, Observation, PedestrianId, PedestrianState,
};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("empty input: initialization window has no observations")]
    EmptyWindow,
    #[error("initialization window has no pedestrian with two observations")]
    NoMotionInWindow,
    #[error("frame {got} does not advance past current frame {current}")]
    NonMonotoneFrame { got: FrameIndex, current: FrameIndex },
    #[error("duplicate pedestrian id {0} within one frame")]
    DuplicateId(PedestrianId),
    #[error("partition invariant violated at frame {frame}: {detail}")]
    InvariantViolation { frame: FrameIndex, detail: String },
}

/// Last two observations of one pedestrian; enough to rebuild its state.
#[derive(Debug, Clone, Copy)]
struct PedRecord<R: Real> {
    last: Point2<R>,
    last_frame: FrameIndex,
    prev: Option<(Point2<R>, FrameIndex)>,
}

impl<R: Real> PedRecord<R> {
    fn state(&self, id: PedestrianId, cluster: Option<ClusterId>) -> PedestrianState<R> {
        let mut s = PedestrianState::from_motion(
            id,
            self.last_frame,
            self.prev.map(|(p, _)| p),
            self.last,
        );
        s.cluster = cluster;
        s
    }
}

/// Aggregate result of driving an observation stream through the engine.
#[derive(Debug, Clone)]
pub struct EngineRun<R: Real> {
    pub events: Vec<EngineEvent>,
    /// Centroid tracks of every cluster ever created, ordered by cluster id.
    pub tracks: Vec<CentroidTrack<R>>,
    /// Clusters whose roster never exceeded one member.
    pub n_clusters_single: usize,
    /// Clusters that held two or more members at some point.
    pub n_clusters_multi: usize,
    /// Distinct pedestrian ids observed.
    pub n_peds: usize,
    pub final_frame: FrameIndex,
}

#[derive(Debug, Clone)]
pub struct Engine<R: Real> {
    cfg: EngineConfig<R>,
    frame: FrameIndex,
    clusters: BTreeMap<ClusterId, ClusterState<R>>,
    retired: Vec<ClusterState<R>>,
    temporary: BTreeSet<PedestrianId>,
    membership: BTreeMap<PedestrianId, ClusterId>,
    peds: BTreeMap<PedestrianId, PedRecord<R>>,
    peak_members: BTreeMap<ClusterId, usize>,
    seen_ids: BTreeSet<PedestrianId>,
    next_cluster: u64,
    validate: bool,
}

impl<R: Real> Engine<R> {
    /// Bootstrap from the per-frame observations of an initial window
    /// (frames `0..window.len()`), normally `eval_period` frames.
    ///
    /// Direction vectors come from each pedestrian's last two observations in
    /// the window; pedestrians seen only once start in the temporary pool.
    /// Everyone else is nested-clustered and the initial centroids are the
    /// member means.
    pub fn initialize(
        window: &[Vec<Observation<R>>],
        cfg: EngineConfig<R>,
        validate: bool,
    ) -> Result<(Self, Vec<EngineEvent>), EngineError> {
        if window.iter().all(|f| f.is_empty()) {
            return Err(EngineError::EmptyWindow);
        }
        let mut engine = Engine {
            cfg,
            frame: window.len() as FrameIndex - 1,
            clusters: BTreeMap::new(),
            retired: Vec::new(),
            temporary: BTreeSet::new(),
            membership: BTreeMap::new(),
            peds: BTreeMap::new(),
            peak_members: BTreeMap::new(),
            seen_ids: BTreeSet::new(),
            next_cluster: 1,
            validate,
        };

        for (f, obs) in window.iter().enumerate() {
            let mut seen_frame = BTreeSet::new();
            for o in obs {
                if !seen_frame.insert(o.id) {
                    return Err(EngineError::DuplicateId(o.id));
                }
                engine.ingest(o, f as FrameIndex);
            }
        }

        let mut moving: Vec<PedestrianState<R>> = Vec::new();
        let mut singles: Vec<PedestrianId> = Vec::new();
        for (&id, rec) in &engine.peds {
            if rec.prev.is_some() {
                moving.push(rec.state(id, None));
            } else {
                singles.push(id);
            }
        }
        engine.temporary.extend(singles);
        if moving.is_empty() {
            return Err(EngineError::NoMotionInWindow);
        }

        let end_frame = engine.frame;
        let assignment =
            nested_cluster(&moving, &engine.cfg).map_err(|_| EngineError::EmptyWindow)?;
        let mut events = Vec::new();
        for group in assignment.groups() {
            let members: Vec<PedestrianState<R>> = group.iter().map(|&i| moving[i]).collect();
            events.push(engine.create_cluster(&members, end_frame));
        }
        engine.check_invariants(None)?;
        Ok((engine, events))
    }

    /// Process one frame of observations. Frames must strictly increase; ids
    /// must be unique within the frame.
    pub fn step(
        &mut self,
        frame: FrameIndex,
        observations: &[Observation<R>],
    ) -> Result<Vec<EngineEvent>, EngineError> {
        if frame <= self.frame {
            return Err(EngineError::NonMonotoneFrame {
                got: frame,
                current: self.frame,
            });
        }
        let mut events = Vec::new();

        let mut sorted: Vec<&Observation<R>> = observations.iter().collect();
        sorted.sort_by_key(|o| o.id);
        for pair in sorted.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(EngineError::DuplicateId(pair[0].id));
            }
        }

        // phase 1: ingest and route
        let mut pending: BTreeMap<ClusterId, Vec<(R, R)>> = BTreeMap::new();
        let mut observed: BTreeSet<PedestrianId> = BTreeSet::new();
        for o in sorted {
            observed.insert(o.id);
            let had_prev_frame = self.ingest(o, frame);
            match self.membership.get(&o.id).copied() {
                Some(cid) => {
                    // displacement counts only across consecutive observations
                    if had_prev_frame == Some(frame - 1) {
                        let rec = &self.peds[&o.id];
                        let (px, py) = rec.prev.map(|(p, _)| (p.x, p.y)).unwrap();
                        pending
                            .entry(cid)
                            .or_default()
                            .push((rec.last.x - px, rec.last.y - py));
                    }
                }
                None => {
                    // unassigned pedestrians retry against the live clusters
                    // every frame; direction is checked once they have one
                    let state = self.peds[&o.id].state(o.id, None);
                    match self.assign_to_nearest(&state) {
                        Some(cid) => {
                            self.add_member(o.id, cid);
                            events.push(EngineEvent::MemberAdded {
                                frame,
                                cluster: cid,
                                ped: o.id,
                            });
                        }
                        None => {
                            self.temporary.insert(o.id);
                        }
                    }
                }
            }
        }

        // phase 2: periodic evaluation
        let tick = frame % self.cfg.eval_period == 0;
        if tick {
            self.evaluate_tick(frame, &mut events);
        }

        // phase 3: centroid delta updates and lifecycle; removals stay
        // aligned to evaluation boundaries, so between ticks membership only
        // grows
        let coast = self.cfg.coast_frames();
        let mut to_retire: Vec<ClusterId> = Vec::new();
        for (&cid, cluster) in self.clusters.iter_mut() {
            if cluster.created_frame == frame {
                continue; // initial sample already stamped this frame
            }
            let present = cluster.members.iter().any(|m| observed.contains(m));
            if present {
                cluster.absent_frames = 0;
                cluster.status = ClusterStatus::Active;
            } else {
                cluster.absent_frames += 1;
                if tick && cluster.absent_frames >= coast {
                    to_retire.push(cid);
                    continue;
                }
                cluster.status = ClusterStatus::Coasting;
            }
            let displacements = pending.remove(&cid).unwrap_or_default();
            let prev = *cluster.track.last().expect("live cluster has a sample");
            let (sample, delta) = delta_update(
                &prev,
                &displacements,
                cluster.last_delta,
                frame,
                cluster.members.len(),
            );
            cluster.track.push(sample);
            cluster.last_delta = delta;
        }
        for cid in to_retire {
            let mut cluster = self.clusters.remove(&cid).expect("cluster present");
            cluster.status = ClusterStatus::Retired;
            for ped in std::mem::take(&mut cluster.members) {
                self.membership.remove(&ped);
                events.push(EngineEvent::MemberEvicted {
                    frame,
                    cluster: cid,
                    ped,
                    reason: EvictionReason::Lost,
                });
            }
            events.push(EngineEvent::ClusterRetired {
                frame,
                cluster: cid,
            });
            self.retired.push(cluster);
        }

        self.frame = frame;
        self.check_invariants(Some(&observed))?;
        Ok(events)
    }

    /// Nearest live cluster whose centroid is within both thresholds of the
    /// pedestrian: Euclidean distance at most `d_th` and, when both headings
    /// are defined, angular distance at most `theta_th`. Ties break by
    /// smaller angular distance, then smaller cluster id.
    pub fn assign_to_nearest(&self, ped: &PedestrianState<R>) -> Option<ClusterId> {
        let mut best: Option<(R, R, ClusterId)> = None;
        for (&cid, cluster) in &self.clusters {
            let Some(c) = cluster.centroid() else {
                continue;
            };
            let dist = euclidean_distance(ped.point(), c.point());
            if dist > self.cfg.d_th {
                continue;
            }
            let ang = match (ped.theta, c.theta) {
                (Some(a), Some(b)) => {
                    let sad = smallest_angular_distance(a, b);
                    if sad > self.cfg.theta_th {
                        continue;
                    }
                    sad
                }
                // no heading on either side cannot violate the constraint
                _ => R::infinity(),
            };
            let better = match &best {
                None => true,
                Some((bd, ba, _)) => dist < *bd || (dist == *bd && ang < *ba),
            };
            if better {
                best = Some((dist, ang, cid));
            }
        }
        best.map(|(_, _, cid)| cid)
    }

    /// Evaluation boundary: sweep members lost past the coasting limit, flag
    /// outliers per cluster, reassign or pool them, and re-cluster the
    /// temporary pool once it reaches the trigger size.
    fn evaluate_tick(&mut self, frame: FrameIndex, events: &mut Vec<EngineEvent>) {
        let coast = self.cfg.coast_frames();

        // members unobserved past the coasting limit drop off the roster
        let mut lost: Vec<(ClusterId, PedestrianId)> = Vec::new();
        for (&cid, cluster) in &self.clusters {
            for &ped in &cluster.members {
                if self.peds[&ped].last_frame + coast <= frame {
                    lost.push((cid, ped));
                }
            }
        }
        for (cid, ped) in lost {
            self.clusters.get_mut(&cid).unwrap().members.remove(&ped);
            self.membership.remove(&ped);
            events.push(EngineEvent::MemberEvicted {
                frame,
                cluster: cid,
                ped,
                reason: EvictionReason::Lost,
            });
        }

        // outlier evaluation over each cluster's last-known member states
        let mut flagged: Vec<(ClusterId, PedestrianId)> = Vec::new();
        for (&cid, cluster) in &self.clusters {
            if cluster.members.len() < 3 {
                continue;
            }
            let states: Vec<PedestrianState<R>> = cluster
                .members
                .iter()
                .map(|&id| self.peds[&id].state(id, Some(cid)))
                .collect();
            for ped in evaluate_cluster(&states, &self.cfg) {
                flagged.push((cid, ped));
            }
        }
        for (source, ped) in flagged {
            let state = self.peds[&ped].state(ped, Some(source));
            let target = self.assign_to_nearest(&state);
            if target == Some(source) {
                // still the best fit for its own cluster: eviction would be
                // a no-op round trip
                continue;
            }
            self.clusters.get_mut(&source).unwrap().members.remove(&ped);
            self.membership.remove(&ped);
            events.push(EngineEvent::MemberEvicted {
                frame,
                cluster: source,
                ped,
                reason: EvictionReason::Outlier,
            });
            match target {
                Some(cid) => {
                    self.add_member(ped, cid);
                    events.push(EngineEvent::MemberAdded {
                        frame,
                        cluster: cid,
                        ped,
                    });
                }
                None => {
                    self.temporary.insert(ped);
                }
            }
        }

        // expire stale pool entries and forgotten histories
        let stale: Vec<PedestrianId> = self
            .temporary
            .iter()
            .filter(|id| self.peds[id].last_frame + coast <= frame)
            .copied()
            .collect();
        for id in stale {
            self.temporary.remove(&id);
        }
        let forgotten: Vec<PedestrianId> = self
            .peds
            .iter()
            .filter(|(id, rec)| {
                rec.last_frame + coast <= frame
                    && !self.membership.contains_key(id)
                    && !self.temporary.contains(id)
            })
            .map(|(&id, _)| id)
            .collect();
        for id in forgotten {
            self.peds.remove(&id);
        }

        // pool re-clustering
        if self.temporary.len() >= self.cfg.temp_trigger {
            let pool: Vec<PedestrianState<R>> = self
                .temporary
                .iter()
                .map(|&id| self.peds[&id].state(id, None))
                .collect();
            let assignment = nested_cluster(&pool, &self.cfg).expect("pool is non-empty");
            for group in assignment.groups() {
                let members: Vec<PedestrianState<R>> = group.iter().map(|&i| pool[i]).collect();
                events.push(self.create_cluster(&members, frame));
            }
            self.temporary.clear();
        }
    }

    fn ingest(&mut self, o: &Observation<R>, frame: FrameIndex) -> Option<FrameIndex> {
        self.seen_ids.insert(o.id);
        let coast = self.cfg.coast_frames();
        match self.peds.get_mut(&o.id) {
            Some(rec) if rec.last_frame + coast > frame => {
                let prev_frame = rec.last_frame;
                rec.prev = Some((rec.last, rec.last_frame));
                rec.last = o.point();
                rec.last_frame = frame;
                Some(prev_frame)
            }
            _ => {
                // unseen, or gone long enough to count as a new pedestrian
                self.peds.insert(
                    o.id,
                    PedRecord {
                        last: o.point(),
                        last_frame: frame,
                        prev: None,
                    },
                );
                None
            }
        }
    }

    fn add_member(&mut self, ped: PedestrianId, cid: ClusterId) {
        let cluster = self.clusters.get_mut(&cid).expect("target cluster exists");
        cluster.members.insert(ped);
        self.membership.insert(ped, cid);
        self.temporary.remove(&ped);
        let peak = self.peak_members.entry(cid).or_insert(0);
        *peak = (*peak).max(cluster.members.len());
    }

    fn create_cluster(&mut self, members: &[PedestrianState<R>], frame: FrameIndex) -> EngineEvent {
        let cid = ClusterId(self.next_cluster);
        self.next_cluster += 1;
        let sample = init_centroid(members, frame).expect("clusters are created non-empty");
        let mut track = CentroidTrack::new(cid);
        track.push(sample);
        self.clusters.insert(
            cid,
            ClusterState {
                id: cid,
                members: BTreeSet::new(),
                track,
                created_frame: frame,
                status: ClusterStatus::Active,
                last_delta: (R::zero(), R::zero()),
                absent_frames: 0,
            },
        );
        let mut ids = Vec::with_capacity(members.len());
        for m in members {
            self.add_member(m.id, cid);
            ids.push(m.id);
        }
        ids.sort_unstable();
        EngineEvent::ClusterCreated {
            frame,
            cluster: cid,
            members: ids,
        }
    }

    fn check_invariants(
        &self,
        observed: Option<&BTreeSet<PedestrianId>>,
    ) -> Result<(), EngineError> {
        if !self.validate && !cfg!(debug_assertions) {
            return Ok(());
        }
        let fail = |detail: String| EngineError::InvariantViolation {
            frame: self.frame,
            detail,
        };
        let mut roster_total = 0usize;
        for (cid, cluster) in &self.clusters {
            roster_total += cluster.members.len();
            for ped in &cluster.members {
                if self.membership.get(ped) != Some(cid) {
                    return Err(fail(format!("{ped} listed in {cid} but mapped elsewhere")));
                }
                if self.temporary.contains(ped) {
                    return Err(fail(format!("{ped} is both clustered and pooled")));
                }
            }
        }
        if roster_total != self.membership.len() {
            return Err(fail(format!(
                "rosters hold {roster_total} members but the map has {}",
                self.membership.len()
            )));
        }
        if let Some(observed) = observed {
            for ped in observed {
                let clustered = self.membership.contains_key(ped);
                let pooled = self.temporary.contains(ped);
                if clustered == pooled {
                    return Err(fail(format!(
                        "{ped} observed but in {} places",
                        if clustered { 2 } else { 0 }
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig<R> {
        &self.cfg
    }

    pub fn current_frame(&self) -> FrameIndex {
        self.frame
    }

    pub fn clusters(&self) -> &BTreeMap<ClusterId, ClusterState<R>> {
        &self.clusters
    }

    pub fn retired(&self) -> &[ClusterState<R>] {
        &self.retired
    }

    pub fn temporary(&self) -> &BTreeSet<PedestrianId> {
        &self.temporary
    }

    pub fn membership(&self) -> &BTreeMap<PedestrianId, ClusterId> {
        &self.membership
    }

    /// Centroid tracks of all clusters, live and retired, by cluster id.
    pub fn tracks(&self) -> Vec<CentroidTrack<R>> {
        let mut out: Vec<CentroidTrack<R>> = self
            .clusters
            .values()
            .map(|c| c.track.clone())
            .chain(self.retired.iter().map(|c| c.track.clone()))
            .collect();
        out.sort_by_key(|t| t.cluster_id);
        out
    }

    /// Drive a whole observation stream: the first frames (one evaluation
    /// period, at least two frames) initialize the engine, the rest are
    /// stepped one frame at a time, including empty frames.
    pub fn run(
        series: &FrameSeries<R>,
        cfg: &EngineConfig<R>,
        validate: bool,
    ) -> Result<EngineRun<R>, EngineError> {
        let max = series.max_frame().ok_or(EngineError::EmptyWindow)?;
        let window_len = cfg.eval_period.max(2).min(max + 1);
        let window: Vec<Vec<Observation<R>>> = (0..window_len)
            .map(|f| series.get(f).to_vec())
            .collect();
        let (mut engine, mut events) = Engine::initialize(&window, cfg.clone(), validate)?;
        for frame in window_len..=max {
            events.extend(engine.step(frame, series.get(frame))?);
        }
        Ok(engine.finish(events))
    }

    fn finish(self, events: Vec<EngineEvent>) -> EngineRun<R> {
        let mut tracks = self.tracks();
        tracks.sort_by_key(|t| t.cluster_id);
        let mut single = 0usize;
        let mut multi = 0usize;
        for (_, peak) in &self.peak_members {
            if *peak >= 2 {
                multi += 1;
            } else {
                single += 1;
            }
        }
        EngineRun {
            events,
            tracks,
            n_clusters_single: single,
            n_clusters_multi: multi,
            n_peds: self.seen_ids.len(),
            final_frame: self.frame,
        }
    }
}
