//! Prediction baselines and the source-substitution harness: score the same
//! ground-truth pedestrians from raw tracks, cluster centroids, and a random
//! track subsample, and compare accuracy, node counts, wall time, and memory.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::EngineConfig;
use crate::engine::{Engine, EngineError};
use crate::geometry::{euclidean_distance, Point2};
use crate::metrics::ade_fde;
use crate::types::{ClusterId, FrameIndex, FrameSeries, PedestrianId};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("insufficient history: need at least 2 points, got {0}")]
    InsufficientHistory(usize),
    #[error("horizon {horizon} leaves no history before frame {last}")]
    HorizonExceedsTruth { horizon: usize, last: FrameIndex },
    #[error("keep fraction must be in (0, 1], got {0}")]
    BadKeepFraction(f64),
    #[error("no pedestrian is evaluable: needs full truth continuation and 2 observations")]
    NoEvaluablePedestrians,
    #[error("source {0} has no input nodes")]
    NoNodes(&'static str),
    #[error("engine failed on the history window: {0}")]
    Engine(#[from] EngineError),
}

/// Extrapolate with the mean velocity of the last `min(8, len - 1)` steps.
pub fn constant_velocity_predict<R: Real>(
    history: &[Point2<R>],
    horizon: usize,
) -> Result<Vec<Point2<R>>, PredictorError> {
    if history.len() < 2 {
        return Err(PredictorError::InsufficientHistory(history.len()));
    }
    let steps = history.len().min(9) - 1; // up to 8 displacement steps
    let tail = &history[history.len() - steps - 1..];
    let mut vx = R::zero();
    let mut vy = R::zero();
    for pair in tail.windows(2) {
        vx = vx + (pair[1].x - pair[0].x);
        vy = vy + (pair[1].y - pair[0].y);
    }
    let n = R::from_usize(steps).unwrap();
    vx = vx / n;
    vy = vy / n;
    let last = *history.last().unwrap();
    Ok((1..=horizon)
        .map(|k| {
            let kk = R::from_usize(k).unwrap();
            Point2::new(last.x + vx * kk, last.y + vy * kk)
        })
        .collect())
}

/// Independent Bernoulli(`keep_fraction`) selection per item, deterministic
/// under `seed`.
pub fn random_subsample<T: Clone>(
    items: &[T],
    keep_fraction: f64,
    seed: u64,
) -> Result<Vec<T>, PredictorError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(PredictorError::BadKeepFraction(keep_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(items
        .iter()
        .filter(|_| rng.gen::<f64>() < keep_fraction)
        .cloned()
        .collect())
}

/// Which track set feeds the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    GroundTruth,
    Cluster,
    Tracking,
    Random,
}

impl PredictionSource {
    pub fn name(self) -> &'static str {
        match self {
            PredictionSource::GroundTruth => "gt",
            PredictionSource::Cluster => "cluster",
            PredictionSource::Tracking => "tracking",
            PredictionSource::Random => "random",
        }
    }

    pub const ALL: [PredictionSource; 4] = [
        PredictionSource::GroundTruth,
        PredictionSource::Cluster,
        PredictionSource::Tracking,
        PredictionSource::Random,
    ];
}

impl std::str::FromStr for PredictionSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gt" => Ok(PredictionSource::GroundTruth),
            "cluster" => Ok(PredictionSource::Cluster),
            "tracking" => Ok(PredictionSource::Tracking),
            "random" => Ok(PredictionSource::Random),
            other => Err(format!(
                "unknown source '{other}' (expected gt|cluster|tracking|random)"
            )),
        }
    }
}

/// One comparison row.
#[derive(Debug, Clone)]
pub struct SourceOutcome<R: Real> {
    pub source: PredictionSource,
    pub ade: R,
    pub fde: R,
    /// Tracks fed to the predictor.
    pub nodes: usize,
    /// Ground-truth pedestrians scored (identical across sources).
    pub evaluated: usize,
    /// Effective keep fraction (random source only).
    pub keep_fraction: Option<f64>,
    /// Wall time of one predictor pass over all nodes (median of repeats).
    pub predict_wall: Duration,
    /// Peak resident set sampled after the pass, mebibytes.
    pub peak_rss_mib: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SubstitutionReport<R: Real> {
    pub split_frame: FrameIndex,
    pub horizon: usize,
    pub history: usize,
    pub outcomes: Vec<SourceOutcome<R>>,
}

struct Node<R: Real> {
    history: Vec<Point2<R>>,
    last_frame: FrameIndex,
    last_point: Point2<R>,
}

fn build_nodes<R: Real>(
    tracks: &BTreeMap<PedestrianId, Vec<(FrameIndex, Point2<R>)>>,
    split: FrameIndex,
    history: usize,
) -> BTreeMap<PedestrianId, Node<R>> {
    let mut out = BTreeMap::new();
    for (&id, track) in tracks {
        let pts: Vec<(FrameIndex, Point2<R>)> = track
            .iter()
            .filter(|(f, _)| *f <= split)
            .copied()
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let tail = &pts[pts.len().saturating_sub(history.max(2))..];
        out.insert(
            id,
            Node {
                history: tail.iter().map(|(_, p)| *p).collect(),
                last_frame: tail.last().unwrap().0,
                last_point: tail.last().unwrap().1,
            },
        );
    }
    out
}

/// Predict absolute positions for frames `split+1 ..= split+horizon`,
/// bridging any gap between the node's last observation and the split.
fn predict_node<R: Real>(
    node: &Node<R>,
    split: FrameIndex,
    horizon: usize,
) -> Result<Vec<Point2<R>>, PredictorError> {
    let gap = (split - node.last_frame) as usize;
    let full = constant_velocity_predict(&node.history, gap + horizon)?;
    Ok(full[gap..].to_vec())
}

/// Time one full predictor pass over `nodes`, repeating the pass until the
/// clock has something to measure and reporting the per-pass median.
fn timed_pass<R: Real, K: Ord + Copy>(
    nodes: &BTreeMap<K, Node<R>>,
    split: FrameIndex,
    horizon: usize,
) -> Result<(BTreeMap<K, Vec<Point2<R>>>, Duration), PredictorError> {
    let mut predictions = BTreeMap::new();
    for (&id, node) in nodes {
        predictions.insert(id, predict_node(node, split, horizon)?);
    }

    let mut laps: Vec<Duration> = Vec::new();
    let budget = Duration::from_millis(20);
    let t0 = Instant::now();
    while laps.len() < 5 || (t0.elapsed() < budget && laps.len() < 200) {
        let lap = Instant::now();
        for node in nodes.values() {
            std::hint::black_box(predict_node(node, split, horizon)?);
        }
        laps.push(lap.elapsed());
    }
    laps.sort();
    Ok((predictions, laps[laps.len() / 2]))
}

/// Peak resident set size of this process in mebibytes, when the platform
/// exposes it.
pub fn peak_rss_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb / 1024.0);
        }
    }
    None
}

fn nearest_key<R: Real, K: Copy>(
    point: Point2<R>,
    candidates: impl Iterator<Item = (K, Point2<R>)>,
) -> Option<K> {
    let mut best: Option<(R, K)> = None;
    for (id, p) in candidates {
        let d = euclidean_distance(point, p);
        let better = match &best {
            None => true,
            Some((bd, _)) => d < *bd,
        };
        if better {
            best = Some((d, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Run the shared-evaluation protocol: every evaluable ground-truth
/// pedestrian is scored exactly once per source against the same future
/// window; sources differ only in what the predictor consumed.
///
/// The evaluation window is the last `horizon` truth frames; everything at or
/// before the split feeds the predictors. A pedestrian is evaluable when its
/// truth covers the whole window and it has two observations in the history.
/// Cluster predictions substitute a pedestrian by its cluster's centroid
/// (nearest live centroid if it is unassigned at the split); the random
/// baseline substitutes dropped pedestrians by the nearest kept track.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_substitution<R: Real>(
    observations: &FrameSeries<R>,
    truth: &FrameSeries<R>,
    cfg: &EngineConfig<R>,
    sources: &[PredictionSource],
    horizon: usize,
    history: usize,
    keep_fraction: Option<f64>,
    seed: u64,
) -> Result<SubstitutionReport<R>, PredictorError> {
    let last = truth.max_frame().unwrap_or(0);
    if horizon == 0 || (horizon as u64) >= last {
        return Err(PredictorError::HorizonExceedsTruth { horizon, last });
    }
    let split = last - horizon as u64;

    let truth_tracks = truth.tracks();
    let obs_tracks = observations.tracks();

    // shared evaluation set and targets
    let mut targets: BTreeMap<PedestrianId, Vec<Point2<R>>> = BTreeMap::new();
    for (&id, track) in &truth_tracks {
        let future: BTreeMap<FrameIndex, Point2<R>> = track
            .iter()
            .filter(|(f, _)| *f > split)
            .copied()
            .collect();
        if future.len() != horizon {
            continue;
        }
        let hist_truth = track.iter().filter(|(f, _)| *f <= split).count();
        let hist_obs = obs_tracks
            .get(&id)
            .map(|t| t.iter().filter(|(f, _)| *f <= split).count())
            .unwrap_or(0);
        if hist_truth < 2 || hist_obs < 2 {
            continue;
        }
        targets.insert(id, future.into_values().collect());
    }
    if targets.is_empty() {
        return Err(PredictorError::NoEvaluablePedestrians);
    }

    let tracking_nodes = build_nodes(&obs_tracks, split, history);
    if tracking_nodes.is_empty() {
        return Err(PredictorError::NoNodes("tracking"));
    }

    let needs_cluster = sources.contains(&PredictionSource::Cluster)
        || (sources.contains(&PredictionSource::Random) && keep_fraction.is_none());
    let cluster_state = if needs_cluster {
        let mut window = FrameSeries::new();
        for (&f, obs) in observations.frames.range(..=split) {
            for o in obs {
                window.push(f, *o);
            }
        }
        let max = window.max_frame().unwrap_or(0);
        let window_len = cfg.eval_period.max(2).min(max + 1);
        let frames: Vec<Vec<_>> = (0..window_len).map(|f| window.get(f).to_vec()).collect();
        let (mut engine, _) = Engine::initialize(&frames, cfg.clone(), false)?;
        for f in window_len..=max {
            engine.step(f, window.get(f))?;
        }
        Some(engine)
    } else {
        None
    };

    let mut outcomes = Vec::new();
    for &source in sources {
        let outcome = match source {
            PredictionSource::GroundTruth => {
                let nodes = build_nodes(&truth_tracks, split, history);
                score_own_track(source, &nodes, &targets, split, horizon, None)?
            }
            PredictionSource::Tracking => {
                score_own_track(source, &tracking_nodes, &targets, split, horizon, None)?
            }
            PredictionSource::Random => {
                let keep = match keep_fraction {
                    Some(k) => k,
                    None => {
                        let engine = cluster_state.as_ref().expect("cluster run present");
                        let n_clusters = engine
                            .clusters()
                            .values()
                            .filter(|c| c.track.samples.len() >= 2)
                            .count();
                        (n_clusters as f64 / tracking_nodes.len() as f64).clamp(0.01, 1.0)
                    }
                };
                let ids: Vec<PedestrianId> = tracking_nodes.keys().copied().collect();
                let mut kept: BTreeSet<PedestrianId> =
                    random_subsample(&ids, keep, seed)?.into_iter().collect();
                if kept.is_empty() {
                    kept.insert(ids[0]);
                }
                let nodes: BTreeMap<PedestrianId, Node<R>> = tracking_nodes
                    .iter()
                    .filter(|(id, _)| kept.contains(id))
                    .map(|(&id, n)| {
                        (
                            id,
                            Node {
                                history: n.history.clone(),
                                last_frame: n.last_frame,
                                last_point: n.last_point,
                            },
                        )
                    })
                    .collect();
                score_substituted(
                    source,
                    &nodes,
                    &tracking_nodes,
                    &targets,
                    split,
                    horizon,
                    Some(keep),
                )?
            }
            PredictionSource::Cluster => {
                let engine = cluster_state.as_ref().expect("cluster run present");
                let mut nodes: BTreeMap<ClusterId, Node<R>> = BTreeMap::new();
                for (&cid, cluster) in engine.clusters() {
                    let pts: Vec<Point2<R>> =
                        cluster.track.samples.iter().map(|s| s.point()).collect();
                    if pts.len() < 2 {
                        continue;
                    }
                    let tail = pts[pts.len().saturating_sub(history.max(2))..].to_vec();
                    let last_sample = cluster.track.last().unwrap();
                    nodes.insert(
                        cid,
                        Node {
                            history: tail,
                            last_frame: last_sample.frame,
                            last_point: last_sample.point(),
                        },
                    );
                }
                if nodes.is_empty() {
                    return Err(PredictorError::NoNodes("cluster"));
                }
                score_clusters(
                    source,
                    &nodes,
                    engine,
                    &tracking_nodes,
                    &targets,
                    split,
                    horizon,
                )?
            }
        };
        outcomes.push(outcome);
    }

    Ok(SubstitutionReport {
        split_frame: split,
        horizon,
        history,
        outcomes,
    })
}

fn mean_scores<R: Real>(
    scores: &[(R, R)],
    source: PredictionSource,
    nodes: usize,
    keep: Option<f64>,
    wall: Duration,
) -> SourceOutcome<R> {
    let n = R::from_usize(scores.len()).unwrap();
    let (ade_sum, fde_sum) = scores.iter().fold((R::zero(), R::zero()), |acc, (a, f)| {
        (acc.0 + *a, acc.1 + *f)
    });
    SourceOutcome {
        source,
        ade: ade_sum / n,
        fde: fde_sum / n,
        nodes,
        evaluated: scores.len(),
        keep_fraction: keep,
        predict_wall: wall,
        peak_rss_mib: peak_rss_mib(),
    }
}

fn score_own_track<R: Real>(
    source: PredictionSource,
    nodes: &BTreeMap<PedestrianId, Node<R>>,
    targets: &BTreeMap<PedestrianId, Vec<Point2<R>>>,
    split: FrameIndex,
    horizon: usize,
    keep: Option<f64>,
) -> Result<SourceOutcome<R>, PredictorError> {
    let (predictions, wall) = timed_pass(nodes, split, horizon)?;
    let pairs: Vec<(&PedestrianId, &Vec<Point2<R>>)> = targets.iter().collect();
    let scores: Vec<(R, R)> = pairs
        .par_iter()
        .map(|(id, future)| {
            let pred = predictions
                .get(id)
                .expect("evaluable pedestrian has a node");
            ade_fde(pred, future).expect("equal lengths")
        })
        .collect();
    Ok(mean_scores(&scores, source, nodes.len(), keep, wall))
}

fn score_substituted<R: Real>(
    source: PredictionSource,
    nodes: &BTreeMap<PedestrianId, Node<R>>,
    all_tracking: &BTreeMap<PedestrianId, Node<R>>,
    targets: &BTreeMap<PedestrianId, Vec<Point2<R>>>,
    split: FrameIndex,
    horizon: usize,
    keep: Option<f64>,
) -> Result<SourceOutcome<R>, PredictorError> {
    let (predictions, wall) = timed_pass(nodes, split, horizon)?;
    let pairs: Vec<(&PedestrianId, &Vec<Point2<R>>)> = targets.iter().collect();
    let scores: Vec<(R, R)> = pairs
        .par_iter()
        .map(|(id, future)| {
            let node_id = if predictions.contains_key(id) {
                **id
            } else {
                let here = all_tracking[id].last_point;
                nearest_key(here, nodes.iter().map(|(&nid, n)| (nid, n.last_point)))
                    .expect("kept set is non-empty")
            };
            ade_fde(&predictions[&node_id], future).expect("equal lengths")
        })
        .collect();
    Ok(mean_scores(&scores, source, nodes.len(), keep, wall))
}

fn score_clusters<R: Real>(
    source: PredictionSource,
    nodes: &BTreeMap<ClusterId, Node<R>>,
    engine: &Engine<R>,
    all_tracking: &BTreeMap<PedestrianId, Node<R>>,
    targets: &BTreeMap<PedestrianId, Vec<Point2<R>>>,
    split: FrameIndex,
    horizon: usize,
) -> Result<SourceOutcome<R>, PredictorError> {
    let (predictions, wall) = timed_pass(nodes, split, horizon)?;
    let membership = engine.membership();
    let pairs: Vec<(&PedestrianId, &Vec<Point2<R>>)> = targets.iter().collect();
    let scores: Vec<(R, R)> = pairs
        .par_iter()
        .map(|(id, future)| {
            let cid = membership
                .get(id)
                .copied()
                .filter(|cid| predictions.contains_key(cid))
                .or_else(|| {
                    let here = all_tracking[id].last_point;
                    nearest_key(here, nodes.iter().map(|(&cid, n)| (cid, n.last_point)))
                })
                .expect("at least one cluster node");
            ade_fde(&predictions[&cid], future).expect("equal lengths")
        })
        .collect();
    Ok(mean_scores(&scores, source, nodes.len(), None, wall))
}
