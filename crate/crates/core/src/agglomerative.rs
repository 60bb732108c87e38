//! Threshold-cut agglomerative clustering with complete linkage, plus the
//! two-stage nested composition: direction first, then location within each
//! direction group.
//!
//! Complete linkage turns the cut threshold into a hard intra-cluster
//! diameter bound, which is exactly what both feature constraints demand.
//! The naive cubic merge loop is fine at the cluster sizes seen here.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::EngineConfig;
use crate::geometry::{euclidean_distance, smallest_angular_distance};
use crate::types::PedestrianState;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cannot cluster an empty input")]
    EmptyInput,
    #[error("threshold must be positive")]
    NonPositiveThreshold,
}

/// A partition of the input: `labels[i]` is the dense cluster label of input
/// index `i`. Labels are assigned in order of each cluster's smallest member
/// index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    /// Member indices per cluster, ordered by label.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (idx, &label) in self.labels.iter().enumerate() {
            groups[label].push(idx);
        }
        groups
    }

    fn from_groups(n: usize, mut groups: Vec<Vec<usize>>) -> Self {
        // dense labels ordered by smallest member index
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_unstable_by_key(|g| g[0]);
        let mut labels = vec![0usize; n];
        for (label, group) in groups.iter().enumerate() {
            for &idx in group {
                labels[idx] = label;
            }
        }
        Self {
            labels,
            n_clusters: groups.len(),
        }
    }
}

/// Bottom-up complete-linkage clustering over `items`, merging while the
/// smallest linkage distance stays within `threshold`.
///
/// Equal linkage distances are broken by the lexicographically smallest
/// (min member index, max member index... ) pair key, so a given input always
/// produces the same partition.
pub fn agglomerative_threshold<R: Real, T>(
    items: &[T],
    dist: impl Fn(&T, &T) -> R,
    threshold: R,
) -> Result<ClusterAssignment, ClusterError> {
    let n = items.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if !(threshold > R::zero()) {
        return Err(ClusterError::NonPositiveThreshold);
    }

    // pairwise point distances, then Lance-Williams style updates:
    // complete linkage D(A∪B, C) = max(D(A,C), D(B,C))
    let mut d = vec![vec![R::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(&items[i], &items[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }

    let mut alive: Vec<bool> = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // cluster key = smallest original index it contains
    let mut key: Vec<usize> = (0..n).collect();

    loop {
        let mut best: Option<(R, (usize, usize), usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let pair_key = (key[i].min(key[j]), key[i].max(key[j]));
                let better = match &best {
                    None => true,
                    Some((bd, bk, _, _)) => d[i][j] < *bd || (d[i][j] == *bd && pair_key < *bk),
                };
                if better {
                    best = Some((d[i][j], pair_key, i, j));
                }
            }
        }
        let Some((dist_min, _, i, j)) = best else {
            break;
        };
        if dist_min > threshold {
            break;
        }
        // merge j into i
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        alive[j] = false;
        key[i] = key[i].min(key[j]);
        for k in 0..n {
            if k != i && alive[k] {
                let v = if d[i][k] > d[j][k] { d[i][k] } else { d[j][k] };
                d[i][k] = v;
                d[k][i] = v;
            }
        }
    }

    let groups: Vec<Vec<usize>> = (0..n).filter(|&i| alive[i]).map(|i| members[i].clone()).collect();
    Ok(ClusterAssignment::from_groups(n, groups))
}

/// Two-stage nested clustering of pedestrians.
///
/// Stage 1 groups by smallest angular distance between headings under
/// `theta_th`; stage 2 re-clusters each direction group by Euclidean distance
/// under `d_th`. Pedestrians without a defined heading cannot violate a
/// direction constraint, so they form their own direction group and are split
/// by location only. Singleton clusters are allowed.
pub fn nested_cluster<R: Real>(
    peds: &[PedestrianState<R>],
    cfg: &EngineConfig<R>,
) -> Result<ClusterAssignment, ClusterError> {
    if peds.is_empty() {
        return Err(ClusterError::EmptyInput);
    }

    let mut with_heading: Vec<usize> = Vec::new();
    let mut without_heading: Vec<usize> = Vec::new();
    for (idx, p) in peds.iter().enumerate() {
        if p.theta.is_some() {
            with_heading.push(idx);
        } else {
            without_heading.push(idx);
        }
    }

    // direction groups hold original indices
    let mut direction_groups: Vec<Vec<usize>> = Vec::new();
    if !with_heading.is_empty() {
        let thetas: Vec<R> = with_heading
            .iter()
            .map(|&i| peds[i].theta.expect("heading present"))
            .collect();
        let stage1 = agglomerative_threshold(
            &thetas,
            |a, b| smallest_angular_distance(*a, *b),
            cfg.theta_th,
        )?;
        for group in stage1.groups() {
            direction_groups.push(group.into_iter().map(|i| with_heading[i]).collect());
        }
    }
    if !without_heading.is_empty() {
        direction_groups.push(without_heading);
    }

    let mut final_groups: Vec<Vec<usize>> = Vec::new();
    for group in direction_groups {
        let points: Vec<_> = group.iter().map(|&i| peds[i].point()).collect();
        let stage2 = agglomerative_threshold(&points, |a, b| euclidean_distance(*a, *b), cfg.d_th)?;
        for sub in stage2.groups() {
            final_groups.push(sub.into_iter().map(|i| group[i]).collect());
        }
    }

    Ok(ClusterAssignment::from_groups(peds.len(), final_groups))
}

/// Canonical form for comparing partitions regardless of labeling: the set of
/// member-index groups, each sorted, ordered by first element.
pub fn canonical_groups(assignment: &ClusterAssignment) -> Vec<Vec<usize>> {
    assignment.groups()
}

/// Map-based view used by callers that key clusters by label.
pub fn label_map(assignment: &ClusterAssignment) -> BTreeMap<usize, Vec<usize>> {
    assignment
        .groups()
        .into_iter()
        .enumerate()
        .map(|(l, g)| (l, g))
        .collect()
}


#[cfg(test)]
mod tests {
    use super::oracle::complete_linkage_oracle;
    use super::*;
    use crate::geometry::Point2;
    use crate::types::{PedestrianId, PedestrianState};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ped(idx: u64, x: f64, y: f64, theta: Option<f64>) -> PedestrianState<f64> {
        let (vx, vy) = match theta {
            Some(t) => (t.to_radians().cos(), t.to_radians().sin()),
            None => (0.0, 0.0),
        };
        PedestrianState {
            id: PedestrianId(idx),
            frame: 0,
            x,
            y,
            vx,
            vy,
            theta,
            has_history: theta.is_some(),
            cluster: None,
        }
    }

    #[test]
    fn gap_far_beyond_threshold_splits() {
        let points = [0.0f64, 1.0, 100.0];
        let got = agglomerative_threshold(&points, |a, b| (a - b).abs(), 5.0).unwrap();
        assert_eq!(got.n_clusters, 2);
        assert_eq!(got.labels, vec![0, 0, 1]);
    }

    #[test]
    fn single_point_is_singleton() {
        let points = [42.0f64];
        let got = agglomerative_threshold(&points, |a, b| (a - b).abs(), 5.0).unwrap();
        assert_eq!(got.n_clusters, 1);
        assert_eq!(got.labels, vec![0]);
    }

    #[test]
    fn empty_input_errors() {
        let points: [f64; 0] = [];
        assert_eq!(
            agglomerative_threshold(&points, |a, b| (a - b).abs(), 5.0),
            Err(ClusterError::EmptyInput)
        );
    }

    #[test]
    fn eight_random_planar_points_match_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        let points: Vec<Point2<f64>> = (0..8)
            .map(|_| Point2::new(rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0)))
            .collect();
        let got =
            agglomerative_threshold(&points, |a, b| euclidean_distance(*a, *b), 10.0).unwrap();
        let want = complete_linkage_oracle(&points, |a, b| euclidean_distance(*a, *b), 10.0);
        assert_eq!(got, want);
    }

    #[test]
    fn comoving_blobs_split_by_location() {
        // five pedestrians sharing a heading, two spatial blobs far apart
        let peds = vec![
            ped(1, 0.0, 0.0, Some(90.0)),
            ped(2, 5.0, 0.0, Some(90.0)),
            ped(3, 0.0, 5.0, Some(90.0)),
            ped(4, 500.0, 0.0, Some(90.0)),
            ped(5, 505.0, 0.0, Some(90.0)),
        ];
        let cfg = EngineConfig::<f64>::default();
        let got = nested_cluster(&peds, &cfg).unwrap();
        assert_eq!(got.n_clusters, 2);
        assert_eq!(got.labels[0], got.labels[1]);
        assert_eq!(got.labels[0], got.labels[2]);
        assert_eq!(got.labels[3], got.labels[4]);
        assert_ne!(got.labels[0], got.labels[3]);
    }

    #[test]
    fn lone_pedestrian_gets_own_cluster() {
        let peds = vec![
            ped(1, 0.0, 0.0, Some(90.0)),
            ped(2, 5.0, 0.0, Some(90.0)),
            ped(6, 30.0, 30.0, Some(270.0)),
        ];
        let cfg = EngineConfig::<f64>::default();
        let got = nested_cluster(&peds, &cfg).unwrap();
        assert_eq!(got.n_clusters, 2);
        assert_eq!(got.labels[0], got.labels[1]);
        assert_ne!(got.labels[2], got.labels[0]);
    }

    #[test]
    fn three_synthetic_groups_recovered_exactly() {
        // 12 pedestrians, 3 groups: headings 0/120/240, spread < d_th/4,
        // separation > 3*d_th; any other partition violates a threshold.
        let cfg = EngineConfig::<f64>::default();
        let mut rng = StdRng::seed_from_u64(11);
        let centers = [(0.0, 0.0), (1000.0, 0.0), (0.0, 1000.0)];
        let headings = [0.0, 120.0, 240.0];
        let mut peds = Vec::new();
        for g in 0..3 {
            for m in 0..4 {
                let dx = rng.gen_range(-15.0..15.0);
                let dy = rng.gen_range(-15.0..15.0);
                peds.push(ped(
                    (g * 4 + m) as u64,
                    centers[g].0 + dx,
                    centers[g].1 + dy,
                    Some(headings[g]),
                ));
            }
        }
        let got = nested_cluster(&peds, &cfg).unwrap();
        assert_eq!(got.n_clusters, 3);
        for g in 0..3 {
            for m in 1..4 {
                assert_eq!(got.labels[g * 4], got.labels[g * 4 + m]);
            }
        }

        // brute-force both stages for the same instance
        let thetas: Vec<f64> = peds.iter().map(|p| p.theta.unwrap()).collect();
        let stage1 =
            complete_linkage_oracle(&thetas, |a, b| smallest_angular_distance(*a, *b), 50.0);
        assert_eq!(stage1.n_clusters, 3);
    }

    #[test]
    fn undefined_headings_cluster_by_location_only() {
        let peds = vec![
            ped(1, 0.0, 0.0, None),
            ped(2, 10.0, 0.0, None),
            ped(3, 900.0, 0.0, None),
        ];
        let cfg = EngineConfig::<f64>::default();
        let got = nested_cluster(&peds, &cfg).unwrap();
        assert_eq!(got.n_clusters, 2);
        assert_eq!(got.labels[0], got.labels[1]);
    }

    proptest! {
        #[test]
        fn matches_oracle_on_small_instances(
            seed in 0u64..200,
            n in 1usize..=10,
            threshold in 1.0..30.0f64,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let points: Vec<Point2<f64>> = (0..n)
                .map(|_| Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect();
            let got = agglomerative_threshold(&points, |a, b| euclidean_distance(*a, *b), threshold).unwrap();
            let want = complete_linkage_oracle(&points, |a, b| euclidean_distance(*a, *b), threshold);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn diameter_bound_holds(seed in 0u64..300, n in 2usize..=12, threshold in 5.0..50.0f64) {
            let mut rng = StdRng::seed_from_u64(seed);
            let points: Vec<Point2<f64>> = (0..n)
                .map(|_| Point2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)))
                .collect();
            let got = agglomerative_threshold(&points, |a, b| euclidean_distance(*a, *b), threshold).unwrap();
            for group in got.groups() {
                for (ai, &a) in group.iter().enumerate() {
                    for &b in &group[ai + 1..] {
                        prop_assert!(euclidean_distance(points[a], points[b]) <= threshold);
                    }
                }
            }
        }

        #[test]
        fn permutation_invariant(seed in 0u64..200, n in 2usize..=9) {
            let mut rng = StdRng::seed_from_u64(seed);
            let points: Vec<Point2<f64>> = (0..n)
                .map(|_| Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect();
            let threshold = 20.0;
            let base = agglomerative_threshold(&points, |a, b| euclidean_distance(*a, *b), threshold).unwrap();

            // rotate the input and map groups back to original indices
            let rot = 1 + (seed as usize % n.max(1));
            let permuted: Vec<Point2<f64>> = (0..n).map(|i| points[(i + rot) % n]).collect();
            let shuffled = agglomerative_threshold(&permuted, |a, b| euclidean_distance(*a, *b), threshold).unwrap();

            let mut mapped: Vec<Vec<usize>> = shuffled
                .groups()
                .into_iter()
                .map(|g| {
                    let mut orig: Vec<usize> = g.into_iter().map(|i| (i + rot) % n).collect();
                    orig.sort_unstable();
                    orig
                })
                .collect();
            mapped.sort();
            let mut want = base.groups();
            want.sort();
            prop_assert_eq!(mapped, want);
        }

        #[test]
        fn nested_respects_both_thresholds(seed in 0u64..150, n in 2usize..=12) {
            let mut rng = StdRng::seed_from_u64(seed ^ 0xabcd);
            let cfg = EngineConfig::<f64>::default();
            let peds: Vec<PedestrianState<f64>> = (0..n)
                .map(|i| ped(
                    i as u64,
                    rng.gen_range(0.0..400.0),
                    rng.gen_range(0.0..400.0),
                    Some(rng.gen_range(0.0..360.0)),
                ))
                .collect();
            let got = nested_cluster(&peds, &cfg).unwrap();
            for group in got.groups() {
                for (ai, &a) in group.iter().enumerate() {
                    for &b in &group[ai + 1..] {
                        prop_assert!(euclidean_distance(peds[a].point(), peds[b].point()) <= cfg.d_th);
                        prop_assert!(smallest_angular_distance(
                            peds[a].theta.unwrap(),
                            peds[b].theta.unwrap()
                        ) <= cfg.theta_th);
                    }
                }
            }
        }
    }
}
