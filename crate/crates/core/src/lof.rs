//! Local Outlier Factor scoring and outlier flagging over cluster members'
//! joint direction/location features.
//!
//! Classic LOF: k-distance, reachability distance
//! `reach_k(a, b) = max(k_dist(b), d(a, b))`, local reachability density
//! `lrd = |N_k| / sum(reach)`, and the score as the mean `lrd(neighbor) /
//! lrd(self)` over the (tie-inclusive) k-neighborhood. Points whose
//! neighborhood reach sum collapses to zero (duplicates) get a large finite
//! sentinel density, so co-duplicated points score exactly 1 and scores stay
//! finite whenever two distinct points exist.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::config::EngineConfig;
use crate::types::{PedestrianId, PedestrianState};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LofError {
    #[error("insufficient members: need at least 2 points")]
    InsufficientMembers,
    #[error("neighbor count k={k} out of range for n={n}")]
    BadNeighborCount { k: usize, n: usize },
}

/// Per-member scores plus the flagged subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LofResult<R> {
    pub scores: Vec<R>,
    pub outliers: Vec<usize>,
}

fn lrd_sentinel<R: Real>() -> R {
    R::max_value().sqrt()
}

/// LOF scores for `features` with neighborhood size `k`.
pub fn lof_scores<R: Real>(features: &[Vec<R>], k: usize) -> Result<Vec<R>, LofError> {
    let n = features.len();
    if n < 2 {
        return Err(LofError::InsufficientMembers);
    }
    if k < 1 || k > n - 1 {
        return Err(LofError::BadNeighborCount { k, n });
    }

    let mut d = vec![vec![R::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = R::zero();
            for (a, b) in features[i].iter().zip(features[j].iter()) {
                let diff = *a - *b;
                s = s + diff * diff;
            }
            let v = s.sqrt();
            d[i][j] = v;
            d[j][i] = v;
        }
    }

    // k-distance and tie-inclusive neighborhood per point
    let mut k_dist = vec![R::zero(); n];
    let mut neighborhoods: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[i][a].partial_cmp(&d[i][b]).unwrap().then(a.cmp(&b)));
        k_dist[i] = d[i][order[k - 1]];
        let neigh: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&j| d[i][j] <= k_dist[i])
            .collect();
        neighborhoods.push(neigh);
    }

    let mut lrd = vec![R::zero(); n];
    for i in 0..n {
        let mut reach_sum = R::zero();
        for &j in &neighborhoods[i] {
            let reach = if k_dist[j] > d[i][j] { k_dist[j] } else { d[i][j] };
            reach_sum = reach_sum + reach;
        }
        lrd[i] = if reach_sum == R::zero() {
            lrd_sentinel()
        } else {
            R::from_usize(neighborhoods[i].len()).unwrap() / reach_sum
        };
    }

    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut ratio_sum = R::zero();
        for &j in &neighborhoods[i] {
            ratio_sum = ratio_sum + lrd[j] / lrd[i];
        }
        scores.push(ratio_sum / R::from_usize(neighborhoods[i].len()).unwrap());
    }
    Ok(scores)
}

/// Feature vector for one member: location normalized by `d_th`, heading
/// embedded as a weighted unit vector. The circular embedding avoids the
/// 359-vs-1 degree discontinuity; a member without a heading embeds as the
/// zero vector.
pub fn member_features<R: Real>(p: &PedestrianState<R>, cfg: &EngineConfig<R>) -> Vec<R> {
    let (hx, hy) = match p.theta {
        Some(t) => {
            let rad = t.to_radians();
            (rad.cos(), rad.sin())
        }
        None => (R::zero(), R::zero()),
    };
    vec![
        p.x / cfg.d_th,
        p.y / cfg.d_th,
        cfg.theta_norm * hx,
        cfg.theta_norm * hy,
    ]
}

/// Evaluate one cluster's members, returning the ids flagged as outliers.
///
/// Clusters with fewer than 3 members are skipped (no meaningful local
/// density). At most `ceil(contamination * n)` members are flagged, picked
/// by descending score among those scoring above 1 (with a small numeric
/// guard so uniform clusters flag nobody).
///
/// The neighborhood is `floor(lof_neighbor_fraction * n)` capped at `n - 2`:
/// with k = n - 1 every reachability distance collapses to the neighbor's
/// own k-distance, densities equalize, and no outlier can score high.
pub fn evaluate_cluster<R: Real>(
    members: &[PedestrianState<R>],
    cfg: &EngineConfig<R>,
) -> BTreeSet<PedestrianId> {
    let n = members.len();
    if n < 3 {
        return BTreeSet::new();
    }
    let features: Vec<Vec<R>> = members.iter().map(|m| member_features(m, cfg)).collect();
    let frac = cfg.lof_neighbor_fraction.to_f64().unwrap();
    let k = ((frac * n as f64).floor() as usize).clamp(1, n - 2);
    let scores = lof_scores(&features, k).expect("n >= 3 and k in range");

    let cap = (cfg.lof_contamination.to_f64().unwrap() * n as f64).ceil() as usize;
    let gate = R::one() + R::epsilon().sqrt();
    let mut ranked: Vec<(usize, R)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, s)| *s > gate)
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(members[a.0].id.cmp(&members[b.0].id))
    });
    ranked
        .into_iter()
        .take(cap)
        .map(|(i, _)| members[i].id)
        .collect()
}


#[cfg(test)]
mod tests {
    use super::oracle::lof_oracle;
    use super::*;
    use crate::types::PedestrianId;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn points(raw: &[(f64, f64)]) -> Vec<Vec<f64>> {
        raw.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn unit_square_corners_are_uniform() {
        let fs = points(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        let scores = lof_scores(&fs, 2).unwrap();
        for s in scores {
            assert!((s - 1.0).abs() < 1e-9, "score {s}");
        }
    }

    #[test]
    fn far_point_scores_highest() {
        let fs = points(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (10.0, 10.0)]);
        let scores = lof_scores(&fs, 2).unwrap();
        let oracle = lof_oracle(&fs, 2);
        for (a, b) in scores.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let far = scores[4];
        for s in &scores[..4] {
            assert!(far > *s);
        }
        assert!(far > 1.0);
    }

    #[test]
    fn insufficient_members_error() {
        let fs = points(&[(0.0, 0.0)]);
        assert_eq!(lof_scores(&fs, 1), Err(LofError::InsufficientMembers));
    }

    #[test]
    fn duplicates_score_one() {
        let fs = points(&[(2.0, 2.0); 5]);
        let scores = lof_scores(&fs, 3).unwrap();
        for s in scores {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn finite_scores_with_two_distinct_points() {
        let fs = points(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let scores = lof_scores(&fs, 1).unwrap();
        for s in scores {
            assert!(s.is_finite());
        }
    }

    fn member(id: u64, x: f64, y: f64, theta: Option<f64>) -> PedestrianState<f64> {
        PedestrianState {
            id: PedestrianId(id),
            frame: 0,
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            theta,
            has_history: true,
            cluster: None,
        }
    }

    #[test]
    fn colocated_comoving_members_flag_nobody() {
        let cfg = EngineConfig::<f64>::default();
        let members: Vec<_> = (0..5).map(|i| member(i, 10.0, 20.0, Some(45.0))).collect();
        assert!(evaluate_cluster(&members, &cfg).is_empty());
    }

    #[test]
    fn heading_deviator_is_flagged() {
        let cfg = EngineConfig::<f64>::default();
        // tight co-moving group, one member turned away
        let mut members: Vec<_> = (0..4)
            .map(|i| member(i, 10.0 + i as f64, 20.0, Some(90.0)))
            .collect();
        members.push(member(9, 12.0, 21.0, Some(250.0)));
        let flagged = evaluate_cluster(&members, &cfg);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), vec![PedestrianId(9)]);
    }

    #[test]
    fn displaced_member_is_flagged() {
        let cfg = EngineConfig::<f64>::default();
        let mut members = Vec::new();
        let mut rng = StdRng::seed_from_u64(3);
        for i in 0..9 {
            members.push(member(
                i,
                50.0 + rng.gen_range(-5.0..5.0),
                50.0 + rng.gen_range(-5.0..5.0),
                Some(0.0),
            ));
        }
        members.push(member(99, 50.0 + 3.0 * cfg.d_th, 50.0, Some(0.0)));
        let flagged = evaluate_cluster(&members, &cfg);
        assert!(flagged.contains(&PedestrianId(99)));
    }

    #[test]
    fn small_clusters_skip_evaluation() {
        let cfg = EngineConfig::<f64>::default();
        let members = vec![member(0, 0.0, 0.0, Some(0.0)), member(1, 900.0, 900.0, Some(180.0))];
        assert!(evaluate_cluster(&members, &cfg).is_empty());
    }

    proptest! {
        #[test]
        fn matches_oracle(seed in 0u64..200, n in 2usize..=20) {
            let mut rng = StdRng::seed_from_u64(seed);
            let fs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)])
                .collect();
            let k = rng.gen_range(1..=(n - 1).max(1));
            let got = lof_scores(&fs, k).unwrap();
            let want = lof_oracle(&fs, k);
            for (a, b) in got.iter().zip(want.iter()) {
                prop_assert!((a - b).abs() < 1e-9, "impl {} vs oracle {}", a, b);
            }
        }

        #[test]
        fn full_neighborhood_matches_oracle(seed in 0u64..100, n in 3usize..=12) {
            let mut rng = StdRng::seed_from_u64(seed ^ 0x55);
            let fs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)])
                .collect();
            let got = lof_scores(&fs, n - 1).unwrap();
            let want = lof_oracle(&fs, n - 1);
            for (a, b) in got.iter().zip(want.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn scale_invariant(seed in 0u64..100, scale in 0.1..50.0f64) {
            let mut rng = StdRng::seed_from_u64(seed);
            let n = rng.gen_range(4..=12);
            let fs: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
                .collect();
            let scaled: Vec<Vec<f64>> = fs.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
            let k = 3.min(n - 1);
            let a = lof_scores(&fs, k).unwrap();
            let b = lof_scores(&scaled, k).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn flag_count_bounded(seed in 0u64..100, n in 3usize..=25) {
            let mut rng = StdRng::seed_from_u64(seed ^ 0x99);
            let cfg = EngineConfig::<f64>::default();
            let members: Vec<PedestrianState<f64>> = (0..n)
                .map(|i| member(
                    i as u64,
                    rng.gen_range(0.0..500.0),
                    rng.gen_range(0.0..500.0),
                    Some(rng.gen_range(0.0..360.0)),
                ))
                .collect();
            let flagged = evaluate_cluster(&members, &cfg);
            let cap = (cfg.lof_contamination * n as f64).ceil() as usize;
            prop_assert!(flagged.len() <= cap);
        }
    }
}
