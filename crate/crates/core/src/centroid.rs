//! Centroid initialization and the delta-displacement track update.
//!
//! A fresh cluster starts at the arithmetic mean of its member locations;
//! from then on the centroid advances by the mean displacement of the members
//! present at both of the last two frames, never by re-averaging positions.
//! That keeps the track continuous when members join, leave, or drop out,
//! and with a fixed roster the deltas telescope back to the running mean.

use thiserror::Error;

use crate::geometry::{circular_mean_degrees, direction_angle};
use crate::types::{CentroidSample, FrameIndex, PedestrianState};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CentroidError {
    #[error("cannot initialize a centroid from zero members")]
    EmptyMembers,
}

/// Mean location of the members; heading is the circular mean of the member
/// headings (mean of unit vectors), since arithmetic averaging of wrapped
/// angles is wrong across the 0/360 seam.
pub fn init_centroid<R: Real>(
    members: &[PedestrianState<R>],
    frame: FrameIndex,
) -> Result<CentroidSample<R>, CentroidError> {
    if members.is_empty() {
        return Err(CentroidError::EmptyMembers);
    }
    let n = R::from_usize(members.len()).unwrap();
    let mut sx = R::zero();
    let mut sy = R::zero();
    for m in members {
        sx = sx + m.x;
        sy = sy + m.y;
    }
    let theta = circular_mean_degrees(members.iter().filter_map(|m| m.theta));
    Ok(CentroidSample {
        frame,
        x: sx / n,
        y: sy / n,
        theta,
        members: members.len(),
    })
}

/// Advance a centroid by the mean of `displacements` (members present at both
/// of the last two frames). With no displacements the centroid coasts on
/// `last_delta`. The direction angle is recomputed from the location step;
/// a zero step keeps the previous heading.
///
/// Returns the new sample and the delta that produced it.
pub fn delta_update<R: Real>(
    prev: &CentroidSample<R>,
    displacements: &[(R, R)],
    last_delta: (R, R),
    frame: FrameIndex,
    members: usize,
) -> (CentroidSample<R>, (R, R)) {
    let delta = if displacements.is_empty() {
        last_delta
    } else {
        let n = R::from_usize(displacements.len()).unwrap();
        let mut dx = R::zero();
        let mut dy = R::zero();
        for (mx, my) in displacements {
            dx = dx + *mx;
            dy = dy + *my;
        }
        (dx / n, dy / n)
    };
    let x = prev.x + delta.0;
    let y = prev.y + delta.1;
    let theta = direction_angle(delta.0, delta.1).or(prev.theta);
    (
        CentroidSample {
            frame,
            x,
            y,
            theta,
            members,
        },
        delta,
    )
}
