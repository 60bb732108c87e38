//! Planar and angular distance primitives.
//!
//! Angles are degrees, counterclockwise from the +x axis, always wrapped into
//! `[0, 360)`. Only angular differences matter downstream, so any consistent
//! convention would do; this one keeps the direction threshold readable.

use crate::Real;

/// A point in scene pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2<R> {
    pub x: R,
    pub y: R,
}

impl<R: Real> Point2<R> {
    pub fn new(x: R, y: R) -> Self {
        Self { x, y }
    }
}

/// Wrap an angle in degrees into `[0, 360)`.
pub fn wrap_degrees<R: Real>(a: R) -> R {
    let full = R::of(360.0);
    let w = a - full * (a / full).floor();
    // floor rounding can land exactly on 360
    if w >= full {
        w - full
    } else {
        w
    }
}

/// Component-wise `curr - prev`.
pub fn direction_vector<R: Real>(prev: Point2<R>, curr: Point2<R>) -> (R, R) {
    (curr.x - prev.x, curr.y - prev.y)
}

/// Four-quadrant arctangent of `(vx, vy)` in degrees `[0, 360)`.
///
/// A zero vector has no direction and yields `None`.
pub fn direction_angle<R: Real>(vx: R, vy: R) -> Option<R> {
    if vx == R::zero() && vy == R::zero() {
        return None;
    }
    Some(wrap_degrees(vy.atan2(vx).to_degrees()))
}

/// Smallest angular distance between two angles in degrees, in `[0, 180]`.
pub fn smallest_angular_distance<R: Real>(a: R, b: R) -> R {
    let half = R::of(180.0);
    (wrap_degrees(a - b + half) - half).abs()
}

/// Euclidean distance in pixels.
pub fn euclidean_distance<R: Real>(a: Point2<R>, b: Point2<R>) -> R {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Circular mean of angles in degrees: direction of the summed unit vectors.
///
/// `None` when no angle is supplied or the unit vectors cancel exactly.
pub fn circular_mean_degrees<R: Real>(angles: impl Iterator<Item = R>) -> Option<R> {
    let mut sx = R::zero();
    let mut sy = R::zero();
    let mut any = false;
    for a in angles {
        let rad = a.to_radians();
        sx = sx + rad.cos();
        sy = sy + rad.sin();
        any = true;
    }
    if !any {
        return None;
    }
    direction_angle(sx, sy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn direction_vector_is_subtraction() {
        assert_eq!(
            direction_vector(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)),
            (3.0, 4.0)
        );
        assert_eq!(
            direction_vector(Point2::new(5.0, 5.0), Point2::new(5.0, 5.0)),
            (0.0, 0.0)
        );
        assert_eq!(
            direction_vector(Point2::new(2.0, 1.0), Point2::new(1.0, 1.0)),
            (-1.0, 0.0)
        );
    }

    #[test]
    fn direction_angle_quadrants() {
        assert_abs_diff_eq!(direction_angle(1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(direction_angle(0.0, 1.0).unwrap(), 90.0);
        assert_abs_diff_eq!(direction_angle(-1.0, -1.0).unwrap(), 225.0);
        assert_eq!(direction_angle(0.0, 0.0), None::<f64>);
    }

    #[test]
    fn angular_distance_examples() {
        assert_abs_diff_eq!(smallest_angular_distance(350.0, 10.0), 20.0);
        assert_abs_diff_eq!(smallest_angular_distance(123.4, 123.4), 0.0);
        assert_abs_diff_eq!(smallest_angular_distance(0.0, 180.0), 180.0);
    }

    #[test]
    fn euclidean_examples() {
        assert_abs_diff_eq!(
            euclidean_distance(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)),
            5.0
        );
        assert_abs_diff_eq!(
            euclidean_distance(Point2::new(7.0, 7.0), Point2::new(7.0, 7.0)),
            0.0
        );
        assert_abs_diff_eq!(
            euclidean_distance(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)),
            2.0_f64.sqrt()
        );
    }

    #[test]
    fn wraparound_headings_average_to_zero() {
        let mean = circular_mean_degrees([350.0, 10.0].into_iter()).unwrap();
        assert!(mean < 1e-9 || (360.0 - mean) < 1e-9, "mean = {mean}");
    }

    #[test]
    fn f32_angles_behave() {
        assert!((smallest_angular_distance(350.0_f32, 10.0) - 20.0).abs() < 1e-4);
        assert_eq!(direction_angle(0.0_f32, 0.0), None);
    }

    proptest! {
        #[test]
        fn angular_distance_symmetric_and_bounded(a in -720.0..720.0f64, b in -720.0..720.0f64) {
            let d1 = smallest_angular_distance(a, b);
            let d2 = smallest_angular_distance(b, a);
            prop_assert!((d1 - d2).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&d1));
        }

        #[test]
        fn angular_distance_period_invariant(a in 0.0..360.0f64, b in 0.0..360.0f64, k in -3i32..=3) {
            let d1 = smallest_angular_distance(a, b);
            let d2 = smallest_angular_distance(a + 360.0 * k as f64, b);
            prop_assert!((d1 - d2).abs() < 1e-9);
        }

        #[test]
        fn angular_distance_is_plain_difference_when_close(a in 0.0..360.0f64, d in -180.0..=180.0f64) {
            let b = a + d;
            prop_assert!((smallest_angular_distance(a, b) - d.abs()).abs() < 1e-9);
        }

        #[test]
        fn rotation_adds_to_direction_angle(
            px in -100.0..100.0f64, py in -100.0..100.0f64,
            qx in -100.0..100.0f64, qy in -100.0..100.0f64,
            phi in 0.0..360.0f64,
        ) {
            let (vx, vy) = direction_vector(Point2::new(px, py), Point2::new(qx, qy));
            prop_assume!(vx != 0.0 || vy != 0.0);
            prop_assume!(vx.hypot(vy) > 1e-6);
            let base = direction_angle(vx, vy).unwrap();

            let rad = phi.to_radians();
            let rot = |x: f64, y: f64| (x * rad.cos() - y * rad.sin(), x * rad.sin() + y * rad.cos());
            let (rpx, rpy) = rot(px, py);
            let (rqx, rqy) = rot(qx, qy);
            let (rvx, rvy) = direction_vector(Point2::new(rpx, rpy), Point2::new(rqx, rqy));
            let rotated = direction_angle(rvx, rvy).unwrap();

            prop_assert!(smallest_angular_distance(rotated, wrap_degrees(base + phi)) < 1e-6);
        }
    }
}
