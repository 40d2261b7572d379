//! Planar rigid transforms and oriented rectangles.
//!
//! Every footprint in the simulator (vehicles, buildings) is an [`OrientedRect`]. Overlap
//! uses the separating-axis test with a strict positive-area criterion, and ray/segment
//! queries use the slab method in the rectangle's own frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Overlap along a separating axis must exceed this (meters) to count as interpenetration.
pub const OVERLAP_EPS: f64 = 1e-9;

/// Wraps an angle to `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = PI - (PI - theta).rem_euclid(2.0 * PI);
    // rem_euclid can return exactly 2*pi for tiny negative inputs
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// A rigid transform `(x, y, theta)`. Read as "the pose of a child frame expressed in a
/// parent frame": `transform_point` maps child coordinates into the parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.x, s * p[0] + c * p[1] + self.y]
    }

    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// `self ∘ other`: the pose of `other`'s child frame in `self`'s parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.transform_point(other.translation());
        Pose2::new(t[0], t[1], self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Pose of frame `child` expressed in the frame `self`, when both are given in a common
    /// parent (global) frame.
    pub fn relative(&self, child: &Pose2) -> Pose2 {
        self.inverse().compose(child)
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangle with arbitrary heading. `length` runs along the heading axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: [f64; 2],
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: [f64; 2], heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length,
            width,
        }
    }

    pub fn from_pose(pose: &Pose2, length: f64, width: f64) -> Self {
        Self::new(pose.translation(), pose.theta, length, width)
    }

    pub fn pose(&self) -> Pose2 {
        Pose2 {
            x: self.center[0],
            y: self.center[1],
            theta: self.heading,
        }
    }

    /// Same rectangle grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..*self
        }
    }

    fn half_extents(&self) -> [f64; 2] {
        [0.5 * self.length, 0.5 * self.width]
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [hl, hw] = self.half_extents();
        let pose = self.pose();
        [
            pose.transform_point([hl, hw]),
            pose.transform_point([-hl, hw]),
            pose.transform_point([-hl, -hw]),
            pose.transform_point([hl, -hw]),
        ]
    }

    /// Closed containment test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let local = self.pose().inverse_transform_point(p);
        let [hl, hw] = self.half_extents();
        local[0].abs() <= hl && local[1].abs() <= hw
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn aabb(&self) -> ([f64; 2], [f64; 2]) {
        let corners = self.corners();
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo[0] = lo[0].min(c[0]);
            lo[1] = lo[1].min(c[1]);
            hi[0] = hi[0].max(c[0]);
            hi[1] = hi[1].max(c[1]);
        }
        (lo, hi)
    }

    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// True iff the interiors intersect (positive-area overlap). Shared edges or corners do
    /// not count.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let dx = self.center[0] - other.center[0];
        let dy = self.center[1] - other.center[1];
        let reach = self.circumradius() + other.circumradius();
        if dx * dx + dy * dy >= reach * reach {
            return false;
        }
        let a = self.corners();
        let b = other.corners();
        for axis in self.axes().iter().chain(other.axes().iter()) {
            let (amin, amax) = project(&a, axis);
            let (bmin, bmax) = project(&b, axis);
            if amax.min(bmax) - amin.max(bmin) <= OVERLAP_EPS {
                return false;
            }
        }
        true
    }

    /// Parametric entry interval `[t_near, t_far]` of the line `origin + t * dir` through the
    /// rectangle, or `None` if the line misses it.
    fn slab(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<(f64, f64)> {
        let pose = self.pose();
        let o = pose.inverse_transform_point(origin);
        let (s, c) = self.heading.sin_cos();
        let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1]];
        let half = self.half_extents();
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..2 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > half[k] {
                    return None;
                }
            } else {
                let t1 = (-half[k] - o[k]) / d[k];
                let t2 = (half[k] - o[k]) / d[k];
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                t_near = t_near.max(lo);
                t_far = t_far.min(hi);
                if t_near > t_far {
                    return None;
                }
            }
        }
        Some((t_near, t_far))
    }

    /// Distance along a unit ray to the first boundary crossing. Rays starting inside the
    /// rectangle return `None`.
    pub fn ray_hit(&self, origin: [f64; 2], unit_dir: [f64; 2]) -> Option<f64> {
        let (t_near, t_far) = self.slab(origin, unit_dir)?;
        if t_near > 0.0 && t_far > t_near {
            Some(t_near)
        } else {
            None
        }
    }

    /// Whether the open segment `a -> b` passes through the rectangle with positive length.
    pub fn blocks_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let dir = [b[0] - a[0], b[1] - a[1]];
        match self.slab(a, dir) {
            Some((t_near, t_far)) => {
                let lo = t_near.max(0.0);
                let hi = t_far.min(1.0);
                hi - lo > 1e-12
            }
            None => false,
        }
    }
}

fn project(corners: &[[f64; 2]; 4], axis: &[f64; 2]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        let v = c[0] * axis[0] + c[1] * axis[1];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-FRAC_PI_2) + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rotation_by_quarter_turn() {
        let r = Pose2::new(2.0, 0.0, FRAC_PI_2);
        let p = r.transform_point([1.0, 0.0]);
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let a = Pose2::new(3.0, -1.5, 2.2);
        let id = a.compose(&a.inverse());
        assert!(id.x.abs() < 1e-12 && id.y.abs() < 1e-12 && id.theta.abs() < 1e-12);
    }

    #[test]
    fn shared_edge_is_not_overlap() {
        let a = OrientedRect::new([0.0, 0.0], 0.0, 2.0, 2.0);
        let b = OrientedRect::new([2.0, 0.0], 0.0, 2.0, 2.0);
        assert!(!a.overlaps(&b));
        let c = OrientedRect::new([1.9, 0.0], 0.0, 2.0, 2.0);
        assert!(a.overlaps(&c));
        assert!(a.overlaps(&a));
    }

    #[test]
    fn rotated_rect_separated_by_its_own_axis() {
        // Diamond whose corner points at the square but stops short of it.
        let square = OrientedRect::new([0.0, 0.0], 0.0, 2.0, 2.0);
        let diamond = OrientedRect::new([2.5, 0.0], PI / 4.0, 2.0, 2.0);
        assert!(!square.overlaps(&diamond));
        let closer = OrientedRect::new([2.3, 0.0], PI / 4.0, 2.0, 2.0);
        assert!(square.overlaps(&closer));
    }

    #[test]
    fn ray_hits_face() {
        let r = OrientedRect::new([6.0, 0.0], 0.0, 2.0, 4.0);
        assert_eq!(r.ray_hit([0.0, 0.0], [1.0, 0.0]), Some(5.0));
        assert_eq!(r.ray_hit([0.0, 0.0], [-1.0, 0.0]), None);
        assert_eq!(r.ray_hit([6.0, 0.0], [1.0, 0.0]), None);
    }

    #[test]
    fn segment_blocking() {
        let r = OrientedRect::new([5.0, 0.0], 0.0, 2.0, 2.0);
        assert!(r.blocks_segment([0.0, 0.0], [10.0, 0.0]));
        assert!(!r.blocks_segment([0.0, 0.0], [3.9, 0.0]));
        assert!(!r.blocks_segment([0.0, 3.0], [10.0, 3.0]));
    }
}
