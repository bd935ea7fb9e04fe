//! Planar block geometry: SE(2) poses, footprint halfspaces and the
//! polygonal reach region.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub type Point = Vector2<f64>;

/// Wraps an angle into (-π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Rotation taking block-frame vectors into the world frame.
pub fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Pose and extent of a square block lying on the table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub height: f64,
    pub size_l: f64,
}

impl BlockPose {
    pub fn new(x: f64, y: f64, theta: f64, height: f64, size_l: f64) -> Self {
        assert!(size_l > 0.0, "block side must be positive");
        assert!(height > 0.0, "block height must be positive");
        BlockPose {
            x,
            y,
            theta: normalize_angle(theta),
            height,
            size_l,
        }
    }

    /// Axis-aligned pose at `(x, y)`.
    pub fn axis_aligned(x: f64, y: f64, height: f64, size_l: f64) -> Self {
        Self::new(x, y, 0.0, height, size_l)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// One closed halfspace `[a b] R(θ)ᵀ u ≥ c` of a block complement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub frame_theta: f64,
}

impl Halfspace {
    /// World-frame normal `R(θ)·[a b]ᵀ`, so that the constraint reads `normal·u ≥ c`.
    pub fn normal(&self) -> Point {
        rotation_matrix(self.frame_theta) * Point::new(self.a, self.b)
    }

    pub fn value(&self, point: &Point) -> f64 {
        self.normal().dot(point)
    }

    pub fn satisfied(&self, point: &Point) -> bool {
        self.value(point) >= self.c
    }

    /// Signed slack; negative when violated.
    pub fn slack(&self, point: &Point) -> f64 {
        self.value(point) - self.c
    }
}

/// The four halfspaces whose disjunction is the complement of the block
/// footprint inflated by `margin`.
///
/// The block center is expressed in the block frame as `[x_b y_b] = [x y]·R(θ)`,
/// which gives offsets `l/2 + margin ± x_b` and `l/2 + margin ± y_b`.
pub fn halfspaces_of_block(pose: &BlockPose, margin: f64) -> [Halfspace; 4] {
    debug_assert!(margin >= 0.0);
    let r = rotation_matrix(pose.theta);
    let center = r.transpose() * pose.center();
    let (xb, yb) = (center.x, center.y);
    let half = pose.size_l / 2.0 + margin;
    let theta = pose.theta;
    [
        Halfspace { a: 1.0, b: 0.0, c: half + xb, frame_theta: theta },
        Halfspace { a: -1.0, b: 0.0, c: half - xb, frame_theta: theta },
        Halfspace { a: 0.0, b: 1.0, c: half + yb, frame_theta: theta },
        Halfspace { a: 0.0, b: -1.0, c: half - yb, frame_theta: theta },
    ]
}

/// True iff `point` violates all four halfspaces, i.e. lies strictly inside
/// the inflated footprint. Boundary points are outside.
pub fn point_in_footprint(pose: &BlockPose, point: &Point, margin: f64) -> bool {
    halfspaces_of_block(pose, margin)
        .iter()
        .all(|h| !h.satisfied(point))
}

/// Penetration depth of `point` into the inflated footprint: positive inside,
/// zero or negative outside.
pub fn footprint_penetration(pose: &BlockPose, point: &Point, margin: f64) -> f64 {
    halfspaces_of_block(pose, margin)
        .iter()
        .map(|h| -h.slack(point))
        .fold(f64::INFINITY, f64::min)
}

/// Chebyshev distance between two points measured in the frame rotated by `theta`.
pub fn frame_chebyshev(a: &Point, b: &Point, theta: f64) -> f64 {
    let d = rotation_matrix(theta).transpose() * (a - b);
    d.x.abs().max(d.y.abs())
}

/// Disc of robot reach, linearized by an inscribed regular polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachRegion {
    pub center: (f64, f64),
    pub radius: f64,
    pub polygon_sides: usize,
}

impl ReachRegion {
    pub fn new(center: (f64, f64), radius: f64, polygon_sides: usize) -> Self {
        assert!(polygon_sides >= 4, "reach polygon needs at least 4 sides");
        assert!(radius > 0.0);
        ReachRegion { center, radius, polygon_sides }
    }

    pub fn center_point(&self) -> Point {
        Point::new(self.center.0, self.center.1)
    }

    pub fn apothem(&self) -> f64 {
        self.radius * (PI / self.polygon_sides as f64).cos()
    }

    /// Polygon vertices, the first one on the +x axis through the center.
    pub fn vertices(&self) -> Vec<Point> {
        let n = self.polygon_sides;
        (0..n)
            .map(|k| {
                let ang = 2.0 * PI * k as f64 / n as f64;
                self.center_point() + self.radius * Point::new(ang.cos(), ang.sin())
            })
            .collect()
    }

    pub fn contains(&self, point: &Point) -> bool {
        reach_halfspaces(self).iter().all(|h| h.satisfied(point))
    }
}

/// Inward-facing halfspaces of the inscribed reach polygon. Each edge is
/// expressed with `(a, b) = (-1, 0)` in a frame rotated to the edge normal,
/// so the constraint reads `-(n·u) ≥ -(n·center + apothem)`.
pub fn reach_halfspaces(region: &ReachRegion) -> Vec<Halfspace> {
    let n = region.polygon_sides;
    let apothem = region.apothem();
    let center = region.center_point();
    (0..n)
        .map(|k| {
            let normal_angle = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            let normal = Point::new(normal_angle.cos(), normal_angle.sin());
            Halfspace {
                a: -1.0,
                b: 0.0,
                c: -(normal.dot(&center) + apothem),
                frame_theta: normalize_angle(normal_angle),
            }
        })
        .collect()
}
