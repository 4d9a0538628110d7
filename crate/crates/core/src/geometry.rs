//! Oriented bounding boxes, separating-axis intersection tests, and
//! circular angle arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted box dimension, in feet. Degenerate boxes are
/// rejected at construction.
pub const MIN_DIM_FT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangle given by center, extents, and heading of its long axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    /// Extent along the heading direction.
    pub length_ft: f64,
    /// Extent perpendicular to the heading.
    pub width_ft: f64,
    pub heading_deg: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, length_ft: f64, width_ft: f64, heading_deg: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && heading_deg.is_finite()) {
            return Err(Error::Data("non-finite box field".into()));
        }
        if !(length_ft.is_finite() && width_ft.is_finite())
            || length_ft <= MIN_DIM_FT
            || width_ft <= MIN_DIM_FT
        {
            return Err(Error::Data(format!(
                "degenerate box dimensions {length_ft} x {width_ft}"
            )));
        }
        Ok(OrientedBox {
            cx,
            cy,
            length_ft,
            width_ft,
            heading_deg: normalize_heading_deg(heading_deg),
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> [Point2; 4] {
        let th = self.heading_deg.to_radians();
        let (s, c) = th.sin_cos();
        // u along heading, v perpendicular (90 deg counterclockwise)
        let (ux, uy) = (c, s);
        let (vx, vy) = (-s, c);
        let hl = self.length_ft / 2.0;
        let hw = self.width_ft / 2.0;
        [
            Point2::new(self.cx + ux * hl + vx * hw, self.cy + uy * hl + vy * hw),
            Point2::new(self.cx - ux * hl + vx * hw, self.cy - uy * hl + vy * hw),
            Point2::new(self.cx - ux * hl - vx * hw, self.cy - uy * hl - vy * hw),
            Point2::new(self.cx + ux * hl - vx * hw, self.cy + uy * hl - vy * hw),
        ]
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let th = self.heading_deg.to_radians();
        let (s, c) = th.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn diagonal(&self) -> f64 {
        self.length_ft.hypot(self.width_ft)
    }

    pub fn min_dim(&self) -> f64 {
        self.length_ft.min(self.width_ft)
    }

    /// Closed-rectangle intersection test via the separating axis theorem.
    /// Touching edges count as intersecting.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&ca, axis);
            let (bmin, bmax) = project(&cb, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project(corners: &[Point2; 4], (ax, ay): (f64, f64)) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in corners {
        let d = p.x * ax + p.y * ay;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Wrap an angle into [0, 360).
pub fn normalize_heading_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Minimal circular distance between two angles, in [0, 180].
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
