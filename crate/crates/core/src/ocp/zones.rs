use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sharpness of the log-sum-exp smooth maximum over polygon half-planes.
pub const POLYGON_SHARPNESS: f64 = 20.0;

/// Static forbidden region, an infinitely tall prism over a 2D shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum NoFlyZone {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Convex polygon, vertices in either winding order.
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

impl NoFlyZone {
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self::Circle { center, radius }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Circle { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bad circular zone radius {radius}")));
                }
            }
            Self::Polygon { vertices } => {
                if vertices.len() < 3 || vertices.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "polygon zone needs at least 3 finite vertices".into(),
                    ));
                }
                let area = signed_area(vertices);
                if area.abs() < 1e-9 {
                    return Err(Error::InvalidArgument("degenerate polygon zone".into()));
                }
                let n = vertices.len();
                for i in 0..n {
                    let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
                    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                    if cross * area < -1e-12 {
                        return Err(Error::InvalidArgument("polygon zone is not convex".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smooth signed distance of a horizontal position (positive outside) and
    /// its gradient.
    pub fn signed_distance(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        match self {
            Self::Circle { center, radius } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let r = dx.hypot(dy);
                let grad = if r > 0.0 { [dx / r, dy / r] } else { [0.0, 0.0] };
                (r - radius, grad)
            }
            Self::Polygon { vertices } => {
                let orient = signed_area(vertices).signum();
                let n = vertices.len();
                let mut dists = Vec::with_capacity(n);
                let mut normals = Vec::with_capacity(n);
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                    let len = ex.hypot(ey);
                    // outward normal for counter-clockwise winding
                    let nrm = [orient * ey / len, -orient * ex / len];
                    dists.push(nrm[0] * (x - a[0]) + nrm[1] * (y - a[1]));
                    normals.push(nrm);
                }
                let m = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = dists.iter().map(|d| (POLYGON_SHARPNESS * (d - m)).exp()).collect();
                let total: f64 = weights.iter().sum();
                let value = m + total.ln() / POLYGON_SHARPNESS;
                let mut grad = [0.0; 2];
                for (w, nrm) in weights.iter().zip(&normals) {
                    grad[0] += w / total * nrm[0];
                    grad[1] += w / total * nrm[1];
                }
                (value, grad)
            }
        }
    }

    /// Exact Euclidean signed distance, used for metrics.
    pub fn exact_distance(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Circle { .. } => self.signed_distance(x, y).0,
            Self::Polygon { vertices } => {
                let n = vertices.len();
                let mut best = f64::INFINITY;
                let mut inside = true;
                let orient = signed_area(vertices).signum();
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                    let t = (((x - a[0]) * ex + (y - a[1]) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
                    let (px, py) = (a[0] + t * ex, a[1] + t * ey);
                    best = best.min((x - px).hypot(y - py));
                    if orient * (ex * (y - a[1]) - ey * (x - a[0])) < 0.0 {
                        inside = false;
                    }
                }
                if inside {
                    -best
                } else {
                    best
                }
            }
        }
    }
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}
