//! Quadrilateral annotations and their rasterisation into binary masks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type Point = (f64, f64);

/// Four corners `(x, y)` in pixel coordinates, in polygon order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadAnnotation {
    corners: [Point; 4],
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// True when segments `p1p2` and `q1q2` cross at a single interior point.
fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl QuadAnnotation {
    /// Rejects non-finite coordinates and self-intersecting (bow-tie) quads.
    /// Degenerate quads with collapsed corners are accepted.
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        if corners
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::InvalidAnnotation(format!(
                "non-finite corner in {corners:?}"
            )));
        }
        let [a, b, c, d] = corners;
        if segments_cross(a, b, c, d) || segments_cross(b, c, d, a) {
            return Err(Error::InvalidAnnotation(format!(
                "quadrilateral {corners:?} is self-intersecting"
            )));
        }
        Ok(Self { corners })
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..4).map(|i| (self.corners[i], self.corners[(i + 1) % 4]))
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        self.edges()
            .map(|(p, q)| p.0 * q.1 - q.0 * p.1)
            .sum::<f64>()
            .abs()
            / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(p, q)| (q.0 - p.0).hypot(q.1 - p.1))
            .sum()
    }

    /// Strictly convex: every turn has the same nonzero orientation.
    pub fn is_convex(&self) -> bool {
        let turns: Vec<f64> = (0..4)
            .map(|i| {
                cross(
                    self.corners[i],
                    self.corners[(i + 1) % 4],
                    self.corners[(i + 2) % 4],
                )
            })
            .collect();
        turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.corners.map(|(x, y)| (x + dx, y + dy)))
    }

    /// Even-odd containment test with half-open edges: a horizontal ray to
    /// the right counts edges with `min(y) <= py < max(y)` crossing it at
    /// `x > px`.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let mut inside = false;
        for (p, q) in self.edges() {
            if (p.1 <= py) != (q.1 <= py) {
                let x = p.0 + (py - p.1) * (q.0 - p.0) / (q.1 - p.1);
                if x > px {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// `[H, W]` mask with pixel `(x, y)` set iff its centre `(x + 0.5, y + 0.5)`
/// lies inside the quad under [`QuadAnnotation::contains`].
pub fn rasterize_quad(q: &QuadAnnotation, (h, w): (usize, usize)) -> Result<Tensor> {
    let mut mask = Tensor::zeros(&[h, w])?;
    let out = mask.data_mut();
    let mut xs = Vec::with_capacity(4);
    for y in 0..h {
        let py = y as f64 + 0.5;
        xs.clear();
        for (p, q) in q.edges() {
            if (p.1 <= py) != (q.1 <= py) {
                xs.push(p.0 + (py - p.1) * (q.0 - p.0) / (q.1 - p.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        // A centre px is inside iff an odd number of crossings lie strictly
        // right of it, i.e. px in [xs[0], xs[1]) or [xs[2], xs[3]).
        for span in xs.chunks_exact(2) {
            let first = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(w as f64);
            if first < end {
                out[y * w + first as usize..y * w + end as usize].fill(1.0);
            }
        }
    }
    Ok(mask)
}
