//! Axis-aligned box arithmetic in normalized image coordinates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle with corners in normalized `[0, 1]` image coordinates.
///
/// A `BBox` is never inverted (`xmin <= xmax`, `ymin <= ymax`) and all four
/// coordinates are finite and inside the unit square. Zero-area boxes are
/// allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

impl BBox {
    /// Builds a box, clipping each coordinate into `[0, 1]`.
    ///
    /// Fails on non-finite coordinates or an inverted box. Inversion is
    /// checked before clipping, so `xmin = 1.3, xmax = 1.1` is rejected even
    /// though both clip to `1.0`.
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        for (name, v) in [("xmin", xmin), ("ymin", ymin), ("xmax", xmax), ("ymax", ymax)] {
            if !v.is_finite() {
                return Err(Error::InvalidBox(format!("{name} is not finite ({v})")));
            }
        }
        if xmin > xmax {
            return Err(Error::InvalidBox(format!("inverted box: xmin {xmin} > xmax {xmax}")));
        }
        if ymin > ymax {
            return Err(Error::InvalidBox(format!("inverted box: ymin {ymin} > ymax {ymax}")));
        }
        Ok(Self { xmin: clip_unit(xmin), ymin: clip_unit(ymin), xmax: clip_unit(xmax), ymax: clip_unit(ymax) })
    }

    /// Builds a box from possibly unordered corners, sorting each axis pair
    /// and clipping. Intended for generated boxes (noise may swap corners).
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
    }

    /// The full image.
    pub fn unit() -> Self {
        Self { xmin: 0.0, ymin: 0.0, xmax: 1.0, ymax: 1.0 }
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn ymax(&self) -> f64 {
        self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) * 0.5, (self.ymin + self.ymax) * 0.5)
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    /// Lexicographic order on `(xmin, ymin, xmax, ymax)`; total because
    /// coordinates are always finite.
    pub fn lex_cmp(&self, other: &BBox) -> Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[allow(clippy::manual_clamp)]
fn clip_unit(v: f64) -> f64 {
    // also folds -0.0 into 0.0 so formatting never prints "-0.000000"
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        v
    }
}

/// Closed-interval area, no pixel `+1` terms.
pub fn area(b: &BBox) -> f64 {
    b.width() * b.height()
}

/// Intersection over union. Two boxes with zero union area have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let ih = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Coordinate-wise arithmetic mean of a non-empty list of boxes.
pub fn mean_box(boxes: &[BBox]) -> Result<BBox> {
    if boxes.is_empty() {
        return Err(Error::Usage("mean_box of an empty list".into()));
    }
    let n = boxes.len() as f64;
    let mut sum = [0.0f64; 4];
    for b in boxes {
        for (s, c) in sum.iter_mut().zip(b.coords()) {
            *s += c;
        }
    }
    Ok(envelope_clamped(boxes, sum.map(|s| s / n)))
}

/// Coordinate-wise mean weighted by `weights`. Falls back to the plain mean
/// when all weights are zero.
pub fn weighted_mean_box(boxes: &[BBox], weights: &[f64]) -> Result<BBox> {
    if boxes.is_empty() {
        return Err(Error::Usage("weighted_mean_box of an empty list".into()));
    }
    if boxes.len() != weights.len() {
        return Err(Error::Usage(format!("weighted_mean_box: {} boxes but {} weights", boxes.len(), weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Usage("weighted_mean_box: weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return mean_box(boxes);
    }
    let mut sum = [0.0f64; 4];
    for (b, w) in boxes.iter().zip(weights) {
        for (s, c) in sum.iter_mut().zip(b.coords()) {
            *s += w * c;
        }
    }
    Ok(envelope_clamped(boxes, sum.map(|s| s / total)))
}

// Floating-point summation can land one ulp outside the inputs' envelope;
// pin the result back inside it so the mean stays a valid, bounded box.
fn envelope_clamped(boxes: &[BBox], mean: [f64; 4]) -> BBox {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for b in boxes {
        for (i, c) in b.coords().into_iter().enumerate() {
            lo[i] = lo[i].min(c);
            hi[i] = hi[i].max(c);
        }
    }
    let c: [f64; 4] = std::array::from_fn(|i| mean[i].clamp(lo[i], hi[i]));
    BBox { xmin: c[0], ymin: c[1], xmax: c[2].max(c[0]), ymax: c[3].max(c[1]) }
}
