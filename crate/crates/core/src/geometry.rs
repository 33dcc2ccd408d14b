//! Axis-aligned boxes in continuous pixel coordinates.

use crate::error::{Error, Result};

/// A box stored as `(left, top, width, height)`.
///
/// Width and height are strictly positive; the constructor rejects anything
/// else so downstream area arithmetic never divides by zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        if !(left.is_finite() && top.is_finite() && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite box ({left}, {top}, {width}, {height})"
            )));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "box extent must be positive, got width {width}, height {height}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    /// Builds a box from its center, aspect ratio (width / height) and height.
    pub fn from_xyah(cx: f64, cy: f64, aspect: f64, height: f64) -> Result<Self> {
        let width = aspect * height;
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Measurement vector `(cx, cy, width / height, height)`.
    pub fn to_xyah(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width / self.height, self.height]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            left: self.left + dx,
            top: self.top + dy,
            ..*self
        }
    }

    /// Intersection over union. No `+1` pixel correction.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection area divided by union area; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let iw = a.right().min(b.right()) - a.left.max(b.left);
    let ih = a.bottom().min(b.bottom()) - a.top.max(b.top);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(l: f64, t: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let b = bb(3.0, 4.0, 10.0, 20.0);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(100.0, 100.0, 5.0, 5.0)), 0.0);
        let v = iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(5.0, 0.0, 10.0, 10.0));
        assert!((v - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn xyah_round_trip() {
        let b = bb(0.0, 0.0, 10.0, 20.0);
        assert_eq!(b.to_xyah(), [5.0, 10.0, 0.5, 20.0]);
        let [cx, cy, a, h] = b.to_xyah();
        assert_eq!(BoundingBox::from_xyah(cx, cy, a, h).unwrap(), b);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..500.0f64, 0.0..500.0f64, 0.5..200.0f64, 0.5..200.0f64)
            .prop_map(|(l, t, w, h)| bb(l, t, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), b in arb_box(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let moved = iou(&a.translate(dx, dy), &b.translate(dx, dy));
            prop_assert!((moved - iou(&a, &b)).abs() < 1e-9);
        }
    }
}
