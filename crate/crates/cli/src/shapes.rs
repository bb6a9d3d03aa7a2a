//! Procedural binary transmission masks used as test objects.

use std::fmt;
use std::str::FromStr;

use ecam_core::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    LetterT,
    ThreeStripes,
    UpArrow,
    UTurnArrow,
    Car,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::LetterT,
        Shape::ThreeStripes,
        Shape::UpArrow,
        Shape::UTurnArrow,
        Shape::Car,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::LetterT => "letter_T",
            Shape::ThreeStripes => "three_stripes",
            Shape::UpArrow => "up_arrow",
            Shape::UTurnArrow => "u_turn_arrow",
            Shape::Car => "car",
        }
    }

    /// Membership test in unit box coordinates; `u` runs left to right, `v`
    /// top to bottom.
    fn contains(self, u: f64, v: f64) -> bool {
        let within = |lo: f64, x: f64, hi: f64| lo <= x && x < hi;
        match self {
            Shape::LetterT => within(0.0, v, 0.25) || (within(0.375, u, 0.625) && v >= 0.25),
            Shape::ThreeStripes => within(0.0, u, 0.2) || within(0.4, u, 0.6) || within(0.8, u, 1.0),
            Shape::UpArrow => {
                let head = v < 0.45 && (u - 0.5).abs() <= 0.5 * v / 0.45;
                let shaft = v >= 0.45 && (u - 0.5).abs() <= 0.15;
                head || shaft
            }
            Shape::UTurnArrow => {
                let (cu, cv) = (0.45, 0.4);
                let d = ((u - cu).powi(2) + (v - cv).powi(2)).sqrt();
                let arc = v < cv && within(0.15, d, 0.35);
                let left_leg = within(0.1, u, 0.3) && v >= cv;
                let right_leg = within(0.6, u, 0.8) && within(cv, v, 0.7);
                let head = v >= 0.7 && (u - 0.7).abs() <= 0.25 * (1.0 - v) / 0.3;
                arc || left_leg || right_leg || head
            }
            Shape::Car => {
                let body = within(0.3, v, 0.75);
                let cabin = within(0.08, v, 0.3) && within(0.2 + 0.1 * (0.3 - v) / 0.22, u, 0.75 - 0.1 * (0.3 - v) / 0.22);
                let wheel = |cu: f64| ((u - cu).powi(2) + (v - 0.8).powi(2)).sqrt() < 0.15;
                body || cabin || wheel(0.22) || wheel(0.78)
            }
        }
    }

    /// Binary mask on a `rows x cols` grid. The shape fills a square box of
    /// side `scale * min(rows, cols)` centred at `center = (row, col)`.
    pub fn rasterize_at(self, rows: usize, cols: usize, scale: f64, center: (f64, f64)) -> Image2D {
        let side = scale * rows.min(cols) as f64;
        let (r0, c0) = (center.0 - side / 2.0, center.1 - side / 2.0);
        Image2D::from_fn(rows, cols, |r, c| {
            let u = (c as f64 + 0.5 - c0) / side;
            let v = (r as f64 + 0.5 - r0) / side;
            let inside = (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) && self.contains(u, v);
            if inside {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn rasterize(self, rows: usize, cols: usize, scale: f64) -> Image2D {
        self.rasterize_at(rows, cols, scale, (rows as f64 / 2.0, cols as f64 / 2.0))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Shape::ALL.iter().map(|s| s.name()).collect();
                format!("unknown shape `{s}`, expected one of {}", names.join(", "))
            })
    }
}
