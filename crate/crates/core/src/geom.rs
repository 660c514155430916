//! Planar geometry shared by the simulator, scenarios and baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn scaled(self, factor: f64) -> Point {
        Point::new(self.x * factor, self.y * factor)
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn longer_side(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            self.min.x + rng.random::<f64>() * self.width(),
            self.min.y + rng.random::<f64>() * self.height(),
        )
    }
}

/// The nine reposition moves: eight compass directions plus staying put.
///
/// The discriminant is the action index used by the reposition head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North = 0,
    NorthEast = 1,
    East = 2,
    SouthEast = 3,
    South = 4,
    SouthWest = 5,
    West = 6,
    NorthWest = 7,
    Stay = 8,
}

impl Heading {
    pub const ALL: [Heading; 9] = [
        Heading::North,
        Heading::NorthEast,
        Heading::East,
        Heading::SouthEast,
        Heading::South,
        Heading::SouthWest,
        Heading::West,
        Heading::NorthWest,
        Heading::Stay,
    ];

    pub const COUNT: usize = 9;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Heading> {
        Self::ALL.get(index).copied()
    }

    /// Unit vector of travel; zero for `Stay`.
    pub fn unit(self) -> (f64, f64) {
        const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Heading::North => (0.0, 1.0),
            Heading::NorthEast => (D, D),
            Heading::East => (1.0, 0.0),
            Heading::SouthEast => (D, -D),
            Heading::South => (0.0, -1.0),
            Heading::SouthWest => (-D, -D),
            Heading::West => (-1.0, 0.0),
            Heading::NorthWest => (-D, D),
            Heading::Stay => (0.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Heading::North => "N",
            Heading::NorthEast => "NE",
            Heading::East => "E",
            Heading::SouthEast => "SE",
            Heading::South => "S",
            Heading::SouthWest => "SW",
            Heading::West => "W",
            Heading::NorthWest => "NW",
            Heading::Stay => "stay",
        }
    }

    /// Compass direction whose unit vector has the largest dot product with
    /// `(dx, dy)`. Ties resolve to the lower index. A zero vector maps to `Stay`.
    pub fn snap(dx: f64, dy: f64) -> Heading {
        if dx == 0.0 && dy == 0.0 {
            return Heading::Stay;
        }
        let mut best = Heading::North;
        let mut best_dot = f64::NEG_INFINITY;
        for h in &Self::ALL[..8] {
            let (ux, uy) = h.unit();
            let dot = ux * dx + uy * dy;
            if dot > best_dot {
                best_dot = dot;
                best = *h;
            }
        }
        best
    }
}
