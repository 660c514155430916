use serde::{Deserialize, Serialize};

use crate::geom::{Heading, Point, Rect};

pub type OrderId = usize;
pub type DriverId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub origin: Point,
    pub destination: Point,
    pub price: f64,
    pub created_at: f64,
    pub expires_at: f64,
    /// Scenario-defined flow label (e.g. which region pair produced it).
    pub tag: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderState {
    Open,
    Assigned,
    Completed,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriverStatus {
    Idle,
    Serving {
        order_id: OrderId,
        completes_at: f64,
    },
    Repositioning {
        heading: Heading,
        from: Point,
        to: Point,
        started_at: f64,
        completes_at: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub id: DriverId,
    /// Last settled location. For a serving driver this is already the
    /// destination of the order being served.
    pub position: Point,
    pub status: DriverStatus,
    pub activated_at: f64,
    pub deactivates_at: f64,
    pub active: bool,
    /// Set when the departure time passed while the driver was busy; the
    /// driver leaves at its next completion instead of becoming available.
    pub retiring: bool,
}

impl Driver {
    pub fn is_idle(&self) -> bool {
        matches!(self.status, DriverStatus::Idle)
    }

    /// Location reported to observers at time `t`.
    pub fn position_at(&self, t: f64, speed: f64, region: &Rect) -> Point {
        match self.status {
            DriverStatus::Repositioning {
                heading,
                from,
                to,
                started_at,
                completes_at,
            } => {
                if t >= completes_at {
                    return to;
                }
                let (ux, uy) = heading.unit();
                let travelled = speed * (t - started_at).max(0.0);
                region.clamp(from.offset(ux * travelled, uy * travelled))
            }
            _ => self.position,
        }
    }

    pub fn completes_at(&self) -> Option<f64> {
        match self.status {
            DriverStatus::Idle => None,
            DriverStatus::Serving { completes_at, .. }
            | DriverStatus::Repositioning { completes_at, .. } => Some(completes_at),
        }
    }
}

/// Census of order states; `created` always equals the sum of the others.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCounts {
    pub created: usize,
    pub open: usize,
    pub assigned: usize,
    pub completed: usize,
    pub expired: usize,
}

impl OrderCounts {
    pub fn is_conserved(&self) -> bool {
        self.created == self.open + self.assigned + self.completed + self.expired
    }
}
