//! Encoding of engine state into the network's input matrices.
//!
//! Order rows are `[origin_x, origin_y, dest_x, dest_y, price, time_waiting]`
//! and driver rows are `[x, y, dir_x, dir_y, time_to_order_completion,
//! time_to_reposition_completion]`. Lengths are divided by the region's longer
//! side, prices by the configured price scale, waiting time by the validity
//! window (clamped to `[0, 1]`), and completion times by the time needed to
//! cross the region.
//!
//! Every open order is present in the orders matrix, including those out of
//! broadcast range; only in-range orders appear in the assignment set.

use serde::{Deserialize, Serialize};

use crate::geom::{Heading, Point};
use crate::sim::{Action, Driver, DriverId, DriverStatus, Engine, Order, OrderId};

pub const ORDER_FEATURES: usize = 6;
pub const DRIVER_FEATURES: usize = 6;

pub type OrderRow = [f64; ORDER_FEATURES];
pub type DriverRow = [f64; DRIVER_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub length: f64,
    pub price: f64,
    pub waiting: f64,
    pub duration: f64,
    pub horizon: f64,
}

impl Default for FeatureScales {
    fn default() -> Self {
        Self {
            length: 1.0,
            price: 1.0,
            waiting: 1.0,
            duration: 1.0,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSet {
    /// Row indices into the orders matrix, ascending.
    Assign(Vec<usize>),
    /// The nine reposition moves in [`Heading::ALL`] order.
    Reposition,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        match self {
            ActionSet::Assign(rows) => rows.len(),
            ActionSet::Reposition => Heading::COUNT,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_assign(&self) -> bool {
        matches!(self, ActionSet::Assign(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Raw sim-time.
    pub time: f64,
    /// Normalised time fed to the network.
    pub time_feature: f64,
    pub selected: usize,
    pub drivers: Vec<DriverRow>,
    pub orders: Vec<OrderRow>,
    pub driver_ids: Vec<DriverId>,
    pub order_ids: Vec<OrderId>,
    pub actions: ActionSet,
    /// Noiseless reposition displacement in normalised length units.
    pub reposition_reach: f64,
}

impl Observation {
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Engine action for the `index`-th entry of the action set.
    pub fn action(&self, index: usize) -> Option<Action> {
        match &self.actions {
            ActionSet::Assign(rows) => rows.get(index).map(|&r| Action::Assign {
                order_id: self.order_ids[r],
            }),
            ActionSet::Reposition => {
                Heading::from_index(index).map(|heading| Action::Reposition { heading })
            }
        }
    }

    /// Inverse of [`Observation::action`].
    pub fn index_of(&self, action: Action) -> Option<usize> {
        match (&self.actions, action) {
            (ActionSet::Assign(rows), Action::Assign { order_id }) => rows
                .iter()
                .position(|&r| self.order_ids[r] == order_id),
            (ActionSet::Reposition, Action::Reposition { heading }) => Some(heading.index()),
            _ => None,
        }
    }

    pub fn selected_row(&self) -> &DriverRow {
        &self.drivers[self.selected]
    }

    pub fn selected_position(&self) -> Point {
        let r = self.selected_row();
        Point::new(r[0], r[1])
    }

    pub fn order_origin(&self, row: usize) -> Point {
        let r = &self.orders[row];
        Point::new(r[0], r[1])
    }

    /// Rebuild the observation with order rows permuted: new row `i` is old
    /// row `perm[i]`. The action set is remapped so that it refers to the
    /// same orders, listed in the new row order.
    pub fn permute_orders(&self, perm: &[usize]) -> Observation {
        assert_eq!(perm.len(), self.orders.len());
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let actions = match &self.actions {
            ActionSet::Assign(rows) => {
                let mut mapped: Vec<usize> = rows.iter().map(|&r| inverse[r]).collect();
                mapped.sort_unstable();
                ActionSet::Assign(mapped)
            }
            ActionSet::Reposition => ActionSet::Reposition,
        };
        Observation {
            orders: perm.iter().map(|&i| self.orders[i]).collect(),
            order_ids: perm.iter().map(|&i| self.order_ids[i]).collect(),
            actions,
            ..self.clone()
        }
    }
}

pub fn encode_order(order: &Order, t: f64, scales: &FeatureScales) -> OrderRow {
    let waiting = ((t - order.created_at) / scales.waiting).clamp(0.0, 1.0);
    [
        order.origin.x / scales.length,
        order.origin.y / scales.length,
        order.destination.x / scales.length,
        order.destination.y / scales.length,
        order.price / scales.price,
        waiting,
    ]
}

/// `position` is the location reported to observers (see
/// [`Driver::position_at`]); serving drivers report their drop-off point.
pub fn encode_driver(driver: &Driver, position: Point, t: f64, scales: &FeatureScales) -> DriverRow {
    let (dx, dy, serve, repo) = match driver.status {
        DriverStatus::Idle => (0.0, 0.0, 0.0, 0.0),
        DriverStatus::Serving { completes_at, .. } => {
            (0.0, 0.0, (completes_at - t).max(0.0) / scales.duration, 0.0)
        }
        DriverStatus::Repositioning {
            heading,
            completes_at,
            ..
        } => {
            let (ux, uy) = heading.unit();
            (ux, uy, 0.0, (completes_at - t).max(0.0) / scales.duration)
        }
    };
    [
        position.x / scales.length,
        position.y / scales.length,
        dx,
        dy,
        serve,
        repo,
    ]
}

/// Observation for `selected` at the engine's current time.
pub fn observe(engine: &Engine, selected: DriverId) -> Observation {
    let t = engine.now();
    let scales = engine.scales();
    let mut drivers = Vec::new();
    let mut driver_ids = Vec::new();
    let mut selected_row = 0;
    for d in engine.active_drivers() {
        if d.id == selected {
            selected_row = drivers.len();
        }
        drivers.push(encode_driver(d, engine.driver_position(d), t, scales));
        driver_ids.push(d.id);
    }
    let mut orders = Vec::new();
    let mut order_ids = Vec::new();
    for o in engine.open_orders() {
        orders.push(encode_order(o, t, scales));
        order_ids.push(o.id);
    }
    let driver = &engine.drivers()[selected];
    let assignable = engine.assignable_orders(driver);
    let actions = if !assignable.is_empty() || engine.config().simple_mode {
        // Both lists are ascending by id, so a merge walk maps ids to rows.
        let mut rows = Vec::with_capacity(assignable.len());
        let mut k = 0;
        for (row, id) in order_ids.iter().enumerate() {
            if k < assignable.len() && assignable[k] == *id {
                rows.push(row);
                k += 1;
            }
        }
        ActionSet::Assign(rows)
    } else {
        ActionSet::Reposition
    };
    Observation {
        time: t,
        time_feature: t / scales.horizon,
        selected: selected_row,
        drivers,
        orders,
        driver_ids,
        order_ids,
        actions,
        reposition_reach: engine.config().reposition_reach() / scales.length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;

    fn unit_scales(window: f64) -> FeatureScales {
        FeatureScales {
            length: 1.0,
            price: 1.0,
            waiting: window,
            duration: 1.0,
            horizon: 200.0,
        }
    }

    fn order(o: (f64, f64), d: (f64, f64), price: f64, created: f64) -> Order {
        Order {
            id: 0,
            origin: Point::new(o.0, o.1),
            destination: Point::new(d.0, d.1),
            price,
            created_at: created,
            expires_at: created + 5.0,
            tag: 0,
        }
    }

    fn driver(status: DriverStatus, at: Point) -> Driver {
        Driver {
            id: 0,
            position: at,
            status,
            activated_at: 0.0,
            deactivates_at: f64::INFINITY,
            active: true,
            retiring: false,
        }
    }

    #[test]
    fn order_row_fields() {
        let row = encode_order(&order((0.1, 0.2), (0.3, 0.4), 2.0, 5.0), 7.0, &unit_scales(5.0));
        let expected = [0.1, 0.2, 0.3, 0.4, 2.0, 0.4];
        for (a, b) in row.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{row:?}");
        }
    }

    #[test]
    fn fresh_order_has_zero_wait() {
        let row = encode_order(&order((0.1, 0.2), (0.3, 0.4), 2.0, 5.0), 5.0, &unit_scales(5.0));
        assert_eq!(row[5], 0.0);
    }

    #[test]
    fn wait_saturates_at_one() {
        let row = encode_order(&order((0.0, 0.0), (0.0, 0.0), 1.0, 0.0), 50.0, &unit_scales(5.0));
        assert_eq!(row[5], 1.0);
    }

    #[test]
    fn km_coordinates_are_normalised_by_region_side() {
        let scales = FeatureScales {
            length: 20.0,
            ..unit_scales(10.0)
        };
        let row = encode_order(&order((10.0, 5.0), (0.0, 0.0), 1.0, 0.0), 0.0, &scales);
        assert_eq!(row[0], 0.5);
        assert_eq!(row[1], 0.25);
    }

    #[test]
    fn idle_driver_row() {
        let d = driver(DriverStatus::Idle, Point::new(0.5, 0.5));
        assert_eq!(
            encode_driver(&d, d.position, 0.0, &unit_scales(5.0)),
            [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn serving_driver_reports_dropoff_and_remaining_time() {
        let d = driver(
            DriverStatus::Serving {
                order_id: 3,
                completes_at: 12.5,
            },
            Point::new(0.9, 0.1),
        );
        let scales = FeatureScales {
            duration: 10.0,
            ..unit_scales(5.0)
        };
        let row = encode_driver(&d, d.position, 10.0, &scales);
        assert_eq!(row, [0.9, 0.1, 0.0, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn repositioning_driver_reports_direction() {
        let region = Rect::new(0.0, 0.0, 1.0, 1.0);
        let d = driver(
            DriverStatus::Repositioning {
                heading: Heading::North,
                from: Point::new(0.5, 0.5),
                to: Point::new(0.5, 0.6),
                started_at: 0.0,
                completes_at: 1.0,
            },
            Point::new(0.5, 0.5),
        );
        let pos = d.position_at(0.6, 0.1, &region);
        let row = encode_driver(&d, pos, 0.6, &unit_scales(5.0));
        assert!((row[1] - 0.56).abs() < 1e-12);
        assert_eq!(&row[2..4], &[0.0, 1.0]);
        assert_eq!(row[4], 0.0);
        assert!((row[5] - 0.4).abs() < 1e-12);
    }
}
