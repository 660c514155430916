//! Continuous-time, event-driven ride-hailing engine.
//!
//! The engine keeps drivers, orders and a time-ordered event queue. It runs
//! events until exactly one driver becomes available (a *decision point*),
//! hands the caller an [`Observation`] for that driver, and resumes once an
//! [`Action`] is supplied.
//!
//! Decision points are raised when a driver comes online, finishes serving an
//! order, or finishes a reposition move. Simultaneous events are ordered by
//! insertion sequence, so even with zero reposition noise only one driver is
//! ever polled at a time.

mod entities;
mod event;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use entities::{Driver, DriverId, DriverStatus, Order, OrderCounts, OrderId, OrderState};
pub use event::{EventKind, EventQueue, SimEvent};

use crate::error::{Error, Result};
use crate::features::{self, FeatureScales, Observation};
use crate::geom::{Heading, Point, Rect};
use crate::scenarios::{DriverSpawn, OrderDraft, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub region: Rect,
    /// Length units per time unit.
    pub driver_speed: f64,
    pub broadcast_radius: f64,
    pub reposition_duration: f64,
    pub reposition_noise_sigma: f64,
    pub order_validity_window: f64,
    pub episode_horizon: f64,
    /// No broadcast limit and no reposition actions (the `simple` baselines).
    pub simple_mode: bool,
    pub rng_seed: u64,
    /// Divisor applied to prices in the order features.
    #[serde(default = "one")]
    pub price_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            region: Rect::new(0.0, 0.0, 1.0, 1.0),
            driver_speed: 0.1,
            broadcast_radius: 0.3,
            reposition_duration: 1.0,
            reposition_noise_sigma: 0.01,
            order_validity_window: 5.0,
            episode_horizon: 200.0,
            simple_mode: false,
            rng_seed: 0,
            price_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.driver_speed > 0.0, "driver_speed must be > 0"),
            (self.broadcast_radius > 0.0, "broadcast_radius must be > 0"),
            (
                self.reposition_duration > 0.0,
                "reposition_duration must be > 0",
            ),
            (
                self.reposition_noise_sigma >= 0.0,
                "reposition_noise_sigma must be >= 0",
            ),
            (
                self.order_validity_window > 0.0,
                "order_validity_window must be > 0",
            ),
            (self.episode_horizon > 0.0, "episode_horizon must be > 0"),
            (self.price_scale > 0.0, "price_scale must be > 0"),
            (
                self.region.width() > 0.0 && self.region.height() > 0.0,
                "region must have positive area",
            ),
        ];
        for (ok, msg) in checks {
            // NaN fails every comparison above, so it is rejected here too.
            if !ok {
                return Err(Error::InvalidConfig(msg.to_string()));
            }
        }
        Ok(())
    }

    /// Distance covered by one noiseless reposition move.
    pub fn reposition_reach(&self) -> f64 {
        self.driver_speed * self.reposition_duration
    }

    pub fn feature_scales(&self) -> FeatureScales {
        FeatureScales {
            length: self.region.longer_side(),
            price: self.price_scale,
            waiting: self.order_validity_window,
            duration: self.region.longer_side() / self.driver_speed,
            horizon: self.episode_horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Assign { order_id: OrderId },
    Reposition { heading: Heading },
}

/// Result of advancing the engine: either a decision is pending or the
/// episode is over.
#[derive(Debug, Clone, PartialEq)]
pub enum Poll {
    Decision(Observation),
    Done,
}

impl Poll {
    pub fn observation(&self) -> Option<&Observation> {
        match self {
            Poll::Decision(obs) => Some(obs),
            Poll::Done => None,
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self, Poll::Done)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next: Poll,
    /// Sim-time between this decision and the next one (or the horizon).
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepositionRecord {
    pub at_x: f64,
    pub at_y: f64,
    pub heading: Heading,
}

/// Per-episode bookkeeping exposed for diagnostics and tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub decisions: usize,
    pub assignments: usize,
    pub repositions: usize,
    pub total_reward: f64,
    /// Sum of prices of executed assignments, accumulated separately from
    /// `total_reward` so the two can be cross-checked.
    pub assigned_price_sum: f64,
    /// Served order count per scenario flow tag.
    pub served_by_tag: Vec<usize>,
    pub orders_created: usize,
    /// Number of events after which the order census did not balance, or
    /// a busy driver had a completion time in the past. Only counted when
    /// auditing is enabled.
    pub audit_failures: usize,
    pub events_processed: usize,
}

pub struct Engine {
    scenario: Scenario,
    config: SimConfig,
    scales: FeatureScales,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    now: f64,
    queue: EventQueue,
    drafts: Vec<OrderDraft>,
    spawns: Vec<DriverSpawn>,
    drivers: Vec<Driver>,
    orders: Vec<Order>,
    order_state: Vec<OrderState>,
    /// Open order ids, ascending.
    open: Vec<OrderId>,
    counts: OrderCounts,
    /// Idle drivers with nothing legal to do (simple mode only), FIFO.
    waiting: VecDeque<DriverId>,
    selected: Option<DriverId>,
    done: bool,
    stats: EpisodeStats,
    audit: bool,
    record_repositions: bool,
    reposition_log: Vec<RepositionRecord>,
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Engine {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let config = scenario.config.clone();
        let noise = if config.reposition_noise_sigma > 0.0 {
            Some(
                Normal::new(0.0, config.reposition_noise_sigma)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            scales: config.feature_scales(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            noise,
            now: 0.0,
            queue: EventQueue::new(),
            drafts: Vec::new(),
            spawns: Vec::new(),
            drivers: Vec::new(),
            orders: Vec::new(),
            order_state: Vec::new(),
            open: Vec::new(),
            counts: OrderCounts::default(),
            waiting: VecDeque::new(),
            selected: None,
            done: true,
            stats: EpisodeStats::default(),
            audit: false,
            record_repositions: false,
            reposition_log: Vec::new(),
            config,
            scenario,
        })
    }

    /// Check order conservation and driver clocks after every event.
    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    pub fn set_record_repositions(&mut self, on: bool) {
        self.record_repositions = on;
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scales(&self) -> &FeatureScales {
        &self.scales
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn selected_driver(&self) -> Option<DriverId> {
        self.selected
    }

    pub fn drivers(&self) -> &[Driver] {
        &self.drivers
    }

    pub fn active_drivers(&self) -> impl Iterator<Item = &Driver> {
        self.drivers.iter().filter(|d| d.active)
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        self.orders.get(id)
    }

    pub fn order_state(&self, id: OrderId) -> Option<OrderState> {
        self.order_state.get(id).copied()
    }

    pub fn open_orders(&self) -> impl Iterator<Item = &Order> {
        self.open.iter().map(move |&id| &self.orders[id])
    }

    pub fn counts(&self) -> OrderCounts {
        self.counts
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    pub fn reposition_log(&self) -> &[RepositionRecord] {
        &self.reposition_log
    }

    /// Recount order states from scratch (independent of the running counters).
    pub fn recount(&self) -> OrderCounts {
        let mut c = OrderCounts {
            created: self.orders.len(),
            ..OrderCounts::default()
        };
        for s in &self.order_state {
            match s {
                OrderState::Open => c.open += 1,
                OrderState::Assigned => c.assigned += 1,
                OrderState::Completed => c.completed += 1,
                OrderState::Expired => c.expired += 1,
            }
        }
        c
    }

    /// Start a new episode. The episode's random stream is derived from the
    /// configured `rng_seed` and `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Poll> {
        self.rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.rng_seed, seed));
        self.now = 0.0;
        self.queue.clear();
        self.orders.clear();
        self.order_state.clear();
        self.open.clear();
        self.waiting.clear();
        self.selected = None;
        self.done = false;
        self.counts = OrderCounts::default();
        self.stats = EpisodeStats {
            served_by_tag: vec![0; self.scenario.orders.tag_count()],
            ..EpisodeStats::default()
        };
        self.reposition_log.clear();

        let horizon = self.config.episode_horizon;
        self.spawns = self
            .scenario
            .drivers
            .sample_episode(&mut self.rng, &self.config);
        self.drafts = self
            .scenario
            .orders
            .sample_episode(&mut self.rng, &self.config);

        if !self.spawns.iter().any(|s| s.at < horizon) {
            self.done = true;
            return Err(Error::NoDecisionPoint);
        }

        self.drivers = self
            .spawns
            .iter()
            .enumerate()
            .map(|(id, s)| Driver {
                id,
                position: self.config.region.clamp(s.position),
                status: DriverStatus::Idle,
                activated_at: s.at,
                deactivates_at: s.lifetime.map_or(f64::INFINITY, |l| s.at + l),
                active: false,
                retiring: false,
            })
            .collect();

        // Drivers first so that simultaneous t = 0 arrivals see drivers
        // before orders; both follow insertion order afterwards.
        for (id, s) in self.spawns.iter().enumerate() {
            self.queue.push(s.at, EventKind::DriverArrival { driver_id: id });
            if let Some(l) = s.lifetime {
                self.queue
                    .push(s.at + l, EventKind::DriverDeparture { driver_id: id });
            }
        }
        for (i, d) in self.drafts.iter().enumerate() {
            self.queue.push(d.at, EventKind::OrderArrival { draft: i });
        }
        Ok(self.advance())
    }

    /// Legal actions for the currently selected driver.
    pub fn legal_actions(&self, driver_id: DriverId) -> Vec<Action> {
        let Some(driver) = self.drivers.get(driver_id) else {
            return Vec::new();
        };
        let assign = self.assignable_orders(driver);
        if !assign.is_empty() || self.config.simple_mode {
            assign
                .into_iter()
                .map(|order_id| Action::Assign { order_id })
                .collect()
        } else {
            Heading::ALL
                .iter()
                .map(|&heading| Action::Reposition { heading })
                .collect()
        }
    }

    /// Open orders the driver may take, ascending by id.
    pub(crate) fn assignable_orders(&self, driver: &Driver) -> Vec<OrderId> {
        if self.config.simple_mode {
            return self.open.clone();
        }
        let pos = driver.position_at(self.now, self.config.driver_speed, &self.config.region);
        self.open
            .iter()
            .copied()
            .filter(|&id| pos.distance(self.orders[id].origin) <= self.config.broadcast_radius)
            .collect()
    }

    pub fn observation(&self) -> Option<Observation> {
        self.selected.map(|d| features::observe(self, d))
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let driver_id = self.selected.ok_or(Error::NoPendingDecision)?;
        let t0 = self.now;
        let reward = match action {
            Action::Assign { order_id } => self.assign(driver_id, order_id)?,
            Action::Reposition { heading } => {
                self.reposition(driver_id, heading)?;
                0.0
            }
        };
        self.stats.decisions += 1;
        self.stats.total_reward += reward;
        self.selected = None;
        let next = self.advance();
        let t1 = if self.done {
            self.config.episode_horizon.max(t0)
        } else {
            self.now
        };
        Ok(StepOutcome {
            reward,
            next,
            elapsed: t1 - t0,
        })
    }

    fn assign(&mut self, driver_id: DriverId, order_id: OrderId) -> Result<f64> {
        let state = self
            .order_state
            .get(order_id)
            .copied()
            .ok_or_else(|| Error::IllegalAction(format!("unknown order {order_id}")))?;
        if state != OrderState::Open {
            return Err(Error::IllegalAction(format!(
                "order {order_id} is {state:?}, not open"
            )));
        }
        let order = &self.orders[order_id];
        let driver = &self.drivers[driver_id];
        let pos = driver.position_at(self.now, self.config.driver_speed, &self.config.region);
        let pickup = pos.distance(order.origin);
        if !self.config.simple_mode && pickup > self.config.broadcast_radius {
            return Err(Error::IllegalAction(format!(
                "order {order_id} is {pickup:.4} from driver {driver_id}, beyond broadcast radius {}",
                self.config.broadcast_radius
            )));
        }
        let speed = self.config.driver_speed;
        let completes_at =
            self.now + pickup / speed + order.origin.distance(order.destination) / speed;
        let price = order.price;
        let destination = order.destination;
        let tag = order.tag as usize;

        self.order_state[order_id] = OrderState::Assigned;
        self.remove_open(order_id);
        self.counts.open -= 1;
        self.counts.assigned += 1;
        self.stats.assignments += 1;
        self.stats.assigned_price_sum += price;
        if let Some(c) = self.stats.served_by_tag.get_mut(tag) {
            *c += 1;
        }

        let driver = &mut self.drivers[driver_id];
        driver.position = destination;
        driver.status = DriverStatus::Serving {
            order_id,
            completes_at,
        };
        self.queue
            .push(completes_at, EventKind::ServeComplete { driver_id });
        Ok(price)
    }

    fn reposition(&mut self, driver_id: DriverId, heading: Heading) -> Result<()> {
        if self.config.simple_mode {
            return Err(Error::IllegalAction(
                "reposition actions are disabled in simple mode".into(),
            ));
        }
        let driver = &self.drivers[driver_id];
        if let Some(&oid) = self.assignable_orders(driver).first() {
            return Err(Error::IllegalAction(format!(
                "cannot reposition driver {driver_id}: order {oid} is within the broadcast radius"
            )));
        }
        let base = self.config.reposition_duration;
        let duration = match &self.noise {
            // Truncated at -base/2 by rejection.
            Some(normal) => loop {
                let eps = normal.sample(&mut self.rng);
                if eps > -0.5 * base {
                    break base + eps;
                }
            },
            None => base,
        };
        let from = driver.position;
        let (ux, uy) = heading.unit();
        let reach = self.config.driver_speed * duration;
        let to = self.config.region.clamp(from.offset(ux * reach, uy * reach));
        let completes_at = self.now + duration;
        if self.record_repositions {
            self.reposition_log.push(RepositionRecord {
                at_x: from.x,
                at_y: from.y,
                heading,
            });
        }
        self.stats.repositions += 1;
        let driver = &mut self.drivers[driver_id];
        driver.status = DriverStatus::Repositioning {
            heading,
            from,
            to,
            started_at: self.now,
            completes_at,
        };
        self.queue
            .push(completes_at, EventKind::RepositionComplete { driver_id });
        Ok(())
    }

    fn remove_open(&mut self, order_id: OrderId) {
        if let Ok(i) = self.open.binary_search(&order_id) {
            self.open.remove(i);
        }
    }

    /// Expire every open order whose deadline is at or before `now`.
    pub fn expire_orders(&mut self, now: f64) -> usize {
        let before = self.open.len();
        let orders = &self.orders;
        let states = &mut self.order_state;
        self.open.retain(|&id| {
            if orders[id].expires_at <= now {
                states[id] = OrderState::Expired;
                false
            } else {
                true
            }
        });
        let n = before - self.open.len();
        self.counts.open -= n;
        self.counts.expired += n;
        n
    }

    fn finish(&mut self) -> Poll {
        self.done = true;
        self.selected = None;
        self.now = self.now.max(self.config.episode_horizon);
        Poll::Done
    }

    /// Run events until the next decision point or the horizon.
    fn advance(&mut self) -> Poll {
        let horizon = self.config.episode_horizon;
        loop {
            if self.config.simple_mode && !self.open.is_empty() {
                if let Some(d) = self.waiting.pop_front() {
                    self.selected = Some(d);
                    return Poll::Decision(features::observe(self, d));
                }
            }
            match self.queue.peek() {
                Some(ev) if ev.at < horizon => {}
                _ => return self.finish(),
            }
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.at >= self.now);
            self.now = ev.at;
            self.stats.events_processed += 1;
            let available = self.handle(ev.kind);
            if self.audit {
                self.audit_state();
            }
            if let Some(d) = available {
                self.expire_orders(self.now);
                if self.config.simple_mode && self.open.is_empty() {
                    self.waiting.push_back(d);
                    continue;
                }
                self.selected = Some(d);
                return Poll::Decision(features::observe(self, d));
            }
        }
    }

    /// Apply one event; returns a driver that just became available.
    fn handle(&mut self, kind: EventKind) -> Option<DriverId> {
        match kind {
            EventKind::OrderArrival { draft } => {
                let d = &self.drafts[draft];
                let id = self.orders.len();
                let expires_at = self.now + d.valid_for.unwrap_or(self.config.order_validity_window);
                self.orders.push(Order {
                    id,
                    origin: d.origin,
                    destination: d.destination,
                    price: d.price,
                    created_at: self.now,
                    expires_at,
                    tag: d.tag,
                });
                self.order_state.push(OrderState::Open);
                self.open.push(id);
                self.counts.created += 1;
                self.counts.open += 1;
                self.stats.orders_created += 1;
                self.queue
                    .push(expires_at, EventKind::OrderExpiry { order_id: id });
                None
            }
            EventKind::OrderExpiry { .. } => {
                self.expire_orders(self.now);
                None
            }
            EventKind::ServeComplete { driver_id } => {
                if let DriverStatus::Serving { order_id, .. } = self.drivers[driver_id].status {
                    self.order_state[order_id] = OrderState::Completed;
                    self.counts.assigned -= 1;
                    self.counts.completed += 1;
                }
                self.settle(driver_id)
            }
            EventKind::RepositionComplete { driver_id } => {
                if let DriverStatus::Repositioning { to, .. } = self.drivers[driver_id].status {
                    self.drivers[driver_id].position = to;
                }
                self.settle(driver_id)
            }
            EventKind::DriverArrival { driver_id } => {
                let d = &mut self.drivers[driver_id];
                d.active = true;
                d.status = DriverStatus::Idle;
                Some(driver_id)
            }
            EventKind::DriverDeparture { driver_id } => {
                let d = &mut self.drivers[driver_id];
                if !d.active {
                    return None;
                }
                if d.is_idle() {
                    d.active = false;
                    self.waiting.retain(|&w| w != driver_id);
                } else {
                    d.retiring = true;
                }
                None
            }
        }
    }

    fn settle(&mut self, driver_id: DriverId) -> Option<DriverId> {
        let d = &mut self.drivers[driver_id];
        d.status = DriverStatus::Idle;
        if d.retiring {
            d.active = false;
            None
        } else {
            Some(driver_id)
        }
    }

    fn audit_state(&mut self) {
        let c = self.recount();
        let mut ok = c == self.counts && c.is_conserved();
        for d in self.drivers.iter().filter(|d| d.active) {
            if let Some(t) = d.completes_at() {
                // A completion scheduled at exactly `now` is still pending in
                // the queue when several events share a timestamp.
                if t < self.now {
                    ok = false;
                }
            }
        }
        if !ok {
            self.stats.audit_failures += 1;
        }
    }

    /// Position of `driver` as observers see it now.
    pub fn driver_position(&self, driver: &Driver) -> Point {
        driver.position_at(self.now, self.config.driver_speed, &self.config.region)
    }
}

#[cfg(test)]
mod tests;
