//! Order and driver generation for the five experiment domains.
//!
//! A [`Scenario`] bundles an engine configuration with an [`OrderScheme`] and a
//! [`DriverScheme`]. Schemes are sampled once per episode at reset, through the
//! engine's seeded generator, into time-stamped arrival lists.

mod files;
mod grid;

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

pub use files::{
    read_historical_orders, read_poisson_grid, write_historical_orders, write_poisson_grid,
    HistoricalRecord, HISTORICAL_HEADER,
};
pub use grid::{PoissonGrid, GRID_HOURS, GRID_TILES_PER_SIDE};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::sim::SimConfig;

/// One order as produced by a scheme, before it enters the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderDraft {
    pub at: f64,
    pub origin: Point,
    pub destination: Point,
    pub price: f64,
    /// Overrides the configured validity window.
    pub valid_for: Option<f64>,
    pub tag: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverSpawn {
    pub at: f64,
    pub position: Point,
    /// Time online before the driver leaves; `None` means until the horizon.
    pub lifetime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    Area(Rect),
    Segment(Point, Point),
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Sampler::Area(r) => r.sample(rng),
            Sampler::Segment(a, b) => {
                let u: f64 = rng.random();
                Point::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y))
            }
        }
    }

    /// Smallest rectangle containing every point the sampler can produce.
    pub fn bounds(&self) -> Rect {
        match self {
            Sampler::Area(r) => *r,
            Sampler::Segment(a, b) => Rect::new(a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriceRule {
    Fixed(f64),
    /// Euclidean pickup-to-drop-off distance.
    Distance,
}

impl PriceRule {
    pub fn price(self, origin: Point, destination: Point) -> f64 {
        match self {
            PriceRule::Fixed(p) => p,
            PriceRule::Distance => origin.distance(destination),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub name: String,
    pub weight: f64,
    pub origin: Sampler,
    pub destination: Sampler,
    pub price: PriceRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonRegions {
    /// Total arrival rate, orders per time unit.
    pub rate: f64,
    pub flows: Vec<Flow>,
}

impl PoissonRegions {
    /// Draw one order's flow index, origin, destination and price.
    pub fn sample_order<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Point, Point, f64) {
        let total: f64 = self.flows.iter().map(|f| f.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut idx = self.flows.len() - 1;
        for (i, f) in self.flows.iter().enumerate() {
            if u < f.weight {
                idx = i;
                break;
            }
            u -= f.weight;
        }
        let flow = &self.flows[idx];
        let o = flow.origin.sample(rng);
        let d = flow.destination.sample(rng);
        (idx, o, d, flow.price.price(o, d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub area: Rect,
    pub count: usize,
}

/// All orders appear at once at `at` and stay valid until the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOrders {
    pub at: f64,
    pub patches: Vec<Patch>,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayOrder {
    /// Sim-time of creation.
    pub time: f64,
    pub origin: Point,
    pub destination: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub days: Arc<Vec<Vec<ReplayOrder>>>,
    /// Replay this day every episode instead of sampling one.
    pub fixed_day: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOrders {
    pub grid: Arc<PoissonGrid>,
    pub scale: f64,
    /// Sim-time units per grid hour.
    pub hour_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderScheme {
    PoissonRegions(PoissonRegions),
    Batch(BatchOrders),
    Replay(Replay),
    PoissonGrid(GridOrders),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriverScheme {
    /// `count` drivers online from time zero, uniformly placed in `spawn`.
    Fixed { count: usize, spawn: Rect },
    /// Drivers activated by a Poisson process per (tile, hour).
    PoissonGrid {
        grid: Arc<PoissonGrid>,
        scale: f64,
        hour_length: f64,
        lifetime: f64,
    },
}

fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as usize
}

impl OrderScheme {
    pub fn tag_count(&self) -> usize {
        match self {
            OrderScheme::PoissonRegions(p) => p.flows.len(),
            OrderScheme::Batch(b) => b.patches.len(),
            _ => 1,
        }
    }

    /// Sampled arrivals for one episode, sorted by time.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R, config: &SimConfig) -> Vec<OrderDraft> {
        let horizon = config.episode_horizon;
        match self {
            OrderScheme::PoissonRegions(p) => {
                let mut out = Vec::new();
                if p.rate <= 0.0 || p.flows.is_empty() {
                    return out;
                }
                let gap = Exp::new(p.rate).expect("positive rate");
                let mut t = 0.0;
                loop {
                    t += gap.sample(rng);
                    if t >= horizon {
                        break;
                    }
                    let (tag, origin, destination, price) = p.sample_order(rng);
                    out.push(OrderDraft {
                        at: t,
                        origin,
                        destination,
                        price,
                        valid_for: None,
                        tag: tag as u16,
                    });
                }
                out
            }
            OrderScheme::Batch(b) => {
                let valid_for = (horizon - b.at).max(f64::MIN_POSITIVE);
                let centre = config.region.center();
                let mut out = Vec::new();
                for (tag, patch) in b.patches.iter().enumerate() {
                    for _ in 0..patch.count {
                        let origin = patch.area.sample(rng);
                        // Mirror through the region centre: far enough that a
                        // driver can serve only one order before the horizon.
                        let destination =
                            Point::new(2.0 * centre.x - origin.x, 2.0 * centre.y - origin.y);
                        out.push(OrderDraft {
                            at: b.at,
                            origin,
                            destination,
                            price: b.price,
                            valid_for: Some(valid_for),
                            tag: tag as u16,
                        });
                    }
                }
                out
            }
            OrderScheme::Replay(r) => {
                if r.days.is_empty() {
                    return Vec::new();
                }
                let day = r
                    .fixed_day
                    .unwrap_or_else(|| rng.random_range(0..r.days.len()));
                r.days[day.min(r.days.len() - 1)]
                    .iter()
                    .filter(|o| o.time < horizon)
                    .map(|o| OrderDraft {
                        at: o.time,
                        origin: o.origin,
                        destination: o.destination,
                        price: o.origin.distance(o.destination),
                        valid_for: None,
                        tag: 0,
                    })
                    .collect()
            }
            OrderScheme::PoissonGrid(g) => {
                let mut out = Vec::new();
                let hours = (horizon / g.hour_length).ceil() as usize;
                for h in 0..hours {
                    let hod = h % g.grid.hours();
                    let mean = g.scale * g.grid.order_rate_total(hod);
                    let n = sample_poisson(rng, mean);
                    let start = h as f64 * g.hour_length;
                    let mut batch: Vec<OrderDraft> = (0..n)
                        .map(|_| {
                            let at = start + rng.random::<f64>() * g.hour_length;
                            let (o, d) = g.grid.sample_order_tiles(rng, hod);
                            let origin = g.grid.tile_rect(o).sample(rng);
                            let destination = g.grid.tile_rect(d).sample(rng);
                            OrderDraft {
                                at,
                                origin,
                                destination,
                                price: origin.distance(destination),
                                valid_for: None,
                                tag: 0,
                            }
                        })
                        .filter(|d| d.at < horizon)
                        .collect();
                    batch.sort_by(|a, b| a.at.total_cmp(&b.at));
                    out.extend(batch);
                }
                out
            }
        }
    }

    fn validate(&self, region: &Rect) -> Result<()> {
        let inside = |s: &Sampler, what: &str| -> Result<()> {
            let b = s.bounds();
            if region.contains(b.min) && region.contains(b.max) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{what} sampler leaves the region")))
            }
        };
        match self {
            OrderScheme::PoissonRegions(p) => {
                if !(p.rate >= 0.0) {
                    return Err(Error::InvalidConfig("order rate must be >= 0".into()));
                }
                for f in &p.flows {
                    if !(f.weight >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "flow {} has a negative weight",
                            f.name
                        )));
                    }
                    inside(&f.origin, &format!("flow {} origin", f.name))?;
                    inside(&f.destination, &format!("flow {} destination", f.name))?;
                    if let PriceRule::Fixed(p) = f.price {
                        if !(p >= 0.0) {
                            return Err(Error::InvalidConfig("prices must be >= 0".into()));
                        }
                    }
                }
                Ok(())
            }
            OrderScheme::Batch(b) => {
                for p in &b.patches {
                    inside(&Sampler::Area(p.area), "patch")?;
                }
                if !(b.price >= 0.0) {
                    return Err(Error::InvalidConfig("prices must be >= 0".into()));
                }
                Ok(())
            }
            OrderScheme::Replay(r) => {
                if let Some(d) = r.fixed_day {
                    if d >= r.days.len() {
                        return Err(Error::InvalidConfig(format!(
                            "fixed day {d} out of range ({} days)",
                            r.days.len()
                        )));
                    }
                }
                Ok(())
            }
            OrderScheme::PoissonGrid(g) => {
                if !(g.scale >= 0.0) || !(g.hour_length > 0.0) {
                    return Err(Error::InvalidConfig(
                        "grid scale must be >= 0 and hour length > 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

impl DriverScheme {
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R, config: &SimConfig) -> Vec<DriverSpawn> {
        match self {
            DriverScheme::Fixed { count, spawn } => (0..*count)
                .map(|_| DriverSpawn {
                    at: 0.0,
                    position: spawn.sample(rng),
                    lifetime: None,
                })
                .collect(),
            DriverScheme::PoissonGrid {
                grid,
                scale,
                hour_length,
                lifetime,
            } => {
                let mut out = Vec::new();
                let horizon = config.episode_horizon;
                let hours = (horizon / hour_length).ceil() as usize;
                for h in 0..hours {
                    let hod = h % grid.hours();
                    let n = sample_poisson(rng, scale * grid.driver_rate_total(hod));
                    let start = h as f64 * hour_length;
                    let mut batch: Vec<DriverSpawn> = (0..n)
                        .map(|_| {
                            let at = start + rng.random::<f64>() * hour_length;
                            let tile = grid.sample_driver_tile(rng, hod);
                            DriverSpawn {
                                at,
                                position: grid.tile_rect(tile).sample(rng),
                                lifetime: Some(*lifetime),
                            }
                        })
                        .filter(|s| s.at < horizon)
                        .collect();
                    batch.sort_by(|a, b| a.at.total_cmp(&b.at));
                    out.extend(batch);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub orders: OrderScheme,
    pub drivers: DriverScheme,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.orders.validate(&self.config.region)?;
        match &self.drivers {
            DriverScheme::Fixed { spawn, .. } => {
                if !(self.config.region.contains(spawn.min) && self.config.region.contains(spawn.max)) {
                    return Err(Error::InvalidConfig("driver spawn area leaves the region".into()));
                }
            }
            DriverScheme::PoissonGrid {
                scale,
                hour_length,
                lifetime,
                ..
            } => {
                if !(*scale >= 0.0 && *hour_length > 0.0 && *lifetime > 0.0) {
                    return Err(Error::InvalidConfig(
                        "driver scale must be >= 0, hour length and lifetime > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Replace a fixed driver count.
    pub fn with_drivers(mut self, count: usize) -> Self {
        if let DriverScheme::Fixed { count: c, .. } = &mut self.drivers {
            *c = count;
        }
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.config.episode_horizon = horizon;
        self
    }

    /// Replace the total Poisson arrival rate (region-flow schemes only).
    pub fn with_order_rate(mut self, rate: f64) -> Self {
        if let OrderScheme::PoissonRegions(p) = &mut self.orders {
            p.rate = rate;
        }
        self
    }

    pub fn with_simple_mode(mut self, on: bool) -> Self {
        self.config.simple_mode = on;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.config.reposition_noise_sigma = sigma;
        self
    }

    pub fn fixed_driver_count(&self) -> Option<usize> {
        match self.drivers {
            DriverScheme::Fixed { count, .. } => Some(count),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Demand {
    High,
    Low,
}

impl Demand {
    /// Orders per time unit.
    pub fn rate(self) -> f64 {
        match self {
            Demand::High => 2.0,
            Demand::Low => 0.5,
        }
    }
}

pub const DEFAULT_DRIVERS: usize = 10;

pub const REGIONAL_CENTER: Rect = Rect::new(0.4, 0.4, 0.6, 0.6);
pub const REGIONAL_UPPER_LEFT: Rect = Rect::new(0.0, 0.8, 0.2, 1.0);
pub const REGIONAL_BOTTOM_RIGHT: Rect = Rect::new(0.8, 0.0, 1.0, 0.2);

/// Flow tags of the Regional domain, in `flows` order.
pub mod regional_flows {
    pub const CENTER_TO_UPPER_LEFT: u16 = 0;
    pub const CENTER_TO_BOTTOM_RIGHT: u16 = 1;
    pub const UPPER_LEFT_TO_CENTER: u16 = 2;
    pub const BOTTOM_RIGHT_TO_CENTER: u16 = 3;
}

fn unit_region() -> Rect {
    Rect::new(0.0, 0.0, 1.0, 1.0)
}

/// Three square regions with four equally likely flows; only bottom-right to
/// centre orders pay 4, everything else pays 2.
pub fn regional(demand: Demand) -> Scenario {
    let flow = |name: &str, o: Rect, d: Rect, price: f64| Flow {
        name: name.to_string(),
        weight: 0.25,
        origin: Sampler::Area(o),
        destination: Sampler::Area(d),
        price: PriceRule::Fixed(price),
    };
    Scenario {
        name: format!("regional-{}", demand_name(demand)),
        config: SimConfig::default(),
        orders: OrderScheme::PoissonRegions(PoissonRegions {
            rate: demand.rate(),
            flows: vec![
                flow("center->upper-left", REGIONAL_CENTER, REGIONAL_UPPER_LEFT, 2.0),
                flow("center->bottom-right", REGIONAL_CENTER, REGIONAL_BOTTOM_RIGHT, 2.0),
                flow("upper-left->center", REGIONAL_UPPER_LEFT, REGIONAL_CENTER, 2.0),
                flow("bottom-right->center", REGIONAL_BOTTOM_RIGHT, REGIONAL_CENTER, 4.0),
            ],
        }),
        drivers: DriverScheme::Fixed {
            count: DEFAULT_DRIVERS,
            spawn: unit_region(),
        },
    }
}

pub const HOT_REGION: Rect = Rect::new(0.0, 0.8, 1.0, 1.0);

pub mod hot_cold_flows {
    pub const TO_HOT: u16 = 0;
    pub const TO_COLD: u16 = 1;
}

/// Pickups uniform along the top edge; a fair coin sends the drop-off either
/// into the hot band under the top edge or onto the bottom edge. Price is
/// the trip length. The coin is the choice between two equally weighted flows.
pub fn hot_cold(demand: Demand) -> Scenario {
    let top = Sampler::Segment(Point::new(0.0, 1.0), Point::new(1.0, 1.0));
    let bottom = Sampler::Segment(Point::new(0.0, 0.0), Point::new(1.0, 0.0));
    Scenario {
        name: format!("hot-cold-{}", demand_name(demand)),
        config: SimConfig::default(),
        orders: OrderScheme::PoissonRegions(PoissonRegions {
            rate: demand.rate(),
            flows: vec![
                Flow {
                    name: "top->hot".into(),
                    weight: 0.5,
                    origin: top.clone(),
                    destination: Sampler::Area(HOT_REGION),
                    price: PriceRule::Distance,
                },
                Flow {
                    name: "top->cold".into(),
                    weight: 0.5,
                    origin: top,
                    destination: bottom,
                    price: PriceRule::Distance,
                },
            ],
        }),
        drivers: DriverScheme::Fixed {
            count: DEFAULT_DRIVERS,
            spawn: unit_region(),
        },
    }
}

pub const DISTRIBUTE_PATCH_FIRST: Rect = Rect::new(0.05, 0.85, 0.15, 0.95);
pub const DISTRIBUTE_PATCH_SECOND: Rect = Rect::new(0.85, 0.05, 0.95, 0.15);
pub const DISTRIBUTE_SPAWN: Rect = Rect::new(0.45, 0.45, 0.55, 0.55);

/// Orders in the first (top-left) patch; the rest go bottom-right.
pub fn distribute_split(split: f64, k: usize) -> (usize, usize) {
    let first = ((split * k as f64) + 0.5).floor() as usize;
    let first = first.min(k);
    (first, k - first)
}

/// Two-phase supply placement task: `k` drivers reposition with no orders for
/// three reposition periods, then `k` unit-price orders appear in two corner
/// patches and remain until the horizon one reposition period (plus half a
/// period of slack) later.
pub fn distribute(split: f64, k: usize) -> Result<Scenario> {
    if k == 0 {
        return Err(Error::InvalidConfig("distribute needs k >= 1".into()));
    }
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::InvalidConfig("split must lie in [0, 1]".into()));
    }
    let mut config = SimConfig::default();
    let phase_one = 3.0 * config.reposition_duration;
    config.episode_horizon = phase_one + 1.5 * config.reposition_duration;
    let (a, b) = distribute_split(split, k);
    Ok(Scenario {
        name: format!("distribute-{}-{}", (split * 100.0).round(), k),
        config,
        orders: OrderScheme::Batch(BatchOrders {
            at: phase_one,
            patches: vec![
                Patch {
                    area: DISTRIBUTE_PATCH_FIRST,
                    count: a,
                },
                Patch {
                    area: DISTRIBUTE_PATCH_SECOND,
                    count: b,
                },
            ],
            price: 1.0,
        }),
        drivers: DriverScheme::Fixed {
            count: k,
            spawn: DISTRIBUTE_SPAWN,
        },
    })
}

/// Square city side for the historical domains, in km.
pub const CITY_SIDE_KM: f64 = 20.0;
pub const HISTORICAL_DRIVERS: usize = 100;

/// Engine settings for the km/minute historical domains.
pub fn historical_config() -> SimConfig {
    SimConfig {
        region: Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM),
        // 40 km/h in km per minute.
        driver_speed: 40.0 / 60.0,
        broadcast_radius: 2.0,
        reposition_duration: 5.0,
        reposition_noise_sigma: 0.05,
        order_validity_window: 10.0,
        episode_horizon: 24.0 * 60.0,
        simple_mode: false,
        rng_seed: 0,
        price_scale: CITY_SIDE_KM,
    }
}

/// Replay of recorded days: each episode replays one day chosen uniformly.
pub fn historical_orders(path: &Path) -> Result<Scenario> {
    let records = read_historical_orders(path)?;
    Ok(historical_orders_from(&records, None))
}

/// Build the replay scenario from parsed records. `days` forces the number
/// of day slots (empty days are valid episodes).
pub fn historical_orders_from(records: &[HistoricalRecord], days: Option<usize>) -> Scenario {
    let n_days = days.unwrap_or_else(|| records.iter().map(|r| r.day + 1).max().unwrap_or(1));
    let mut by_day = vec![Vec::new(); n_days.max(1)];
    for r in records {
        if r.day < by_day.len() {
            by_day[r.day].push(ReplayOrder {
                time: r.time_seconds / 60.0,
                origin: r.origin,
                destination: r.destination,
            });
        }
    }
    for day in &mut by_day {
        day.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    Scenario {
        name: "historical-orders".into(),
        config: historical_config(),
        orders: OrderScheme::Replay(Replay {
            days: Arc::new(by_day),
            fixed_day: None,
        }),
        drivers: DriverScheme::Fixed {
            count: HISTORICAL_DRIVERS,
            spawn: Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM),
        },
    }
}

pub const ORDER_SCALE: f64 = 0.5;
/// Driver rates are cut to 7% and then halved along with the orders.
pub const DRIVER_SCALE: f64 = 0.07 * 0.5;
pub const DRIVER_LIFETIME_HOURS: f64 = 6.0;

/// Orders and drivers both drawn from per-tile, per-hour Poisson rates.
pub fn historical_statistics(path: &Path) -> Result<Scenario> {
    let grid = read_poisson_grid(path)?;
    historical_statistics_from(Arc::new(grid))
}

pub fn historical_statistics_from(grid: Arc<PoissonGrid>) -> Result<Scenario> {
    if grid.tiles_x() != GRID_TILES_PER_SIDE
        || grid.tiles_y() != GRID_TILES_PER_SIDE
        || grid.hours() != GRID_HOURS
    {
        return Err(Error::Shape(format!(
            "historical statistics needs a {t}x{t} grid over {h} hours, got {}x{}x{}",
            grid.tiles_x(),
            grid.tiles_y(),
            grid.hours(),
            t = GRID_TILES_PER_SIDE,
            h = GRID_HOURS
        )));
    }
    let mut config = historical_config();
    config.region = grid.region();
    config.price_scale = config.region.longer_side();
    let hour = 60.0;
    Ok(Scenario {
        name: "historical-statistics".into(),
        config,
        orders: OrderScheme::PoissonGrid(GridOrders {
            grid: grid.clone(),
            scale: ORDER_SCALE,
            hour_length: hour,
        }),
        drivers: DriverScheme::PoissonGrid {
            grid,
            scale: DRIVER_SCALE,
            hour_length: hour,
            lifetime: DRIVER_LIFETIME_HOURS * hour,
        },
    })
}

fn demand_name(d: Demand) -> &'static str {
    match d {
        Demand::High => "high",
        Demand::Low => "low",
    }
}

#[cfg(test)]
mod tests;
