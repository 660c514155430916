use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};
use crate::scenarios::{
    read_historical_orders, write_historical_orders, write_poisson_grid, HistoricalRecord, PoissonGrid,
    CITY_SIDE_KM, GRID_HOURS, GRID_TILES_PER_SIDE,
};

pub const ORDERS_FILE: &str = "orders.csv";
pub const GRID_FILE: &str = "grid.txt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub weight: f64,
}

/// Spatial mixture and daily profile of the synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub days: usize,
    /// Mean orders per day; the daily count is Poisson.
    pub daily_orders: f64,
    pub hotspots: Vec<Hotspot>,
    /// Share of locations drawn uniformly over the city.
    pub background: f64,
    /// Relative order intensity of each hour of the day.
    pub hourly: Vec<f64>,
}

impl SynthConfig {
    pub fn new(days: usize, daily_orders: f64) -> Self {
        let h = |x, y, sigma, weight| Hotspot { x, y, sigma, weight };
        Self {
            days,
            daily_orders,
            hotspots: vec![
                h(10.0, 10.0, 1.5, 0.35),
                h(5.0, 14.0, 1.0, 0.2),
                h(15.0, 6.0, 1.2, 0.2),
                h(4.0, 4.0, 0.8, 0.1),
                h(16.0, 16.0, 1.0, 0.15),
            ],
            background: 0.2,
            hourly: vec![
                0.3, 0.2, 0.15, 0.1, 0.1, 0.2, 0.5, 1.2, 1.6, 1.2, 0.9, 0.9, 1.0, 0.9, 0.8, 0.9, 1.1, 1.5,
                1.7, 1.4, 1.1, 0.9, 0.7, 0.5,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::InvalidConfig("days must be at least 1".into()));
        }
        if !(self.daily_orders >= 0.0 && self.daily_orders.is_finite()) {
            return Err(Error::InvalidConfig("daily_orders must be finite and >= 0".into()));
        }
        if self.hourly.len() != GRID_HOURS || self.hourly.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("hourly needs {GRID_HOURS} non-negative weights")));
        }
        if self.hourly.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("hourly weights must not all be zero".into()));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::InvalidConfig("background must lie in [0, 1]".into()));
        }
        if self.background < 1.0 && self.hotspots.iter().map(|s| s.weight).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("hotspot weights must not all be zero".into()));
        }
        if self.hotspots.iter().any(|s| !(s.sigma > 0.0 && s.weight >= 0.0)) {
            return Err(Error::InvalidConfig("hotspots need sigma > 0 and weight >= 0".into()));
        }
        Ok(())
    }

    /// Share of the daily orders created in `hour`.
    pub fn hour_share(&self, hour: usize) -> f64 {
        self.hourly[hour] / self.hourly.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub orders_file: PathBuf,
    pub grid_file: PathBuf,
    pub rows: usize,
    /// Orders created in each hour of the day, summed over days.
    pub hourly_counts: Vec<u64>,
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn location(cfg: &SynthConfig, city: &Rect, rng: &mut ChaCha8Rng) -> Point {
    if cfg.hotspots.is_empty() || rng.random::<f64>() < cfg.background {
        return Point::new(
            rng.random_range(city.min.x..city.max.x),
            rng.random_range(city.min.y..city.max.y),
        );
    }
    let weights: Vec<f64> = cfg.hotspots.iter().map(|s| s.weight).collect();
    let s = cfg.hotspots[pick(&weights, rng)];
    let nx = Normal::new(s.x, s.sigma).expect("sigma checked positive");
    let ny = Normal::new(s.y, s.sigma).expect("sigma checked positive");
    loop {
        let p = Point::new(nx.sample(rng), ny.sample(rng));
        if p.x >= city.min.x && p.x < city.max.x && p.y >= city.min.y && p.y < city.max.y {
            return p;
        }
    }
}

/// Sample the order records, sorted by day and time.
pub fn sample_orders(cfg: &SynthConfig, seed: u64) -> Result<Vec<HistoricalRecord>> {
    cfg.validate()?;
    let city = Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for day in 0..cfg.days {
        let n = if cfg.daily_orders > 0.0 {
            Poisson::new(cfg.daily_orders)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let mut records: Vec<HistoricalRecord> = (0..n)
            .map(|_| {
                let hour = pick(&cfg.hourly, &mut rng);
                let time_seconds = (hour as f64 + rng.random::<f64>()) * 3600.0;
                let origin = location(cfg, &city, &mut rng);
                let destination = location(cfg, &city, &mut rng);
                HistoricalRecord {
                    day,
                    time_seconds,
                    origin,
                    destination,
                }
            })
            .collect();
        records.sort_by(|a, b| a.time_seconds.total_cmp(&b.time_seconds));
        out.extend(records);
    }
    Ok(out)
}

/// Empirical per-hour rates of `records` over `days`: order rates per
/// (origin tile, destination tile, hour) and driver rates from the pickup
/// counts per (tile, hour).
pub fn empirical_grid(records: &[HistoricalRecord], days: usize) -> Result<PoissonGrid> {
    let city = Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM);
    let t = GRID_TILES_PER_SIDE * GRID_TILES_PER_SIDE;
    let shape = PoissonGrid::zeros(GRID_TILES_PER_SIDE, GRID_TILES_PER_SIDE, GRID_HOURS, city)?;
    let mut kappa = vec![0.0; t * t * GRID_HOURS];
    let mut drivers = vec![0.0; t * GRID_HOURS];
    let per_day = 1.0 / days.max(1) as f64;
    for r in records {
        let hour = ((r.time_seconds / 3600.0).floor() as usize).min(GRID_HOURS - 1);
        let (Some(o), Some(d)) = (
            shape.tile_of(r.origin.x, r.origin.y),
            shape.tile_of(r.destination.x, r.destination.y),
        ) else {
            continue;
        };
        kappa[(hour * t + o) * t + d] += per_day;
        drivers[hour * t + o] += per_day;
    }
    PoissonGrid::new(GRID_TILES_PER_SIDE, GRID_TILES_PER_SIDE, GRID_HOURS, city, kappa, drivers)
}

/// Write `orders.csv` and `grid.txt` into `out_dir`. The grid is computed
/// from the file as written, so it matches the rounded values exactly.
pub fn gen_synthetic_historical(cfg: &SynthConfig, seed: u64, out_dir: &Path) -> Result<SynthOutput> {
    let records = sample_orders(cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("create {}", out_dir.display()), e))?;
    let orders_file = out_dir.join(ORDERS_FILE);
    let grid_file = out_dir.join(GRID_FILE);
    write_historical_orders(&orders_file, &records)?;
    let written = read_historical_orders(&orders_file)?;
    write_poisson_grid(&grid_file, &empirical_grid(&written, cfg.days)?)?;
    let mut hourly_counts = vec![0u64; GRID_HOURS];
    for r in &written {
        hourly_counts[((r.time_seconds / 3600.0).floor() as usize).min(GRID_HOURS - 1)] += 1;
    }
    Ok(SynthOutput {
        orders_file,
        grid_file,
        rows: written.len(),
        hourly_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::read_poisson_grid;

    #[test]
    fn rows_stay_in_the_city_and_follow_the_daily_total() {
        let cfg = SynthConfig::new(30, 2000.0);
        let rows = sample_orders(&cfg, 5).unwrap();
        let expected = 60_000.0;
        assert!((rows.len() as f64 - expected).abs() < 3.0 * expected.sqrt(), "{}", rows.len());
        for r in &rows {
            assert!(r.day < 30);
            assert!((0.0..86_400.0).contains(&r.time_seconds));
            for p in [r.origin, r.destination] {
                assert!((0.0..=CITY_SIDE_KM).contains(&p.x) && (0.0..=CITY_SIDE_KM).contains(&p.y));
            }
        }
        assert!(rows.windows(2).all(|w| (w[0].day, w[0].time_seconds) <= (w[1].day, w[1].time_seconds)));
    }

    #[test]
    fn files_are_byte_identical_for_a_fixed_seed() {
        let cfg = SynthConfig::new(2, 300.0);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen_synthetic_historical(&cfg, 9, a.path()).unwrap();
        gen_synthetic_historical(&cfg, 9, b.path()).unwrap();
        for f in [ORDERS_FILE, GRID_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let c = tempfile::tempdir().unwrap();
        gen_synthetic_historical(&cfg, 10, c.path()).unwrap();
        assert_ne!(fs::read(a.path().join(ORDERS_FILE)).unwrap(), fs::read(c.path().join(ORDERS_FILE)).unwrap());
    }

    #[test]
    fn grid_hour_totals_match_the_generated_counts() {
        let cfg = SynthConfig::new(4, 500.0);
        let dir = tempfile::tempdir().unwrap();
        let out = gen_synthetic_historical(&cfg, 3, dir.path()).unwrap();
        let grid = read_poisson_grid(&out.grid_file).unwrap();
        for h in 0..GRID_HOURS {
            let total: f64 = grid.kappa_slice()[h * 160_000..(h + 1) * 160_000].iter().sum();
            assert!((total * 4.0 - out.hourly_counts[h] as f64).abs() < 1e-6, "hour {h}");
            assert!((grid.driver_rate_total(h) * 4.0 - out.hourly_counts[h] as f64).abs() < 1e-6);
        }
        assert_eq!(out.hourly_counts.iter().sum::<u64>() as usize, out.rows);
    }

    #[test]
    fn rejects_zero_days_and_bad_profiles() {
        assert!(SynthConfig::new(0, 10.0).validate().is_err());
        let mut c = SynthConfig::new(1, 10.0);
        c.hourly.pop();
        assert!(c.validate().is_err());
    }
}
