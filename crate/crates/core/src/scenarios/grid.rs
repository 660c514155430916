use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::Rect;

pub const GRID_TILES_PER_SIDE: usize = 20;
pub const GRID_HOURS: usize = 24;

/// Per-hour Poisson rates for orders between tile pairs and for driver
/// activations per tile.
///
/// Tiles are numbered row-major from the region's lower-left corner:
/// `tile = ty * tiles_x + tx`. Order rates are stored hour-major, so
/// `kappa(o, d, h)` lives at `(h * T + o) * T + d` with `T = tiles_x * tiles_y`.
/// Rates are expected arrivals per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonGrid {
    tiles_x: usize,
    tiles_y: usize,
    hours: usize,
    region: Rect,
    kappa: Vec<f64>,
    driver_rates: Vec<f64>,
    /// Per hour, cumulative order rate over origin tiles.
    origin_cdf: Vec<f64>,
    /// Per hour, cumulative driver rate over tiles.
    driver_cdf: Vec<f64>,
}

fn cumulative(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Index of the first cumulative entry strictly above `u`.
fn search(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl PoissonGrid {
    pub fn new(
        tiles_x: usize,
        tiles_y: usize,
        hours: usize,
        region: Rect,
        kappa: Vec<f64>,
        driver_rates: Vec<f64>,
    ) -> Result<Self> {
        let t = tiles_x * tiles_y;
        if t == 0 || hours == 0 {
            return Err(Error::Shape("grid needs at least one tile and one hour".into()));
        }
        if kappa.len() != t * t * hours {
            return Err(Error::Shape(format!(
                "order rates: expected {t}x{t}x{hours} = {} entries, got {}",
                t * t * hours,
                kappa.len()
            )));
        }
        if driver_rates.len() != t * hours {
            return Err(Error::Shape(format!(
                "driver rates: expected {t}x{hours} = {} entries, got {}",
                t * hours,
                driver_rates.len()
            )));
        }
        if kappa.iter().chain(&driver_rates).any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidConfig("grid rates must be finite and >= 0".into()));
        }
        let mut origin_cdf = Vec::with_capacity(t * hours);
        let mut driver_cdf = Vec::with_capacity(t * hours);
        for h in 0..hours {
            let rows: Vec<f64> = (0..t)
                .map(|o| kappa[(h * t + o) * t..(h * t + o + 1) * t].iter().sum())
                .collect();
            origin_cdf.extend(cumulative(&rows));
            driver_cdf.extend(cumulative(&driver_rates[h * t..(h + 1) * t]));
        }
        Ok(Self {
            tiles_x,
            tiles_y,
            hours,
            region,
            kappa,
            driver_rates,
            origin_cdf,
            driver_cdf,
        })
    }

    pub fn zeros(tiles_x: usize, tiles_y: usize, hours: usize, region: Rect) -> Result<Self> {
        let t = tiles_x * tiles_y;
        Self::new(
            tiles_x,
            tiles_y,
            hours,
            region,
            vec![0.0; t * t * hours],
            vec![0.0; t * hours],
        )
    }

    pub fn tiles_x(&self) -> usize {
        self.tiles_x
    }

    pub fn tiles_y(&self) -> usize {
        self.tiles_y
    }

    pub fn tiles(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn region(&self) -> Rect {
        self.region
    }

    pub fn kappa(&self, origin: usize, destination: usize, hour: usize) -> f64 {
        let t = self.tiles();
        self.kappa[(hour * t + origin) * t + destination]
    }

    pub fn driver_rate(&self, tile: usize, hour: usize) -> f64 {
        self.driver_rates[hour * self.tiles() + tile]
    }

    /// All order rates in storage order (hour, origin, destination).
    pub fn kappa_slice(&self) -> &[f64] {
        &self.kappa
    }

    pub fn driver_rate_slice(&self) -> &[f64] {
        &self.driver_rates
    }

    pub fn order_rate_total(&self, hour: usize) -> f64 {
        let t = self.tiles();
        self.origin_cdf[(hour + 1) * t - 1]
    }

    pub fn driver_rate_total(&self, hour: usize) -> f64 {
        let t = self.tiles();
        self.driver_cdf[(hour + 1) * t - 1]
    }

    pub fn tile_of(&self, x: f64, y: f64) -> Option<usize> {
        let w = self.region.width() / self.tiles_x as f64;
        let h = self.region.height() / self.tiles_y as f64;
        let tx = ((x - self.region.min.x) / w).floor();
        let ty = ((y - self.region.min.y) / h).floor();
        if !(tx >= 0.0 && ty >= 0.0) {
            return None;
        }
        // The far edges belong to the last tile.
        let tx = (tx as usize).min(self.tiles_x - 1);
        let ty = (ty as usize).min(self.tiles_y - 1);
        if x > self.region.max.x || y > self.region.max.y {
            return None;
        }
        Some(ty * self.tiles_x + tx)
    }

    pub fn tile_rect(&self, tile: usize) -> Rect {
        let w = self.region.width() / self.tiles_x as f64;
        let h = self.region.height() / self.tiles_y as f64;
        let tx = (tile % self.tiles_x) as f64;
        let ty = (tile / self.tiles_x) as f64;
        let x0 = self.region.min.x + tx * w;
        let y0 = self.region.min.y + ty * h;
        Rect::new(x0, y0, x0 + w, y0 + h)
    }

    /// Draw an (origin, destination) tile pair with probability proportional
    /// to its rate in `hour`. Requires a positive total rate.
    pub fn sample_order_tiles<R: Rng + ?Sized>(&self, rng: &mut R, hour: usize) -> (usize, usize) {
        let t = self.tiles();
        let cdf = &self.origin_cdf[hour * t..(hour + 1) * t];
        let total = cdf[t - 1];
        let o = search(cdf, rng.random::<f64>() * total);
        let row = &self.kappa[(hour * t + o) * t..(hour * t + o + 1) * t];
        let row_total: f64 = row.iter().sum();
        let mut u = rng.random::<f64>() * row_total;
        let mut d = t - 1;
        for (j, r) in row.iter().enumerate() {
            if u < *r {
                d = j;
                break;
            }
            u -= r;
        }
        // Guard against landing on a zero-rate tail entry through rounding.
        if row[d] == 0.0 {
            d = row.iter().rposition(|&r| r > 0.0).unwrap_or(d);
        }
        (o, d)
    }

    pub fn sample_driver_tile<R: Rng + ?Sized>(&self, rng: &mut R, hour: usize) -> usize {
        let t = self.tiles();
        let cdf = &self.driver_cdf[hour * t..(hour + 1) * t];
        search(cdf, rng.random::<f64>() * cdf[t - 1])
    }
}
