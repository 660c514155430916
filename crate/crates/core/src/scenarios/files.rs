//! On-disk formats for the historical domains.
//!
//! Historical orders: UTF-8 CSV with the header
//! `day,time_seconds,origin_x_km,origin_y_km,dest_x_km,dest_y_km`, one order per
//! line. `day` is a zero-based day index, `time_seconds` the creation time
//! within that day.
//!
//! Poisson grid: line-oriented text, whitespace separated, `#` comments.
//!
//! ```text
//! poisson-grid v1
//! dims <tiles_x> <tiles_y> <hours>
//! region <x0> <y0> <x1> <y1>
//! k <origin_tile> <dest_tile> <hour> <rate>
//! d <tile> <hour> <rate>
//! ```
//!
//! `k` lines give order rates (orders per hour) and `d` lines driver
//! activation rates; entries that are not listed are zero. Rates for the same
//! cell on several lines are an error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::PoissonGrid;
use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

pub const HISTORICAL_HEADER: [&str; 6] = [
    "day",
    "time_seconds",
    "origin_x_km",
    "origin_y_km",
    "dest_x_km",
    "dest_y_km",
];

const GRID_MAGIC: &str = "poisson-grid v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoricalRecord {
    pub day: usize,
    pub time_seconds: f64,
    pub origin: Point,
    pub destination: Point,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_historical_orders(path: &Path) -> Result<Vec<HistoricalRecord>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.iter().ne(HISTORICAL_HEADER.iter().copied()) {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                HISTORICAL_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            return Err(parse_err(path, line, format!("expected 6 fields, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| parse_err(path, line, format!("{}: not a number: `{}`", HISTORICAL_HEADER[i], &rec[i])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(parse_err(
                    path,
                    line,
                    format!("{}: must be finite and >= 0, got {v}", HISTORICAL_HEADER[i]),
                ));
            }
            Ok(v)
        };
        let day: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("day: not a day index: `{}`", &rec[0])))?;
        let time_seconds = num(1)?;
        if time_seconds >= 86_400.0 {
            return Err(parse_err(path, line, "time_seconds must be < 86400"));
        }
        out.push(HistoricalRecord {
            day,
            time_seconds,
            origin: Point::new(num(2)?, num(3)?),
            destination: Point::new(num(4)?, num(5)?),
        });
    }
    Ok(out)
}

pub fn write_historical_orders(path: &Path, records: &[HistoricalRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::io(format!("write {}", path.display()), std::io::Error::other(e));
    w.write_record(HISTORICAL_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.day.to_string(),
            format!("{:.1}", r.time_seconds),
            format!("{:.4}", r.origin.x),
            format!("{:.4}", r.origin.y),
            format!("{:.4}", r.destination.x),
            format!("{:.4}", r.destination.y),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn read_poisson_grid(path: &Path) -> Result<PoissonGrid> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut region: Option<Rect> = None;
    let mut kappa: Vec<f64> = Vec::new();
    let mut drivers: Vec<f64> = Vec::new();
    let mut seen_magic = false;

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if !seen_magic {
            if content != GRID_MAGIC {
                return Err(parse_err(path, lineno, format!("expected `{GRID_MAGIC}`")));
            }
            seen_magic = true;
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(path, lineno, format!("not an index: `{s}`")))
        };
        let float = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno, format!("not a number: `{s}`")))
        };
        match fields[0] {
            "dims" if fields.len() == 4 => {
                let (tx, ty, h) = (int(fields[1])?, int(fields[2])?, int(fields[3])?);
                let t = tx * ty;
                kappa = vec![0.0; t * t * h];
                drivers = vec![0.0; t * h];
                dims = Some((tx, ty, h));
            }
            "region" if fields.len() == 5 => {
                region = Some(Rect::new(
                    float(fields[1])?,
                    float(fields[2])?,
                    float(fields[3])?,
                    float(fields[4])?,
                ));
            }
            "k" if fields.len() == 5 => {
                let (tx, ty, h) = dims.ok_or_else(|| parse_err(path, lineno, "`k` before `dims`"))?;
                let t = tx * ty;
                let (o, d, hour, rate) = (int(fields[1])?, int(fields[2])?, int(fields[3])?, float(fields[4])?);
                if o >= t || d >= t || hour >= h {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("index ({o}, {d}, {hour}) outside declared dims {t}x{t}x{h}"),
                    ));
                }
                let slot = &mut kappa[(hour * t + o) * t + d];
                if *slot != 0.0 {
                    return Err(parse_err(path, lineno, "duplicate order-rate entry"));
                }
                *slot = rate;
            }
            "d" if fields.len() == 4 => {
                let (tx, ty, h) = dims.ok_or_else(|| parse_err(path, lineno, "`d` before `dims`"))?;
                let t = tx * ty;
                let (tile, hour, rate) = (int(fields[1])?, int(fields[2])?, float(fields[3])?);
                if tile >= t || hour >= h {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("index ({tile}, {hour}) outside declared dims {t}x{h}"),
                    ));
                }
                let slot = &mut drivers[hour * t + tile];
                if *slot != 0.0 {
                    return Err(parse_err(path, lineno, "duplicate driver-rate entry"));
                }
                *slot = rate;
            }
            other => {
                return Err(parse_err(path, lineno, format!("unrecognised line `{other} ...`")));
            }
        }
    }
    let (tx, ty, h) = dims.ok_or_else(|| parse_err(path, 0, "missing `dims` line"))?;
    let region = region.ok_or_else(|| parse_err(path, 0, "missing `region` line"))?;
    PoissonGrid::new(tx, ty, h, region, kappa, drivers)
}

pub fn write_poisson_grid(path: &Path, grid: &PoissonGrid) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("write {}", path.display()), e);
    let r = grid.region();
    writeln!(w, "{GRID_MAGIC}").map_err(io)?;
    writeln!(w, "dims {} {} {}", grid.tiles_x(), grid.tiles_y(), grid.hours()).map_err(io)?;
    writeln!(w, "region {} {} {} {}", r.min.x, r.min.y, r.max.x, r.max.y).map_err(io)?;
    let t = grid.tiles();
    for h in 0..grid.hours() {
        for o in 0..t {
            for d in 0..t {
                let k = grid.kappa(o, d, h);
                if k != 0.0 {
                    writeln!(w, "k {o} {d} {h} {k:e}").map_err(io)?;
                }
            }
        }
    }
    for h in 0..grid.hours() {
        for tile in 0..t {
            let rate = grid.driver_rate(tile, h);
            if rate != 0.0 {
                writeln!(w, "d {tile} {h} {rate:e}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
