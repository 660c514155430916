use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sim::{Engine, Poll};

const N: usize = 100_000;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn regions(s: &Scenario) -> &PoissonRegions {
    match &s.orders {
        OrderScheme::PoissonRegions(p) => p,
        other => panic!("unexpected scheme {other:?}"),
    }
}

#[test]
fn regional_prices() {
    let s = regional(Demand::High);
    let p = regions(&s);
    let mut r = rng(1);
    for _ in 0..2000 {
        let (tag, o, d, price) = p.sample_order(&mut r);
        let expected = if tag as u16 == regional_flows::BOTTOM_RIGHT_TO_CENTER {
            4.0
        } else {
            2.0
        };
        assert_eq!(price, expected);
        match tag as u16 {
            regional_flows::CENTER_TO_UPPER_LEFT => {
                assert!(REGIONAL_CENTER.contains(o) && REGIONAL_UPPER_LEFT.contains(d))
            }
            regional_flows::BOTTOM_RIGHT_TO_CENTER => {
                assert!(REGIONAL_BOTTOM_RIGHT.contains(o) && REGIONAL_CENTER.contains(d))
            }
            _ => {}
        }
    }
}

#[test]
fn regional_flow_frequencies_are_quarters() {
    let s = regional(Demand::Low);
    let p = regions(&s);
    let mut r = rng(2);
    let mut counts = [0usize; 4];
    for _ in 0..N {
        counts[p.sample_order(&mut r).0] += 1;
    }
    for c in counts {
        let f = c as f64 / N as f64;
        assert!((f - 0.25).abs() <= 0.01, "{counts:?}");
    }
}

#[test]
fn demand_levels_set_the_rate() {
    assert_eq!(regions(&regional(Demand::High)).rate, 2.0);
    assert_eq!(regions(&regional(Demand::Low)).rate, 0.5);
    assert_eq!(regions(&hot_cold(Demand::High)).rate, 2.0);
}

#[test]
fn hot_cold_geometry_and_prices() {
    let s = hot_cold(Demand::High);
    let p = regions(&s);
    let mut r = rng(3);
    let mut hot = 0usize;
    for _ in 0..N {
        let (tag, o, d, price) = p.sample_order(&mut r);
        assert_eq!(o.y, 1.0);
        assert!((0.0..=1.0).contains(&o.x));
        assert_eq!(price, o.distance(d));
        if tag as u16 == hot_cold_flows::TO_HOT {
            assert!(HOT_REGION.contains(d));
            hot += 1;
        } else {
            assert_eq!(d.y, 0.0);
        }
    }
    let f = hot as f64 / N as f64;
    assert!((f - 0.5).abs() <= 0.01, "hot frequency {f}");
}

#[test]
fn distance_price_examples() {
    let a = Point::new(0.5, 1.0);
    assert_eq!(PriceRule::Distance.price(a, Point::new(0.5, 0.0)), 1.0);
    assert_eq!(PriceRule::Distance.price(a, a), 0.0);
}

#[test]
fn sampled_orders_stay_in_region() {
    for s in [regional(Demand::High), hot_cold(Demand::High)] {
        let drafts = s.orders.sample_episode(&mut rng(4), &s.config);
        assert!(!drafts.is_empty());
        for d in drafts {
            assert!(s.config.region.contains(d.origin));
            assert!(s.config.region.contains(d.destination));
        }
    }
}

#[test]
fn poisson_inter_arrival_mean() {
    let s = regional(Demand::High).with_horizon(20_000.0);
    let drafts = s.orders.sample_episode(&mut rng(5), &s.config);
    let n = drafts.len() as f64;
    let mean = drafts.last().unwrap().at / n;
    // Exp(rate) has sd 1/rate, so the mean of n gaps has sd 1/(rate sqrt n).
    let sigma = 1.0 / (2.0 * n.sqrt());
    assert!((mean - 0.5).abs() < 3.0 * sigma, "mean gap {mean}");
    assert!(drafts.windows(2).all(|w| w[0].at <= w[1].at));
}

#[test]
fn distribute_splits() {
    assert_eq!(distribute_split(0.5, 20), (10, 10));
    assert_eq!(distribute_split(0.8, 20), (16, 4));
    assert_eq!(distribute_split(0.5, 1), (1, 0));
    assert!(matches!(distribute(0.5, 0), Err(Error::InvalidConfig(_))));
}

#[test]
fn distribute_orders_arrive_after_phase_one() {
    let s = distribute(0.8, 20).unwrap();
    let drafts = s.orders.sample_episode(&mut rng(6), &s.config);
    assert_eq!(drafts.len(), 20);
    let first = drafts.iter().filter(|d| d.tag == 0).count();
    assert_eq!(first, 16);
    let phase_one = 3.0 * s.config.reposition_duration;
    for d in &drafts {
        assert_eq!(d.at, phase_one);
        assert_eq!(d.price, 1.0);
        let patch = if d.tag == 0 {
            DISTRIBUTE_PATCH_FIRST
        } else {
            DISTRIBUTE_PATCH_SECOND
        };
        assert!(patch.contains(d.origin));
        // A trip outlasts what is left of the episode.
        let trip = d.origin.distance(d.destination) / s.config.driver_speed;
        assert!(d.at + trip > s.config.episode_horizon);
        assert!(d.at + d.valid_for.unwrap() >= s.config.episode_horizon - 1e-12);
    }
    assert_eq!(s.fixed_driver_count(), Some(20));
}

#[test]
fn distribute_spawn_is_out_of_patch_range() {
    let s = distribute(0.5, 4).unwrap();
    let r = s.config.broadcast_radius;
    for corner in [DISTRIBUTE_SPAWN.min, DISTRIBUTE_SPAWN.max] {
        for patch in [DISTRIBUTE_PATCH_FIRST, DISTRIBUTE_PATCH_SECOND] {
            let nearest = patch.clamp(corner);
            assert!(corner.distance(nearest) > r);
        }
    }
}

fn three_order_day() -> Vec<HistoricalRecord> {
    let rec = |day, t, ox, oy, dx, dy| HistoricalRecord {
        day,
        time_seconds: t,
        origin: Point::new(ox, oy),
        destination: Point::new(dx, dy),
    };
    vec![
        rec(0, 120.0, 1.0, 1.0, 4.0, 5.0),
        rec(0, 60.0, 2.0, 2.0, 2.0, 3.0),
        rec(0, 600.0, 10.0, 10.0, 10.0, 10.0),
    ]
}

#[test]
fn historical_config_matches_domain() {
    let s = historical_orders_from(&three_order_day(), Some(2));
    assert_eq!(s.config.broadcast_radius, 2.0);
    assert!((s.config.driver_speed * 60.0 - 40.0).abs() < 1e-12);
    assert_eq!(s.fixed_driver_count(), Some(100));
}

#[test]
fn replay_emits_the_recorded_day() {
    let mut s = historical_orders_from(&three_order_day(), Some(2));
    if let OrderScheme::Replay(r) = &mut s.orders {
        r.fixed_day = Some(0);
    }
    let drafts = s.orders.sample_episode(&mut rng(0), &s.config);
    let times: Vec<f64> = drafts.iter().map(|d| d.at).collect();
    assert_eq!(times, vec![1.0, 2.0, 10.0]);
    assert_eq!(drafts[1].price, 5.0);
    assert_eq!(drafts[0].price, 1.0);
    let again = s.orders.sample_episode(&mut rng(99), &s.config);
    assert_eq!(drafts, again);
}

#[test]
fn empty_replay_day_is_a_valid_zero_reward_episode() {
    let mut s = historical_orders_from(&three_order_day(), Some(2)).with_drivers(3);
    if let OrderScheme::Replay(r) = &mut s.orders {
        r.fixed_day = Some(1);
    }
    let mut e = Engine::new(s).unwrap();
    let mut poll = e.reset(0).unwrap();
    let mut reward = 0.0;
    let mut steps = 0;
    while let Poll::Decision(obs) = poll {
        let out = e.step(obs.action(0).unwrap()).unwrap();
        reward += out.reward;
        poll = out.next;
        steps += 1;
    }
    assert!(steps > 0);
    assert_eq!(reward, 0.0);
}

fn single_pair_grid(rate: f64, driver_rate: f64) -> PoissonGrid {
    let t = GRID_TILES_PER_SIDE * GRID_TILES_PER_SIDE;
    let mut kappa = vec![0.0; t * t * GRID_HOURS];
    let mut drivers = vec![0.0; t * GRID_HOURS];
    // tile 21 -> tile 378 during hour 5; drivers appear in tile 0 at hour 2
    kappa[(5 * t + 21) * t + 378] = rate;
    drivers[2 * t] = driver_rate;
    PoissonGrid::new(
        GRID_TILES_PER_SIDE,
        GRID_TILES_PER_SIDE,
        GRID_HOURS,
        Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM),
        kappa,
        drivers,
    )
    .unwrap()
}

#[test]
fn grid_order_counts_match_scaled_rate() {
    let kappa = 8.0;
    let s = historical_statistics_from(Arc::new(single_pair_grid(kappa, 0.0))).unwrap();
    let OrderScheme::PoissonGrid(g) = &s.orders else {
        panic!()
    };
    let grid = g.grid.clone();
    // One-day episodes; only hour 5 carries mass, so 10^4 days give 10^4 hour samples.
    let mut cfg = s.config.clone();
    cfg.episode_horizon = 6.0 * 60.0;
    let mut r = rng(7);
    let hours = 10_000;
    let mut total = 0usize;
    for _ in 0..hours {
        for d in s.orders.sample_episode(&mut r, &cfg) {
            assert_eq!(grid.tile_of(d.origin.x, d.origin.y), Some(21));
            assert_eq!(grid.tile_of(d.destination.x, d.destination.y), Some(378));
            assert!((300.0..360.0).contains(&d.at));
            total += 1;
        }
    }
    let mean = total as f64 / hours as f64;
    let expected = ORDER_SCALE * kappa;
    let sigma = (expected / hours as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * sigma, "{mean} vs {expected}");
}

#[test]
fn zero_kappa_produces_no_orders() {
    let grid = PoissonGrid::zeros(
        GRID_TILES_PER_SIDE,
        GRID_TILES_PER_SIDE,
        GRID_HOURS,
        Rect::new(0.0, 0.0, CITY_SIDE_KM, CITY_SIDE_KM),
    )
    .unwrap();
    let s = historical_statistics_from(Arc::new(grid)).unwrap();
    assert!(s.orders.sample_episode(&mut rng(8), &s.config).is_empty());
}

#[test]
fn grid_dimension_mismatch_is_rejected() {
    let small = PoissonGrid::zeros(10, 10, 24, Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap();
    assert!(matches!(
        historical_statistics_from(Arc::new(small)),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        PoissonGrid::new(2, 2, 1, Rect::new(0.0, 0.0, 1.0, 1.0), vec![0.0; 15], vec![0.0; 4]),
        Err(Error::Shape(_))
    ));
}

#[test]
fn drivers_leave_six_hours_after_activation() {
    let grid = Arc::new(single_pair_grid(0.0, 200.0));
    let s = historical_statistics_from(grid).unwrap();
    let spawns = s.drivers.sample_episode(&mut rng(9), &s.config);
    assert!(!spawns.is_empty());
    for sp in &spawns {
        assert!((120.0..180.0).contains(&sp.at));
        assert_eq!(sp.lifetime, Some(360.0));
    }
    let mut e = Engine::new(s).unwrap();
    e.reset(1).unwrap();
    for d in e.drivers() {
        assert!((d.deactivates_at - d.activated_at - 360.0).abs() < 1e-9);
    }
}

#[test]
fn grid_tiles_round_trip() {
    let g = single_pair_grid(1.0, 1.0);
    for tile in [0, 21, 378, 399] {
        let c = g.tile_rect(tile).center();
        assert_eq!(g.tile_of(c.x, c.y), Some(tile));
    }
    assert_eq!(g.tile_of(CITY_SIDE_KM, CITY_SIDE_KM), Some(399));
    assert_eq!(g.tile_of(-0.1, 0.0), None);
}

#[test]
fn historical_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("orders.csv");
    let recs = three_order_day();
    write_historical_orders(&path, &recs).unwrap();
    assert_eq!(read_historical_orders(&path).unwrap(), recs);
    let s = historical_orders(&path).unwrap();
    assert_eq!(s.name, "historical-orders");
}

#[test]
fn malformed_historical_rows_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "day,time_seconds,origin_x_km,origin_y_km,dest_x_km,dest_y_km\n0,1,1,1,1,1\n0,x,1,1,1,1\n",
    )
    .unwrap();
    match read_historical_orders(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "a,b\n0,1\n").unwrap();
    assert!(matches!(read_historical_orders(&path), Err(Error::Parse { .. })));
}

#[test]
fn grid_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.txt");
    let g = single_pair_grid(0.125, 3.5);
    write_poisson_grid(&path, &g).unwrap();
    assert_eq!(read_poisson_grid(&path).unwrap(), g);
    let s = historical_statistics(&path).unwrap();
    assert_eq!(s.name, "historical-statistics");
}
