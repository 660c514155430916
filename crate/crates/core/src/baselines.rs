//! Myopic dispatch rules: maximum revenue (MRM) or minimum pickup distance
//! (MPDM), each combined with one of three repositioning behaviours.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ActionSet, Observation};
use crate::geom::Heading;
use crate::scenarios::Scenario;
use crate::sim::Action;
use crate::train::Controller;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Highest price first; ties by distance, then row.
    Mrm,
    /// Nearest pickup first; ties by higher price, then row.
    Mpdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Repositioning {
    /// No repositioning; drivers wait where they are (engine simple mode).
    Simple,
    /// Uniform over the nine moves.
    Random,
    /// Toward the nearest open order.
    Demand,
}

/// Written and parsed as `mrm-simple`, `mpdm-demand` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BaselineSpec {
    pub objective: Objective,
    pub reposition: Repositioning,
}

impl BaselineSpec {
    pub const ALL: [BaselineSpec; 6] = [
        BaselineSpec::new(Objective::Mrm, Repositioning::Simple),
        BaselineSpec::new(Objective::Mrm, Repositioning::Random),
        BaselineSpec::new(Objective::Mrm, Repositioning::Demand),
        BaselineSpec::new(Objective::Mpdm, Repositioning::Simple),
        BaselineSpec::new(Objective::Mpdm, Repositioning::Random),
        BaselineSpec::new(Objective::Mpdm, Repositioning::Demand),
    ];

    pub const fn new(objective: Objective, reposition: Repositioning) -> Self {
        Self { objective, reposition }
    }

    /// The scenario with simple mode switched on exactly for `Simple`.
    pub fn configure(&self, scenario: Scenario) -> Scenario {
        scenario.with_simple_mode(self.reposition == Repositioning::Simple)
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.objective {
            Objective::Mrm => "mrm",
            Objective::Mpdm => "mpdm",
        };
        let r = match self.reposition {
            Repositioning::Simple => "simple",
            Repositioning::Random => "random",
            Repositioning::Demand => "demand",
        };
        write!(f, "{o}-{r}")
    }
}

impl TryFrom<String> for BaselineSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BaselineSpec> for String {
    fn from(b: BaselineSpec) -> String {
        b.to_string()
    }
}

impl FromStr for BaselineSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineSpec::ALL
            .into_iter()
            .find(|b| b.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown baseline `{s}` (expected one of mrm-simple, mrm-random, mrm-demand, \
                     mpdm-simple, mpdm-random, mpdm-demand)"
                ))
            })
    }
}

fn pickup_distance(obs: &Observation, row: usize) -> f64 {
    obs.selected_position().distance(obs.order_origin(row))
}

fn price(obs: &Observation, row: usize) -> f64 {
    obs.orders[row][4]
}

/// The baseline's choice at `obs`.
pub fn baseline_act<G: Rng + ?Sized>(spec: &BaselineSpec, obs: &Observation, rng: &mut G) -> Result<Action> {
    let index = baseline_index(spec, obs, rng)?;
    obs.action(index)
        .ok_or_else(|| Error::IllegalAction(format!("baseline picked index {index}")))
}

/// Like [`baseline_act`] but returns the index into the observation's
/// action set.
pub fn baseline_index<G: Rng + ?Sized>(spec: &BaselineSpec, obs: &Observation, rng: &mut G) -> Result<usize> {
    match &obs.actions {
        ActionSet::Assign(rows) => {
            if rows.is_empty() {
                return Err(Error::Shape("empty assignment set".into()));
            }
            let better = |a: usize, b: usize| -> bool {
                let (pa, pb) = (price(obs, a), price(obs, b));
                let (da, db) = (pickup_distance(obs, a), pickup_distance(obs, b));
                match spec.objective {
                    Objective::Mrm => pa > pb || (pa == pb && da < db),
                    Objective::Mpdm => da < db || (da == db && pa > pb),
                }
            };
            let mut best = 0;
            for (i, &row) in rows.iter().enumerate().skip(1) {
                if better(row, rows[best]) {
                    best = i;
                }
            }
            Ok(best)
        }
        ActionSet::Reposition => match spec.reposition {
            Repositioning::Simple => Err(Error::InvalidConfig(
                "simple baselines need the engine's simple mode".into(),
            )),
            Repositioning::Random => Ok(rng.random_range(0..Heading::COUNT)),
            Repositioning::Demand => Ok(demand_heading(obs, rng).index()),
        },
    }
}

/// Toward the nearest open order's pickup, snapped to a compass direction;
/// `Stay` when that pickup is within one move, uniform when there are no
/// open orders.
pub fn demand_heading<G: Rng + ?Sized>(obs: &Observation, rng: &mut G) -> Heading {
    let here = obs.selected_position();
    let nearest = (0..obs.orders.len()).min_by(|&a, &b| {
        pickup_distance(obs, a)
            .total_cmp(&pickup_distance(obs, b))
            .then(a.cmp(&b))
    });
    match nearest {
        None => Heading::ALL[rng.random_range(0..Heading::COUNT)],
        Some(row) => {
            let target = obs.order_origin(row);
            if here.distance(target) <= obs.reposition_reach {
                Heading::Stay
            } else {
                Heading::snap(target.x - here.x, target.y - here.y)
            }
        }
    }
}

/// A baseline as an episode controller; its random stream is reseeded from
/// each episode's seed.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub spec: BaselineSpec,
    rng: ChaCha8Rng,
}

impl Baseline {
    pub fn new(spec: BaselineSpec) -> Self {
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Controller for Baseline {
    fn choose(&mut self, obs: &Observation) -> Result<usize> {
        baseline_index(&self.spec, obs, &mut self.rng)
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB45E_11E5);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(driver: (f64, f64), orders: &[(f64, f64, f64)], in_range: Option<Vec<usize>>) -> Observation {
        let actions = match in_range {
            Some(rows) => ActionSet::Assign(rows),
            None => ActionSet::Reposition,
        };
        Observation {
            time: 0.0,
            time_feature: 0.0,
            selected: 0,
            drivers: vec![[driver.0, driver.1, 0.0, 0.0, 0.0, 0.0]],
            orders: orders.iter().map(|&(x, y, p)| [x, y, 0.5, 0.5, p, 0.0]).collect(),
            driver_ids: vec![0],
            order_ids: (0..orders.len()).map(|i| 10 + i).collect(),
            actions,
            reposition_reach: 0.1,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    const MRM: BaselineSpec = BaselineSpec::new(Objective::Mrm, Repositioning::Random);
    const MPDM: BaselineSpec = BaselineSpec::new(Objective::Mpdm, Repositioning::Demand);

    #[test]
    fn price_versus_distance() {
        // (price 2, distance 0.1) and (price 4, distance 0.2)
        let o = obs((0.5, 0.5), &[(0.6, 0.5, 2.0), (0.5, 0.3, 4.0)], Some(vec![0, 1]));
        let mut r = rng();
        assert_eq!(baseline_act(&MRM, &o, &mut r).unwrap(), Action::Assign { order_id: 11 });
        assert_eq!(baseline_act(&MPDM, &o, &mut r).unwrap(), Action::Assign { order_id: 10 });
    }

    #[test]
    fn tie_breaks() {
        let mut r = rng();
        // Equal prices: MRM takes the nearer order.
        let o = obs((0.0, 0.0), &[(0.2, 0.0, 3.0), (0.1, 0.0, 3.0)], Some(vec![0, 1]));
        assert_eq!(baseline_index(&MRM, &o, &mut r).unwrap(), 1);
        // Equal distances: MPDM takes the pricier order.
        let o = obs((0.0, 0.0), &[(0.1, 0.0, 1.0), (0.0, 0.1, 2.0)], Some(vec![0, 1]));
        assert_eq!(baseline_index(&MPDM, &o, &mut r).unwrap(), 1);
        // Full tie: lowest row.
        let o = obs((0.0, 0.0), &[(0.1, 0.0, 1.0), (0.0, 0.1, 1.0)], Some(vec![0, 1]));
        assert_eq!(baseline_index(&MRM, &o, &mut r).unwrap(), 0);
        assert_eq!(baseline_index(&MPDM, &o, &mut r).unwrap(), 0);
    }

    #[test]
    fn only_assignable_orders_are_considered() {
        // Row 0 is the best by both rules but out of range.
        let o = obs((0.0, 0.0), &[(0.01, 0.0, 9.0), (0.2, 0.0, 1.0), (0.25, 0.0, 2.0)], Some(vec![1, 2]));
        let mut r = rng();
        assert_eq!(baseline_act(&MRM, &o, &mut r).unwrap(), Action::Assign { order_id: 12 });
        assert_eq!(baseline_act(&MPDM, &o, &mut r).unwrap(), Action::Assign { order_id: 11 });
    }

    #[test]
    fn choices_are_pure_functions_of_the_observation() {
        let o = obs((0.3, 0.3), &[(0.4, 0.4, 2.0), (0.1, 0.2, 4.0), (0.35, 0.3, 1.0)], Some(vec![0, 1, 2]));
        let a = baseline_index(&MPDM, &o, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = baseline_index(&MPDM, &o, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn demand_snaps_toward_nearest_order() {
        let mut r = rng();
        let o = obs((0.2, 0.2), &[(0.7, 0.7, 1.0), (0.9, 0.9, 1.0)], None);
        assert_eq!(baseline_act(&MPDM, &o, &mut r).unwrap(), Action::Reposition { heading: Heading::NorthEast });
        let o = obs((0.5, 0.5), &[(0.5, 0.1, 1.0)], None);
        assert_eq!(demand_heading(&o, &mut r), Heading::South);
        let o = obs((0.5, 0.5), &[(0.1, 0.52, 1.0)], None);
        assert_eq!(demand_heading(&o, &mut r), Heading::West);
        // Within one move: stay.
        let o = obs((0.5, 0.5), &[(0.55, 0.55, 1.0)], None);
        assert_eq!(demand_heading(&o, &mut r), Heading::Stay);
    }

    #[test]
    fn demand_without_orders_is_uniform() {
        let o = obs((0.5, 0.5), &[], None);
        let mut r = rng();
        let mut counts = [0usize; 9];
        let draws = 100_000;
        for _ in 0..draws {
            counts[demand_heading(&o, &mut r).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 9.0).abs() < 0.005);
        }
    }

    #[test]
    fn simple_baseline_rejects_reposition_sets() {
        let o = obs((0.5, 0.5), &[], None);
        let spec = BaselineSpec::new(Objective::Mrm, Repositioning::Simple);
        assert!(baseline_index(&spec, &o, &mut rng()).is_err());
    }

    #[test]
    fn names_round_trip() {
        for spec in BaselineSpec::ALL {
            assert_eq!(spec.to_string().parse::<BaselineSpec>().unwrap(), spec);
        }
        assert!("mrm-teleport".parse::<BaselineSpec>().is_err());
        assert_eq!("MPDM-Demand".parse::<BaselineSpec>().unwrap(), MPDM);
    }
}
