use super::*;
use crate::features::ActionSet;
use crate::scenarios::{
    self, BatchOrders, Demand, DriverScheme, OrderScheme, Patch, PoissonRegions, Scenario,
};

/// Single driver at a fixed spot with an empty batch at `at`.
fn scripted(driver_at: Point, at: f64) -> Scenario {
    let mut config = SimConfig {
        reposition_noise_sigma: 0.0,
        ..SimConfig::default()
    };
    config.episode_horizon = 50.0;
    Scenario {
        name: "scripted".into(),
        config,
        orders: OrderScheme::Batch(BatchOrders {
            at,
            patches: vec![],
            price: 1.0,
        }),
        drivers: DriverScheme::Fixed {
            count: 1,
            spawn: Rect::new(driver_at.x, driver_at.y, driver_at.x, driver_at.y),
        },
    }
}

/// Engine with hand-placed open orders; bypasses the schemes.
fn engine_with_orders(driver_at: Point, orders: &[(Point, Point, f64)]) -> (Engine, Observation) {
    let mut e = Engine::new(scripted(driver_at, 100.0)).unwrap();
    let poll = e.reset(0).unwrap();
    assert!(matches!(poll, Poll::Decision(_)));
    for (o, d, p) in orders {
        let id = e.orders.len();
        e.orders.push(Order {
            id,
            origin: *o,
            destination: *d,
            price: *p,
            created_at: 0.0,
            expires_at: 5.0,
            tag: 0,
        });
        e.order_state.push(OrderState::Open);
        e.open.push(id);
        e.counts.created += 1;
        e.counts.open += 1;
    }
    let obs = e.observation().unwrap();
    (e, obs)
}

#[test]
fn reset_yields_one_selected_driver() {
    let s = scenarios::regional(Demand::High);
    let mut e = Engine::new(s).unwrap();
    let poll = e.reset(7).unwrap();
    let obs = poll.observation().expect("decision");
    assert!(obs.time >= 0.0);
    assert!(obs.selected < obs.drivers.len());
    assert_eq!(e.selected_driver(), Some(obs.driver_ids[obs.selected]));
}

#[test]
fn zero_speed_is_rejected() {
    let mut s = scenarios::regional(Demand::High);
    s.config.driver_speed = 0.0;
    assert!(matches!(Engine::new(s), Err(Error::InvalidConfig(_))));
}

#[test]
fn reset_is_deterministic() {
    let s = scenarios::hot_cold(Demand::High);
    let mut a = Engine::new(s.clone()).unwrap();
    let mut b = Engine::new(s).unwrap();
    assert_eq!(a.reset(11).unwrap(), b.reset(11).unwrap());
}

#[test]
fn no_drivers_means_no_decision_point() {
    let s = scenarios::regional(Demand::High).with_drivers(0);
    let mut e = Engine::new(s).unwrap();
    assert!(matches!(e.reset(0), Err(Error::NoDecisionPoint)));
}

#[test]
fn assign_rewards_price_and_sets_completion() {
    let (mut e, obs) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.0, 0.0), Point::new(0.3, 0.0), 2.0)],
    );
    assert_eq!(obs.actions, ActionSet::Assign(vec![0]));
    let now = e.now();
    let out = e.step(Action::Assign { order_id: 0 }).unwrap();
    assert_eq!(out.reward, 2.0);
    // The lone driver is next polled once the trip (0 pickup + 0.3 / 0.1) ends.
    assert!((out.elapsed - 3.0).abs() < 1e-12);
    assert!((e.now() - (now + 3.0)).abs() < 1e-12);
    assert_eq!(e.order_state(0), Some(OrderState::Completed));
    assert!(e.counts().is_conserved());
}

#[test]
fn serving_driver_is_reported_at_destination() {
    let (mut e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.0, 0.0), Point::new(0.3, 0.0), 2.0)],
    );
    e.step(Action::Assign { order_id: 0 }).unwrap();
    // The lone driver is back at the drop-off when the next decision fires.
    let obs = e.observation().unwrap();
    assert!((obs.drivers[0][0] - 0.3).abs() < 1e-12);
    assert!((obs.time - 3.0).abs() < 1e-12);
}

#[test]
fn reposition_moves_by_speed_times_duration() {
    let (mut e, obs) = engine_with_orders(Point::new(0.5, 0.5), &[]);
    assert_eq!(obs.actions, ActionSet::Reposition);
    let out = e
        .step(Action::Reposition {
            heading: Heading::North,
        })
        .unwrap();
    assert_eq!(out.reward, 0.0);
    assert!((out.elapsed - 1.0).abs() < 1e-12);
    let d = &e.drivers()[0];
    assert!(d.is_idle());
    assert!((d.position.x - 0.5).abs() < 1e-12);
    assert!((d.position.y - 0.6).abs() < 1e-12);
}

#[test]
fn assignment_beyond_radius_is_rejected() {
    let (mut e, obs) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.31, 0.0), Point::new(0.5, 0.0), 2.0)],
    );
    assert_eq!(obs.actions, ActionSet::Reposition);
    let err = e.step(Action::Assign { order_id: 0 }).unwrap_err();
    assert!(matches!(err, Error::IllegalAction(_)), "{err}");
    // still awaiting a decision for the same driver
    assert_eq!(e.selected_driver(), Some(0));
}

#[test]
fn reposition_with_order_in_radius_is_rejected() {
    let (mut e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.1, 0.0), Point::new(0.5, 0.0), 2.0)],
    );
    let err = e
        .step(Action::Reposition {
            heading: Heading::East,
        })
        .unwrap_err();
    assert!(matches!(err, Error::IllegalAction(_)));
}

#[test]
fn legal_actions_lists_in_radius_orders() {
    let (e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[
            (Point::new(0.1, 0.0), Point::new(0.5, 0.0), 2.0),
            (Point::new(0.0, 0.2), Point::new(0.5, 0.0), 2.0),
            (Point::new(0.9, 0.9), Point::new(0.5, 0.0), 2.0),
        ],
    );
    assert_eq!(
        e.legal_actions(0),
        vec![Action::Assign { order_id: 0 }, Action::Assign { order_id: 1 }]
    );
}

#[test]
fn legal_actions_without_orders_in_radius_are_the_nine_moves() {
    let (e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.9, 0.9), Point::new(0.5, 0.0), 2.0)],
    );
    let legal = e.legal_actions(0);
    assert_eq!(legal.len(), 9);
    assert!(legal.iter().all(|a| matches!(a, Action::Reposition { .. })));
}

#[test]
fn simple_mode_ignores_the_radius() {
    let (mut e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.9, 0.0), Point::new(0.5, 0.0), 2.0)],
    );
    e.config.simple_mode = true;
    assert_eq!(e.legal_actions(0), vec![Action::Assign { order_id: 0 }]);
    assert!(e.step(Action::Assign { order_id: 0 }).is_ok());
}

#[test]
fn expiry_boundary_is_inclusive() {
    let (mut e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.9, 0.9), Point::new(0.5, 0.0), 2.0)],
    );
    assert_eq!(e.expire_orders(4.999), 0);
    assert_eq!(e.expire_orders(5.0), 1);
    assert_eq!(e.order_state(0), Some(OrderState::Expired));
    assert_eq!(e.expire_orders(6.0), 0);
    assert!(e.counts().is_conserved());
}

#[test]
fn assigned_orders_do_not_expire() {
    let (mut e, _) = engine_with_orders(
        Point::new(0.0, 0.0),
        &[(Point::new(0.0, 0.0), Point::new(1.0, 1.0), 2.0)],
    );
    e.step(Action::Assign { order_id: 0 }).unwrap();
    assert_eq!(e.expire_orders(100.0), 0);
    assert_ne!(e.order_state(0), Some(OrderState::Expired));
}

#[test]
fn stepping_without_decision_fails() {
    let s = scenarios::regional(Demand::High);
    let mut e = Engine::new(s).unwrap();
    assert!(matches!(
        e.step(Action::Reposition {
            heading: Heading::Stay
        }),
        Err(Error::NoPendingDecision)
    ));
}

#[test]
fn simultaneous_completions_are_polled_one_at_a_time() {
    // Five drivers at the same spot, zero noise: every reposition finishes
    // at the same instant.
    let mut s = scenarios::regional(Demand::High)
        .with_drivers(5)
        .with_order_rate(0.0)
        .with_noise(0.0);
    s.drivers = DriverScheme::Fixed {
        count: 5,
        spawn: Rect::new(0.5, 0.5, 0.5, 0.5),
    };
    let mut e = Engine::new(s).unwrap();
    let mut poll = e.reset(3).unwrap();
    let mut polled = Vec::new();
    while let Poll::Decision(obs) = poll {
        polled.push((obs.time, obs.driver_ids[obs.selected]));
        if polled.len() == 15 {
            break;
        }
        poll = e
            .step(Action::Reposition {
                heading: Heading::Stay,
            })
            .unwrap()
            .next;
    }
    let times: Vec<f64> = polled.iter().map(|p| p.0).collect();
    assert_eq!(&times[..5], &[0.0; 5]);
    assert_eq!(&times[5..10], &[1.0; 5]);
    let ids: Vec<usize> = polled.iter().map(|p| p.1).collect();
    assert_eq!(&ids[..10], &[0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
}

#[test]
fn simple_mode_parks_drivers_until_orders_arrive() {
    let mut s = scripted(Point::new(0.5, 0.5), 10.0);
    s.config.simple_mode = true;
    s.orders = OrderScheme::Batch(BatchOrders {
        at: 10.0,
        patches: vec![Patch {
            area: Rect::new(0.9, 0.9, 0.95, 0.95),
            count: 1,
        }],
        price: 1.0,
    });
    let mut e = Engine::new(s).unwrap();
    let obs = e.reset(0).unwrap();
    let obs = obs.observation().unwrap();
    // First poll happens only once the order exists.
    assert_eq!(obs.time, 10.0);
    assert_eq!(obs.actions, ActionSet::Assign(vec![0]));
}

#[test]
fn simple_mode_with_no_orders_never_polls() {
    let mut s = scenarios::regional(Demand::High).with_order_rate(0.0);
    s.config.simple_mode = true;
    let mut e = Engine::new(s).unwrap();
    assert_eq!(e.reset(0).unwrap(), Poll::Done);
}

#[test]
fn departing_driver_leaves_after_current_job() {
    let s = Scenario {
        name: "departure".into(),
        config: SimConfig {
            reposition_noise_sigma: 0.0,
            episode_horizon: 10.0,
            ..SimConfig::default()
        },
        orders: OrderScheme::PoissonRegions(PoissonRegions {
            rate: 0.0,
            flows: vec![],
        }),
        drivers: DriverScheme::Fixed {
            count: 1,
            spawn: Rect::new(0.5, 0.5, 0.5, 0.5),
        },
    };
    let mut e = Engine::new(s).unwrap();
    e.reset(0).unwrap();
    // Fake a lifetime shorter than one reposition.
    e.drivers[0].deactivates_at = 0.5;
    e.queue
        .push(0.5, EventKind::DriverDeparture { driver_id: 0 });
    let out = e
        .step(Action::Reposition {
            heading: Heading::East,
        })
        .unwrap();
    assert!(out.next.is_done());
    assert!(!e.drivers()[0].active);
}

#[test]
fn episode_reward_matches_assigned_prices() {
    let s = scenarios::regional(Demand::High).with_drivers(4);
    let mut e = Engine::new(s).unwrap();
    e.set_audit(true);
    let mut poll = e.reset(5).unwrap();
    let mut total = 0.0;
    while let Poll::Decision(obs) = poll {
        let out = e.step(obs.action(0).unwrap()).unwrap();
        assert!(out.elapsed >= 0.0);
        total += out.reward;
        poll = out.next;
    }
    let st = e.stats();
    assert_eq!(st.audit_failures, 0);
    assert_eq!(total, st.assigned_price_sum);
    assert!(st.assignments > 0);
}
