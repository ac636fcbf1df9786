//! Safe-gap car following with bounded acceleration.
//!
//! The speed for the next step is the smallest of the free-flow target, the
//! speed that still lets the vehicle stop behind its leader (assuming the
//! leader brakes at `max_decel`) and, when the stop line applies, the speed
//! that lets it stop at the line. Displacement is then clamped to the
//! available gap, so vehicles never overlap and never pass a red line.

use super::config::KinematicParams;

/// Signal indication for the vehicle's own movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalAhead {
    Green,
    Amber,
    Red,
}

/// Stop line in front of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLine {
    /// Distance from the front bumper to the line, m.
    pub distance: f64,
    pub signal: SignalAhead,
    /// The link behind the line cannot take the vehicle.
    pub blocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    /// m/s
    pub speed: f64,
    /// m/s²
    pub acceleration: f64,
    /// m
    pub displacement: f64,
}

/// Largest speed v with v·τ + v²/(2b) <= gap + v_leader²/(2b).
pub fn safe_speed(gap: f64, leader_speed: f64, decel: f64, tau: f64) -> f64 {
    let gap = gap.max(0.0);
    let bt = decel * tau;
    (-bt + libm::sqrt(bt * bt + leader_speed * leader_speed + 2.0 * decel * gap)).max(0.0)
}

/// Amber dilemma rule: stop iff stopping needs no more than the comfortable
/// deceleration.
pub fn stops_for_amber(params: &KinematicParams, speed: f64, distance: f64) -> bool {
    speed * speed / (2.0 * params.comfortable_decel) <= distance
}

/// Advances one vehicle by `dt`.
///
/// `leader_gap` is the bumper-to-bumper distance to the vehicle ahead (use
/// `f64::INFINITY` when there is none); the vehicle keeps at least
/// `params.min_gap` behind it.
pub fn car_following_update(
    params: &KinematicParams,
    max_speed: f64,
    speed: f64,
    leader_gap: f64,
    leader_speed: f64,
    stop_line: Option<StopLine>,
    dt: f64,
) -> Motion {
    let mut target = (speed + params.max_accel * dt).min(max_speed);
    let mut limit = f64::INFINITY;

    if leader_gap.is_finite() {
        let gap = (leader_gap - params.min_gap).max(0.0);
        target = target.min(safe_speed(gap, leader_speed, params.max_decel, dt));
        limit = gap;
    }
    if let Some(line) = stop_line {
        let must_stop = line.blocked
            || match line.signal {
                SignalAhead::Green => false,
                SignalAhead::Amber => stops_for_amber(params, speed, line.distance),
                SignalAhead::Red => true,
            };
        if must_stop {
            let distance = line.distance.max(0.0);
            target = target.min(safe_speed(distance, 0.0, params.max_decel, dt));
            limit = limit.min(distance);
        }
    }

    let mut new_speed = target.max(0.0);
    let mut displacement = new_speed * dt;
    if displacement > limit {
        displacement = limit;
        new_speed = limit / dt;
    }
    Motion {
        speed: new_speed,
        acceleration: (new_speed - speed) / dt,
        displacement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V50: f64 = 50.0 / 3.6;

    fn p() -> KinematicParams {
        KinematicParams::default()
    }

    fn line(distance: f64, signal: SignalAhead) -> Option<StopLine> {
        Some(StopLine {
            distance,
            signal,
            blocked: false,
        })
    }

    #[test]
    fn free_flow_equilibrium() {
        let m = car_following_update(&p(), V50, V50, f64::INFINITY, 0.0, line(500.0, SignalAhead::Green), 1.0);
        assert_eq!(m.acceleration, 0.0);
        assert!((m.displacement - V50).abs() < 1e-12);
    }

    #[test]
    fn stopped_leader_at_zero_gap() {
        let m = car_following_update(&p(), V50, 3.0, 0.0, 0.0, None, 1.0);
        assert_eq!(m.speed, 0.0);
        assert_eq!(m.displacement, 0.0);
    }

    #[test]
    fn waiting_at_red_line() {
        let m = car_following_update(&p(), V50, 0.0, f64::INFINITY, 0.0, line(0.0, SignalAhead::Red), 1.0);
        assert_eq!((m.speed, m.displacement), (0.0, 0.0));
    }

    #[test]
    fn red_twenty_metres_ahead_at_fifty() {
        // 50 km/h needs 24.1 m at 4 m/s²; the line still holds
        let mut speed = V50;
        let mut distance = 20.0;
        for _ in 0..30 {
            let m = car_following_update(&p(), V50, speed, f64::INFINITY, 0.0, line(distance, SignalAhead::Red), 1.0);
            distance -= m.displacement;
            speed = m.speed;
            assert!(distance >= 0.0);
        }
        assert!(speed < 1e-3);
    }

    #[test]
    fn amber_dilemma() {
        // 13.9²/6 = 32.2 m comfortable stopping distance
        let go = car_following_update(&p(), V50, V50, f64::INFINITY, 0.0, line(20.0, SignalAhead::Amber), 1.0);
        assert!((go.displacement - V50).abs() < 1e-12);
        let stop = car_following_update(&p(), V50, V50, f64::INFINITY, 0.0, line(33.0, SignalAhead::Amber), 1.0);
        assert!(stop.speed < V50);
    }

    #[test]
    fn blocked_exit_holds_vehicle() {
        let m = car_following_update(
            &p(),
            V50,
            0.0,
            f64::INFINITY,
            0.0,
            Some(StopLine {
                distance: 0.5,
                signal: SignalAhead::Green,
                blocked: true,
            }),
            1.0,
        );
        assert!(m.displacement <= 0.5);
    }

    #[test]
    fn acceleration_is_bounded_above() {
        let m = car_following_update(&p(), V50, 0.0, f64::INFINITY, 0.0, None, 1.0);
        assert_eq!(m.acceleration, p().max_accel);
    }

    #[test]
    fn safe_speed_stops_within_gap() {
        let v = safe_speed(10.0, 0.0, 4.0, 1.0);
        assert!(v * 1.0 + v * v / 8.0 <= 10.0 + 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn never_closer_than_min_gap(speed in 0.0..20.0f64, gap in 0.0..80.0f64, leader in 0.0..20.0f64) {
                let m = car_following_update(&p(), V50, speed, gap, leader, None, 1.0);
                prop_assert!(m.speed >= 0.0);
                prop_assert!(m.displacement <= (gap - p().min_gap).max(0.0) + 1e-12);
                prop_assert!(m.acceleration <= p().max_accel + 1e-12);
            }

            #[test]
            fn never_crosses_red(speed in 0.0..20.0f64, distance in 0.0..100.0f64) {
                let m = car_following_update(&p(), V50, speed, f64::INFINITY, 0.0, line(distance, SignalAhead::Red), 1.0);
                prop_assert!(m.displacement <= distance + 1e-12);
            }
        }
    }
}
