//! Reference trajectory generators.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position, heading, and velocity feedforward at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub velocity: Vector3<f64>,
}

/// Heading reference over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum YawSchedule {
    Constant {
        #[serde(default)]
        yaw: f64,
    },
    /// Alternates between `+amplitude` and `-amplitude` every half `period`,
    /// starting from zero. Each switch is a smoothstep lasting `transition` s.
    SquareWave {
        amplitude: f64,
        period: f64,
        transition: f64,
    },
}

impl Default for YawSchedule {
    fn default() -> Self {
        YawSchedule::SquareWave {
            amplitude: 30f64.to_radians(),
            period: 20.0,
            transition: 2.0,
        }
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

impl YawSchedule {
    pub fn sample(&self, t: f64) -> f64 {
        match *self {
            YawSchedule::Constant { yaw } => yaw,
            YawSchedule::SquareWave {
                amplitude,
                period,
                transition,
            } => {
                let half = 0.5 * period;
                let k = (t / half).floor().max(0.0);
                let target = |k: f64| if (k as u64) % 2 == 0 { amplitude } else { -amplitude };
                let previous = if k == 0.0 { 0.0 } else { target(k - 1.0) };
                let s = if transition > 0.0 { (t - k * half) / transition } else { 1.0 };
                previous + (target(k) - previous) * smoothstep(s)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            YawSchedule::Constant { yaw } if yaw.is_finite() => Ok(()),
            YawSchedule::SquareWave {
                amplitude,
                period,
                transition,
            } if amplitude.is_finite()
                && period > 0.0
                && transition >= 0.0
                && transition <= 0.5 * period =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("invalid yaw schedule {self:?}"))),
        }
    }
}

/// Reference trajectory description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Closed rectangular circuit in a horizontal plane, traversed
    /// corner to corner with a stop at each corner.
    Rectangular {
        /// North-east coordinates of the first corner, m.
        origin: [f64; 2],
        /// Edge lengths along north and east, m.
        size: [f64; 2],
        /// Down coordinate of the first and third corners, m.
        altitude: f64,
        /// Height gained at the second and fourth corners, m. Edges then
        /// climb and descend, which excites the vertical dynamics.
        #[serde(default)]
        climb: f64,
        lap_period: f64,
        laps: u32,
        /// Fraction of each edge's time spent accelerating (and again decelerating).
        accel_fraction: f64,
        yaw: YawSchedule,
    },
    /// Holds each setpoint for `hold` seconds in turn; no velocity feedforward.
    SetpointSequence {
        setpoints: Vec<[f64; 3]>,
        hold: f64,
        yaw: YawSchedule,
    },
    /// Visits waypoints in order with a trapezoidal speed profile on each
    /// segment, then holds the final waypoint.
    TrackingCourse {
        waypoints: Vec<[f64; 3]>,
        segment_times: Vec<f64>,
        accel_fraction: f64,
        yaw: YawSchedule,
    },
}

impl Default for TrajectorySpec {
    /// 10 m × 10 m square at 5 m altitude with 1 m of climb on alternate
    /// corners, one 100 s lap, ±30° yaw square wave.
    fn default() -> Self {
        TrajectorySpec::Rectangular {
            origin: [0.0, 0.0],
            size: [10.0, 10.0],
            altitude: -5.0,
            climb: 1.0,
            lap_period: 100.0,
            laps: 1,
            accel_fraction: 0.25,
            yaw: YawSchedule::default(),
        }
    }
}

/// A straight segment with a trapezoidal speed profile.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start: Vector3<f64>,
    end: Vector3<f64>,
    duration: f64,
    accel_fraction: f64,
}

impl Segment {
    /// Position and velocity `tau` seconds into the segment.
    fn sample(&self, tau: f64) -> (Vector3<f64>, Vector3<f64>) {
        let delta = self.end - self.start;
        let length = delta.norm();
        if length == 0.0 {
            return (self.start, Vector3::zeros());
        }
        let dir = delta / length;
        let total = self.duration;
        let ta = self.accel_fraction * total;
        let v_max = length / (total - ta);
        let accel = v_max / ta;
        let tau = tau.clamp(0.0, total);
        let (s, v) = if tau < ta {
            (0.5 * accel * tau * tau, accel * tau)
        } else if tau <= total - ta {
            (0.5 * accel * ta * ta + v_max * (tau - ta), v_max)
        } else {
            let rem = total - tau;
            (length - 0.5 * accel * rem * rem, accel * rem)
        };
        (self.start + dir * s, dir * v)
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("trajectory: {msg}")));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            TrajectorySpec::Rectangular {
                origin,
                size,
                altitude,
                climb,
                lap_period,
                laps,
                accel_fraction,
                yaw,
            } => {
                if !finite(origin) || !finite(size) || !altitude.is_finite() || !climb.is_finite() {
                    return bad("geometry must be finite");
                }
                if !(*lap_period > 0.0) || *laps == 0 {
                    return bad("lap_period must be > 0 and laps >= 1");
                }
                if !(*accel_fraction > 0.0 && *accel_fraction <= 0.5) {
                    return bad("accel_fraction must lie in (0, 0.5]");
                }
                yaw.validate()
            }
            TrajectorySpec::SetpointSequence { setpoints, hold, yaw } => {
                if setpoints.is_empty() || !setpoints.iter().all(|p| finite(p)) {
                    return bad("setpoints must be non-empty and finite");
                }
                if !(*hold > 0.0) {
                    return bad("hold must be > 0");
                }
                yaw.validate()
            }
            TrajectorySpec::TrackingCourse {
                waypoints,
                segment_times,
                accel_fraction,
                yaw,
            } => {
                if waypoints.is_empty() || !waypoints.iter().all(|p| finite(p)) {
                    return bad("waypoints must be non-empty and finite");
                }
                if segment_times.len() + 1 != waypoints.len() {
                    return bad("segment_times must have one entry per segment");
                }
                if segment_times.iter().any(|&t| !(t > 0.0)) {
                    return bad("segment times must be > 0");
                }
                if !(*accel_fraction > 0.0 && *accel_fraction <= 0.5) {
                    return bad("accel_fraction must lie in (0, 0.5]");
                }
                yaw.validate()
            }
        }
    }

    pub fn yaw_schedule(&self) -> &YawSchedule {
        match self {
            TrajectorySpec::Rectangular { yaw, .. }
            | TrajectorySpec::SetpointSequence { yaw, .. }
            | TrajectorySpec::TrackingCourse { yaw, .. } => yaw,
        }
    }

    /// Replaces the heading schedule with a constant zero heading.
    pub fn without_yaw_excitation(mut self) -> Self {
        let flat = YawSchedule::Constant { yaw: 0.0 };
        match &mut self {
            TrajectorySpec::Rectangular { yaw, .. }
            | TrajectorySpec::SetpointSequence { yaw, .. }
            | TrajectorySpec::TrackingCourse { yaw, .. } => *yaw = flat,
        }
        self
    }

    /// Time at which the trajectory settles at its final point.
    pub fn nominal_duration(&self) -> f64 {
        match self {
            TrajectorySpec::Rectangular { lap_period, laps, .. } => lap_period * f64::from(*laps),
            TrajectorySpec::SetpointSequence { setpoints, hold, .. } => hold * setpoints.len() as f64,
            TrajectorySpec::TrackingCourse { segment_times, .. } => segment_times.iter().sum(),
        }
    }

    /// `count` setpoints drawn uniformly from the box `center ± half_extent`.
    pub fn random_setpoints(
        seed: u64,
        count: usize,
        center: [f64; 3],
        half_extent: [f64; 3],
        hold: f64,
        yaw: YawSchedule,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let setpoints = (0..count)
            .map(|_| {
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = center[k] + half_extent[k] * rng.random_range(-1.0..=1.0);
                }
                p
            })
            .collect();
        TrajectorySpec::SetpointSequence { setpoints, hold, yaw }
    }

    fn segments(&self) -> Vec<Segment> {
        match self {
            TrajectorySpec::Rectangular {
                origin,
                size,
                altitude,
                climb,
                lap_period,
                laps,
                accel_fraction,
                ..
            } => {
                let [n0, e0] = *origin;
                let [dn, de] = *size;
                let high = altitude - climb;
                let corners = [
                    Vector3::new(n0, e0, *altitude),
                    Vector3::new(n0 + dn, e0, high),
                    Vector3::new(n0 + dn, e0 + de, *altitude),
                    Vector3::new(n0, e0 + de, high),
                ];
                (0..*laps as usize * 4)
                    .map(|i| Segment {
                        start: corners[i % 4],
                        end: corners[(i + 1) % 4],
                        duration: lap_period / 4.0,
                        accel_fraction: *accel_fraction,
                    })
                    .collect()
            }
            TrajectorySpec::TrackingCourse {
                waypoints,
                segment_times,
                accel_fraction,
                ..
            } => waypoints
                .windows(2)
                .zip(segment_times)
                .map(|(pair, &duration)| Segment {
                    start: Vector3::from(pair[0]),
                    end: Vector3::from(pair[1]),
                    duration,
                    accel_fraction: *accel_fraction,
                })
                .collect(),
            TrajectorySpec::SetpointSequence { .. } => Vec::new(),
        }
    }

    fn start_point(&self) -> Vector3<f64> {
        match self {
            TrajectorySpec::Rectangular { origin, altitude, .. } => {
                Vector3::new(origin[0], origin[1], *altitude)
            }
            TrajectorySpec::SetpointSequence { setpoints, .. } => Vector3::from(setpoints[0]),
            TrajectorySpec::TrackingCourse { waypoints, .. } => Vector3::from(waypoints[0]),
        }
    }
}

/// Samples the reference at time `t` (clamped to `t >= 0`).
///
/// Segment boundaries belong to the segment that ends there, so the velocity
/// returned at a corner is its left limit.
pub fn sample_reference(spec: &TrajectorySpec, t: f64) -> ReferenceSample {
    let t = t.max(0.0);
    let yaw = spec.yaw_schedule().sample(t);
    if let TrajectorySpec::SetpointSequence { setpoints, hold, .. } = spec {
        let idx = ((t / hold) as usize).min(setpoints.len() - 1);
        return ReferenceSample {
            position: Vector3::from(setpoints[idx]),
            yaw,
            velocity: Vector3::zeros(),
        };
    }
    let mut start = 0.0;
    let segments = spec.segments();
    for seg in &segments {
        if t <= start + seg.duration {
            let (position, velocity) = seg.sample(t - start);
            return ReferenceSample { position, yaw, velocity };
        }
        start += seg.duration;
    }
    let end = segments.last().map_or_else(|| spec.start_point(), |s| s.end);
    ReferenceSample {
        position: end,
        yaw,
        velocity: Vector3::zeros(),
    }
}
