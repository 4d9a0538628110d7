//! Seeded synthetic intersection corpus: kinematically consistent
//! trajectories over a four-approach intersection with through, left,
//! right, and U-turn maneuvers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Trajectory, Waypoint};
use crate::error::{Error, Result};
use crate::geometry::normalize_heading_deg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Through,
    Left,
    Right,
    UTurn,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpeedProfile {
    /// Constant speed.
    Cruise { mph: f64 },
    /// Start from rest, constant acceleration up to a target speed.
    AccelerateFromStop { target_mph: f64, accel_ftps2: f64 },
    /// Decelerate from one speed to another, then hold.
    Brake { from_mph: f64, to_mph: f64, decel_ftps2: f64 },
}

impl SpeedProfile {
    /// Speed in ft/s at elapsed time t seconds.
    fn speed_ftps(&self, t: f64) -> f64 {
        let mph_to_ftps = crate::MPH_TO_FTPS;
        match *self {
            SpeedProfile::Cruise { mph } => mph * mph_to_ftps,
            SpeedProfile::AccelerateFromStop { target_mph, accel_ftps2 } => {
                (accel_ftps2 * t).min(target_mph * mph_to_ftps)
            }
            SpeedProfile::Brake { from_mph, to_mph, decel_ftps2 } => {
                (from_mph * mph_to_ftps - decel_ftps2 * t).max(to_mph * mph_to_ftps)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionSpec {
    /// Straight run before and after the turn region, feet.
    pub approach_len_ft: f64,
    /// Lateral lane-center offset from the approach axis, feet.
    pub lane_offset_ft: f64,
    /// Maneuvers with sampling weights.
    pub maneuvers: Vec<(Maneuver, f64)>,
    /// Speed profiles, sampled uniformly.
    pub profiles: Vec<SpeedProfile>,
    pub fps: u32,
    pub vehicle_length_ft: f64,
    pub vehicle_width_ft: f64,
    /// Random start offset along the path, feet.
    pub start_jitter_ft: f64,
    /// Random start frame range.
    pub start_frame_range: i64,
}

impl Default for IntersectionSpec {
    fn default() -> Self {
        IntersectionSpec {
            approach_len_ft: 220.0,
            lane_offset_ft: 6.0,
            maneuvers: vec![
                (Maneuver::Through, 0.4),
                (Maneuver::Left, 0.25),
                (Maneuver::Right, 0.25),
                (Maneuver::UTurn, 0.1),
            ],
            profiles: vec![
                SpeedProfile::Cruise { mph: 30.0 },
                SpeedProfile::AccelerateFromStop { target_mph: 35.0, accel_ftps2: 6.0 },
                SpeedProfile::Brake { from_mph: 35.0, to_mph: 12.0, decel_ftps2: 5.0 },
            ],
            fps: 30,
            vehicle_length_ft: 16.0,
            vehicle_width_ft: 6.0,
            start_jitter_ft: 20.0,
            start_frame_range: 300,
        }
    }
}

/// A path through the intersection in the local frame of one approach
/// (travel along +x, turn region beginning at x = 0). Positions are
/// parameterized by arc length.
struct Path {
    straight_in: f64,
    arc_radius: f64,
    /// Signed total turn angle in radians (+ left, - right).
    arc_angle: f64,
    straight_out: f64,
    lane_off: f64,
}

impl Path {
    fn new(m: Maneuver, spec: &IntersectionSpec) -> Path {
        let (r, ang) = match m {
            Maneuver::Through => (0.0, 0.0),
            Maneuver::Left => (45.0, std::f64::consts::FRAC_PI_2),
            Maneuver::Right => (26.0, -std::f64::consts::FRAC_PI_2),
            Maneuver::UTurn => (14.0, std::f64::consts::PI),
        };
        Path {
            straight_in: spec.approach_len_ft,
            arc_radius: r,
            arc_angle: ang,
            straight_out: spec.approach_len_ft,
            lane_off: spec.lane_offset_ft,
        }
    }

    fn total_len(&self) -> f64 {
        self.straight_in + self.arc_radius * self.arc_angle.abs() + self.straight_out
    }

    /// Local-frame position at arc length s.
    fn position(&self, s: f64) -> (f64, f64) {
        let y0 = -self.lane_off;
        if s <= self.straight_in || self.arc_angle == 0.0 {
            return (s - self.straight_in, y0);
        }
        let arc_len = self.arc_radius * self.arc_angle.abs();
        let s2 = s - self.straight_in;
        let sign = self.arc_angle.signum();
        if s2 <= arc_len {
            let phi = s2 / self.arc_radius;
            // circle center is perpendicular-left (+) or right (-) of travel
            let cx = 0.0;
            let cy = y0 + sign * self.arc_radius;
            (cx + self.arc_radius * phi.sin(), cy - sign * self.arc_radius * phi.cos())
        } else {
            let s3 = s2 - arc_len;
            let phi = self.arc_angle;
            let cx = 0.0;
            let cy = y0 + sign * self.arc_radius;
            let ex = cx + self.arc_radius * (self.arc_angle.abs()).sin();
            let ey = cy - sign * self.arc_radius * (self.arc_angle.abs()).cos();
            (ex + phi.cos() * s3, ey + phi.sin() * s3)
        }
    }
}

/// Generate a seeded synthetic corpus. Headings are the direction of the
/// displacement vector and speeds match displacement magnitude; Gaussian
/// position noise is applied after the kinematics.
pub fn generate_synthetic(
    spec: &IntersectionSpec,
    n_vehicles: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if spec.maneuvers.is_empty() {
        return Err(Error::Config("empty maneuver mix".into()));
    }
    if spec.profiles.is_empty() {
        return Err(Error::Config("no speed profiles".into()));
    }
    let weight_sum: f64 = spec.maneuvers.iter().map(|(_, w)| w).sum();
    if weight_sum <= 0.0 {
        return Err(Error::Config("maneuver weights sum to zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / spec.fps as f64;
    let mut out = Vec::with_capacity(n_vehicles);
    for v in 0..n_vehicles {
        let vehicle_id = format!("veh{v:05}");
        // sample maneuver by weight
        let mut pick = rng.gen_range(0.0..weight_sum);
        let mut maneuver = spec.maneuvers[0].0;
        for (m, w) in &spec.maneuvers {
            if pick < *w {
                maneuver = *m;
                break;
            }
            pick -= w;
        }
        let profile = spec.profiles[rng.gen_range(0..spec.profiles.len())];
        let approach = rng.gen_range(0..4u32);
        let approach_deg = approach as f64 * 90.0;
        let start_frame = rng.gen_range(0..=spec.start_frame_range);
        let s0 = rng.gen_range(0.0..=spec.start_jitter_ft.max(1e-9));

        let path = Path::new(maneuver, spec);
        let total = path.total_len();

        // clean kinematics at fps
        let mut positions: Vec<(f64, f64)> = Vec::new();
        let mut s = s0;
        let mut t = 0.0;
        while s <= total {
            positions.push(path.position(s));
            let v_ftps = profile.speed_ftps(t);
            if v_ftps <= 0.0 && positions.len() > 1 {
                break;
            }
            s += v_ftps.max(0.01) * dt;
            t += dt;
        }
        if positions.len() < 2 {
            continue;
        }
        // rotate local frame into the approach direction
        let th = (approach_deg).to_radians();
        let (st, ct) = th.sin_cos();
        let world: Vec<(f64, f64)> =
            positions.iter().map(|(x, y)| (ct * x - st * y, st * x + ct * y)).collect();

        let mut waypoints = Vec::with_capacity(world.len());
        for i in 0..world.len() {
            let (dx, dy) = if i + 1 < world.len() {
                (world[i + 1].0 - world[i].0, world[i + 1].1 - world[i].1)
            } else {
                (world[i].0 - world[i - 1].0, world[i].1 - world[i - 1].1)
            };
            let disp = dx.hypot(dy);
            let speed_mph = disp / dt / crate::MPH_TO_FTPS;
            let heading_deg = normalize_heading_deg(dy.atan2(dx).to_degrees());
            let (nx, ny) = if noise_std > 0.0 {
                (gaussian(&mut rng) * noise_std, gaussian(&mut rng) * noise_std)
            } else {
                (0.0, 0.0)
            };
            waypoints.push(Waypoint {
                frame: start_frame + i as i64,
                vehicle_id: vehicle_id.clone(),
                x_ft: world[i].0 + nx,
                y_ft: world[i].1 + ny,
                speed_mph,
                heading_deg,
                length_ft: spec.vehicle_length_ft,
                width_ft: spec.vehicle_width_ft,
            });
        }
        out.push(Trajectory { vehicle_id, waypoints });
    }
    Ok(out)
}

/// Box-Muller standard normal draw.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
