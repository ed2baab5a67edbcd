//! Kinematic two-wheeled differential-drive rover.
//!
//! Axes follow the body frame used throughout the crate: X runs through the
//! wheel centers (left to right), Z runs fore-aft, Y is vertical. Yaw `θy = 0`
//! faces world +Z; positive yaw turns the nose toward world −X, which is what
//! a faster right wheel produces.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heightfield::Heightfield;

/// Largest wheel command magnitude, in action units.
pub const MAX_WHEEL_RATE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub wheel_radius: f64,
    /// Lateral separation of the wheel contact points.
    pub track_width: f64,
    /// Fore-aft separation of the front and rear contact probes.
    pub body_length: f64,
    pub max_wheel_rate: f64,
    /// Ground speed in m/s produced by one action unit.
    pub speed_per_unit: f64,
    /// Seconds per simulation step.
    pub dt: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheel_radius: 0.03,
            track_width: 0.12,
            body_length: 0.10,
            max_wheel_rate: MAX_WHEEL_RATE,
            speed_per_unit: 0.1,
            dt: 0.1,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let all =
            [self.wheel_radius, self.track_width, self.body_length, self.max_wheel_rate, self.speed_per_unit, self.dt];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("robot parameters must all be positive".into()));
        }
        Ok(())
    }

    /// Half-extent of the contact footprint; positions closer than this to
    /// the lattice edge would put a probe off the field.
    pub fn footprint_radius(&self) -> f64 {
        0.5 * self.track_width.max(self.body_length)
    }
}

/// Euler angles in radians: pitch about body X, yaw about Y, roll about body Z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Euler {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub euler: Euler,
    /// Last applied (clamped) wheel command `(left, right)`.
    pub last_action: [f64; 2],
}

impl RobotState {
    /// Places the robot at `(x, z)` with heading `yaw` and settles it onto the field.
    pub fn spawn(x: f64, z: f64, yaw: f64, field: &Heightfield, params: &RobotParams) -> Result<Self> {
        let yaw = wrap_angle(yaw);
        let contact = settle(x, z, yaw, field, params)?;
        Ok(Self {
            x,
            y: contact.y,
            z,
            euler: Euler { pitch: contact.pitch, yaw, roll: contact.roll },
            last_action: [0.0; 2],
        })
    }

    pub fn planar_distance_to(&self, x: f64, z: f64) -> f64 {
        (x - self.x).hypot(z - self.z)
    }
}

/// Result of settling onto the terrain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub y: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    /// The integrated position left the field and was held at its boundary.
    pub clamped: bool,
}

/// World-frame unit vectors `(forward, right)` on the X-Z plane for a heading.
pub fn heading_axes(yaw: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = yaw.sin_cos();
    ([-s, c], [c, s])
}

/// Wraps an angle into [−π, π).
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Probes four contact points and derives height, pitch and roll.
pub fn settle(x: f64, z: f64, yaw: f64, field: &Heightfield, params: &RobotParams) -> Result<Contact> {
    let (fwd, right) = heading_axes(yaw);
    let hl = 0.5 * params.body_length;
    let hw = 0.5 * params.track_width;
    let fore = field.height_at(x + fwd[0] * hl, z + fwd[1] * hl)?;
    let aft = field.height_at(x - fwd[0] * hl, z - fwd[1] * hl)?;
    let right_h = field.height_at(x + right[0] * hw, z + right[1] * hw)?;
    let left_h = field.height_at(x - right[0] * hw, z - right[1] * hw)?;
    Ok(Contact {
        y: 0.25 * (fore + aft + left_h + right_h),
        pitch: ((fore - aft) / params.body_length).atan(),
        roll: ((left_h - right_h) / params.track_width).atan(),
    })
}

pub fn clamp_action(action: [f64; 2], params: &RobotParams) -> [f64; 2] {
    let m = params.max_wheel_rate;
    action.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-m, m) })
}

/// Advances the robot one tick under wheel command `(left, right)`.
pub fn step(state: &RobotState, action: [f64; 2], field: &Heightfield, params: &RobotParams) -> Result<StepOutcome> {
    let [left, right] = clamp_action(action, params);
    let v = params.speed_per_unit * 0.5 * (left + right);
    let omega = params.speed_per_unit * (right - left) / params.track_width;
    let yaw0 = state.euler.yaw;
    let mid_yaw = yaw0 + 0.5 * omega * params.dt;
    let (fwd, _) = heading_axes(mid_yaw);
    let mut x = state.x + v * params.dt * fwd[0];
    let mut z = state.z + v * params.dt * fwd[1];
    let yaw = wrap_angle(yaw0 + omega * params.dt);

    let (x0, x1, z0, z1) = field.extent();
    let m = params.footprint_radius() + 1e-9;
    let (cx, cz) = (x.clamp(x0 + m, x1 - m), z.clamp(z0 + m, z1 - m));
    let clamped = cx != x || cz != z;
    x = cx;
    z = cz;

    let contact = settle(x, z, yaw, field, params)?;
    Ok(StepOutcome {
        state: RobotState {
            x,
            y: contact.y,
            z,
            euler: Euler { pitch: contact.pitch, yaw, roll: contact.roll },
            last_action: [left, right],
        },
        clamped,
    })
}

/// `(cos θx, sin θx, cos θy, sin θy, cos θz, sin θz)`.
pub fn orientation_features(state: &RobotState) -> [f64; 6] {
    let (sp, cp) = state.euler.pitch.sin_cos();
    let (sy, cy) = state.euler.yaw.sin_cos();
    let (sr, cr) = state.euler.roll.sin_cos();
    [cp, sp, cy, sy, cr, sr]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightfield::{AreaRect, Terrain, TerrainSpec};

    fn field() -> Heightfield {
        Heightfield::generate(&TerrainSpec::default()).unwrap()
    }

    fn tilted_field(fore_minus_aft: f64) -> Heightfield {
        // A plane rising along +Z with slope chosen so the probes 0.1 m apart differ by `fore_minus_aft`.
        let spec = TerrainSpec {
            flat: AreaRect::new(-1.0, -0.8, -1.0, -0.8, Terrain::Flat).unwrap(),
            rough: AreaRect::new(0.8, 1.0, 0.8, 1.0, Terrain::Rough).unwrap(),
            roughness_scale: 0.0,
            extent_margin: 0.5,
            ..TerrainSpec::default()
        };
        let mut f = Heightfield::generate(&spec).unwrap();
        let (nx, nz) = f.dims();
        let slope = fore_minus_aft / 0.1;
        let mut hs = Vec::with_capacity(nx * nz);
        for j in 0..nz {
            for i in 0..nx {
                hs.push(slope * f.node_position(i, j).1);
            }
        }
        f.set_heights_for_test(hs);
        f
    }

    #[test]
    fn full_throttle_straight_line() {
        let field = field();
        let p = RobotParams::default();
        let s = RobotState::spawn(-1.0, -0.25, 0.0, &field, &p).unwrap();
        let out = step(&s, [3.0, 3.0], &field, &p).unwrap();
        let advance = out.state.planar_distance_to(s.x, s.z);
        assert!((advance - 0.3 * p.speed_per_unit).abs() < 1e-12);
        assert!((out.state.z - s.z - 0.03).abs() < 1e-12);
        assert_eq!(out.state.euler.yaw, s.euler.yaw);
        assert!(!out.clamped);
    }

    #[test]
    fn opposite_wheels_spin_in_place() {
        let field = field();
        let p = RobotParams::default();
        let s = RobotState::spawn(-1.0, -0.25, 0.3, &field, &p).unwrap();
        let out = step(&s, [-2.0, 2.0], &field, &p).unwrap();
        assert_eq!((out.state.x, out.state.z), (s.x, s.z));
        assert!(out.state.euler.yaw > s.euler.yaw);
    }

    #[test]
    fn zero_action_only_resettles() {
        let field = field();
        let p = RobotParams::default();
        let s = RobotState::spawn(-8.2, 3.1, 1.0, &field, &p).unwrap();
        let out = step(&s, [0.0, 0.0], &field, &p).unwrap();
        assert_eq!(out.state, s);
    }

    #[test]
    fn flat_ground_is_level() {
        let field = field();
        let p = RobotParams::default();
        let c = settle(-1.0, -0.2, 0.7, &field, &p).unwrap();
        assert_eq!(c, Contact { y: 0.0, pitch: 0.0, roll: 0.0 });
    }

    #[test]
    fn pitch_from_fore_aft_difference() {
        let field = tilted_field(0.01);
        let p = RobotParams::default();
        let c = settle(0.0, 0.0, 0.0, &field, &p).unwrap();
        assert!((c.pitch - 0.1f64.atan()).abs() < 1e-9, "{}", c.pitch);
        assert!((c.pitch - 0.0997).abs() < 1e-4);
        // Slope runs fore-aft only, so the side probes agree.
        assert!(c.roll.abs() < 1e-12);
    }

    #[test]
    fn actions_are_clamped() {
        let p = RobotParams::default();
        assert_eq!(clamp_action([7.0, -9.0], &p), [3.0, -3.0]);
        assert_eq!(clamp_action([f64::NAN, 1.0], &p), [0.0, 1.0]);
    }

    #[test]
    fn boundary_holds_robot() {
        let field = field();
        let p = RobotParams::default();
        let (x0, _, _, _) = field.extent();
        let mut s = RobotState::spawn(x0 + 0.07, 0.0, std::f64::consts::FRAC_PI_2, &field, &p).unwrap();
        let mut clamped = false;
        for _ in 0..10 {
            let out = step(&s, [3.0, 3.0], &field, &p).unwrap();
            clamped |= out.clamped;
            s = out.state;
        }
        assert!(clamped);
        assert!(field.contains(s.x - p.footprint_radius(), s.z));
    }

    #[test]
    fn identity_orientation_features() {
        let s = RobotState::default();
        assert_eq!(orientation_features(&s), [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let s = RobotState { euler: Euler { pitch: PI / 2.0 - 1e-9, ..Euler::default() }, ..s };
        let f = orientation_features(&s);
        assert!(f[0].abs() < 1e-8 && (f[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}

#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;
    use crate::heightfield::TerrainSpec;

    fn field() -> &'static Heightfield {
        use std::sync::OnceLock;
        static FIELD: OnceLock<Heightfield> = OnceLock::new();
        FIELD.get_or_init(|| Heightfield::generate(&TerrainSpec::default()).unwrap())
    }

    proptest! {
        #[test]
        fn trig_pairs_are_unit(p in -1.5f64..1.5, y in -3.1f64..3.1, r in -1.5f64..1.5) {
            let s = RobotState { euler: Euler { pitch: p, yaw: y, roll: r }, ..RobotState::default() };
            let f = orientation_features(&s);
            for pair in f.chunks(2) {
                prop_assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn flat_patch_stays_level(x in -2.3f64..0.3, z in -0.8f64..0.3, yaw in -3.1f64..3.1,
                                  l in -3.0f64..3.0, r in -3.0f64..3.0) {
            let p = RobotParams::default();
            let s = RobotState::spawn(x, z, yaw, field(), &p).unwrap();
            let next = step(&s, [l, r], field(), &p).unwrap().state;
            prop_assert_eq!(next.euler.pitch, 0.0);
            prop_assert_eq!(next.euler.roll, 0.0);
        }

        #[test]
        fn step_is_deterministic(x in -8.8f64..-7.7, z in 1.7f64..4.8, yaw in -3.1f64..3.1,
                                 l in -3.0f64..3.0, r in -3.0f64..3.0) {
            let p = RobotParams::default();
            let s = RobotState::spawn(x, z, yaw, field(), &p).unwrap();
            prop_assert_eq!(step(&s, [l, r], field(), &p).unwrap(), step(&s, [l, r], field(), &p).unwrap());
        }

        #[test]
        fn swapped_wheels_mirror_yaw(yaw in -1.0f64..1.0, l in -3.0f64..3.0, r in -3.0f64..3.0) {
            let p = RobotParams::default();
            let s = RobotState::spawn(-1.0, -0.25, yaw, field(), &p).unwrap();
            let a = step(&s, [l, r], field(), &p).unwrap().state;
            let b = step(&s, [r, l], field(), &p).unwrap().state;
            let da = wrap_angle(a.euler.yaw - yaw);
            let db = wrap_angle(b.euler.yaw - yaw);
            prop_assert!((da + db).abs() < 1e-12);
            let fa = a.planar_distance_to(s.x, s.z);
            let fb = b.planar_distance_to(s.x, s.z);
            prop_assert!((fa - fb).abs() < 1e-12);
        }
    }
}
