use serde::{Deserialize, Serialize};

use crate::geometry::{
    compose_relative_transform, compose_yaw_pitch_roll, decompose_yaw_pitch_roll, Extrinsic, Vec3, YawPitchRoll,
    DEFAULT_GIMBAL_BAND_DEG,
};
use crate::labels::EgoLabel;

use super::{PerceptionError, Result};

/// Motion or position expressed in a camera's own terms. Distances in meters,
/// angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MovementDescriptors {
    pub forward: f64,
    pub right: f64,
    pub up: f64,
    pub rotate_right: f64,
    pub rotate_up: f64,
    #[serde(default)]
    pub rotate_roll: f64,
}

impl MovementDescriptors {
    /// Inverse of [`relative_camera_movement`]: rebuilds `e1` from `e0`.
    pub fn recompose(&self, e0: &Extrinsic) -> Extrinsic {
        let pose_in_0 = compose_yaw_pitch_roll(&YawPitchRoll {
            translation: Vec3::new(self.right, -self.up, self.forward),
            yaw: self.rotate_right,
            pitch: self.rotate_up,
            roll: self.rotate_roll,
        });
        pose_in_0.inverse().compose(e0)
    }
}

/// How the second camera sits relative to the first: its center and
/// orientation expressed in the first camera's frame.
///
/// The relative transform `e1 * e0^-1` maps camera-0 coordinates into
/// camera 1; its inverse is camera 1's pose in camera-0 coordinates, which is
/// what gets decomposed. Positive pitch tilts the optical axis toward -Y,
/// which is up in image terms.
pub fn relative_camera_movement(e0: &Extrinsic, e1: &Extrinsic) -> Result<MovementDescriptors> {
    let pose = compose_relative_transform(e0, e1).inverse();
    let ypr = decompose_yaw_pitch_roll(&pose, DEFAULT_GIMBAL_BAND_DEG)?;
    let t = ypr.translation;
    Ok(MovementDescriptors {
        forward: t.z,
        right: t.x,
        up: -t.y,
        rotate_right: ypr.yaw,
        rotate_up: ypr.pitch,
        rotate_roll: ypr.roll,
    })
}

/// A world point in the camera's terms; rotations are zero.
pub fn relative_object_position(e: &Extrinsic, p: &Vec3) -> MovementDescriptors {
    let c = e.transform_point(p);
    MovementDescriptors { forward: c.z, right: c.x, up: -c.y, ..Default::default() }
}

/// Where `target` lies for someone at `observer` looking along `facing`.
/// Returns the label and the signed ground angle (positive to the right).
pub fn egocentric_label(facing: &Vec3, observer: &Vec3, target: &Vec3, up: &Vec3) -> Result<(EgoLabel, f64)> {
    let flat = |v: Vec3| v - up * up.dot(&v);
    let f = flat(*facing).try_normalize(1e-9).ok_or(PerceptionError::Geometry(crate::geometry::GeometryError::ZeroVector))?;
    let v = flat(target - observer);
    if v.norm() < 1e-6 {
        return Err(PerceptionError::CoincidentProjection);
    }
    let right = f.cross(up);
    let ang = v.dot(&right).atan2(v.dot(&f)).to_degrees();
    Ok((EgoLabel::from_angle(ang), ang))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_about_axis, CameraPose, Mat4};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn same_camera_is_still() {
        let e = Extrinsic::from_parts(&rotation_about_axis(&Vec3::new(0.0, 1.0, 0.0), 40.0), &Vec3::new(1.0, 2.0, 3.0));
        let m = relative_camera_movement(&e, &e).unwrap();
        for x in [m.forward, m.right, m.up, m.rotate_right, m.rotate_up, m.rotate_roll] {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn advance_then_turn_right() {
        let down = Vec3::new(0.0, 1.0, 0.0);
        let p0 = CameraPose::identity();
        // One meter along the optical axis, then a 90 degree right turn.
        let p1 = CameraPose::new(rotation_about_axis(&down, 90.0), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((p1.forward() - Vec3::x()).norm() < 1e-12, "turned toward camera right");
        let m = relative_camera_movement(&Extrinsic::from_pose(&p0), &Extrinsic::from_pose(&p1)).unwrap();
        assert!(close(m.forward, 1.0) && close(m.right, 0.0) && close(m.up, 0.0));
        assert!(close(m.rotate_right, 90.0) && close(m.rotate_up, 0.0));
    }

    #[test]
    fn tilt_up_is_positive() {
        let right = Vec3::x();
        // Rotating forward (+z) toward -y (image up).
        let r = rotation_about_axis(&right, 10.0);
        assert!((r * Vec3::z()).y < 0.0);
        let p1 = CameraPose::new(r, Vec3::new(0.0, -0.5, 0.0)).unwrap();
        let m = relative_camera_movement(&Extrinsic::identity(), &Extrinsic::from_pose(&p1)).unwrap();
        assert!(close(m.rotate_up, 10.0) && close(m.up, 0.5));
    }

    #[test]
    fn descriptor_shape() {
        let m = MovementDescriptors { forward: 1.0, right: 0.0, up: 0.0, rotate_right: 30.0, rotate_up: 10.0, rotate_roll: 0.0 };
        let back = relative_camera_movement(&Extrinsic::identity(), &m.recompose(&Extrinsic::identity())).unwrap();
        assert!(close(back.forward, 1.0) && close(back.rotate_right, 30.0) && close(back.rotate_up, 10.0));
    }

    #[test]
    fn object_position_examples() {
        let m = relative_object_position(&Extrinsic::identity(), &Vec3::new(0.0, 0.0, 1.0));
        assert_eq!((m.forward, m.right, m.up), (1.0, 0.0, 0.0));
        let pose = CameraPose::new(rotation_about_axis(&Vec3::y(), 25.0), Vec3::new(1.0, -1.0, 2.0)).unwrap();
        let e = Extrinsic::from_pose(&pose);
        let m = relative_object_position(&e, &pose.center());
        assert!(m.forward.abs() < 1e-12 && m.right.abs() < 1e-12 && m.up.abs() < 1e-12);
        // Direct homogeneous multiply.
        let p = Vec3::new(0.3, -0.7, 4.0);
        let h = e.matrix * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let m = relative_object_position(&e, &p);
        assert!((m.forward - h.z).abs() < 1e-9 && (m.right - h.x).abs() < 1e-9 && (m.up + h.y).abs() < 1e-9);
    }

    #[test]
    fn egocentric_examples() {
        let up = Vec3::new(0.0, -1.0, 0.0);
        let f = Vec3::z();
        let o = Vec3::zeros();
        assert_eq!(egocentric_label(&f, &o, &Vec3::new(0.0, 0.0, 2.0), &up).unwrap().0, EgoLabel::Front);
        assert_eq!(egocentric_label(&f, &o, &Vec3::new(2.0, 0.0, 0.0), &up).unwrap().0, EgoLabel::Right);
        assert_eq!(egocentric_label(&f, &o, &Vec3::new(-2.0, -1.0, 0.0), &up).unwrap().0, EgoLabel::Left);
        assert_eq!(egocentric_label(&f, &o, &Vec3::new(0.1, 0.0, -2.0), &up).unwrap().0, EgoLabel::Behind);
    }

    fn rigid() -> impl Strategy<Value = Extrinsic> {
        (-170.0..170.0f64, -80.0..80.0f64, -170.0..170.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(
            |(y, p, r, tx, ty, tz)| {
                compose_yaw_pitch_roll(&YawPitchRoll { translation: Vec3::new(tx, ty, tz), yaw: y, pitch: p, roll: r })
            },
        )
    }

    proptest! {
        #[test]
        fn movement_recomposes(e0 in rigid(), e1 in rigid()) {
            let m = relative_camera_movement(&e0, &e1);
            if let Ok(m) = m {
                let back = m.recompose(&e0);
                let err = (back.matrix - e1.matrix).abs().max();
                prop_assert!(err < 1e-6, "err {}", err);
            }
        }

        #[test]
        fn relative_transform_round_trip(e0 in rigid(), e1 in rigid()) {
            let t = compose_relative_transform(&e0, &e1);
            prop_assert!((t.compose(&e0).matrix - e1.matrix).abs().max() < 1e-9);
            prop_assert_eq!(t.matrix.row(3).into_owned(), Mat4::identity().row(3).into_owned());
        }
    }
}
