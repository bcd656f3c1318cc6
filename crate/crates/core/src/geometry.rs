//! Rigid transforms and pinhole projection between ego space, camera space and
//! 2.5D image coordinates.
//!
//! Frames: the camera frame is x-right, y-down, z-forward; the ego frame is
//! x-forward, y-left, z-up. A [`CameraView`]'s rotation and translation map ego
//! coordinates into the camera frame and already encode that axis change.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Orthonormality and determinant tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Points closer to the camera plane than this are culled.
pub const MIN_DEPTH: f64 = 1e-6;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

fn check_rotation(module: &'static str, r: &Mat3) -> Result<()> {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    if !err.is_finite() || err > ROTATION_TOLERANCE {
        return Err(Error::config(
            module,
            format!("rotation is not orthonormal (|R^T R - I|_inf = {err:e})"),
        ));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::config(
            module,
            format!("rotation determinant is {det}, expected 1"),
        ));
    }
    Ok(())
}

/// A rotation followed by a translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation("geometry", &rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::config("geometry", "translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Rotation about the ego z axis by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn after(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }
}

/// Pose of the ego vehicle at a timestamp, mapping ego coordinates to global ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoPose {
    pub ego_to_global: RigidTransform,
    pub timestamp_us: i64,
}

impl EgoPose {
    pub fn new(rotation: Mat3, translation: Vec3, timestamp_us: i64) -> Result<Self> {
        Ok(Self {
            ego_to_global: RigidTransform::new(rotation, translation)?,
            timestamp_us,
        })
    }

    pub fn identity(timestamp_us: i64) -> Self {
        Self {
            ego_to_global: RigidTransform::identity(),
            timestamp_us,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rotation("geometry", &self.ego_to_global.rotation)
    }
}

/// Transform taking points in the `prev` ego frame into the `cur` ego frame,
/// i.e. `inverse(cur) ∘ prev`, fused into a single rotation and translation.
pub fn compose_relative(prev: &EgoPose, cur: &EgoPose) -> Result<RigidTransform> {
    prev.validate()?;
    cur.validate()?;
    Ok(cur.ego_to_global.inverse().after(&prev.ego_to_global))
}

/// A projected point: pixel coordinates plus camera-frame depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point25D {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

/// Intrinsics and ego-to-camera extrinsics of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    intrinsics: Mat3,
    rotation: Mat3,
    translation: Vec3,
    image_width: u32,
    image_height: u32,
    view_id: i32,
}

impl CameraView {
    pub fn new(
        intrinsics: Mat3,
        rotation: Mat3,
        translation: Vec3,
        image_width: u32,
        image_height: u32,
        view_id: i32,
    ) -> Result<Self> {
        check_rotation("geometry", &rotation)?;
        let k = &intrinsics;
        if k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::config(
                "geometry",
                "intrinsics bottom row must be (0, 0, 1)",
            ));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::config("geometry", "focal lengths must be positive"));
        }
        if !k.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::config("geometry", "camera parameters must be finite"));
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::config("geometry", "image dimensions must be positive"));
        }
        let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::config("geometry", "intrinsics matrix is singular"));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            image_width,
            image_height,
            view_id,
        })
    }

    /// Camera at `position` (ego frame) looking horizontally along `yaw`
    /// radians from the ego x axis.
    pub fn looking_at_yaw(
        intrinsics: Mat3,
        yaw: f64,
        position: Vec3,
        image_width: u32,
        image_height: u32,
        view_id: i32,
    ) -> Result<Self> {
        let (s, c) = yaw.sin_cos();
        // rows: camera x (right), y (down), z (forward) expressed in ego axes
        let rotation = Mat3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0);
        let translation = -(rotation * position);
        Self::new(
            intrinsics,
            rotation,
            translation,
            image_width,
            image_height,
            view_id,
        )
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.intrinsics
    }
    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }
    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }
    pub fn image_width(&self) -> u32 {
        self.image_width
    }
    pub fn image_height(&self) -> u32 {
        self.image_height
    }
    pub fn view_id(&self) -> i32 {
        self.view_id
    }

    pub fn ego_to_camera(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    /// Projects one ego-frame point without culling.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Point25D {
        let r = &self.rotation;
        let t = &self.translation;
        let k = &self.intrinsics;
        let mut cam = [0.0f64; 3];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = r[(i, 0)] * p.x + r[(i, 1)] * p.y + r[(i, 2)] * p.z + t[i];
        }
        let mut img = [0.0f64; 3];
        for (i, c) in img.iter_mut().enumerate() {
            *c = k[(i, 0)] * cam[0] + k[(i, 1)] * cam[1] + k[(i, 2)] * cam[2];
        }
        let d = img[2];
        Point25D {
            u: img[0] / d,
            v: img[1] / d,
            d,
        }
    }

    /// Whether a projected point is in front of the camera and inside the
    /// half-open image rectangle.
    #[inline]
    pub fn is_visible(&self, p: &Point25D) -> bool {
        p.d > MIN_DEPTH
            && p.u >= 0.0
            && p.u < self.image_width as f64
            && p.v >= 0.0
            && p.v < self.image_height as f64
    }
}

/// Projects ego-frame points into `cam`, keeping only visible points.
/// Output pairs each retained point with its index in `cloud`, in input order.
pub fn project_points(cloud: &[Vec3], cam: &CameraView) -> Vec<(Point25D, usize)> {
    cloud
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let q = cam.project(p);
            cam.is_visible(&q).then_some((q, i))
        })
        .collect()
}

/// Inverse of [`CameraView::project`]: the ego-frame point seen at pixel
/// `(u, v)` with camera-frame depth `d`.
pub fn unproject_pixel(u: f64, v: f64, d: f64, cam: &CameraView) -> Result<Vec3> {
    if !(d > 0.0) {
        return Err(Error::Precondition {
            module: "geometry",
            index: 0,
            message: format!("depth must be positive, got {d}"),
        });
    }
    Ok(unproject_unchecked(u, v, d, cam))
}

#[inline]
pub(crate) fn unproject_unchecked(u: f64, v: f64, d: f64, cam: &CameraView) -> Vec3 {
    // K has bottom row (0, 0, 1): z = d, then solve the upper 2x2 block
    let k = &cam.intrinsics;
    let a = u * d - k[(0, 2)] * d;
    let b = v * d - k[(1, 2)] * d;
    let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
    let x = (a * k[(1, 1)] - k[(0, 1)] * b) / det;
    let y = (k[(0, 0)] * b - k[(1, 0)] * a) / det;
    cam.rotation.transpose() * (Vec3::new(x, y, d) - cam.translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> Mat3 {
        Mat3::new(500.0, 0.0, 352.0, 0.0, 500.0, 128.0, 0.0, 0.0, 1.0)
    }

    fn aligned_cam() -> CameraView {
        CameraView::new(k(), Mat3::identity(), Vec3::zeros(), 704, 256, 0).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let out = project_points(&[Vec3::new(0.0, 0.0, 10.0)], &aligned_cam());
        assert_eq!(out.len(), 1);
        let (p, i) = out[0];
        assert_eq!(i, 0);
        assert_eq!((p.u, p.v, p.d), (352.0, 128.0, 10.0));
    }

    #[test]
    fn behind_camera_is_culled() {
        let out = project_points(&[Vec3::new(0.0, 0.0, -5.0)], &aligned_cam());
        assert!(out.is_empty());
    }

    #[test]
    fn image_boundary_is_half_open() {
        let cam = aligned_cam();
        // u = 704 exactly: (704 - 352) / 500 * 10 = 7.04
        let on_edge = Vec3::new(7.04, 0.0, 10.0);
        assert_eq!(cam.project(&on_edge).u, 704.0);
        assert!(project_points(&[on_edge], &cam).is_empty());
        let origin = Vec3::new(-7.04, -2.56, 10.0);
        assert_eq!(project_points(&[origin], &cam).len(), 1);
    }

    #[test]
    fn unproject_inverts_optical_axis() {
        let p = unproject_pixel(352.0, 128.0, 10.0, &aligned_cam()).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 10.0));
    }

    #[test]
    fn unproject_one_focal_length_right() {
        // K^-1 (852, 128, 1) = ((852 - 352) / 500, 0, 1)
        let p = unproject_pixel(852.0, 128.0, 1.0, &aligned_cam()).unwrap();
        assert!((p - Vec3::new(1.0, 0.0, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn forward_camera_maps_ego_forward_to_depth() {
        let cam = CameraView::looking_at_yaw(k(), 0.0, Vec3::zeros(), 704, 256, 0).unwrap();
        let p = cam.project(&Vec3::new(10.0, 0.0, 0.0));
        assert!((p.u - 352.0).abs() < 1e-12 && (p.v - 128.0).abs() < 1e-12);
        assert!((p.d - 10.0).abs() < 1e-12);
        // ego +y (left) lands left of the principal point, ego +z (up) above it
        assert!(cam.project(&Vec3::new(10.0, 1.0, 0.0)).u < 352.0);
        assert!(cam.project(&Vec3::new(10.0, 0.0, 1.0)).v < 128.0);
    }

    #[test]
    fn rejects_invalid_cameras() {
        let bad_r = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraView::new(k(), bad_r, Vec3::zeros(), 704, 256, 0).is_err());
        let reflect = Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraView::new(k(), reflect, Vec3::zeros(), 704, 256, 0).is_err());
        let mut bad_k = k();
        bad_k[(2, 0)] = 0.5;
        assert!(CameraView::new(bad_k, Mat3::identity(), Vec3::zeros(), 704, 256, 0).is_err());
        let mut singular = k();
        singular[(0, 1)] = 500.0;
        singular[(1, 0)] = 500.0;
        let err = CameraView::new(singular, Mat3::identity(), Vec3::zeros(), 704, 256, 0);
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn relative_of_identical_poses_is_identity() {
        let pose = EgoPose {
            ego_to_global: RigidTransform::from_yaw(0.7, Vec3::new(3.0, -2.0, 0.5)),
            timestamp_us: 0,
        };
        let rel = compose_relative(&pose, &pose).unwrap();
        assert!((rel.rotation - Mat3::identity()).amax() <= 1e-12);
        assert!(rel.translation.amax() <= 1e-12);
    }

    #[test]
    fn pure_translation_ego_motion() {
        let prev = EgoPose::identity(0);
        let cur = EgoPose::new(Mat3::identity(), Vec3::new(1.0, 0.0, 0.0), 1).unwrap();
        let rel = compose_relative(&prev, &cur).unwrap();
        let p = Vec3::new(5.0, 2.0, 1.0);
        assert_eq!(rel.apply(&p), Vec3::new(4.0, 2.0, 1.0));
    }

    #[test]
    fn composed_transform_matches_two_step_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let prev = EgoPose {
                ego_to_global: random_transform(&mut rng),
                timestamp_us: 0,
            };
            let cur = EgoPose {
                ego_to_global: random_transform(&mut rng),
                timestamp_us: 1,
            };
            let rel = compose_relative(&prev, &cur).unwrap();
            let global_to_cur = cur.ego_to_global.inverse();
            for _ in 0..100 {
                let p = Vec3::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-5.0..5.0),
                );
                let two_step = global_to_cur.apply(&prev.ego_to_global.apply(&p));
                assert!((rel.apply(&p) - two_step).amax() <= 1e-9);
            }
        }
    }

    pub(crate) fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = nalgebra::Unit::new_normalize(Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.1..1.0),
        ));
        let angle = rng.gen_range(-3.0..3.0);
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        RigidTransform::new(
            rotation,
            Vec3::new(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-2.0..2.0),
            ),
        )
        .unwrap()
    }
}
