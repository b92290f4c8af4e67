use std::path::Path;

use nalgebra::{Matrix2x3, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Points closer to the image plane than this are rejected.
pub const NEAR: f64 = 1e-6;

/// Pinhole camera. Pixel centers sit at integer coordinates; `(u, v)` grows
/// right and down. The extrinsic maps world to camera coordinates as
/// `x_cam = R x + t` with the camera looking down `+z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
struct CameraFile {
    cams: Vec<CameraRecord>,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Matrix3<f64>, translation: Vec3, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).abs().max() > 1e-6 || rotation.determinant() < 0.0 {
            return Err(Error::InvalidArgument("camera rotation is not a proper rotation".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("camera image is empty".into()));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, image `v` axis aligned with
    /// `-up`. The principal point is the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let z = (target - eye).normalize();
        let y = -(up - z * up.dot(&z)).normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            rotation,
            translation,
            width,
            height,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn project(&self, x: &Vec3) -> Result<Projection> {
        let c = self.to_camera(x);
        if c.z <= NEAR {
            return Err(Error::BehindCamera { depth: c.z });
        }
        Ok(Projection {
            u: self.fx * c.x / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        })
    }

    /// Jacobian of `(u, v)` with respect to the world point.
    pub fn project_jacobian(&self, x: &Vec3) -> Result<Matrix2x3<f64>> {
        let c = self.to_camera(x);
        if c.z <= NEAR {
            return Err(Error::BehindCamera { depth: c.z });
        }
        let iz = 1.0 / c.z;
        let local = Matrix2x3::new(
            self.fx * iz, 0.0, -self.fx * c.x * iz * iz,
            0.0, self.fy * iz, -self.fy * c.y * iz * iz,
        );
        Ok(local * self.rotation)
    }

    /// Unit direction from `x` towards the camera center.
    pub fn view_direction(&self, x: &Vec3) -> Vec3 {
        (self.center() - x).normalize()
    }

    /// Same camera after moving the world by `motion`.
    pub fn transformed(&self, motion: &crate::kinematics::Rigid) -> Self {
        let inv = motion.inverse();
        let r = inv.rotation.to_rotation_matrix();
        Self {
            rotation: self.rotation * r.matrix(),
            translation: self.rotation * inv.translation.vector + self.translation,
            ..self.clone()
        }
    }
}

/// Parses `{cams: [{fx, fy, cx, cy, R: [9], t: [3], w, h}]}` with `R`
/// row-major.
pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let file: CameraFile = serde_json::from_str(text)?;
    file.cams
        .into_iter()
        .map(|c| Camera::new(c.fx, c.fy, c.cx, c.cy, Matrix3::from_row_slice(&c.r), Vec3::from(c.t), c.w, c.h))
        .collect()
}

pub fn cameras_to_json(cams: &[Camera]) -> String {
    let file = CameraFile {
        cams: cams
            .iter()
            .map(|c| {
                let mut r = [0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        r[3 * i + j] = c.rotation[(i, j)];
                    }
                }
                CameraRecord {
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    r,
                    t: [c.translation.x, c.translation.y, c.translation.z],
                    w: c.width,
                    h: c.height,
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("camera serialization")
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    cameras_from_json(&text)
}

pub fn save_cameras(cams: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cameras_to_json(cams)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Rigid;
    use nalgebra::{Point3, Translation3, UnitQuaternion};

    fn simple() -> Camera {
        Camera::new(100.0, 100.0, 50.0, 50.0, Matrix3::identity(), Vec3::zeros(), 100, 100).unwrap()
    }

    #[test]
    fn principal_point_and_hand_projection() {
        let cam = simple();
        let p = cam.project(&Vec3::new(0.0, 0.0, 3.0)).unwrap();
        assert_eq!((p.u, p.v), (50.0, 50.0));
        let p = cam.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (100.0, 50.0, 2.0));
        assert!(matches!(cam.project(&Vec3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cam = Camera::look_at(Vec3::new(1.0, 0.5, 4.0), Vec3::zeros(), Vec3::y(), 80.0, 64, 48).unwrap();
        let x = Vec3::new(0.2, -0.3, 0.1);
        let j = cam.project_jacobian(&x).unwrap();
        for k in 0..3 {
            let h = 1e-6;
            let mut e = Vec3::zeros();
            e[k] = h;
            let (a, b) = (cam.project(&(x + e)).unwrap(), cam.project(&(x - e)).unwrap());
            assert!(((a.u - b.u) / (2.0 * h) - j[(0, k)]).abs() < 1e-5);
            assert!(((a.v - b.v) / (2.0 * h) - j[(1, k)]).abs() < 1e-5);
        }
    }

    #[test]
    fn look_at_centers_target_and_keeps_up() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y(), 100.0, 65, 65).unwrap();
        let p = cam.project(&Vec3::zeros()).unwrap();
        assert!((p.u - 32.0).abs() < 1e-12 && (p.v - 32.0).abs() < 1e-12);
        assert!((cam.center() - Vec3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
        // world up projects upwards in the image
        assert!(cam.project(&Vec3::y()).unwrap().v < 32.0);
    }

    #[test]
    fn moving_camera_and_world_together_keeps_pixels() {
        let cam = Camera::look_at(Vec3::new(2.0, 1.0, 3.0), Vec3::zeros(), Vec3::y(), 90.0, 64, 64).unwrap();
        let motion = Rigid::from_parts(Translation3::new(0.3, -1.0, 2.0), UnitQuaternion::from_euler_angles(0.3, -0.7, 1.1));
        let moved = cam.transformed(&motion);
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.5, 0.0, 0.4)] {
            let a = cam.project(&x).unwrap();
            let b = moved.project(&(motion * Point3::from(x)).coords).unwrap();
            assert!((a.u - b.u).abs() <= 1e-6 && (a.v - b.v).abs() <= 1e-6);
        }
    }

    #[test]
    fn json_round_trip() {
        let cams = vec![
            simple(),
            Camera::look_at(Vec3::new(0.0, 1.0, 3.0), Vec3::zeros(), Vec3::y(), 70.0, 32, 24).unwrap(),
        ];
        let back = cameras_from_json(&cameras_to_json(&cams)).unwrap();
        assert_eq!(back, cams);
        assert!(cameras_from_json(r#"{"cams":[{"fx":-1,"fy":1,"cx":0,"cy":0,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0],"w":4,"h":4}]}"#).is_err());
    }
}
