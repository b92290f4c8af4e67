use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};
use crate::kinematics::{bind_transforms, normalize_pose, skinning_transforms, Pose, Skeleton};
use crate::nn::{Batch, SkinNet};

use super::trainer::blend_rows;

/// Skinning weights of arbitrary canonical points at a pose, one row per
/// point.
pub fn query_field(skin: &SkinNet, points: &[Vec3], pose: &Pose, up: &Vec3) -> Result<Batch> {
    skin.eval(points, &normalize_pose(pose, up))
}

/// Poses canonical points with the weights the field assigns them.
pub fn pose_points(points: &[Vec3], skel: &Skeleton, canonical: &Pose, skin: &SkinNet, pose: &Pose) -> Result<Vec<Vec3>> {
    if skin.joints != skel.joint_count() {
        return Err(Error::DimensionMismatch {
            what: "skinning network joints",
            expected: skel.joint_count(),
            got: skin.joints,
        });
    }
    let w = query_field(skin, points, pose, &skel.up())?;
    let inverse_bind = bind_transforms(skel, canonical)?;
    let t = skinning_transforms(skel, &inverse_bind, pose)?;
    Ok(blend_rows(points, &w, &t.skinning))
}

/// The template posed by the learned field. Faces, labels and colors are
/// kept.
pub fn pose_mesh(template: &TriMesh, skel: &Skeleton, canonical: &Pose, skin: &SkinNet, pose: &Pose) -> Result<TriMesh> {
    template.with_positions(pose_points(template.vertices(), skel, canonical, skin, pose)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Axis, Joint};
    use crate::nn::NetConfig;

    fn setup(seed: u64) -> (TriMesh, Skeleton, Pose, SkinNet) {
        let mesh = crate::geometry::primitives::icosphere(1);
        let skel = Skeleton::new(
            vec![
                Joint::new("a", None, Vec3::zeros(), vec![Axis::Z]),
                Joint::new("b", Some(0), Vec3::new(0.5, 0.0, 0.0), vec![Axis::Y, Axis::Z]),
            ],
            Axis::Y,
        )
        .unwrap();
        let canonical = Pose {
            alpha: [0.1, -0.4, 0.2],
            t: [0.3, 0.0, -1.0],
            rho: vec![0.5, -0.2, 0.7],
        };
        let cfg = NetConfig {
            hidden: vec![16, 16, 8, 16, 16],
            head_scale: 3.0,
            ..NetConfig::default()
        };
        let skin = SkinNet::new(&cfg, 2, 6 + skel.dof(), true, seed);
        (mesh, skel, canonical, skin)
    }

    #[test]
    fn canonical_pose_reproduces_template() {
        for seed in 0..4 {
            let (mesh, skel, canonical, skin) = setup(seed);
            let posed = pose_mesh(&mesh, &skel, &canonical, &skin, &canonical).unwrap();
            for (a, b) in posed.vertices().iter().zip(mesh.vertices()) {
                assert!((a - b).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn rows_are_on_the_simplex() {
        let (mesh, skel, _, skin) = setup(1);
        let pose = Pose {
            alpha: [0.0, 1.0, 0.0],
            t: [0.0; 3],
            rho: vec![1.0, 0.5, -0.5],
        };
        let w = query_field(&skin, mesh.vertices(), &pose, &skel.up()).unwrap();
        for r in w.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12 && r.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn joint_count_mismatch_is_an_error() {
        let (mesh, skel, canonical, _) = setup(0);
        let other = SkinNet::new(&NetConfig::default(), 3, 6 + skel.dof(), true, 0);
        assert!(pose_mesh(&mesh, &skel, &canonical, &other, &canonical).is_err());
    }
}
