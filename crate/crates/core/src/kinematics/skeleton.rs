use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> nalgebra::Unit<Vec3> {
        match self {
            Axis::X => Vec3::x_axis(),
            Axis::Y => Vec3::y_axis(),
            Axis::Z => Vec3::z_axis(),
        }
    }

    fn parse_rotation(s: &str) -> Result<Self> {
        match s {
            "rx" => Ok(Axis::X),
            "ry" => Ok(Axis::Y),
            "rz" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown rotation axis `{other}`"))),
        }
    }

    fn parse_up(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown up axis `{other}`"))),
        }
    }

    fn rotation_name(self) -> &'static str {
        match self {
            Axis::X => "rx",
            Axis::Y => "ry",
            Axis::Z => "rz",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Translation from the parent joint (or world origin for the root).
    pub offset: Vec3,
    /// Rotation axes contributing to the pose's joint angles, applied in order.
    pub axes: Vec<Axis>,
}

impl Joint {
    pub fn new(name: impl Into<String>, parent: Option<usize>, offset: Vec3, axes: Vec<Axis>) -> Self {
        Self {
            name: name.into(),
            parent,
            offset,
            axes,
        }
    }
}

/// Kinematic tree in topological order (parents precede children).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    dof_start: Vec<usize>,
    up: Axis,
}

#[derive(Serialize, Deserialize)]
struct JointFile {
    name: String,
    parent: i64,
    offset: [f64; 3],
    #[serde(default)]
    axes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    joints: Vec<JointFile>,
    #[serde(default = "default_up")]
    up_axis: String,
}

fn default_up() -> String {
    "y".into()
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>, up: Axis) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Config("skeleton has no joints".into()));
        }
        let roots = joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::Config(format!("skeleton must have exactly one root, found {roots}")));
        }
        for (j, joint) in joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                if p >= j {
                    return Err(Error::Config(format!(
                        "joint {j} (`{}`) has parent {p}; parents must precede children",
                        joint.name
                    )));
                }
            }
        }
        if joints[0].parent.is_some() {
            return Err(Error::Config("joint 0 must be the root".into()));
        }
        let mut dof_start = Vec::with_capacity(joints.len() + 1);
        let mut acc = 0;
        for j in &joints {
            dof_start.push(acc);
            acc += j.axes.len();
        }
        dof_start.push(acc);
        Ok(Self { joints, dof_start, up })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Total number of joint angles `D`.
    pub fn dof(&self) -> usize {
        *self.dof_start.last().unwrap()
    }

    pub fn dof_range(&self, j: usize) -> std::ops::Range<usize> {
        self.dof_start[j]..self.dof_start[j + 1]
    }

    pub fn up_axis(&self) -> Axis {
        self.up
    }

    pub fn up(&self) -> Vec3 {
        self.up.unit().into_inner()
    }

    pub fn children(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.parent == Some(j))
            .map(|(i, _)| i)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        let joints = file
            .joints
            .into_iter()
            .map(|j| {
                let parent = if j.parent < 0 { None } else { Some(j.parent as usize) };
                let axes = j.axes.iter().map(|a| Axis::parse_rotation(a)).collect::<Result<_>>()?;
                Ok(Joint::new(j.name, parent, Vec3::from(j.offset), axes))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(joints, Axis::parse_up(&file.up_axis)?)
    }

    pub fn to_json(&self) -> String {
        let file = SkeletonFile {
            joints: self
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    parent: j.parent.map_or(-1, |p| p as i64),
                    offset: [j.offset.x, j.offset.y, j.offset.z],
                    axes: j.axes.iter().map(|a| a.rotation_name().to_string()).collect(),
                })
                .collect(),
            up_axis: self.up.name().into(),
        };
        serde_json::to_string_pretty(&file).expect("skeleton serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
