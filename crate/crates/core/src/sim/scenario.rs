//! Machine shapes and the object layouts of the built-in scenarios.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::path::{CameraPath, PathSegment, SITE_SPEED};
use super::shapes::Cuboid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Background only, rectangle loop.
    Static,
    /// Moving and parked machines around the rig.
    Mixed,
    /// One large parked truck beside the route.
    Parked,
    /// Several moving machines close to the rig.
    Crowded,
    /// A machine with a long boom sweeping close in front of the rig.
    LargeOcclusion,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Static,
        Scenario::Mixed,
        Scenario::Parked,
        Scenario::Crowded,
        Scenario::LargeOcclusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Mixed => "mixed",
            Scenario::Parked => "parked",
            Scenario::Crowded => "crowded",
            Scenario::LargeOcclusion => "large_occlusion",
        }
    }

    pub fn default_frames(&self) -> usize {
        match self {
            Scenario::Static => 120,
            _ => 72,
        }
    }

    pub fn default_path(&self) -> CameraPath {
        match self {
            Scenario::Static => CameraPath::default(),
            _ => CameraPath::arc(90.0),
        }
    }

    pub(crate) fn objects(&self) -> Vec<ObjectSpec> {
        use MachineKind::*;
        let still = || vec![PathSegment::new(f64::INFINITY, 0.0, 0.0)];
        let v = SITE_SPEED;
        match self {
            Scenario::Static => vec![],
            Scenario::Parked => vec![ObjectSpec::new(1, DumpTruck, (0.0, 20.0, 5.5, 0.0), still())],
            Scenario::Mixed => vec![
                ObjectSpec::new(1, Roller, (0.0, 9.0, -5.0, 0.4), still()),
                ObjectSpec::new(
                    2,
                    Roller,
                    (0.0, 12.0, 6.5, -1.2),
                    vec![
                        PathSegment::new(4.0, 0.8 * v, 0.0),
                        PathSegment::new(2.0, 0.0, 0.0),
                        PathSegment::new(5.0, -0.8 * v, 0.0),
                        PathSegment::new(f64::INFINITY, 0.9 * v, 0.05),
                    ],
                ),
                ObjectSpec::new(3, DumpTruck, (0.0, 12.0, 3.5, 0.0), vec![PathSegment::new(f64::INFINITY, v, 1.0 / 90.0 * v)]),
                ObjectSpec::new(4, Excavator, (5.0, 13.0, -7.0, 2.2), still()),
                ObjectSpec::new(
                    5,
                    Loader,
                    (6.0, 11.0, -6.0, 1.6),
                    vec![
                        PathSegment::new(3.0, 0.0, 0.0),
                        PathSegment::new(f64::INFINITY, 0.9 * v, 0.0),
                    ],
                ),
            ],
            Scenario::Crowded => vec![
                ObjectSpec::new(1, DumpTruck, (0.0, 9.0, 0.5, 0.0), vec![PathSegment::new(f64::INFINITY, v, v / 90.0)]),
                ObjectSpec::new(2, Roller, (0.0, 10.0, -4.5, std::f64::consts::PI), vec![PathSegment::new(f64::INFINITY, 0.7 * v, 0.0)]),
                ObjectSpec::new(3, Loader, (0.0, 9.0, 5.5, -0.3), vec![PathSegment::new(f64::INFINITY, 0.8 * v, 0.02)]),
            ],
            Scenario::LargeOcclusion => vec![
                ObjectSpec::new(
                    1,
                    Excavator,
                    (0.0, 13.0, -3.5, 1.0),
                    vec![
                        PathSegment::new(2.0, 0.0, 0.4),
                        PathSegment::new(4.0, 0.0, -0.4),
                        PathSegment::new(4.0, 0.0, 0.4),
                        PathSegment::new(f64::INFINITY, 0.0, -0.4),
                    ],
                ),
                ObjectSpec::new(2, DumpTruck, (4.0, 18.0, 7.0, -0.8), vec![PathSegment::new(f64::INFINITY, 0.8 * v, 0.0)]),
            ],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Site machine templates. Body frame: x forward, y left, z up, origin on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineKind {
    Roller,
    DumpTruck,
    Excavator,
    Loader,
}

impl MachineKind {
    pub fn label(&self) -> &'static str {
        match self {
            MachineKind::Roller => "roller",
            MachineKind::DumpTruck => "dump_truck",
            MachineKind::Excavator => "excavator",
            MachineKind::Loader => "loader",
        }
    }

    pub fn parts(&self) -> Vec<Cuboid> {
        match self {
            MachineKind::Roller => vec![
                Cuboid::new([1.9, 0.0, 0.8], [0.75, 1.1, 0.8]),
                Cuboid::new([-0.9, 0.0, 1.0], [1.7, 1.0, 1.0]),
                Cuboid::new([-1.0, 0.0, 2.5], [0.8, 0.9, 0.5]),
            ],
            MachineKind::DumpTruck => vec![
                Cuboid::new([3.3, 0.0, 1.9], [1.0, 1.45, 1.3]),
                Cuboid::new([-0.9, 0.0, 0.8], [3.3, 1.4, 0.8]),
                Cuboid::new([-1.1, 0.0, 2.6], [3.0, 1.6, 1.0]),
            ],
            MachineKind::Excavator => vec![
                Cuboid::new([0.0, 0.0, 0.5], [2.3, 1.6, 0.5]),
                Cuboid::new([-0.6, 0.0, 1.9], [1.7, 1.4, 0.9]),
                Cuboid::new([3.4, 0.6, 3.6], [2.6, 0.3, 0.3]),
                Cuboid::new([6.3, 0.6, 2.2], [0.3, 0.3, 1.7]),
                Cuboid::new([6.3, 0.6, 0.45], [0.5, 0.6, 0.45]),
            ],
            MachineKind::Loader => vec![
                Cuboid::new([-0.8, 0.0, 1.2], [1.8, 1.2, 1.2]),
                Cuboid::new([0.2, 0.0, 2.9], [0.8, 0.9, 0.6]),
                Cuboid::new([2.7, 0.0, 0.6], [0.5, 1.4, 0.6]),
            ],
        }
    }
}

/// Object layout relative to the rig: `(time, forward, left, turn)` places the
/// object `forward`/`left` meters from the rig pose at `time` seconds, turned
/// by `turn` radians, after which it follows `motion`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ObjectSpec {
    pub id: u32,
    pub kind: MachineKind,
    pub placement: (f64, f64, f64, f64),
    pub motion: Vec<PathSegment>,
}

impl ObjectSpec {
    fn new(id: u32, kind: MachineKind, placement: (f64, f64, f64, f64), motion: Vec<PathSegment>) -> Self {
        Self {
            id,
            kind,
            placement,
            motion,
        }
    }
}
