//! Deterministic synthetic stereo sequences of a construction site.
//!
//! A world holds static background landmarks on the ground and on earthworks,
//! plus rigid machines built from cuboids. Each frame projects every visible
//! landmark through the stereo camera with pixel noise, hides landmarks behind
//! nearer machine parts, and emits one detection per visible machine.

mod calibrate;
mod occlusion;
mod path;
mod scenario;
mod shapes;

pub use calibrate::calibrate_sigma_bkg;
pub use occlusion::{inject_fixed_occlusion, occlusion_box, OCCLUSION_OBJECT_ID};
pub use path::{follow, CameraPath, PathSegment, PlanarPose, SITE_SPEED};
pub use scenario::{MachineKind, Scenario};
pub use shapes::{convex_hull, dilate_spans, rasterize_convex, Cuboid, NEAR_PLANE};

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetMeta, GroundTruthFrame, SimulatedDataset, FORMAT_VERSION};
use crate::frame::{Descriptor, FeaturePixel, FrameObservation, StereoFeature, MAX_SCALE_LEVEL};
use crate::geometry::{CameraIntrinsics, PixelMono, PixelStereo, Pose};
use crate::masking::{BoundingBox, ObjectDetection, PixelRegion};
use crate::motion::MotionLabel;
use crate::tracking::SCALE_FACTOR;

/// Height of the camera above the ground, meters.
pub const CAMERA_HEIGHT: f64 = 2.0;
/// Downward tilt of the optical axis, radians.
pub const CAMERA_PITCH: f64 = 0.08;
/// Landmarks farther than this along the optical axis yield no feature.
pub const MAX_FEATURE_DEPTH: f64 = 45.0;
/// Features with a smaller disparity are reported as left-image only.
pub const MIN_STEREO_DISPARITY: f64 = 1.0;
/// Ground landmarks per square meter.
const GROUND_DENSITY: f64 = 0.25;
/// Landmarks per square meter on earthworks and machine surfaces.
const STRUCTURE_DENSITY: f64 = 1.0;
const MACHINE_DENSITY: f64 = 8.0;
/// Ground area per earthwork, square meters.
const AREA_PER_STRUCTURE: f64 = 350.0;
/// Detections smaller than this many pixels are not reported.
const MIN_DETECTION_AREA: u64 = 150;
/// Silhouette dilation radius of pixel regions.
const REGION_DILATION_PX: u32 = 3;
/// Fraction of the in-image silhouette extent added around each box.
const BOX_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    /// Pixel noise standard deviation at pyramid level 0.
    pub pixel_noise_sigma: f64,
    pub descriptor_flip_bits: u32,
    pub camera_path: CameraPath,
    pub intrinsics: CameraIntrinsics<f64>,
    /// Area ratio of a fixed centered occlusion added to every frame.
    pub target_occlusion: Option<f64>,
    pub scenario: Scenario,
}

impl SimConfig {
    /// Defaults of a scenario: 960x540 at 6 fps, 0.3 px noise.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            seed,
            frames: scenario.default_frames(),
            fps: 6.0,
            pixel_noise_sigma: 0.3,
            descriptor_flip_bits: 8,
            camera_path: scenario.default_path(),
            intrinsics: default_intrinsics(),
            target_occlusion: None,
            scenario,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.to_string()));
        if self.frames == 0 {
            return bad("frames must be positive");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return bad("pixel noise must be finite and non-negative");
        }
        if self.descriptor_flip_bits > 256 {
            return bad("descriptor flips exceed 256 bits");
        }
        if let Some(r) = self.target_occlusion {
            if !(0.0..1.0).contains(&r) {
                return bad("target occlusion must lie in [0, 1)");
            }
        }
        self.intrinsics
            .validate()
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        self.camera_path.validate().map_err(SimError::ConfigInvalid)
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }

    /// Ground-truth camera-to-world pose of every frame.
    pub fn camera_poses(&self) -> Vec<Pose<f64>> {
        let mount = camera_mount();
        (0..self.frames)
            .map(|i| {
                self.camera_path
                    .planar_pose_at(PlanarPose::default(), self.timestamp(i))
                    .to_pose(0.0)
                    .compose(&mount)
            })
            .collect()
    }
}

/// 960x540 with a 1 m baseline and 500 px focal length.
pub fn default_intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).expect("valid constants")
}

/// Camera-to-vehicle transform: optical axis forward, image x to the right,
/// image y down, tilted down by [`CAMERA_PITCH`].
pub fn camera_mount() -> Pose<f64> {
    let level = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let tilt = Pose::from_axis_angle(&Vector3::x(), -CAMERA_PITCH).rotation;
    Pose::from_parts_unchecked(level * tilt, Vector3::new(0.0, 0.0, CAMERA_HEIGHT))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Point3<f64>,
    pub descriptor: Descriptor,
}

/// Landmark fixed to a machine part, in the machine's body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyLandmark {
    pub id: u64,
    pub position: Point3<f64>,
    /// Outward normal of the face carrying the landmark.
    pub normal: Vector3<f64>,
    pub part: usize,
    pub descriptor: Descriptor,
}

/// Body-to-world pose of an object at every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub poses: Vec<Pose<f64>>,
    /// Whether the object is moving at each frame.
    pub moving: Vec<bool>,
}

impl MotionScript {
    pub fn label(&self, frame: usize) -> MotionLabel {
        if self.moving[frame] {
            MotionLabel::Dynamic
        } else {
            MotionLabel::Static
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidObject {
    pub object_id: u32,
    pub class_label: String,
    pub a_priori_dynamic: bool,
    pub parts: Vec<Cuboid>,
    pub body_landmarks: Vec<BodyLandmark>,
    pub motion: MotionScript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub background_landmarks: Vec<Landmark>,
    pub objects: Vec<RigidObject>,
}

fn random_descriptor(rng: &mut impl Rng) -> Descriptor {
    Descriptor([rng.random(), rng.random(), rng.random(), rng.random()])
}

/// Builds the scenario world. Background landmarks cover the area within
/// [`MAX_FEATURE_DEPTH`] of the route; earthworks keep clear of the route.
pub fn build_world(cfg: &SimConfig) -> Result<WorldModel, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let route: Vec<PlanarPose> = (0..cfg.frames)
        .map(|i| cfg.camera_path.planar_pose_at(PlanarPose::default(), cfg.timestamp(i)))
        .collect();
    let margin = MAX_FEATURE_DEPTH + 5.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &route {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let (x0, x1, y0, y1) = (x0 - margin, x1 + margin, y0 - margin, y1 + margin);
    let area = (x1 - x0) * (y1 - y0);
    let clear_of_route = |x: f64, y: f64, clearance: f64| {
        route
            .iter()
            .step_by(3)
            .all(|p| (p.x - x).powi(2) + (p.y - y).powi(2) > clearance * clearance)
    };

    let mut next_id = 0u64;
    let mut background = Vec::new();
    let ground = (area * GROUND_DENSITY).round() as usize;
    for _ in 0..ground {
        let position = Point3::new(rng.random_range(x0..x1), rng.random_range(y0..y1), 0.0);
        background.push(Landmark {
            id: next_id,
            position,
            descriptor: random_descriptor(&mut rng),
        });
        next_id += 1;
    }
    let structures = (area / AREA_PER_STRUCTURE).round() as usize;
    for _ in 0..structures {
        let (cx, cy) = (rng.random_range(x0..x1), rng.random_range(y0..y1));
        let stockpile = rng.random_bool(0.5);
        let reach = if stockpile { 5.0 } else { 11.0 };
        if !clear_of_route(cx, cy, reach + 4.0) {
            continue;
        }
        let points: Vec<Point3<f64>> = if stockpile {
            let r = rng.random_range(2.0..5.0);
            let h = rng.random_range(1.5..4.0);
            let n = (std::f64::consts::PI * r * (r * r + h * h).sqrt() * STRUCTURE_DENSITY).round() as usize;
            (0..n)
                .map(|_| {
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let s: f64 = rng.random::<f64>().sqrt();
                    Point3::new(cx + r * s * theta.cos(), cy + r * s * theta.sin(), h * (1.0 - s))
                })
                .collect()
        } else {
            let berm = Cuboid::new(
                [0.0, 0.0, 1.0],
                [rng.random_range(4.0..10.0), rng.random_range(1.0..2.0), rng.random_range(0.6..1.3)],
            );
            let place = PlanarPose::new(cx, cy, rng.random_range(0.0..std::f64::consts::PI)).to_pose(0.0);
            berm.sample_surface(&mut rng, STRUCTURE_DENSITY)
                .into_iter()
                .map(|(p, _)| place.transform_point(&Point3::new(p.x, p.y, p.z - 1.0 + berm.half.z)))
                .collect()
        };
        for position in points {
            background.push(Landmark {
                id: next_id,
                position,
                descriptor: random_descriptor(&mut rng),
            });
            next_id += 1;
        }
    }

    let mut objects = Vec::new();
    for spec in cfg.scenario.objects() {
        let (t_ref, forward, left, turn) = spec.placement;
        let start = cfg
            .camera_path
            .planar_pose_at(PlanarPose::default(), t_ref)
            .offset(forward, left, turn);
        let (poses, moving) = (0..cfg.frames)
            .map(|i| {
                let (p, seg) = follow(start, &spec.motion, false, cfg.timestamp(i));
                (p.to_pose(0.0), seg.is_moving())
            })
            .unzip();
        let parts = spec.kind.parts();
        let mut body_landmarks = Vec::new();
        for (pi, part) in parts.iter().enumerate() {
            for (position, normal) in part.sample_surface(&mut rng, MACHINE_DENSITY) {
                body_landmarks.push(BodyLandmark {
                    id: next_id,
                    position,
                    normal,
                    part: pi,
                    descriptor: random_descriptor(&mut rng),
                });
                next_id += 1;
            }
        }
        objects.push(RigidObject {
            object_id: spec.id,
            class_label: spec.kind.label().to_string(),
            a_priori_dynamic: true,
            parts,
            body_landmarks,
            motion: MotionScript { poses, moving },
        });
    }
    Ok(WorldModel {
        background_landmarks: background,
        objects,
    })
}

/// Pyramid level with probability proportional to `1.2^-level`.
fn sample_scale_level(rng: &mut impl Rng) -> u8 {
    let weights: Vec<f64> = (0..=MAX_SCALE_LEVEL).map(|l| SCALE_FACTOR.powi(-(l as i32))).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (l, w) in weights.iter().enumerate() {
        if x < *w {
            return l as u8;
        }
        x -= w;
    }
    MAX_SCALE_LEVEL
}

/// Per-frame state of a machine: world pose, camera position in its body frame,
/// and world-to-body transform.
struct PlacedObject<'a> {
    object: &'a RigidObject,
    body_to_world: Pose<f64>,
    world_to_body: Pose<f64>,
    camera_in_body: Point3<f64>,
}

impl PlacedObject<'_> {
    /// Whether a part other than `skip_part` lies between the camera and `p_body`.
    fn hides(&self, p_body: &Point3<f64>, skip_part: Option<usize>) -> bool {
        self.object
            .parts
            .iter()
            .enumerate()
            .any(|(i, part)| Some(i) != skip_part && part.blocks_segment(&self.camera_in_body, p_body, 1.0 - 1e-9))
    }
}

struct Observer<'a> {
    k: &'a CameraIntrinsics<f64>,
    w2c: Pose<f64>,
    noise: f64,
    flips: u32,
}

impl Observer<'_> {
    /// Noisy feature for a world point, or `None` when out of view.
    fn observe(&self, rng: &mut impl Rng, p: &Point3<f64>, descriptor: Descriptor, id: u64) -> Option<StereoFeature<f64>> {
        let pc = self.w2c.transform_point(p);
        if pc.z <= NEAR_PLANE || pc.z > MAX_FEATURE_DEPTH {
            return None;
        }
        let truth = self.k.project_stereo(&pc).ok()?;
        if !self.k.in_image(truth.u_l, truth.v_l) {
            return None;
        }
        let level = sample_scale_level(rng);
        let sigma = self.noise * SCALE_FACTOR.powi(level as i32);
        let mut jitter = || {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
            } else {
                0.0
            }
        };
        let (u_l, v_l, u_r) = (truth.u_l + jitter(), truth.v_l + jitter(), truth.u_r + jitter());
        if !self.k.in_image(u_l, v_l) {
            return None;
        }
        let pixel = if u_r >= 0.0 && u_l - u_r >= MIN_STEREO_DISPARITY {
            FeaturePixel::Stereo(PixelStereo { u_l, v_l, u_r })
        } else {
            FeaturePixel::Mono(PixelMono { u_l, v_l })
        };
        let mut d = descriptor;
        for bit in sample(rng, 256, self.flips as usize) {
            d = d.with_flipped(bit);
        }
        Some(StereoFeature {
            pixel,
            descriptor: d,
            scale_level: level,
            landmark_hint: Some(id),
        })
    }

    fn in_frustum(&self, p: &Point3<f64>) -> bool {
        let pc = self.w2c.transform_point(p);
        pc.z > NEAR_PLANE
            && pc.z <= MAX_FEATURE_DEPTH
            && self
                .k
                .project_mono(&pc)
                .map(|px| self.k.in_image(px.u_l, px.v_l))
                .unwrap_or(false)
    }
}

/// Detection of a placed machine, or `None` when too little of it is in view.
fn detect(placed: &PlacedObject<'_>, w2c: &Pose<f64>, k: &CameraIntrinsics<f64>) -> Option<ObjectDetection> {
    let (w, h) = (k.width, k.height);
    let body_to_camera = w2c.compose(&placed.body_to_world);
    let hulls: Vec<Vec<(f64, f64)>> = placed
        .object
        .parts
        .iter()
        .map(|p| p.silhouette(&body_to_camera, k))
        .filter(|h| h.len() >= 3)
        .collect();
    let spans: Vec<(u32, u32, u32)> = hulls.iter().flat_map(|hull| rasterize_convex(hull, w, h)).collect();
    let silhouette = PixelRegion::from_spans(spans.iter().copied());
    if silhouette.area() < MIN_DETECTION_AREA {
        return None;
    }
    let runs = silhouette.runs();
    let (u0, u1) = runs.iter().fold((u32::MAX, 0), |(a, b), r| (a.min(r.start), b.max(r.start + r.len)));
    let (v0, v1) = (runs[0].row, runs[runs.len() - 1].row + 1);
    let (u0, v0, u1, v1) = (u0 as f64, v0 as f64, u1 as f64, v1 as f64);
    let (mu, mv) = (0.5 * BOX_MARGIN * (u1 - u0), 0.5 * BOX_MARGIN * (v1 - v0));
    let bbox = BoundingBox::from_extent(u0 - mu, v0 - mv, u1 + mu, v1 + mv, w, h)?;
    let region = PixelRegion::from_spans(dilate_spans(silhouette_spans(&silhouette).as_slice(), REGION_DILATION_PX, w, h))
        .clipped(&bbox);
    ObjectDetection::new(
        placed.object.object_id,
        placed.object.class_label.clone(),
        placed.object.a_priori_dynamic,
        bbox,
        Some(region),
    )
    .ok()
}

fn silhouette_spans(r: &PixelRegion) -> Vec<(u32, u32, u32)> {
    r.runs().iter().map(|run| (run.row, run.start, run.start + run.len)).collect()
}

/// Renders the world through the configured camera path.
///
/// Noise draws come from a generator seeded with `cfg.seed` on its own stream,
/// so the dataset depends on nothing but `world` and `cfg`.
pub fn simulate_sequence(world: &WorldModel, cfg: &SimConfig) -> Result<SimulatedDataset, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let k = cfg.intrinsics;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut groundtruth = Vec::with_capacity(cfg.frames);
    for (fi, cam) in cfg.camera_poses().iter().enumerate() {
        let w2c = cam.inverse();
        let camera_center = Point3::from(cam.translation);
        let placed: Vec<PlacedObject> = world
            .objects
            .iter()
            .map(|o| {
                let body_to_world = o.motion.poses[fi];
                let world_to_body = body_to_world.inverse();
                PlacedObject {
                    object: o,
                    body_to_world,
                    world_to_body,
                    camera_in_body: world_to_body.transform_point(&camera_center),
                }
            })
            .collect();
        let observer = Observer {
            k: &k,
            w2c,
            noise: cfg.pixel_noise_sigma,
            flips: cfg.descriptor_flip_bits,
        };
        let mut features = Vec::new();
        let mut occluded = Vec::new();

        for lm in &world.background_landmarks {
            if !observer.in_frustum(&lm.position) {
                continue;
            }
            if placed
                .iter()
                .any(|po| po.hides(&po.world_to_body.transform_point(&lm.position), None))
            {
                occluded.push(lm.id);
                continue;
            }
            if let Some(f) = observer.observe(&mut rng, &lm.position, lm.descriptor, lm.id) {
                features.push(f);
            }
        }
        for (oi, po) in placed.iter().enumerate() {
            for bl in &po.object.body_landmarks {
                let p = po.body_to_world.transform_point(&bl.position);
                if !observer.in_frustum(&p) {
                    continue;
                }
                if bl.normal.dot(&(po.camera_in_body - bl.position)) <= 0.0 {
                    continue;
                }
                let hidden = po.hides(&bl.position, Some(bl.part))
                    || placed
                        .iter()
                        .enumerate()
                        .any(|(oj, other)| oj != oi && other.hides(&other.world_to_body.transform_point(&p), None));
                if hidden {
                    occluded.push(bl.id);
                    continue;
                }
                if let Some(f) = observer.observe(&mut rng, &p, bl.descriptor, bl.id) {
                    features.push(f);
                }
            }
        }
        occluded.sort_unstable();

        let detections = placed.iter().filter_map(|po| detect(po, &w2c, &k)).collect();
        let timestamp = cfg.timestamp(fi);
        frames.push(FrameObservation {
            timestamp,
            features,
            detections,
            intrinsics: k,
        });
        let mut gt = GroundTruthFrame::from_pose(timestamp, cam);
        gt.objects = world
            .objects
            .iter()
            .map(|o| (o.object_id, o.motion.label(fi)))
            .collect::<BTreeMap<_, _>>();
        gt.occluded = occluded;
        groundtruth.push(gt);
    }
    let dataset = SimulatedDataset {
        meta: DatasetMeta {
            version: FORMAT_VERSION.to_string(),
            intrinsics: k,
            fps: cfg.fps,
            seed: cfg.seed,
            frames: cfg.frames,
            scenario: cfg.scenario.name().to_string(),
            pixel_noise_sigma: cfg.pixel_noise_sigma,
        },
        frames,
        groundtruth,
    };
    match cfg.target_occlusion {
        Some(r) if r > 0.0 => inject_fixed_occlusion(&dataset, r),
        _ => Ok(dataset),
    }
}

/// Builds the world and renders it.
pub fn simulate(cfg: &SimConfig) -> Result<SimulatedDataset, SimError> {
    let world = build_world(cfg)?;
    simulate_sequence(&world, cfg)
}
