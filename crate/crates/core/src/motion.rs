//! Object motion-state classification.
//!
//! Detected objects are associated between a reference frame and the current
//! frame by descriptor matching. Matched points are triangulated in both
//! frames and moved into world coordinates with each frame's pose; an object
//! whose points stay put (within `3 * sigma_bkg`) is static.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FrameObservation;
use crate::geometry::Pose;
use crate::Scalar;

/// Shared descriptor matches required before two detections count as the same object.
pub const MIN_ASSOCIATION_MATCHES: usize = 8;
/// Points required after median filtering before a verdict is attempted.
pub const MIN_POINTS_FOR_CLASSIFICATION: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("frame history is empty")]
    EmptyHistory,
    #[error("invalid classifier parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams<T: Scalar> {
    /// Standard deviation of static-background 3D position error, meters.
    pub sigma_bkg: T,
    /// Fraction of kept points that must lie within `3 * sigma_bkg` for a static verdict.
    pub inlier_fraction: T,
    /// Reference frame lag in frames.
    pub ref_lag_n: usize,
}

impl<T: Scalar> ClassifierParams<T> {
    pub fn new(sigma_bkg: T, inlier_fraction: T, ref_lag_n: usize) -> Result<Self, MotionError> {
        if !(sigma_bkg > T::zero()) {
            return Err(MotionError::InvalidParams("sigma_bkg must be positive".into()));
        }
        if !(inlier_fraction > T::zero() && inlier_fraction < T::one()) {
            return Err(MotionError::InvalidParams("inlier_fraction must lie in (0, 1)".into()));
        }
        if ref_lag_n == 0 {
            return Err(MotionError::InvalidParams("ref_lag_n must be at least 1".into()));
        }
        Ok(Self {
            sigma_bkg,
            inlier_fraction,
            ref_lag_n,
        })
    }
}

impl<T: Scalar> Default for ClassifierParams<T> {
    fn default() -> Self {
        Self {
            sigma_bkg: T::lit(0.12),
            inlier_fraction: T::lit(0.7),
            ref_lag_n: 2,
        }
    }
}

/// Reference lag for slow machinery: a third of the frame rate, rounded, at least 1.
pub fn ref_lag_for_fps(fps: f64) -> usize {
    ((fps / 3.0).round() as usize).max(1)
}

/// Admissible reference lags for machinery moving around 4 km/h: `FPS/3 ..= FPS/2`.
pub fn ref_lag_range_for_fps(fps: f64) -> std::ops::RangeInclusive<usize> {
    let lo = ((fps / 3.0).ceil() as usize).max(1);
    let hi = ((fps / 2.0).floor() as usize).max(lo);
    lo..=hi
}

/// The frame `n` positions before the newest entry of `history`, or the
/// oldest one when the history is shorter.
pub fn select_reference_frame<F>(history: &[F], n: usize) -> Result<&F, MotionError> {
    let newest = history.len().checked_sub(1).ok_or(MotionError::EmptyHistory)?;
    Ok(&history[newest.saturating_sub(n)])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectAssociation {
    pub ref_object_id: u32,
    pub cur_object_id: u32,
    /// `(reference feature index, current feature index)` pairs.
    pub matched_feature_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionLabel {
    Static,
    Dynamic,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState<T: Scalar> {
    pub label: MotionLabel,
    /// Fraction of kept points within `3 * sigma_bkg`; zero for `Unknown`.
    pub score: T,
}

impl<T: Scalar> MotionState<T> {
    pub fn unknown() -> Self {
        Self {
            label: MotionLabel::Unknown,
            score: T::zero(),
        }
    }
}

/// Indices of features that fall in at least one detection box, each with
/// the ids of the boxes containing it.
fn boxed_features<T: Scalar>(frame: &FrameObservation<T>) -> Vec<(usize, Vec<u32>)> {
    frame
        .features
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let ids: Vec<u32> = frame
                .detections
                .iter()
                .filter(|d| f.in_box(d))
                .map(|d| d.object_id)
                .collect();
            (!ids.is_empty()).then_some((i, ids))
        })
        .collect()
}

/// Associates detections of `reference` with detections of `current`.
///
/// Features inside boxes are matched by Hamming distance (at most
/// `max_distance` bits) with a mutual-best check. Object pairs are then
/// accepted greedily by descending shared-match count, ties broken by
/// ascending `(ref_id, cur_id)`, each object used at most once.
pub fn associate_objects<T: Scalar>(
    reference: &FrameObservation<T>,
    current: &FrameObservation<T>,
    max_distance: u32,
) -> Vec<ObjectAssociation> {
    let ref_boxed = boxed_features(reference);
    let cur_boxed = boxed_features(current);
    if ref_boxed.is_empty() || cur_boxed.is_empty() {
        return Vec::new();
    }

    let best_of = |dists: &mut dyn Iterator<Item = (usize, u32)>| {
        dists.fold(None::<(usize, u32)>, |best, (j, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((j, d)),
        })
    };
    let ref_best: Vec<Option<(usize, u32)>> = ref_boxed
        .iter()
        .map(|(i, _)| {
            let di = &reference.features[*i].descriptor;
            best_of(
                &mut cur_boxed
                    .iter()
                    .enumerate()
                    .map(|(k, (j, _))| (k, di.hamming(&current.features[*j].descriptor))),
            )
        })
        .collect();
    let cur_best: Vec<Option<(usize, u32)>> = cur_boxed
        .iter()
        .map(|(j, _)| {
            let dj = &current.features[*j].descriptor;
            best_of(
                &mut ref_boxed
                    .iter()
                    .enumerate()
                    .map(|(k, (i, _))| (k, dj.hamming(&reference.features[*i].descriptor))),
            )
        })
        .collect();

    let mut pairs: BTreeMap<(u32, u32), Vec<(usize, usize)>> = BTreeMap::new();
    for (rk, best) in ref_best.iter().enumerate() {
        let Some((ck, dist)) = *best else { continue };
        if dist > max_distance || cur_best[ck].map(|b| b.0) != Some(rk) {
            continue;
        }
        let (ri, ref_ids) = &ref_boxed[rk];
        let (ci, cur_ids) = &cur_boxed[ck];
        for &r in ref_ids {
            for &c in cur_ids {
                pairs.entry((r, c)).or_default().push((*ri, *ci));
            }
        }
    }

    let mut candidates: Vec<((u32, u32), Vec<(usize, usize)>)> = pairs
        .into_iter()
        .filter(|(_, m)| m.len() >= MIN_ASSOCIATION_MATCHES)
        .collect();
    candidates.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut used_ref = Vec::new();
    let mut used_cur = Vec::new();
    let mut out = Vec::new();
    for ((r, c), matched) in candidates {
        if used_ref.contains(&r) || used_cur.contains(&c) {
            continue;
        }
        used_ref.push(r);
        used_cur.push(c);
        out.push(ObjectAssociation {
            ref_object_id: r,
            cur_object_id: c,
            matched_feature_pairs: matched,
        });
    }
    out
}

/// World-frame distances between each matched point triangulated in the
/// reference frame and in the current frame. Poses are camera-to-world.
/// Pairs without a usable stereo observation in both frames are dropped.
pub fn object_point_errors<T: Scalar>(
    assoc: &ObjectAssociation,
    reference: &FrameObservation<T>,
    current: &FrameObservation<T>,
    ref_pose: &Pose<T>,
    cur_pose: &Pose<T>,
) -> Vec<T> {
    assoc
        .matched_feature_pairs
        .iter()
        .filter_map(|&(ri, ci)| {
            let rs = reference.features.get(ri)?.pixel.stereo()?;
            let cs = current.features.get(ci)?.pixel.stereo()?;
            let rp = reference.intrinsics.triangulate_stereo(rs).ok()?;
            let cp = current.intrinsics.triangulate_stereo(cs).ok()?;
            Some((ref_pose.transform_point(&rp) - cur_pose.transform_point(&cp)).norm())
        })
        .collect()
}

fn median<T: Scalar>(sorted: &[T]) -> T {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) * T::lit(0.5)
    }
}

/// Static/dynamic verdict from per-point position errors.
///
/// Points at or above the median error are dropped as match outliers. If
/// that leaves nothing (all errors tied at the low end) the full list is used.
/// The object is static when more than `inlier_fraction` of the kept points
/// lie strictly below `3 * sigma_bkg`.
pub fn classify<T: Scalar>(errors: &[T], params: &ClassifierParams<T>) -> MotionState<T> {
    let mut sorted: Vec<T> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    if sorted.is_empty() {
        return MotionState::unknown();
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let med = median(&sorted);
    let below = sorted.partition_point(|e| *e < med);
    let kept = if below == 0 { &sorted[..] } else { &sorted[..below] };
    if kept.len() < MIN_POINTS_FOR_CLASSIFICATION {
        return MotionState::unknown();
    }
    let bound = T::lit(3.0) * params.sigma_bkg;
    let within = kept.partition_point(|e| *e < bound);
    let score = T::lit(within as f64) / T::lit(kept.len() as f64);
    let label = if score > params.inlier_fraction {
        MotionLabel::Static
    } else {
        MotionLabel::Dynamic
    };
    MotionState { label, score }
}

/// Per-object classification outcome for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectVerdict<T: Scalar> {
    pub state: MotionState<T>,
    /// Reference-frame object the current object was associated with.
    pub ref_object_id: Option<u32>,
    /// Position errors the verdict was computed from.
    pub errors: Vec<T>,
}

/// Associates, measures and classifies every detection of `current` against
/// `reference`. Unassociated detections map to `Unknown`.
pub fn classify_frame_objects<T: Scalar>(
    reference: &FrameObservation<T>,
    current: &FrameObservation<T>,
    ref_pose: &Pose<T>,
    cur_pose: &Pose<T>,
    params: &ClassifierParams<T>,
    max_descriptor_distance: u32,
) -> BTreeMap<u32, ObjectVerdict<T>> {
    let mut out: BTreeMap<u32, ObjectVerdict<T>> = current
        .detections
        .iter()
        .map(|d| {
            (
                d.object_id,
                ObjectVerdict {
                    state: MotionState::unknown(),
                    ref_object_id: None,
                    errors: Vec::new(),
                },
            )
        })
        .collect();
    for assoc in associate_objects(reference, current, max_descriptor_distance) {
        let errors = object_point_errors(&assoc, reference, current, ref_pose, cur_pose);
        let state = classify(&errors, params);
        out.insert(
            assoc.cur_object_id,
            ObjectVerdict {
                state,
                ref_object_id: Some(assoc.ref_object_id),
                errors,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{Descriptor, FeaturePixel, StereoFeature};
    use crate::geometry::CameraIntrinsics;
    use crate::masking::{BoundingBox, ObjectDetection};
    use nalgebra::{Point3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ClassifierParams<f64> {
        ClassifierParams::default()
    }

    #[test]
    fn reference_frame_selection() {
        let history: Vec<usize> = (0..10).collect();
        assert_eq!(*select_reference_frame(&history, 3).unwrap(), 6);
        assert_eq!(*select_reference_frame(&history[..2], 5).unwrap(), 0);
        assert_eq!(select_reference_frame::<usize>(&[], 1), Err(MotionError::EmptyHistory));
    }

    #[test]
    fn lag_rule_at_six_fps() {
        assert_eq!(ref_lag_range_for_fps(6.0), 2..=3);
        assert_eq!(ref_lag_for_fps(6.0), 2);
        assert_eq!(ref_lag_for_fps(10.0), 3);
        assert_eq!(ref_lag_for_fps(1.0), 1);
    }

    #[test]
    fn params_validation() {
        assert!(ClassifierParams::new(0.0, 0.7, 2).is_err());
        assert!(ClassifierParams::new(0.1, 1.0, 2).is_err());
        assert!(ClassifierParams::new(0.1, 0.7, 0).is_err());
        let d = ClassifierParams::<f64>::default();
        assert_eq!((d.sigma_bkg, d.inlier_fraction), (0.12, 0.7));
    }

    #[test]
    fn classify_examples() {
        let s = classify(&[0.0; 12], &params());
        assert_eq!(s.label, MotionLabel::Static);
        assert_eq!(s.score, 1.0);

        let d = classify(&[1.0; 12], &params());
        assert_eq!(d.label, MotionLabel::Dynamic);
        assert_eq!(d.score, 0.0);

        // Hand evaluation: sorted list has 15 x 0.01 then 5 x 10.0, so the median
        // (mean of the 10th and 11th values) is 0.01 and nothing is strictly below
        // it. The full list is used: 15 / 20 = 0.75 > 0.7 within 0.36 m.
        let mut errors = vec![0.01; 15];
        errors.extend([10.0; 5]);
        let m = classify(&errors, &params());
        assert_eq!(m.label, MotionLabel::Static);
        assert_eq!(m.score, 0.75);
    }

    #[test]
    fn median_filter_drops_outlier_tail() {
        // 12 distinct small errors and 8 huge: median sits in the small group and
        // every kept point is within bounds.
        let mut errors: Vec<f64> = (0..12).map(|i| 0.01 * i as f64).collect();
        errors.extend([5.0; 8]);
        let m = classify(&errors, &params());
        assert_eq!(m.label, MotionLabel::Static);
        assert_eq!(m.score, 1.0);
    }

    #[test]
    fn too_few_points_is_unknown() {
        assert_eq!(classify::<f64>(&[], &params()).label, MotionLabel::Unknown);
        // 11 distinct values keep 5 < 6 after filtering.
        let e: Vec<f64> = (0..11).map(|i| i as f64 * 0.001).collect();
        assert_eq!(classify(&e, &params()).label, MotionLabel::Unknown);
        let e: Vec<f64> = (0..12).map(|i| i as f64 * 0.001).collect();
        assert_eq!(classify(&e, &params()).label, MotionLabel::Static);
    }

    proptest! {
        #[test]
        fn larger_sigma_never_turns_static_into_dynamic(
            errors in prop::collection::vec(0.0..2.0f64, 0..60),
            s1 in 0.001..0.6f64,
            ds in 0.0..0.6f64,
        ) {
            let a = classify(&errors, &ClassifierParams::new(s1, 0.7, 2).unwrap());
            let b = classify(&errors, &ClassifierParams::new(s1 + ds, 0.7, 2).unwrap());
            prop_assert!(b.score >= a.score);
            if a.label == MotionLabel::Static {
                prop_assert_eq!(b.label, MotionLabel::Static);
            }
        }
    }

    fn cam() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(500.0, 500.0, 480.0, 270.0, 1.0, 960, 540).unwrap()
    }

    /// Frame observing `points` (world) from a camera at `pose` (camera-to-world),
    /// with one detection per labelled group.
    fn frame(
        pose: &Pose<f64>,
        points: &[(Point3<f64>, Descriptor, Option<u32>)],
        timestamp: f64,
    ) -> FrameObservation<f64> {
        let k = cam();
        let w2c = pose.inverse();
        let mut features = Vec::new();
        let mut extents: BTreeMap<u32, [f64; 4]> = BTreeMap::new();
        for (p, d, obj) in points {
            let pc = w2c.transform_point(p);
            let Ok(px) = k.project_stereo(&pc) else { continue };
            if !k.in_image(px.u_l, px.v_l) {
                continue;
            }
            if let Some(id) = obj {
                let e = extents.entry(*id).or_insert([f64::MAX, f64::MAX, f64::MIN, f64::MIN]);
                e[0] = e[0].min(px.u_l);
                e[1] = e[1].min(px.v_l);
                e[2] = e[2].max(px.u_l);
                e[3] = e[3].max(px.v_l);
            }
            features.push(StereoFeature {
                pixel: FeaturePixel::Stereo(px),
                descriptor: *d,
                scale_level: 0,
                landmark_hint: None,
            });
        }
        let detections = extents
            .into_iter()
            .map(|(id, e)| {
                let b = BoundingBox::from_extent(e[0] - 2.0, e[1] - 2.0, e[2] + 2.0, e[3] + 2.0, 960, 540)
                    .unwrap();
                ObjectDetection::new(id, "machine", true, b, None).unwrap()
            })
            .collect();
        FrameObservation {
            timestamp,
            features,
            detections,
            intrinsics: k,
        }
    }

    fn random_descriptor(rng: &mut impl Rng) -> Descriptor {
        Descriptor([rng.random(), rng.random(), rng.random(), rng.random()])
    }

    fn object_points(
        rng: &mut impl Rng,
        center: Vector3<f64>,
        id: u32,
        n: usize,
    ) -> Vec<(Point3<f64>, Descriptor, Option<u32>)> {
        (0..n)
            .map(|_| {
                let p = center
                    + Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-0.5..0.5),
                    );
                (Point3::from(p), random_descriptor(rng), Some(id))
            })
            .collect()
    }

    #[test]
    fn same_frame_associates_every_object_with_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = object_points(&mut rng, Vector3::new(-3.0, 0.0, 12.0), 1, 40);
        pts.extend(object_points(&mut rng, Vector3::new(3.0, 0.0, 12.0), 2, 30));
        let f = frame(&Pose::identity(), &pts, 0.0);
        let assoc = associate_objects(&f, &f, 50);
        assert_eq!(assoc.len(), 2);
        for a in &assoc {
            assert_eq!(a.ref_object_id, a.cur_object_id);
            let n = f.features.iter().filter(|x| x.in_box(f.detection(a.cur_object_id).unwrap())).count();
            assert_eq!(a.matched_feature_pairs.len(), n);
            assert!(a.matched_feature_pairs.iter().all(|(r, c)| r == c));
        }
    }

    #[test]
    fn unrelated_objects_do_not_associate() {
        // Oracle: fresh random descriptors share ~128 bits; with a 50-bit
        // threshold no pair should match.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = frame(&Pose::identity(), &object_points(&mut rng, Vector3::new(0.0, 0.0, 10.0), 1, 60), 0.0);
        let b = frame(&Pose::identity(), &object_points(&mut rng, Vector3::new(0.0, 0.0, 10.0), 7, 60), 1.0);
        assert!(associate_objects(&a, &b, 50).is_empty());
    }

    #[test]
    fn rigid_translation_gives_constant_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = object_points(&mut rng, Vector3::new(0.0, 0.0, 10.0), 1, 40);
        let moved: Vec<_> = pts
            .iter()
            .map(|(p, d, id)| (p + Vector3::new(1.0, 0.0, 0.0), *d, *id))
            .collect();
        let cam_ref = Pose::identity();
        let cam_cur = Pose::from_translation(Vector3::new(0.2, 0.0, 0.5));
        let rf = frame(&cam_ref, &pts, 0.0);
        let cf = frame(&cam_cur, &moved, 0.5);
        let assoc = associate_objects(&rf, &cf, 50);
        assert_eq!(assoc.len(), 1);
        let errors = object_point_errors(&assoc[0], &rf, &cf, &cam_ref, &cam_cur);
        assert!(!errors.is_empty());
        for e in &errors {
            assert!((e - 1.0).abs() < 1e-9, "{e}");
        }
        let verdicts = classify_frame_objects(&rf, &cf, &cam_ref, &cam_cur, &params(), 50);
        assert_eq!(verdicts[&1].state.label, MotionLabel::Dynamic);

        let still = frame(&cam_cur, &pts, 0.5);
        let assoc = associate_objects(&rf, &still, 50);
        let errors = object_point_errors(&assoc[0], &rf, &still, &cam_ref, &cam_cur);
        assert!(errors.iter().all(|e| *e < 1e-9));
    }

    #[test]
    fn moving_and_parked_machines() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let moving = object_points(&mut rng, Vector3::new(-3.0, 0.0, 12.0), 1, 50);
        let parked = object_points(&mut rng, Vector3::new(3.5, 0.0, 11.0), 2, 50);
        let shift = Vector3::new(0.0, 0.0, 0.6);
        let mut before = moving.clone();
        before.extend(parked.iter().cloned());
        let mut after: Vec<_> = moving.iter().map(|(p, d, id)| (p + shift, *d, *id)).collect();
        after.extend(parked.iter().cloned());
        let cam_cur = Pose::from_translation(Vector3::new(0.0, 0.0, 0.55));
        let rf = frame(&Pose::identity(), &before, 0.0);
        let cf = frame(&cam_cur, &after, 0.5);
        let v = classify_frame_objects(&rf, &cf, &Pose::identity(), &cam_cur, &params(), 50);
        assert_eq!(v[&1].state.label, MotionLabel::Dynamic);
        assert_eq!(v[&2].state.label, MotionLabel::Static);
    }

    #[test]
    fn empty_and_unmatched_cases() {
        let k = cam();
        let empty = FrameObservation::<f64> {
            timestamp: 0.0,
            features: vec![],
            detections: vec![],
            intrinsics: k,
        };
        assert!(classify_frame_objects(&empty, &empty, &Pose::identity(), &Pose::identity(), &params(), 50)
            .is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cur = frame(&Pose::identity(), &object_points(&mut rng, Vector3::new(0.0, 0.0, 9.0), 3, 30), 1.0);
        let v = classify_frame_objects(&empty, &cur, &Pose::identity(), &Pose::identity(), &params(), 50);
        assert_eq!(v.len(), 1);
        assert_eq!(v[&3].state.label, MotionLabel::Unknown);
    }

    #[test]
    fn classification_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = object_points(&mut rng, Vector3::new(0.0, 0.0, 10.0), 1, 40);
        let rf = frame(&Pose::identity(), &pts, 0.0);
        let a = classify_frame_objects(&rf, &rf, &Pose::identity(), &Pose::identity(), &params(), 50);
        let b = classify_frame_objects(&rf, &rf, &Pose::identity(), &Pose::identity(), &params(), 50);
        assert_eq!(a, b);
    }
}
