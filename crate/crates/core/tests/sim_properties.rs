use std::collections::{BTreeSet, HashMap};

use dynamask::dataset::export_dataset;
use dynamask::motion::{associate_objects, classify, object_point_errors, ClassifierParams, MotionLabel};
use dynamask::sim::{build_world, simulate, simulate_sequence, Scenario, SimConfig, WorldModel};
use nalgebra::Point3;

fn short(scenario: Scenario, seed: u64, frames: usize) -> SimConfig {
    SimConfig {
        frames,
        ..SimConfig::new(scenario, seed)
    }
}

/// World position of every landmark at frame `fi`.
fn positions_at(world: &WorldModel, fi: usize) -> HashMap<u64, Point3<f64>> {
    let mut out: HashMap<u64, Point3<f64>> =
        world.background_landmarks.iter().map(|l| (l.id, l.position)).collect();
    for o in &world.objects {
        let pose = o.motion.poses[fi];
        for bl in &o.body_landmarks {
            out.insert(bl.id, pose.transform_point(&bl.position));
        }
    }
    out
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn identical_configs_give_byte_identical_files() {
    for scenario in Scenario::ALL {
        let cfg = short(scenario, 11, 8);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        export_dataset(&simulate(&cfg).unwrap(), a.path()).unwrap();
        export_dataset(&simulate(&cfg).unwrap(), b.path()).unwrap();
        assert_eq!(files(a.path()), files(b.path()), "{scenario}");
    }
}

#[test]
fn different_seeds_differ() {
    let a = simulate(&short(Scenario::Mixed, 1, 3)).unwrap();
    let b = simulate(&short(Scenario::Mixed, 2, 3)).unwrap();
    assert_ne!(a.frames, b.frames);
}

#[test]
fn objects_stay_rigid() {
    for scenario in [Scenario::Mixed, Scenario::Crowded, Scenario::LargeOcclusion] {
        let cfg = short(scenario, 3, 72);
        let world = build_world(&cfg).unwrap();
        for o in &world.objects {
            // A spread of landmark pairs; every frame is compared with frame 0.
            let lms: Vec<_> = o.body_landmarks.iter().step_by(17).collect();
            let dist = |fi: usize, i: usize, j: usize| {
                let p = o.motion.poses[fi];
                (p.transform_point(&lms[i].position) - p.transform_point(&lms[j].position)).norm()
            };
            for fi in 1..cfg.frames {
                for i in 0..lms.len() {
                    for j in (i + 1)..lms.len() {
                        let d = (dist(fi, i, j) - dist(0, i, j)).abs();
                        assert!(d < 1e-9, "{scenario} object {} frame {fi}: {d:e}", o.object_id);
                    }
                }
            }
        }
    }
}

#[test]
fn observations_agree_with_groundtruth_projection() {
    let cfg = short(Scenario::Mixed, 5, 24);
    let world = build_world(&cfg).unwrap();
    let ds = simulate_sequence(&world, &cfg).unwrap();
    let k = ds.meta.intrinsics;
    let (mut inside, mut total) = (0usize, 0usize);
    for (fi, (frame, gt)) in ds.frames.iter().zip(&ds.groundtruth).enumerate() {
        let w2c = gt.pose().inverse();
        let positions = positions_at(&world, fi);
        for f in &frame.features {
            let p = positions[&f.landmark_hint.expect("simulated features carry ids")];
            let truth = k.project_stereo(&w2c.transform_point(&p)).unwrap();
            // Noise grows with the pyramid level the feature was detected on.
            let bound = 3.0 * cfg.pixel_noise_sigma * 1.2f64.powi(f.scale_level as i32);
            let mut residuals = vec![f.pixel.u_l() - truth.u_l, f.pixel.v_l() - truth.v_l];
            if let Some(s) = f.pixel.stereo() {
                residuals.push(s.u_r - truth.u_r);
            }
            for r in residuals {
                total += 1;
                inside += (r.abs() <= bound) as usize;
            }
        }
    }
    let frac = inside as f64 / total as f64;
    assert!(total > 10_000, "{total}");
    assert!(frac >= 0.995, "{frac} of {total}");
}

#[test]
fn occluded_landmarks_are_never_observed() {
    for scenario in [Scenario::Mixed, Scenario::Crowded, Scenario::LargeOcclusion, Scenario::Parked] {
        let ds = simulate(&short(scenario, 9, 36)).unwrap();
        let mut flagged = 0;
        for (frame, gt) in ds.frames.iter().zip(&ds.groundtruth) {
            let occluded: BTreeSet<u64> = gt.occluded.iter().copied().collect();
            flagged += occluded.len();
            for f in &frame.features {
                assert!(!occluded.contains(&f.landmark_hint.unwrap()), "{scenario} at t={}", frame.timestamp);
            }
        }
        assert!(flagged > 0, "{scenario} never occludes anything");
    }
}

/// Noise-free errors equal the true landmark displacement, a parked object
/// is static and the points of a moving object classify as dynamic. Whole-box
/// verdicts of moving objects are only counted: background points inside the
/// box keep zero error, and the below-median filter can leave mostly those.
#[test]
fn noise_free_classification_follows_true_displacement() {
    let params = ClassifierParams::<f64>::default();
    let bound = 3.0 * params.sigma_bkg;
    let (mut checked_moving, mut checked_still, mut moving_boxes, mut moving_static) = (0, 0, 0, 0);
    for scenario in [Scenario::Mixed, Scenario::Parked, Scenario::Crowded, Scenario::LargeOcclusion] {
        for seed in 0..3 {
            let cfg = SimConfig {
                pixel_noise_sigma: 0.0,
                descriptor_flip_bits: 0,
                ..short(scenario, seed, 72)
            };
            let world = build_world(&cfg).unwrap();
            let ds = simulate_sequence(&world, &cfg).unwrap();
            let poses = ds.groundtruth_poses();
            for (lag, cur) in (2..=6).flat_map(|lag| (lag..ds.frames.len()).map(move |c| (lag, c))) {
                let r = cur - lag;
                let (before, after) = (positions_at(&world, r), positions_at(&world, cur));
                let (fr, fc) = (&ds.frames[r], &ds.frames[cur]);
                for assoc in associate_objects(fr, fc, 50) {
                    let errors = object_point_errors(&assoc, fr, fc, &poses[r].1, &poses[cur].1);
                    let truth: Vec<f64> = assoc
                        .matched_feature_pairs
                        .iter()
                        .filter(|(ri, ci)| fr.features[*ri].pixel.stereo().is_some() && fc.features[*ci].pixel.stereo().is_some())
                        .map(|(_, ci)| {
                            let id = fc.features[*ci].landmark_hint.unwrap();
                            (after[&id] - before[&id]).norm()
                        })
                        .collect();
                    assert_eq!(errors.len(), truth.len());
                    for (e, t) in errors.iter().zip(&truth) {
                        assert!((e - t).abs() < 1e-6, "{scenario}/{seed} frame {cur}: {e} vs {t}");
                    }

                    let id = assoc.cur_object_id;
                    let state = classify(&errors, &params);
                    if state.label == MotionLabel::Unknown {
                        continue;
                    }
                    let o = world.objects.iter().find(|o| o.object_id == id).unwrap();
                    let (pr, pc) = (o.motion.poses[r], o.motion.poses[cur]);
                    if pr == pc {
                        assert_eq!(state.label, MotionLabel::Static, "{scenario}/{seed} object {id} frame {cur} lag {lag}");
                        checked_still += 1;
                        continue;
                    }
                    let own: Vec<f64> = truth.iter().copied().filter(|t| *t > 0.0).collect();
                    if own.iter().all(|t| *t > bound) && !own.is_empty() {
                        let own_state = classify(&own, &params);
                        assert_ne!(own_state.label, MotionLabel::Static, "{scenario}/{seed} object {id} frame {cur} lag {lag}");
                        checked_moving += (own_state.label == MotionLabel::Dynamic) as usize;
                        moving_boxes += 1;
                        moving_static += (state.label == MotionLabel::Static) as usize;
                    }
                }
            }
        }
    }
    eprintln!(
        "{checked_moving} moving and {checked_still} parked verdicts checked; \
         {moving_static} of {moving_boxes} whole-box verdicts of clearly moving objects were static"
    );
    assert!(checked_moving > 50 && checked_still > 50);
}
