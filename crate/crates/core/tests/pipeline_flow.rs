//! End-to-end runs of the plane, register and diagnose stages on synthetic
//! scenes, including the file-writing commands.

use mosaicreg::integrity::SurfaceClass;
use mosaicreg::pipeline::{
    exit, mosaic_stage, plane_report, run_diagnose, run_plane, run_register, run_synth, Inputs, PipelineError,
    RunConfig,
};
use mosaicreg::registration::{register, RegistrationConfig};
use mosaicreg::synth::{default_scene, drift_scene, render_ground_views, Marking, SceneRoi, SceneSpec, SyntheticScene};
use nalgebra::Vector3;
use std::path::Path;

fn inputs(scene: &SyntheticScene) -> Inputs {
    Inputs {
        model: scene.model.clone(),
        images: scene.images(),
        rois: scene.rois.clone(),
        satellite: scene.map.clone(),
    }
}

fn truth_normal(scene: &SyntheticScene) -> Vector3<f64> {
    scene.truth.frame.rotation * Vector3::z()
}

#[test]
fn plane_of_noisy_scene_is_within_half_a_degree() {
    let spec = SceneSpec { point_noise: 0.01, ..default_scene(40) };
    let scene = render_ground_views(&spec).unwrap();
    let report = plane_report(&scene.model, Some(&scene.rois)).unwrap();
    let n = report.plane.normal();
    let angle = n.cross(&truth_normal(&scene)).norm().atan2(n.dot(&truth_normal(&scene)));
    assert!(angle.to_degrees() < 0.5, "normal off by {} deg", angle.to_degrees());
    assert!(report.planarity.rms_out_of_plane > 0.0);
}

#[test]
fn plane_command_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    run_synth(&default_scene(41), dir.path()).unwrap();
    let config = RunConfig::load(&dir.path().join("config.json"), &[]).unwrap();
    let report = run_plane(&config).unwrap();
    assert!(report.planarity.relative_smallest_singular < 1e-9);
    let text = std::fs::read_to_string(dir.path().join("out/plane.json")).unwrap();
    assert!(text.contains("\"singular_values\""));
}

#[test]
fn truth_start_converges_immediately() {
    let scene = render_ground_views(&default_scene(42)).unwrap();
    let mosaic = mosaic_stage(&inputs(&scene), &scene.truth.plane, scene.step()).unwrap();
    assert_eq!(mosaic.patches.len(), 5);
    let r = register(&mosaic.patches, &scene.map, &scene.truth.alpha, &RegistrationConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert_eq!(r.alpha, scene.truth.alpha);
    assert!(r.history[0].argmins.iter().all(|a| *a == Some((0, 0))));
}

#[test]
fn five_image_registration_lowers_total_ssd() {
    let scene = render_ground_views(&default_scene(43)).unwrap();
    let mosaic = mosaic_stage(&inputs(&scene), &scene.truth.plane, scene.step()).unwrap();
    let alpha0 = mosaicreg::synth::perturb_alpha(&scene.truth.alpha, 43, 0.03, 3.0, 5.0);
    let r = register(&mosaic.patches, &scene.map, &alpha0, &RegistrationConfig::default()).unwrap();
    assert!(r.converged);
    let before = r.history.first().unwrap().total_ssd_at_zero;
    let after = r.history.last().unwrap().total_ssd_at_zero;
    assert!(after < before, "{after} !< {before}");
}

/// One oblique view split into four micropatch rois.
fn micropatch_spec(seed: u64) -> SceneSpec {
    let mut spec = default_scene(seed);
    spec.cameras.truncate(1);
    spec.rois = [(60.0, 70.0), (200.0, 70.0), (60.0, 150.0), (200.0, 150.0)]
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| SceneRoi {
            camera: 0,
            vertices: vec![[x, y], [x + 60.0, y], [x + 60.0, y + 50.0], [x, y + 50.0]],
            label: Some(format!("m{k}")),
            extra: false,
        })
        .collect();
    spec
}

#[test]
fn single_image_micropatch_mosaic_converges() {
    let scene = render_ground_views(&micropatch_spec(44)).unwrap();
    let mosaic = mosaic_stage(&inputs(&scene), &scene.truth.plane, scene.step()).unwrap();
    assert_eq!(mosaic.patches.len(), 4);
    let alpha0 = mosaicreg::synth::perturb_alpha(&scene.truth.alpha, 44, 0.01, 1.0, 3.0);
    let config = RegistrationConfig { subpixel: true, ..RegistrationConfig::default() };
    let r = register(&mosaic.patches, &scene.map, &alpha0, &config).unwrap();
    assert!(r.converged);
    assert!((r.alpha.translation() - scene.truth.alpha.translation()).norm() < 1.0);
}

fn synth_run(spec: &SceneSpec, dir: &Path, overrides: &[String]) -> RunConfig {
    run_synth(spec, dir).unwrap();
    RunConfig::load(&dir.join("config.json"), overrides).unwrap()
}

#[test]
fn register_and_diagnose_report_drift_slope() {
    for (fraction, lo, hi) in [(0.0, 0.0, 0.005), (0.04, 0.03, 0.05)] {
        let dir = tempfile::tempdir().unwrap();
        let config = synth_run(&drift_scene(45, fraction), dir.path(), &["registration.subpixel=true".into()]);
        let report = run_register(&config).unwrap();
        assert!(report.registration.converged);
        let d = run_diagnose(&config).unwrap();
        let slope = d.trend.unwrap().slope;
        assert!((lo..=hi).contains(&slope), "fraction {fraction}: slope {slope}");
        assert_eq!(d.interpatch.len(), 45);
        for name in ["report.json", "residuals.csv", "overlay.ppm", "interpatch.csv", "trend.json", "classifications.json", "ambiguity.json", "heatmaps/p0.pgm", "heatmaps/x4.pgm"] {
            assert!(dir.path().join("out").join(name).exists(), "{name}");
        }
    }
}

#[test]
fn diagnose_flags_a_line_patch_as_trench() {
    let mut spec = default_scene(46);
    spec.texture_amplitude = 3.0;
    spec.markings.clear();
    let centers: Vec<[f64; 2]> = spec
        .cameras
        .iter()
        .map(|c| {
            let (s, co) = c.yaw_deg.to_radians().sin_cos();
            let back = c.height / c.pitch_deg.to_radians().tan();
            [(c.position[0] + back * co) / spec.pitch, (c.position[1] + back * s) / spec.pitch]
        })
        .collect();
    for (k, c) in centers.iter().enumerate() {
        if k == 0 {
            spec.markings.push(Marking::Line {
                from: [c[0] - 60.0, c[1] - 20.0],
                to: [c[0] + 60.0, c[1] + 20.0],
                width: 3.0,
                intensity: 230.0,
            });
        } else {
            spec.markings.push(Marking::Cross { center: *c, arm: 8.0, width: 3.0, angle_deg: 20.0, intensity: 230.0 });
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(&spec, dir.path(), &[]);
    run_register(&config).unwrap();
    let d = run_diagnose(&config).unwrap();
    let classes: Vec<_> = d.classifications.iter().map(|(l, c)| (l.clone(), c.as_ref().map(|c| c.class))).collect();
    assert!(classes.iter().any(|(_, c)| *c == Ok(SurfaceClass::Trench)), "{classes:?}");
}

#[test]
fn diagnose_without_report_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(&default_scene(47), dir.path(), &[]);
    let err = run_diagnose(&config).unwrap_err();
    assert_eq!(err.exit_code(), exit::USAGE);
}

#[test]
fn coincident_rois_fail_conditioning() {
    let mut spec = default_scene(48);
    let roi = SceneRoi {
        camera: 0,
        vertices: vec![[100.0, 80.0], [220.0, 80.0], [220.0, 170.0], [100.0, 170.0]],
        label: None,
        extra: false,
    };
    spec.rois = (0..3).map(|k| SceneRoi { label: Some(format!("c{k}")), ..roi.clone() }).collect();
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(&spec, dir.path(), &[]);
    let err = run_register(&config).unwrap_err();
    assert!(matches!(err, PipelineError::Registration(_)), "{err}");
    assert_eq!(err.exit_code(), exit::CONDITIONING);
}

#[test]
fn iteration_limit_reports_divergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(&default_scene(49), dir.path(), &["registration.max_iterations=1".into()]);
    match run_register(&config) {
        Err(e @ PipelineError::NotConverged(1)) => assert_eq!(e.exit_code(), exit::DIVERGENCE),
        other => panic!("{other:?}"),
    }
    assert!(dir.path().join("out/report.json").exists());
}
