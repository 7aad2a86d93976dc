use lv4d_core::evalstats::evaluate;
use lv4d_core::mesh::{icosphere, mesh_volume};
use lv4d_core::phantom::{generate, PhantomSpec};
use lv4d_core::pipeline::{segment_study, PipelineConfig};
use lv4d_core::regengine::{register, RegistrationConfig};
use lv4d_core::{Image2D, Vec3};

fn small() -> PhantomSpec {
    PhantomSpec {
        name: "small".into(),
        frames: 4,
        es_frame: 2,
        spacing_mm: [2.0, 2.0, 2.0],
        ..PhantomSpec::beating()
    }
}

#[test]
fn coarse_study_tracks_the_phantom() {
    let (vol, truth) = generate(&small()).unwrap();
    let seg = segment_study(&vol, &truth.annotation, &PipelineConfig::with_theta_d(30.0)).unwrap();
    assert_eq!(seg.meshes.len(), 4);
    assert!(seg.diagnostics.min_jacobian > 0.0);
    let r = evaluate(&seg.meshes, &truth.meshes, vol.grid(), vol.ed_index(), vol.es_index()).unwrap();
    assert!(r.cycle_mean_dice() > 0.8, "{}", r.cycle_mean_dice());
    // contraction shows up in the volume curve
    assert!(seg.volumes_ml[0] > seg.volumes_ml[2]);
    assert!(r.clinical.ef_percent > 0.0 && truth.ef_percent > 0.0);
}

#[test]
fn same_inputs_same_meshes() {
    let (vol, truth) = generate(&small()).unwrap();
    let cfg = PipelineConfig::with_theta_d(45.0);
    let a = segment_study(&vol, &truth.annotation, &cfg).unwrap();
    let b = segment_study(&vol, &truth.annotation, &cfg).unwrap();
    assert_eq!(a.meshes, b.meshes);
}

#[test]
fn fine_sphere_volume_near_analytic() {
    let m = icosphere(Vec3::new(0.0, 0.0, 0.0), 20.0, 5);
    let exact = 4.0 / 3.0 * std::f64::consts::PI * 8000.0 / 1000.0;
    let v = mesh_volume(&m).unwrap();
    assert!((v - exact).abs() / exact < 2e-3, "{} vs {}", v, exact);
}

#[test]
fn shifted_blob_is_recovered() {
    let blob = |cx: f64| Image2D::from_fn(40, 40, move |x, y| (-((x as f64 - cx).powi(2) + (y as f64 - 20.0).powi(2)) / 40.0).exp());
    let fixed = blob(18.0);
    let moving = blob(20.0);
    let r = register(&fixed, &moving, &RegistrationConfig::default()).unwrap();
    // fixed -> moving: the centre moves by +2 px in x
    let d = r.field.sample([18.0, 20.0]);
    assert!((d[0] - 2.0).abs() < 0.3 && d[1].abs() < 0.3, "{:?}", d);
    assert!(r.field.min_jacobian() > 0.0);
}
