//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported, not hidden; the process exits non-zero on
//! a failure only when `LV4D_ACCEPTANCE_STRICT` is set.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lv4d::commands::{self, ExperimentOptions, ExperimentOutput, SegmentArgs, SegmentOutput, TruthRecord};
use lv4d::io;
use lv4d_core::contour::Phase;
use lv4d_core::evalstats::{hausdorff, kruskal_wallis, mean_absolute_distance, mesh_dice};
use lv4d_core::experiments::{ExperimentReport, Metric};
use lv4d_core::mesh::{cube, icosphere, SurfaceMesh};
use lv4d_core::meshkit::build_mesh;
use lv4d_core::phantom::{suite_spec, PhantomGeometry};
use lv4d_core::pipeline::{segment_ed_es, Diagnostics, PipelineConfig};
use lv4d_core::regengine::{register, MeshParams, MovingMeshObjective, RegistrationConfig, Similarity};
use lv4d_core::slicer::{extract_slice, SlicePlane};
use lv4d_core::{Image2D, Vec3, VoxelGrid};
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Beating phantom segmented twice through the CLI command.
struct EndToEnd {
    _tmp: tempfile::TempDir,
    study: PathBuf,
    runs: [PathBuf; 2],
    first: SegmentOutput,
    seconds: f64,
}

impl EndToEnd {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let study = tmp.path().join("beating");
        commands::write_phantom(&suite_spec("beating").unwrap(), &study).unwrap();
        let runs = [tmp.path().join("run-a"), tmp.path().join("run-b")];
        let t0 = Instant::now();
        let first = commands::cmd_segment(&Self::args(&study, &runs[0])).unwrap();
        let seconds = t0.elapsed().as_secs_f64();
        Self {
            _tmp: tmp,
            study,
            runs,
            first,
            seconds,
        }
    }

    fn args(study: &Path, out: &Path) -> SegmentArgs {
        SegmentArgs {
            volume: study.join("volume.json"),
            annotation: study.join("annotation.json"),
            theta_d: 5.0,
            config: None,
            out: out.to_path_buf(),
            truth: Some(study.join("truth")),
        }
    }
}

fn diffeomorphism(e2e: &EndToEnd) -> Outcome {
    let d = &e2e.first.segmentation.diagnostics;
    // the noisiest suite member, ED/ES spatial stage
    let low = suite_spec("low-snr").unwrap();
    let (vol, truth) = lv4d_core::phantom::generate(&low).unwrap();
    let mut low_diag = Diagnostics::default();
    segment_ed_es(&vol, &truth.annotation, &PipelineConfig::default(), &mut low_diag).unwrap();

    let t0 = Instant::now();
    let g = PhantomGeometry::new(&suite_spec("beating").unwrap());
    let (bvol, _) = (io::read_volume4d(&e2e.study.join("volume.json")).unwrap(), ());
    let plane = SlicePlane::covering(&g.annotation().unwrap().axis(), 30.0, bvol.grid());
    let slice = extract_slice(bvol.frame(0), &plane.window(40, 40, 81, 69), 0).pixels;
    let mut rng = StdRng::seed_from_u64(3);
    let noise = Image2D::from_fn(48, 40, |_, _| rng.random::<f64>());
    let mut identity_max: f64 = 0.0;
    for (img, sim) in [(&slice, Similarity::Ssd), (&noise, Similarity::Ssd), (&slice, Similarity::Ncc)] {
        let cfg = RegistrationConfig {
            similarity: sim,
            ..Default::default()
        };
        let r = register(img, img, &cfg).unwrap();
        identity_max = identity_max.max(r.field.max_displacement());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        d.registrations > 0 && d.min_jacobian > 0.0 && low_diag.min_jacobian > 0.0 && identity_max < 1e-6 && secs < 60.0,
        format!(
            "min det {:.4} over {} fields (beating 4D), {:.4} over {} (low-snr ED/ES); identity max displacement {:.1e} px in {:.1} s",
            d.min_jacobian, d.registrations, low_diag.min_jacobian, low_diag.registrations, identity_max, secs
        ),
    )
}

// ---- independent geometry oracles -------------------------------------

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn seg_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    let d = sub(p, q);
    dot(d, d)
}

/// Plane distance when the foot point is inside, else nearest edge.
fn tri_dist2(p: [f64; 3], t: &[[f64; 3]; 3]) -> f64 {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let nn = dot(n, n);
    let s = dot(sub(p, t[0]), n) / nn;
    let f = [p[0] - s * n[0], p[1] - s * n[1], p[2] - s * n[2]];
    let inside = (0..3).all(|i| dot(cross(sub(t[(i + 1) % 3], t[i]), sub(f, t[i])), n) >= 0.0);
    if inside {
        s * s * nn
    } else {
        seg_dist2(p, t[0], t[1]).min(seg_dist2(p, t[1], t[2])).min(seg_dist2(p, t[2], t[0]))
    }
}

fn triangles(m: &SurfaceMesh) -> Vec<[[f64; 3]; 3]> {
    m.triangles
        .iter()
        .map(|t| [arr(m.vertices[t[0]]), arr(m.vertices[t[1]]), arr(m.vertices[t[2]])])
        .collect()
}

/// Area-weighted samples on `s` plus its vertices; returns (mean, max) of
/// the distance to `r` over the samples.
fn sampled_distances(s: &SurfaceMesh, r: &SurfaceMesh, n: usize, rng: &mut StdRng) -> (f64, f64) {
    let st = triangles(s);
    let rt = triangles(r);
    let areas: Vec<f64> = st.iter().map(|t| dot(cross(sub(t[1], t[0]), sub(t[2], t[0])), cross(sub(t[1], t[0]), sub(t[2], t[0]))).sqrt()).collect();
    let total: f64 = areas.iter().sum();
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a / total;
        cdf.push(acc);
    }
    let dist = |p: [f64; 3]| rt.iter().map(|t| tri_dist2(p, t)).fold(f64::INFINITY, f64::min).sqrt();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = cdf.partition_point(|&c| c < u).min(st.len() - 1);
        let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        let t = &st[k];
        let p = [0, 1, 2].map(|i| t[0][i] + a * (t[1][i] - t[0][i]) + b * (t[2][i] - t[0][i]));
        let d = dist(p);
        sum += d;
        max = max.max(d);
    }
    for v in &s.vertices {
        max = max.max(dist(arr(*v)));
    }
    (sum / n as f64, max)
}

fn blob(rng: &mut StdRng) -> SurfaceMesh {
    let c = Vec3::new(rng.random_range(28.0..32.0), rng.random_range(28.0..32.0), rng.random_range(28.0..32.0));
    let r = rng.random_range(12.0..18.0);
    let (a1, a2) = (rng.random_range(-0.12..0.12), rng.random_range(-0.12..0.12));
    let (k1, k2) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
    let mut m = icosphere(c, r, 2);
    for v in m.vertices.iter_mut() {
        let d = (*v - c) * (1.0 / r);
        let s = 1.0 + a1 * (k1 * d.x + 0.3).sin() + a2 * (k2 * d.y * d.z).cos();
        *v = c + (*v - c) * s;
    }
    m
}

fn sphere_lens(r1: f64, r2: f64, d: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if d >= r1 + r2 {
        0.0
    } else if d <= (r1 - r2).abs() {
        4.0 / 3.0 * pi * r1.min(r2).powi(3)
    } else {
        pi * (r1 + r2 - d).powi(2) * (d * d + 2.0 * d * r2 - 3.0 * r2 * r2 + 2.0 * d * r1 + 6.0 * r1 * r2 - 3.0 * r1 * r1)
            / (12.0 * d)
    }
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let eq = v.iter().filter(|&&y| y == x).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn brute_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = brute_ranks(&pooled);
    let mut off = 0;
    let mut s = 0.0;
    for g in groups {
        let r: f64 = ranks[off..off + g.len()].iter().sum();
        s += r * r / g.len() as f64;
        off += g.len();
    }
    let mut ties = 0.0;
    let mut seen = Vec::new();
    for &x in &pooled {
        if !seen.contains(&x) {
            seen.push(x);
            let t = pooled.iter().filter(|&&y| y == x).count() as f64;
            ties += t * t * t - t;
        }
    }
    (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / (1.0 - ties / (n * n * n - n))
}

/// Permutation p-value over every ordering of the pooled sample.
fn brute_p(groups: &[Vec<f64>]) -> f64 {
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let h0 = brute_h(groups);
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    fn permute(k: usize, idx: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == idx.len() {
            f(idx);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(k + 1, idx, f);
            idx.swap(k, i);
        }
    }
    permute(0, &mut idx, &mut |perm| {
        let mut gs = Vec::new();
        let mut off = 0;
        for &m in &sizes {
            gs.push(perm[off..off + m].iter().map(|&i| pooled[i]).collect::<Vec<_>>());
            off += m;
        }
        total += 1;
        if brute_h(&gs) >= h0 - 1e-9 {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst_dm: f64 = 0.0;
    let mut worst_dh: f64 = 0.0;
    for _ in 0..20 {
        let s = blob(&mut rng);
        let r = blob(&mut rng);
        let (dm_sr, dh_sr) = sampled_distances(&s, &r, 100_000, &mut rng);
        let (_, dh_rs) = sampled_distances(&r, &s, 100_000, &mut rng);
        worst_dm = worst_dm.max((mean_absolute_distance(&s, &r).unwrap() - dm_sr).abs());
        worst_dh = worst_dh.max((hausdorff(&s, &r).unwrap() - dh_sr.max(dh_rs)).abs());
    }

    let grid = VoxelGrid::new([121, 121, 121], [0.5; 3]).unwrap();
    let mut worst_dice: f64 = 0.0;
    let boxes: [([f64; 6], [f64; 6]); 3] = [
        ([2.0, 2.0, 2.0, 22.0, 22.0, 22.0], [7.0, 5.0, 4.0, 27.0, 25.0, 24.0]),
        ([3.0, 3.0, 3.0, 33.0, 18.0, 23.0], [10.0, 6.0, 3.0, 40.0, 21.0, 23.0]),
        ([2.0, 2.0, 2.0, 12.0, 12.0, 12.0], [30.0, 30.0, 30.0, 40.0, 40.0, 40.0]),
    ];
    for (a, b) in boxes {
        let vol = |x: [f64; 6]| (x[3] - x[0]) * (x[4] - x[1]) * (x[5] - x[2]);
        let ov = (0..3).map(|i| (a[i + 3].min(b[i + 3]) - a[i].max(b[i])).max(0.0)).product::<f64>();
        let exact = 2.0 * ov / (vol(a) + vol(b));
        let ma = cube(Vec3::new(a[0], a[1], a[2]), Vec3::new(a[3], a[4], a[5]));
        let mb = cube(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
        worst_dice = worst_dice.max((mesh_dice(&ma, &mb, &grid).unwrap() - exact).abs());
    }
    let pi = std::f64::consts::PI;
    for (r1, r2, d) in [(15.0, 15.0, 0.0), (15.0, 12.0, 6.0), (14.0, 10.0, 15.0), (10.0, 8.0, 25.0)] {
        let c = Vec3::new(30.0, 30.0, 30.0);
        let exact = 2.0 * sphere_lens(r1, r2, d) / (4.0 / 3.0 * pi * (r1 * r1 * r1 + r2 * r2 * r2));
        let ma = icosphere(c, r1, 5);
        let mb = icosphere(c + Vec3::new(d, 0.0, 0.0), r2, 5);
        worst_dice = worst_dice.max((mesh_dice(&ma, &mb, &grid).unwrap() - exact).abs());
    }

    let mut worst_kw: f64 = 0.0;
    let samples: Vec<Vec<Vec<f64>>> = vec![
        vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]],
        vec![vec![0.3, 1.7], vec![2.2, 0.9, 4.1], vec![3.3, 2.8]],
        vec![vec![1.0, 2.0, 2.0], vec![2.0, 3.0], vec![1.0, 5.0, 4.0]],
        vec![vec![0.91, 0.93, 0.95, 0.90], vec![0.94, 0.96, 0.92, 0.97]],
    ];
    for g in &samples {
        let r = kruskal_wallis(g).unwrap();
        let p = r.p_exact.expect("small sample enumerated");
        worst_kw = worst_kw.max((r.h - brute_h(g)).abs()).max((p - brute_p(g)).abs());
    }
    let h72 = kruskal_wallis(&samples[0]).unwrap().h;

    outcome(
        worst_dm <= 0.05 && worst_dh <= 0.05 && worst_dice <= 0.02 && worst_kw <= 1e-9 && (h72 - 7.2).abs() < 1e-9,
        format!(
            "20 pairs: |d_m - oracle| <= {:.4} mm, |d_H - oracle| <= {:.4} mm; Dice error <= {:.4}; KW error {:.1e}; H = {:.6}",
            worst_dm, worst_dh, worst_dice, worst_kw, h72
        ),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn end_to_end(e2e: &EndToEnd) -> Outcome {
    let r = e2e.first.report.as_ref().unwrap();
    let truth: TruthRecord = io::read_json(&e2e.study.join("truth/truth.json")).unwrap();
    let corr = pearson(&e2e.first.segmentation.volumes_ml, &truth.volumes_ml);
    let (dm, dice, dh) = (r.cycle_mean_dm(), r.cycle_mean_dice(), r.max_dh());
    outcome(
        dm <= 1.2 && dice >= 0.90 && dh <= 6.0 && corr >= 0.99,
        format!(
            "{} frames: cycle-mean d_m {:.3} mm, Dice {:.4}, max d_H {:.3} mm, volume r {:.4}, EF {:.1}% vs {:.1}%; {:.0} s",
            r.per_frame.len(),
            dm,
            dice,
            dh,
            corr,
            r.clinical.ef_percent,
            truth.ef_percent,
            e2e.seconds
        ),
    )
}

fn same_bits(a: &SurfaceMesh, b: &SurfaceMesh) -> bool {
    a.triangles == b.triangles
        && a.vertices.len() == b.vertices.len()
        && a.vertices.iter().zip(&b.vertices).all(|(p, q)| {
            p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits() && p.z.to_bits() == q.z.to_bits()
        })
}

fn anchoring(e2e: &EndToEnd) -> Outcome {
    let vol = io::read_volume4d(&e2e.study.join("volume.json")).unwrap();
    let ann = io::read_annotation(&e2e.study.join("annotation.json")).unwrap();
    let mut diag = Diagnostics::default();
    let (ed, es) = segment_ed_es(&vol, &ann, &PipelineConfig::default(), &mut diag).unwrap();
    let spatial = [build_mesh(&ed).unwrap(), build_mesh(&es).unwrap()];
    let mut ok = true;
    for (t, m) in [vol.ed_index(), vol.es_index()].into_iter().zip(&spatial) {
        let written = io::read_mesh(&e2e.runs[0].join("meshes").join(io::frame_mesh_name(t))).unwrap();
        ok &= same_bits(&e2e.first.segmentation.meshes[t], m) && same_bits(&written, m);
    }
    outcome(
        ok,
        format!(
            "frames {} and {}: output and OBJ meshes vs an independent spatial run, {} vertices each",
            vol.ed_index(),
            vol.es_index(),
            spatial[0].vertices.len()
        ),
    )
}

fn experiment(name: &str) -> (ExperimentOutput, f64) {
    let out = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let o = commands::cmd_experiment(name, out.path(), &ExperimentOptions::default()).unwrap();
    (o, t0.elapsed().as_secs_f64())
}

fn groups(o: ExperimentOutput) -> (ExperimentReport, Option<[lv4d_core::experiments::Measurement; 2]>) {
    match o {
        ExperimentOutput::Groups { report, spheroid } => (report, spheroid),
        ExperimentOutput::Methods(_) => unreachable!(),
    }
}

fn p_values(r: &ExperimentReport, metrics: &[Metric]) -> (Vec<f64>, String) {
    let mut ps = Vec::new();
    let mut s = String::new();
    for phase in [Phase::Ed, Phase::Es] {
        for &m in metrics {
            let p = r.test(phase, m).unwrap().p_value;
            ps.push(p);
            s.push_str(&format!("{:?} {} p={:.4} ", phase, m.label(), p));
        }
    }
    (ps, s.trim_end().to_string())
}

fn angular() -> Outcome {
    let (o, secs) = experiment("angular-spacing");
    let (r, _) = groups(o);
    let (ps, s) = p_values(&r, &[Metric::Dm, Metric::Dh, Metric::Dice]);
    outcome(ps.iter().all(|&p| p > 0.01), format!("{}; {:.0} s", s, secs))
}

fn axis() -> Outcome {
    let (o, secs) = experiment("axis-perturbation");
    let (r, _) = groups(o);
    let (ps, s) = p_values(&r, &Metric::ALL);
    outcome(ps.iter().all(|&p| p > 0.01), format!("{}; {:.0} s", s, secs))
}

fn contour() -> Outcome {
    let (o, secs) = experiment("contour-perturbation");
    let (r, _) = groups(o);
    let (sig, s1) = p_values(&r, &[Metric::Dm, Metric::Dice]);
    let (vol, s2) = p_values(&r, &[Metric::Volume]);
    outcome(
        sig.iter().all(|&p| p < 0.01) && vol.iter().all(|&p| p >= 0.01),
        format!("{}; {}; {:.0} s", s1, s2, secs),
    )
}

fn ellipsoid() -> Outcome {
    let (o, secs) = experiment("ellipsoid-baseline");
    let (r, spheroid) = groups(o);
    let (ps, s) = p_values(&r, &[Metric::Dm, Metric::Dh, Metric::Dice]);
    let worse = [Phase::Ed, Phase::Es].iter().all(|&ph| {
        r.mean("ellipsoid", ph, Metric::Dm) > r.mean("pipeline", ph, Metric::Dm)
            && r.mean("ellipsoid", ph, Metric::Dh) > r.mean("pipeline", ph, Metric::Dh)
            && r.mean("ellipsoid", ph, Metric::Dice) < r.mean("pipeline", ph, Metric::Dice)
    });
    let errs: Vec<f64> = spheroid
        .unwrap()
        .iter()
        .map(|m| 100.0 * (m.volume_ml - m.truth_volume_ml) / m.truth_volume_ml)
        .collect();
    outcome(
        ps.iter().all(|&p| p < 0.01) && worse && errs.iter().all(|e| e.abs() <= 5.0),
        format!(
            "bent: {}, baseline worse on every mean: {}; spheroid baseline volume error ED {:+.1}% ES {:+.1}% (bar 5%); {:.0} s",
            s, worse, errs[0], errs[1], secs
        ),
    )
}

fn method() -> Outcome {
    let (o, secs) = experiment("method-comparison");
    let ExperimentOutput::Methods(mc) = o else { unreachable!() };
    let margin = mc.curve_margin(0.85);
    outcome(
        mc.dice_gap >= 0.02 && margin >= 0.0,
        format!(
            "cycle-mean Dice {:.4} vs demons {:.4} (gap {:+.4}, bar 0.02); reliability margin from 0.85 {:+.3}; {:.0} s",
            mc.pipeline.cycle_mean_dice(),
            mc.demons.cycle_mean_dice(),
            mc.dice_gap,
            margin,
            secs
        ),
    )
}

fn smooth_image(rng: &mut StdRng, n: usize) -> Image2D {
    let bumps: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            [
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..n as f64),
                rng.random_range(2.0..5.0),
                rng.random_range(-0.5..0.5),
            ]
        })
        .collect();
    Image2D::from_fn(n, n, |x, y| {
        0.5 + bumps
            .iter()
            .map(|b| b[3] * (-((x as f64 - b[0]).powi(2) + (y as f64 - b[1]).powi(2)) / (2.0 * b[2] * b[2])).exp())
            .sum::<f64>()
    })
}

fn gradient_check() -> Outcome {
    let mut rng = StdRng::seed_from_u64(16);
    let mut worst: f64 = 0.0;
    for (fixture, sim) in [(0, Similarity::Ssd), (1, Similarity::Ssd), (2, Similarity::Ncc)] {
        let f = smooth_image(&mut rng, 16);
        let m = smooth_image(&mut rng, 16);
        let control = if fixture == 1 { (6, 6) } else { (16, 16) };
        let obj = MovingMeshObjective::new(&f, &m, control, 4, sim);
        let n = obj.param_count();
        let mut p = MeshParams::identity(n);
        for k in 0..n {
            p.mu[k] = 1.0 + rng.random_range(-0.15..0.15);
            p.gamma[k] = rng.random_range(-0.1..0.1);
        }
        let (_, g) = obj.value_and_gradient(&p);
        let eps = 1e-6;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..2 * n {
            let (mut a, mut b) = (p.clone(), p.clone());
            let analytic = if k < n {
                a.mu[k] += eps;
                b.mu[k] -= eps;
                g.mu[k]
            } else {
                a.gamma[k - n] += eps;
                b.gamma[k - n] -= eps;
                g.gamma[k - n]
            };
            let fd = (obj.value(&a) - obj.value(&b)) / (2.0 * eps);
            num += (fd - analytic).powi(2);
            den += fd * fd;
        }
        worst = worst.max((num / den).sqrt());
    }
    outcome(worst < 1e-4, format!("16x16 fixtures (SSD x2, NCC): worst relative error {:.2e}", worst))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(e2e: &EndToEnd) -> Outcome {
    commands::cmd_segment(&EndToEnd::args(&e2e.study, &e2e.runs[1])).unwrap();
    let a = files(&e2e.runs[0]);
    let b = files(&e2e.runs[1]);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && a.keys().any(|k| k.ends_with("report.json")),
        format!("{} files compared byte for byte, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

fn main() {
    let mut e2e: Option<EndToEnd> = None;
    let mut results: Vec<(&str, bool)> = Vec::new();
    let mut run = |label: &'static str, f: &mut dyn FnMut(&mut Option<EndToEnd>) -> Outcome| {
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(|| f(&mut e2e)));
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {}", msg))
            }
        };
        println!(
            "{} {}: {} [{:.0} s]",
            if pass { "PASS" } else { "FAIL" },
            label,
            detail,
            t0.elapsed().as_secs_f64()
        );
        results.push((label, pass));
    };
    fn shared(e: &mut Option<EndToEnd>) -> &EndToEnd {
        e.get_or_insert_with(EndToEnd::new)
    }

    run("diffeomorphism", &mut |e| diffeomorphism(shared(e)));
    run("metric-oracles", &mut |_| metric_oracles());
    run("phantom-end-to-end", &mut |e| end_to_end(shared(e)));
    run("anchoring", &mut |e| anchoring(shared(e)));
    run("angular-spacing", &mut |_| angular());
    run("axis-perturbation", &mut |_| axis());
    run("contour-perturbation", &mut |_| contour());
    run("ellipsoid-baseline", &mut |_| ellipsoid());
    run("method-comparison", &mut |_| method());
    run("gradient-check", &mut |_| gradient_check());
    run("determinism", &mut |e| determinism(shared(e)));

    let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        if std::env::var_os("LV4D_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
