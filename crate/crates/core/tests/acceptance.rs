//! Acceptance run: prints one line per criterion and exits nonzero if any
//! of them fails. The desk-scale training runs take most of the time
//! (roughly 1.5 hours on a single core).

use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Point3, Rotation3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skinfield::geometry::primitives::{grid, icosphere};
use skinfield::geometry::{geodesic_diameter_estimate, geodesic_from_set, one_ring, TriMesh, Vec3};
use skinfield::gradcheck;
use skinfield::kinematics::{bind_transforms, normalize_pose, skinning_transforms, Axis, Joint, Pose, Skeleton};
use skinfield::losses::{skinning_reg_loss, SkinRegCost};
use skinfield::metrics::{evaluate, summarize, EvalReport};
use skinfield::nn::{softmax_rows, Batch, NetConfig, SkinNet};
use skinfield::render::{distance_transform, Mask};
use skinfield::skinning::{blend, derive_bone_sets, heat_diffusion_weights, lbs, HeatConfig, SkinWeights};
use skinfield::synthetic::{make_arm_scene, ArmScene, GroundTruth, SceneSpec};
use skinfield::training::{pose_mesh, query_field, Dataset, NullObserver, Prepared, TrainConfig, Trainer};

const EVAL_SAMPLES: usize = 20_000;
const SEEDS: [u64; 3] = [7, 8, 9];

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: usize, name: &'static str, r: Result<(bool, String), String>) -> Line {
    match r {
        Ok((pass, detail)) => Line { id, name, pass, detail },
        Err(e) => Line { id, name, pass: false, detail: format!("error: {e}") },
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Full,
    Static,
    NoRendering,
}

struct Run {
    scene: ArmScene,
    gt: GroundTruth,
    data: Dataset,
    skin: SkinNet,
    heat: SkinWeights,
    checkpoint: Vec<u8>,
    reports: Vec<EvalReport>,
    chamfer: f64,
    elapsed: Duration,
}

fn heldout_reports(run_skin: &SkinNet, data: &Dataset, gt: &GroundTruth) -> skinfield::Result<Vec<EvalReport>> {
    gt.heldout_poses
        .iter()
        .zip(&gt.heldout_meshes)
        .map(|(p, m)| evaluate(&pose_mesh(&data.template, &data.skeleton, &data.canonical, run_skin, p)?, m, EVAL_SAMPLES, 0))
        .collect()
}

/// One desk-preset run on the synthetic arm. Wall-clock covers data
/// generation, preparation and all stages.
fn desk_run(seed: u64, variant: Variant) -> skinfield::Result<Run> {
    let start = Instant::now();
    let (scene, gt) = make_arm_scene(SceneSpec { seed, ..SceneSpec::default() })?;
    let data = scene.dataset(&gt)?;
    let cfg = TrainConfig {
        seed,
        deterministic: true,
        pose_conditioned: variant != Variant::Static,
        rendering: variant != Variant::NoRendering,
        ..TrainConfig::desk()
    };
    let prep = Prepared::new(&data, &cfg, None)?;
    let heat = prep.init_weights.clone();
    let mut trainer = Trainer::new(&data, cfg, prep)?;
    trainer.run(1..=4, &mut NullObserver)?;
    let elapsed = start.elapsed();
    let checkpoint = trainer.checkpoint().to_bytes();
    let skin = trainer.model.skin.clone();
    let reports = heldout_reports(&skin, &data, &gt)?;
    let chamfer = summarize(&reports).chamfer;
    eprintln!("seed {seed} {}: held-out chamfer {chamfer:.5} in {}", variant_name(variant), secs(elapsed));
    Ok(Run { scene, gt, data, skin, heat, checkpoint, reports, chamfer, elapsed })
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Static => "static",
        Variant::NoRendering => "no-rendering",
    }
}

fn random_pose(rng: &mut ChaCha8Rng, dof: usize) -> Pose {
    let mut p = Pose::zero(dof);
    for k in 0..3 {
        p.alpha[k] = rng.random_range(-1.5..1.5);
        p.t[k] = rng.random_range(-1.0..1.0);
    }
    for r in &mut p.rho {
        *r = rng.random_range(-3.0..3.0);
    }
    p
}

fn partition_of_unity(skin: &SkinNet, scene: &ArmScene) -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dof = scene.skeleton.dof();
    let up = scene.skeleton.up();
    let n = 10_000;
    let start = Instant::now();
    let mut rows = Vec::new();
    for _ in 0..n {
        let x = Vec3::new(rng.random_range(-0.2..1.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let theta = normalize_pose(&random_pose(&mut rng, dof), &up);
        rows.extend_from_slice(skin.input(&[x], &theta).map_err(|e| e.to_string())?.as_slice());
    }
    let input = Batch::from_vec(n, rows.len() / n, rows);
    let w = softmax_rows(&skin.params.compile().forward(&input, None).map_err(|e| e.to_string())?);
    let elapsed = start.elapsed();
    let sum_err = w.iter_rows().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let min_w = w.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let pass = sum_err <= 1e-6 && min_w >= 0.0 && elapsed < Duration::from_secs(5);
    Ok((pass, format!("max |sum-1| {sum_err:.1e} (<= 1e-6), min w {min_w:.1e} (>= 0), {} (< 5s)", secs(elapsed))))
}

fn rest_identity(scene: &ArmScene) -> Result<(bool, String), String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (seed, conditioned, head) in [(3, true, 5.0), (4, false, 5.0)] {
        let cfg = NetConfig { head_scale: head, ..NetConfig::default() };
        let skin = SkinNet::new(&cfg, scene.skeleton.joint_count(), 6 + scene.skeleton.dof(), conditioned, seed);
        let posed = pose_mesh(&scene.template, &scene.skeleton, &scene.canonical, &skin, &scene.canonical).map_err(|e| e.to_string())?;
        for (a, b) in posed.vertices().iter().zip(scene.template.vertices()) {
            worst = worst.max((a - b).amax());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && elapsed < Duration::from_secs(1);
    Ok((pass, format!("max error {worst:.1e} (<= 1e-6) over 2 random fields, {} (< 1s)", secs(elapsed))))
}

fn gradient_suite() -> Result<(bool, String), String> {
    let start = Instant::now();
    let reports = gradcheck::run_all(7).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for r in &reports {
        eprintln!("  {r}");
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    let probes = reports.iter().map(|r| r.probes).min().unwrap_or(0);
    let pass = failed.is_empty() && reports.len() == 9 && elapsed < Duration::from_secs(120);
    Ok((
        pass,
        format!("{} suites, >= {probes} probes each, failed {failed:?}, {} (< 120s)", reports.len(), secs(elapsed)),
    ))
}

fn brute_force_edt(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask.data[y as usize * w + x as usize];
    let mut boundary = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if inside(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !inside(x + dx, y + dy)) {
                boundary.push((x, y));
            }
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let d2 = boundary.iter().map(|(bx, by)| (bx - x).pow(2) + (by - y).pow(2)).min().unwrap();
            out.push((d2 as f64).sqrt());
        }
    }
    out
}

fn bellman_ford(mesh: &TriMesh, sources: &[usize]) -> Vec<f64> {
    let v = mesh.vertices();
    let mut edges = Vec::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let len = (v[a] - v[b]).norm();
            edges.push((a, b, len));
            edges.push((b, a, len));
        }
    }
    let mut dist = vec![f64::INFINITY; v.len()];
    for &s in sources {
        dist[s] = 0.0;
    }
    for _ in 0..v.len() {
        let mut changed = false;
        for &(a, b, len) in &edges {
            if dist[a] + len < dist[b] {
                dist[b] = dist[a] + len;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

fn rigid_matrix(translation: Vector3<f64>, rotation: Rotation3<f64>) -> Matrix4<f64> {
    Translation3::from(translation).to_homogeneous() * rotation.to_homogeneous()
}

fn oracles() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut edt_mismatch = 0;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let p = rng.random_range(0.05..0.9);
        let mut mask = Mask::from_fn(w, h, |_, _| rng.random_bool(p));
        mask.data[0] = true;
        let field = distance_transform(&mask).map_err(|e| e.to_string())?;
        if field.dist != brute_force_edt(&mask) {
            edt_mismatch += 1;
        }
    }

    let mut meshes = vec![grid(10, 10, 0.1), icosphere(1)];
    for _ in 0..8 {
        let base = if rng.random_bool(0.5) { icosphere(1) } else { grid(rng.random_range(3..=10), rng.random_range(3..=10), 0.2) };
        let moved = base.vertices().iter().map(|p| p + Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))).collect();
        meshes.push(base.with_positions(moved).map_err(|e| e.to_string())?);
    }
    let mut geo_mismatch = 0;
    let mut geo_cases = 0;
    for mesh in &meshes {
        assert!(mesh.vertex_count() <= 100);
        let adj = one_ring(mesh);
        for _ in 0..5 {
            let sources: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..mesh.vertex_count())).collect();
            let got = geodesic_from_set(mesh, &adj, &sources).map_err(|e| e.to_string())?;
            geo_cases += 1;
            if got.dist != bellman_ford(mesh, &sources) {
                geo_mismatch += 1;
            }
        }
    }

    let mut lbs_err = 0.0f64;
    for case in 0..50 {
        let axes = [vec![Axis::X, Axis::Y, Axis::Z], vec![Axis::Z], vec![Axis::Y, Axis::X]][case % 3].clone();
        let offset = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let skel = Skeleton::new(vec![Joint::new("root", None, offset, axes.clone())], Axis::Y).map_err(|e| e.to_string())?;
        let canonical = random_pose(&mut rng, skel.dof());
        let pose = random_pose(&mut rng, skel.dof());
        let hand = |p: &Pose| {
            let local = axes
                .iter()
                .zip(&p.rho)
                .fold(Rotation3::identity(), |acc, (a, &angle)| acc * Rotation3::from_axis_angle(&a.unit(), angle));
            rigid_matrix(Vector3::from(p.t), Rotation3::new(Vector3::from(p.alpha))) * rigid_matrix(offset, local)
        };
        let expected_map = hand(&pose) * hand(&canonical).try_inverse().unwrap();
        let inv = bind_transforms(&skel, &canonical).map_err(|e| e.to_string())?;
        let t = skinning_transforms(&skel, &inv, &pose).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let x = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let expected = expected_map.transform_point(&Point3::from(x)).coords;
            lbs_err = lbs_err.max((lbs(&x, &[1.0], &t).map_err(|e| e.to_string())? - expected).amax());
        }
    }

    let pass = edt_mismatch == 0 && geo_mismatch == 0 && lbs_err <= 1e-9;
    Ok((
        pass,
        format!(
            "EDT {edt_mismatch}/50 masks differ, geodesic {geo_mismatch}/{geo_cases} tables differ, single-bone LBS max error {lbs_err:.1e} (<= 1e-9)"
        ),
    ))
}

fn heat_sanity() -> Result<(bool, String), String> {
    let scene = ArmScene::new(SceneSpec::default()).map_err(|e| e.to_string())?;
    let mesh = &scene.template;
    let w = heat_diffusion_weights(mesh, &one_ring(mesh), &scene.skeleton, &scene.canonical, &HeatConfig::default()).map_err(|e| e.to_string())?;
    let simplex = w.check(1e-9).is_ok();
    let l = scene.spec.bone_length;
    let mut count = 0;
    let mut worst = f64::INFINITY;
    for (i, p) in mesh.vertices().iter().enumerate() {
        // distance along the arm to the nearest joint (shoulder at 0, elbow at l)
        let to_joint = p.x.abs().min((p.x - l).abs());
        if to_joint > 0.25 * l {
            let bone = if p.x < l { 0 } else { 1 };
            worst = worst.min(w.row(i)[bone]);
            count += 1;
        }
    }
    let pass = simplex && count > 0 && worst >= 0.9;
    Ok((pass, format!("{count} mid-shaft vertices, min dominant weight {worst:.4} (>= 0.9), rows on simplex: {simplex}")))
}

fn recovery(full: &Run, stat: &Run) -> Result<(bool, String), String> {
    let heat: Vec<EvalReport> = full
        .gt
        .heldout_poses
        .iter()
        .zip(&full.gt.heldout_meshes)
        .map(|(p, m)| evaluate(&full.scene.pose_with(&full.heat, p)?, m, EVAL_SAMPLES, 0))
        .collect::<skinfield::Result<_>>()
        .map_err(|e| e.to_string())?;
    let heat = summarize(&heat).chamfer;
    let (r_heat, r_static) = (full.chamfer / heat, full.chamfer / stat.chamfer);
    let budget = Duration::from_secs(30 * 60);
    let pass = r_heat <= 0.70 && r_static <= 0.85 && full.elapsed <= budget;
    Ok((
        pass,
        format!(
            "chamfer {:.5} vs initial weights {heat:.5} ({:.0}% <= 70%), vs static field {:.5} ({:.0}% <= 85%), desk run {} on {} threads (<= 1800s)",
            full.chamfer,
            100.0 * r_heat,
            stat.chamfer,
            100.0 * r_static,
            secs(full.elapsed),
            rayon::current_num_threads()
        ),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn resolution(run: &Run) -> Result<(bool, String), String> {
    let e = |e: skinfield::Error| e.to_string();
    let fine = ArmScene::new(SceneSpec {
        radial_segments: 2 * run.scene.spec.radial_segments,
        axial_segments: 2 * run.scene.spec.axial_segments,
        ..run.scene.spec.clone()
    })
    .map_err(e)?;
    let skel = &run.data.skeleton;
    let inv = bind_transforms(skel, &run.data.canonical).map_err(e)?;
    let mut worst = 0.0f64;
    for pose in &run.gt.heldout_poses {
        let w = query_field(&run.skin, fine.template.vertices(), pose, &skel.up()).map_err(e)?;
        let t = skinning_transforms(skel, &inv, pose).map_err(e)?;
        let moved = fine.template.vertices().iter().enumerate().map(|(i, p)| blend(p, w.row(i), &t.skinning)).collect();
        let fine_posed = fine.template.with_positions(moved).map_err(e)?;
        let base = pose_mesh(&run.data.template, skel, &run.data.canonical, &run.skin, pose).map_err(e)?;
        let c = evaluate(&fine_posed, &base, EVAL_SAMPLES, 0).map_err(e)?.chamfer;
        worst = worst.max(c / base.bounding_box_diagonal());
    }
    Ok((
        worst <= 0.01,
        format!(
            "{} -> {} vertices, worst held-out chamfer {:.3}% of bbox diagonal (<= 1%)",
            run.data.template.vertex_count(),
            fine.template.vertex_count(),
            100.0 * worst
        ),
    ))
}

fn regularizer_monotonicity() -> Result<(bool, String), String> {
    let e = |e: skinfield::Error| e.to_string();
    let scene = ArmScene::new(SceneSpec::default()).map_err(e)?;
    let mesh = &scene.template;
    let adj = one_ring(mesh);
    let heat = heat_diffusion_weights(mesh, &adj, &scene.skeleton, &scene.canonical, &HeatConfig::default()).map_err(e)?;
    let sets = derive_bone_sets(&heat, 0.95);
    let r = 3.0;
    let d_max = geodesic_diameter_estimate(mesh, &adj).map_err(e)?;
    let cost = SkinRegCost::new(mesh, &adj, &sets, d_max, r).map_err(e)?;
    let tables: Vec<Vec<f64>> = sets.assign.iter().map(|a| bellman_ford(mesh, a)).collect();
    let (mut cases, mut bad, mut worst) = (0, 0, 0.0f64);
    for (a, owned) in sets.assign.iter().enumerate() {
        for &i in owned {
            for (b, table) in tables.iter().enumerate() {
                let x = table[i] / d_max;
                if b == a || x < 0.2 {
                    continue;
                }
                let row = heat.row(i).to_vec();
                let mut moved = row.clone();
                moved[a] -= 0.1;
                moved[b] += 0.1;
                let (before, _) = skinning_reg_loss(&Batch::from_rows(&[row]), &[i], &cost).map_err(e)?;
                let (after, _) = skinning_reg_loss(&Batch::from_rows(&[moved]), &[i], &cost).map_err(e)?;
                let expected = 0.1 * x.powi(3);
                let err = ((after - before) - expected).abs() / expected;
                worst = worst.max(err);
                cases += 1;
                if !(after > before) || err > 1e-9 {
                    bad += 1;
                }
            }
        }
    }
    Ok((
        cases > 0 && bad == 0,
        format!("{cases} moves, {bad} violations, increase matches 0.1*(d/dmax)^3 to rel {worst:.1e} (<= 1e-9)"),
    ))
}

fn determinism(a: &Run, b: &Run) -> Result<(bool, String), String> {
    let same_ckpt = a.checkpoint == b.checkpoint;
    let ja = serde_json::to_string(&a.reports).map_err(|e| e.to_string())?;
    let jb = serde_json::to_string(&b.reports).map_err(|e| e.to_string())?;
    let same_eval = ja == jb;
    Ok((
        same_ckpt && same_eval,
        format!("checkpoints identical: {same_ckpt} ({} bytes), eval reports identical: {same_eval}", a.checkpoint.len()),
    ))
}

fn main() {
    let mut lines = Vec::new();
    lines.push(line(3, "gradient suite", gradient_suite()));
    lines.push(line(4, "oracle equivalence", oracles()));
    lines.push(line(5, "heat-diffusion sanity", heat_sanity()));
    lines.push(line(9, "regularizer monotonicity", regularizer_monotonicity()));

    let mut full = Vec::new();
    for seed in SEEDS {
        full.push(desk_run(seed, Variant::Full).map_err(|e| e.to_string()));
    }
    let repeat = desk_run(7, Variant::Full).map_err(|e| e.to_string());
    let stat = desk_run(7, Variant::Static).map_err(|e| e.to_string());
    let norend: Vec<_> = SEEDS.iter().map(|&s| desk_run(s, Variant::NoRendering).map_err(|e| e.to_string())).collect();

    let first = full[0].as_ref().map_err(Clone::clone);
    lines.push(line(
        1,
        "partition of unity",
        first.clone().and_then(|r| partition_of_unity(&r.skin, &r.scene)),
    ));
    lines.push(line(
        2,
        "rest-pose identity",
        first.clone().and_then(|r| rest_identity(&r.scene)),
    ));
    lines.push(line(
        6,
        "end-to-end recovery",
        first.clone().and_then(|f| recovery(f, stat.as_ref().map_err(Clone::clone)?)),
    ));
    let ablation = (|| -> Result<(bool, String), String> {
        let f: Vec<f64> = full.iter().map(|r| r.as_ref().map(|r| r.chamfer).map_err(Clone::clone)).collect::<Result<_, _>>()?;
        let n: Vec<f64> = norend.iter().map(|r| r.as_ref().map(|r| r.chamfer).map_err(Clone::clone)).collect::<Result<_, _>>()?;
        let (mf, mn) = (median(f.clone()), median(n.clone()));
        Ok((
            mn >= mf,
            format!("median chamfer without rendering {mn:.5} >= full {mf:.5} (seeds {SEEDS:?}: full {f:.5?}, without {n:.5?})"),
        ))
    })();
    lines.push(line(7, "stage ablation", ablation));
    lines.push(line(8, "multi-resolution", first.clone().and_then(resolution)));
    lines.push(line(
        10,
        "determinism",
        first.and_then(|a| determinism(a, repeat.as_ref().map_err(Clone::clone)?)),
    ));

    lines.sort_by_key(|l| l.id);
    let mut failed = 0;
    for l in &lines {
        println!("[{}] {:>2} {:<26} {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.name, l.detail);
        failed += usize::from(!l.pass);
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
