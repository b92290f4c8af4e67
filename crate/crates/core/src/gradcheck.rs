//! Central finite-difference checks of every analytic gradient used in
//! training, on small instances.
//!
//! Each suite draws at least [`MIN_PROBES`] random coordinates, perturbs
//! them by `±h` and compares `(f(x+h) - f(x-h)) / 2h` with the analytic
//! derivative using the relative error
//! `|a - n| / max(|a|, |n|, REL_FLOOR)`.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::primitives::icosphere;
use crate::geometry::{one_ring, Vec3};
use crate::kinematics::{NormalizedPose, Pose};
use crate::losses::{laplacian_loss, part_loss, rendering_loss, silhouette_loss_for, skinning_reg_loss, SkinRegCost};
use crate::nn::{AlbedoNet, Batch, GradTape, MlpGrads, MlpParams, NetConfig, OutputMode, ShadowNet, SkinNet};
use crate::render::{contour_vertices, distance_transform, rasterize, Camera, ColorImage, Mask, NO_FACE};
use crate::skinning::SkinWeights;

pub const MIN_PROBES: usize = 100;
/// Tolerance for smooth terms.
pub const SMOOTH_TOL: f64 = 1e-3;
/// Tolerance for terms coupled to the rasterizer.
pub const RASTER_TOL: f64 = 1e-2;
/// Below this magnitude gradients are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub probes: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.probes >= MIN_PROBES
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<18} {:>4} probes  max rel err {:.2e}  tol {:.0e}  {}",
            self.name,
            self.probes,
            self.max_rel_error,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

struct Tally {
    report: SuiteReport,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            report: SuiteReport {
                name,
                probes: 0,
                failures: 0,
                max_rel_error: 0.0,
                tolerance,
            },
        }
    }

    fn add(&mut self, analytic: f64, numeric: f64) {
        let e = rel_error(analytic, numeric);
        let r = &mut self.report;
        r.probes += 1;
        // NaN counts as a failure
        if !(e <= r.tolerance) {
            r.failures += 1;
        }
        r.max_rel_error = if e.is_nan() { f64::NAN } else { r.max_rel_error.max(e) };
    }
}

/// Runs every suite with the given seed.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        skin_net(seed)?,
        albedo_net(seed)?,
        shadow_net(seed)?,
        laplacian(seed)?,
        skinning_regularizer(seed)?,
        part(seed)?,
        rendering_colors(seed)?,
        raster_positions(seed)?,
        silhouette_positions(seed)?,
    ])
}

fn small_net() -> NetConfig {
    NetConfig {
        hidden: vec![8, 8, 8, 8, 8],
        // a larger head keeps the output gradients well above the f64 noise
        head_scale: 1.0,
        ..NetConfig::default()
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Batch {
    Batch::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn dot(a: &Batch, b: &Batch) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Perturbs stored `f32` parameters; the step actually taken is read back
/// so rounding of the stored value does not bias the quotient.
fn check_params(
    tally: &mut Tally,
    rng: &mut ChaCha8Rng,
    params: &mut MlpParams,
    grads: &MlpGrads,
    h: f32,
    mut f: impl FnMut(&MlpParams) -> Result<f64>,
) -> Result<()> {
    for _ in 0..MIN_PROBES {
        let idx = rng.random_range(0..params.param_count());
        let p0 = params.get(idx);
        let step = h * p0.abs().max(1.0);
        params.set(idx, p0 + step);
        let (up, fp) = (params.get(idx), f(params)?);
        params.set(idx, p0 - step);
        let (down, fm) = (params.get(idx), f(params)?);
        params.set(idx, p0);
        tally.add(grads.get(idx), (fp - fm) / (up as f64 - down as f64));
    }
    Ok(())
}

pub fn skin_net(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SkinNet::new(&small_net(), 3, 7, true, seed);
    let points = random_points(&mut rng, 6);
    let pose = NormalizedPose {
        values: (0..7).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let probe = random_batch(&mut rng, points.len(), 3);
    let mlp = net.params.compile();
    let mut tape = GradTape::new();
    let w = net.forward(&mlp, &points, &pose, Some(&mut tape))?;
    let grads = net.backward(&mlp, &mut tape, &w, &probe)?;
    let mut tally = Tally::new("skin net", SMOOTH_TOL);
    let shell = net.clone();
    check_params(&mut tally, &mut rng, &mut net.params, &grads, 1e-4, |p| {
        Ok(dot(&shell.forward(&p.compile(), &points, &pose, None)?, &probe))
    })?;
    Ok(tally.report)
}

pub fn albedo_net(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let mut net = AlbedoNet::new(&small_net(), seed);
    let points = random_points(&mut rng, 6);
    let probe = random_batch(&mut rng, points.len(), 3);
    let mlp = net.params.compile();
    let mut tape = GradTape::new();
    net.forward(&mlp, &points, OutputMode::Training, Some(&mut tape))?;
    let grads = net.backward(&mlp, &mut tape, &probe)?;
    let mut tally = Tally::new("albedo net", SMOOTH_TOL);
    let shell = net.clone();
    check_params(&mut tally, &mut rng, &mut net.params, &grads, 1e-4, |p| {
        Ok(dot(&shell.forward(&p.compile(), &points, OutputMode::Training, None)?, &probe))
    })?;
    Ok(tally.report)
}

pub fn shadow_net(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let mut net = ShadowNet::new(&small_net(), 7, seed);
    let points = random_points(&mut rng, 6);
    let normals: Vec<Vec3> = random_points(&mut rng, 6).iter().map(|n| n.normalize()).collect();
    let dirs: Vec<Vec3> = random_points(&mut rng, 6).iter().map(|n| n.normalize()).collect();
    let pose = Pose::from_slice(&(0..7).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())?;
    let probe = random_batch(&mut rng, points.len(), 1);
    let mlp = net.params.compile();
    let mut tape = GradTape::new();
    let s = net.forward(&mlp, &points, &pose, &normals, &dirs, Some(&mut tape))?;
    let grads = net.backward(&mlp, &mut tape, &s, &probe)?;
    let mut tally = Tally::new("shadow net", SMOOTH_TOL);
    let shell = net.clone();
    check_params(&mut tally, &mut rng, &mut net.params, &grads, 1e-4, |p| {
        Ok(dot(&shell.forward(&p.compile(), &points, &pose, &normals, &dirs, None)?, &probe))
    })?;
    Ok(tally.report)
}

fn check_positions(
    tally: &mut Tally,
    rng: &mut ChaCha8Rng,
    positions: &[Vec3],
    candidates: &[usize],
    grad: &[Vec3],
    h: f64,
    mut f: impl FnMut(&[Vec3]) -> Result<f64>,
) -> Result<()> {
    let mut p = positions.to_vec();
    for _ in 0..MIN_PROBES {
        let i = candidates[rng.random_range(0..candidates.len())];
        let a = rng.random_range(0..3);
        p[i][a] = positions[i][a] + h;
        let fp = f(&p)?;
        p[i][a] = positions[i][a] - h;
        let fm = f(&p)?;
        p[i][a] = positions[i][a];
        tally.add(grad[i][a], (fp - fm) / (2.0 * h));
    }
    Ok(())
}

fn jittered_sphere(rng: &mut ChaCha8Rng) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mesh = icosphere(1);
    let p = mesh.vertices().iter().map(|v| v * rng.random_range(0.8..1.2)).collect();
    (p, mesh.faces().to_vec())
}

pub fn laplacian(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mesh = icosphere(1);
    let adj = one_ring(&mesh);
    let (p, _) = jittered_sphere(&mut rng);
    let (_, grad) = laplacian_loss(&p, &adj)?;
    let all: Vec<usize> = (0..p.len()).collect();
    let mut tally = Tally::new("laplacian", SMOOTH_TOL);
    check_positions(&mut tally, &mut rng, &p, &all, &grad, 1e-5, |q| Ok(laplacian_loss(q, &adj)?.0))?;
    Ok(tally.report)
}

fn random_simplex_rows(rng: &mut ChaCha8Rng, rows: usize, joints: usize) -> Batch {
    let mut b = Batch::zeros(rows, joints);
    for r in 0..rows {
        let raw: Vec<f64> = (0..joints).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        b.row_mut(r).iter_mut().zip(&raw).for_each(|(o, v)| *o = v / s);
    }
    b
}

fn check_weights(
    tally: &mut Tally,
    rng: &mut ChaCha8Rng,
    w: &Batch,
    grad: &Batch,
    h: f64,
    mut f: impl FnMut(&Batch) -> Result<f64>,
) -> Result<()> {
    let mut q = w.clone();
    for _ in 0..MIN_PROBES {
        let k = rng.random_range(0..w.as_slice().len());
        q.as_mut_slice()[k] = w.as_slice()[k] + h;
        let fp = f(&q)?;
        q.as_mut_slice()[k] = w.as_slice()[k] - h;
        let fm = f(&q)?;
        q.as_mut_slice()[k] = w.as_slice()[k];
        tally.add(grad.as_slice()[k], (fp - fm) / (2.0 * h));
    }
    Ok(())
}

pub fn skinning_regularizer(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
    let (n, j) = (20, 3);
    let distances: Vec<Vec<f64>> = (0..j).map(|_| (0..n).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
    let cost = SkinRegCost::from_distances(&distances, 2.0, 3.0)?;
    let ids: Vec<usize> = (0..n).rev().collect();
    let w = random_simplex_rows(&mut rng, n, j);
    let (_, grad) = skinning_reg_loss(&w, &ids, &cost)?;
    let mut tally = Tally::new("skin regularizer", SMOOTH_TOL);
    check_weights(&mut tally, &mut rng, &w, &grad, 1e-5, |q| Ok(skinning_reg_loss(q, &ids, &cost)?.0))?;
    Ok(tally.report)
}

pub fn part(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    let (n, j) = (20, 3);
    let init = random_simplex_rows(&mut rng, n, j);
    let init = SkinWeights::new(n, j, init.into_vec())?;
    let set: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
    let ids: Vec<usize> = (0..n).collect();
    let w = random_simplex_rows(&mut rng, n, j);
    let (_, grad) = part_loss(&w, &ids, &init, &set)?;
    let mut tally = Tally::new("part", SMOOTH_TOL);
    check_weights(&mut tally, &mut rng, &w, &grad, 1e-5, |q| Ok(part_loss(q, &ids, &init, &set)?.0))?;
    Ok(tally.report)
}

fn test_camera() -> Result<Camera> {
    Camera::look_at(Vec3::new(0.3, 0.4, 4.0), Vec3::zeros(), Vec3::y(), 40.0, 48, 48)
}

pub fn rendering_colors(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
    let cam = test_camera()?;
    let (p, faces) = jittered_sphere(&mut rng);
    let colors: Vec<Vec3> = (0..p.len()).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    let out = rasterize(&p, &faces, &colors, &cam);
    let target = ColorImage {
        width: cam.width,
        height: cam.height,
        data: (0..cam.width * cam.height).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect(),
    };
    let mask = Mask::from_fn(cam.width, cam.height, |x, y| (x as f64 - 22.0).powi(2) + (y as f64 - 25.0).powi(2) < 220.0);
    let loss = |c: &[Vec3]| -> Result<f64> {
        let img = rasterize(&p, &faces, c, &cam);
        Ok(rendering_loss(&[(&img.color, &img.coverage)], &[(&target, &mask)])?.0)
    };
    let (_, dcolor) = rendering_loss(&[(&out.color, &out.coverage)], &[(&target, &mask)])?;
    let grad = out.backward(&p, &faces, &colors, &cam, &dcolor[0]).colors;
    let visible: Vec<usize> = (0..p.len()).filter(|&i| grad[i] != Vec3::zeros()).collect();
    let mut tally = Tally::new("rendering colors", RASTER_TOL);
    // the L1 kink is hit only when a probe flips the sign of a residual,
    // which a small step on random targets practically never does
    check_positions(&mut tally, &mut rng, &colors, &visible, &grad, 1e-7, loss)?;
    Ok(tally.report)
}

/// Screen-space barycentric interpolation with the face assignment of a
/// reference rasterization held fixed.
fn frozen_interpolation(p: &[Vec3], faces: &[[usize; 3]], colors: &[Vec3], cam: &Camera, face_of: &[u32], weights: &[Vec3]) -> Result<f64> {
    let area = |a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>| 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    let mut total = 0.0;
    for (k, &f) in face_of.iter().enumerate() {
        if f == NO_FACE {
            continue;
        }
        let [i, j, l] = faces[f as usize];
        let q = |v: usize| cam.project(&p[v]).map(|s| Vector2::new(s.u, s.v));
        let (a, b, c) = (q(i)?, q(j)?, q(l)?);
        let px = Vector2::new((k % cam.width) as f64, (k / cam.width) as f64);
        let s = area(a, b, c);
        let w = [area(px, b, c) / s, area(a, px, c) / s, area(a, b, px) / s];
        total += weights[k].dot(&(colors[i] * w[0] + colors[j] * w[1] + colors[l] * w[2]));
    }
    Ok(total)
}

pub fn raster_positions(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
    let cam = test_camera()?;
    let (p, faces) = jittered_sphere(&mut rng);
    let colors: Vec<Vec3> = (0..p.len()).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    let out = rasterize(&p, &faces, &colors, &cam);
    let weights: Vec<Vec3> = (0..out.face.len()).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let grad = out.backward(&p, &faces, &colors, &cam, &weights).positions;
    let visible: Vec<usize> = (0..p.len()).filter(|&i| grad[i] != Vec3::zeros()).collect();
    let mut tally = Tally::new("raster positions", RASTER_TOL);
    check_positions(&mut tally, &mut rng, &p, &visible, &grad, 1e-6, |q| {
        frozen_interpolation(q, &faces, &colors, &cam, &out.face, &weights)
    })?;
    Ok(tally.report)
}

pub fn silhouette_positions(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 8);
    let cam = test_camera()?;
    let (p, faces) = jittered_sphere(&mut rng);
    let mask = Mask::from_fn(cam.width, cam.height, |x, y| (x as f64 - 21.0).powi(2) + (y as f64 - 26.0).powi(2) < 120.0);
    let field = distance_transform(&mask)?;
    let contour = contour_vertices(&p, &faces, &cam);
    let grad = silhouette_loss_for(&p, &contour, &cam, &field)?.grad;
    let mut tally = Tally::new("silhouette", RASTER_TOL);
    // steps far below a pixel keep the bilinear cell and nearest-vertex
    // assignments fixed
    check_positions(&mut tally, &mut rng, &p, &contour, &grad, 1e-7, |q| {
        Ok(silhouette_loss_for(q, &contour, &cam, &field)?.value())
    })?;
    Ok(tally.report)
}
