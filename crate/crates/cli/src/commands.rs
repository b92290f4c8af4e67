use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde::Serialize;

use skinfield::geometry::{load_mesh, write_obj};
use skinfield::kinematics::Skeleton;
use skinfield::metrics::{evaluate, summarize, EvalSummary};
use skinfield::skinning::{heat_diffusion_weights, read_weights_bin, read_weights_json, weights_to_json, write_weights_bin, SkinWeights};
use skinfield::synthetic::{make_arm_scene, SceneSpec};
use skinfield::training::{pose_mesh, Checkpoint, Dataset, DirObserver, PoseFile, Prepared, TrainConfig, Trainer};
use skinfield::Error;

use crate::manifest::{manifest_path, RunManifest};
use crate::{Cli, Command, Global};

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth { out } => synth(g, out),
        Command::InitSkin { data, out } => init_skin(g, data, out),
        Command::Train {
            data,
            out,
            desk,
            stage,
            init,
            resume,
            log_every,
        } => train(g, data, out, *desk, stage.clone(), init.as_deref(), resume.as_deref(), *log_every),
        Command::Pose {
            checkpoint,
            data,
            poses,
            out,
        } => pose(g, checkpoint, data, poses, out),
        Command::Eval { pred, gt, out, samples } => eval(g, pred, gt, out.as_deref(), *samples),
        Command::Gradcheck { out } => gradcheck(g, out.as_deref()),
    }
}

/// Output locations must sit in an existing directory.
fn check_parent(out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("output directory {} does not exist", parent.display())).into());
        }
    }
    Ok(())
}

fn create_out_dir(out: &Path) -> Result<()> {
    check_parent(out)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn train_config(g: &Global) -> Result<TrainConfig> {
    let mut cfg = match &g.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= g.deterministic;
    Ok(cfg)
}

fn synth(g: &Global, out: &Path) -> Result<ExitCode> {
    let mut spec = match &g.config {
        Some(p) => SceneSpec::load(p)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let mut manifest = RunManifest::start(serde_json::to_value(&spec)?, Some(spec.seed), g.deterministic);
    if let Some(p) = &g.config {
        manifest.input(p)?;
    }
    create_out_dir(out)?;
    let (scene, gt) = make_arm_scene(spec)?;
    scene.write_dataset(out, &gt)?;
    log::info!("wrote {} training and {} held-out frames to {}", gt.train_poses.len(), gt.heldout_poses.len(), out.display());
    manifest.finish(&manifest_path(out, true))?;
    Ok(ExitCode::SUCCESS)
}

/// Template, skeleton and canonical pose of a dataset directory, with the
/// pose checked against the skeleton.
fn load_rig(data: &Path) -> Result<(skinfield::geometry::TriMesh, Skeleton, skinfield::kinematics::Pose)> {
    let template = load_mesh(data.join("template.obj"))?;
    let skeleton = Skeleton::load(data.join("skeleton.json"))?;
    let canonical = PoseFile::load(data.join("poses.json"))?.canonical;
    if canonical.rho.len() != skeleton.dof() {
        return Err(Error::DimensionMismatch {
            what: "canonical pose joint angles",
            expected: skeleton.dof(),
            got: canonical.rho.len(),
        }
        .into());
    }
    Ok((template, skeleton, canonical))
}

fn init_skin(g: &Global, data: &Path, out: &Path) -> Result<ExitCode> {
    let cfg = train_config(g)?;
    let mut manifest = RunManifest::start(serde_json::to_value(&cfg.heat)?, None, g.deterministic);
    for f in ["template.obj", "skeleton.json", "poses.json"] {
        manifest.input(&data.join(f))?;
    }
    check_parent(out)?;
    let (template, skeleton, canonical) = load_rig(data)?;
    let adj = skinfield::geometry::one_ring(&template);
    let w = heat_diffusion_weights(&template, &adj, &skeleton, &canonical, &cfg.heat)?;
    save_weights(&w, out)?;
    log::info!("wrote {}x{} weights to {}", w.vertex_count(), w.joint_count(), out.display());
    manifest.finish(&manifest_path(out, false))?;
    Ok(ExitCode::SUCCESS)
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "json")
}

fn save_weights(w: &SkinWeights, out: &Path) -> Result<()> {
    if is_json(out) {
        std::fs::write(out, weights_to_json(w)).with_context(|| format!("writing {}", out.display()))
    } else {
        Ok(write_weights_bin(w, out)?)
    }
}

fn load_weights(path: &Path) -> Result<SkinWeights> {
    if is_json(path) {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(read_weights_json(&text)?)
    } else {
        Ok(read_weights_bin(path)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn train(
    g: &Global,
    data_dir: &Path,
    out: &Path,
    desk: bool,
    stages: std::ops::RangeInclusive<u8>,
    init: Option<&Path>,
    resume: Option<&Path>,
    log_every: u64,
) -> Result<ExitCode> {
    let mut cfg = train_config(g)?;
    if desk {
        cfg.stages = TrainConfig::DESK_STAGES;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::start(serde_json::to_value(&cfg)?, Some(cfg.seed), cfg.deterministic);
    manifest.input(data_dir)?;
    for p in g.config.iter().map(|p| p.as_path()).chain(init).chain(resume) {
        manifest.input(p)?;
    }
    create_out_dir(out)?;

    let data = Dataset::load(data_dir, cfg.frame_stride)?;
    let init = init.map(load_weights).transpose()?;
    let prep = Prepared::new(&data, &cfg, init)?;
    let start = *stages.start();
    let resume = resume.map(Path::to_path_buf).or_else(|| (start > 1).then(|| DirObserver::checkpoint_path(out, start - 1)));
    let mut trainer = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load_for_resume(&p, &cfg.hash()).with_context(|| format!("resuming from {}", p.display()))?;
            if ckpt.stage + 1 < start {
                return Err(Error::InvalidArgument(format!("checkpoint {} ends at stage {}, cannot start at stage {start}", p.display(), ckpt.stage)).into());
            }
            Trainer::resume(&data, cfg.clone(), prep, ckpt)?
        }
        None => Trainer::new(&data, cfg.clone(), prep)?,
    };
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).with_context(|| format!("writing {}", cfg_path.display()))?;
    let mut obs = DirObserver::new(out, log_every)?;
    let t0 = std::time::Instant::now();
    trainer.run(stages.clone(), &mut obs)?;
    log::info!("stages {stages:?} finished in {:.1} s", t0.elapsed().as_secs_f64());
    manifest.finish(&manifest_path(out, true))?;
    Ok(ExitCode::SUCCESS)
}

fn pose(g: &Global, checkpoint: &Path, data: &Path, poses: &Path, out: &Path) -> Result<ExitCode> {
    let mut manifest = RunManifest::start(serde_json::Value::Null, g.seed, g.deterministic);
    for p in [checkpoint, poses, &data.join("template.obj"), &data.join("skeleton.json"), &data.join("poses.json")] {
        manifest.input(p)?;
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let (template, skeleton, canonical) = load_rig(data)?;
    let frames = PoseFile::load(poses)?.frames;
    let single = out.extension().is_some_and(|e| e == "obj");
    if single {
        if frames.len() != 1 {
            return Err(Error::InvalidArgument(format!("{} holds {} poses; give a directory to write them all", poses.display(), frames.len())).into());
        }
        check_parent(out)?;
        write_obj(&pose_mesh(&template, &skeleton, &canonical, &ckpt.model.skin, &frames[0])?, out)?;
    } else {
        create_out_dir(out)?;
        for (i, p) in frames.iter().enumerate() {
            write_obj(&pose_mesh(&template, &skeleton, &canonical, &ckpt.model.skin, p)?, out.join(format!("f{i}.obj")))?;
        }
    }
    log::info!("posed {} frames", frames.len());
    manifest.finish(&manifest_path(out, !single))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct FrameEval {
    name: String,
    chamfer: f64,
    m2s: f64,
    s2m: f64,
    m2s_max: f64,
    s2m_max: f64,
}

#[derive(Debug, Serialize)]
struct EvalFile {
    summary: EvalSummary,
    frames: Vec<FrameEval>,
}

fn obj_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".obj") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn eval(g: &Global, pred: &Path, gt: &Path, out: Option<&Path>, samples: usize) -> Result<ExitCode> {
    let mut manifest = RunManifest::start(serde_json::json!({ "samples": samples }), g.seed, g.deterministic);
    manifest.input(pred)?;
    manifest.input(gt)?;
    let names = obj_names(pred)?;
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no .obj files in {}", pred.display())).into());
    }
    let mut reports = Vec::new();
    let mut frames = Vec::new();
    for name in names {
        let reference = gt.join(&name);
        if !reference.is_file() {
            return Err(Error::InvalidArgument(format!("no reference mesh {} for {name}", reference.display())).into());
        }
        let r = evaluate(&load_mesh(pred.join(&name))?, &load_mesh(&reference)?, samples, g.seed.unwrap_or(0))?;
        frames.push(FrameEval {
            name,
            chamfer: r.chamfer,
            m2s: r.m2s,
            s2m: r.s2m,
            m2s_max: r.m2s_max,
            s2m_max: r.s2m_max,
        });
        reports.push(r);
    }
    let report = EvalFile {
        summary: summarize(&reports),
        frames,
    };
    let text = serde_json::to_string_pretty(&report)?;
    println!("{}", serde_json::to_string(&report.summary)?);
    if let Some(out) = out {
        check_parent(out)?;
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
        manifest.finish(&manifest_path(out, false))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(g: &Global, out: Option<&Path>) -> Result<ExitCode> {
    let seed = g.seed.unwrap_or(0);
    let manifest = RunManifest::start(serde_json::Value::Null, Some(seed), g.deterministic);
    let reports = skinfield::gradcheck::run_all(seed)?;
    let lines: Vec<String> = reports.iter().map(ToString::to_string).collect();
    for l in &lines {
        println!("{l}");
    }
    let ok = reports.iter().all(|r| r.passed());
    if let Some(out) = out {
        check_parent(out)?;
        std::fs::write(out, lines.join("\n") + "\n").with_context(|| format!("writing {}", out.display()))?;
        manifest.finish(&manifest_path(out, false))?;
    }
    if !ok {
        eprintln!("error: gradient check failed");
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}
