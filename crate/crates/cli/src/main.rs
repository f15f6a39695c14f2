//! Command-line surface: dataset synthesis, training, rendering,
//! identification, editing, evaluation, and gradient checking.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relume_core::colorspace::tone_curve_vec;
use relume_core::editing::{
    direct_relight, finetune_radiance, match_rays, EditSpec, EditedModel, EmissionEdit,
    FinetuneConfig,
};
use relume_core::error::Error;
use relume_core::io::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use relume_core::io::dataset::{load_dataset, write_mask_png, write_srgb_png};
use relume_core::io::pfm::write_pfm;
use relume_core::math::Vec3;
use relume_core::ops::{
    emission_strength_image, evaluate, identify_frame, render_decomposition, render_image,
};
use relume_core::oracle::scene::{make_box_scene, make_two_surface_scene, BoxSceneParams};
use relume_core::oracle::synth::{synthesize_dataset, SynthConfig};
use relume_core::renderer::shade::ColorMode;
use relume_core::renderer::transport::TransportConfig;
use relume_core::training::gradcheck::{
    gradient_check, probe_fields, stop_gradient_zeros, LossSelector, Probe,
};
use relume_core::training::trainer::{dataset_rays, train, TrainConfig};

#[derive(Parser)]
#[command(name = "relume", version, about = "Differentiable inverse rendering of emissive scenes")]
struct Cli {
    /// JSON config file overriding training defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SceneKind {
    Box,
    TwoSurface,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum RenderMode {
    Ldr,
    Hdr,
    Decomposition,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Box)]
    scene: SceneKind,
    #[arg(long, default_value_t = 8)]
    views: usize,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Emitter strength (HDR peak).
    #[arg(long, default_value_t = 5.0)]
    strength: f64,
    #[arg(long, default_value_t = 96)]
    spp: usize,
    #[arg(long, default_value_t = 2)]
    bounces: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (transforms.json + images).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long, value_enum, default_value_t = RenderMode::Ldr)]
    mode: RenderMode,
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// EditSpec JSON ({camera, sources: [{mask_path, hue, saturation, intensity}]}).
    #[arg(long)]
    spec: PathBuf,
    /// Direct one-bounce re-lighting instead of radiance fine-tuning.
    #[arg(long)]
    direct: bool,
    /// View to render after the edit.
    #[arg(long, default_value_t = 0)]
    view: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 64)]
    samples: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    grid: usize,
    /// Parameters probed per class.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize an oracle dataset (LDR on/off pairs, HDR, masks, poses).
    Synth(SynthArgs),
    /// Train the scene representation on a dataset.
    Train(TrainArgs),
    /// Render a view from a checkpoint.
    Render(RenderArgs),
    /// Emission-strength maps and uncertain-group masks per view.
    Identify(IdentifyArgs),
    /// Apply an emission edit (fine-tune or --direct).
    Edit(EditArgs),
    /// IoU / MSE / PSNR against dataset ground truth.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

fn load_train_config(cli: &Cli) -> Result<TrainConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&raw)?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = cli.seed;
    cfg.workers = cli.workers;
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<(), Error> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Synth(a) => {
            ensure_out(&cli.out)?;
            let scene = match a.scene {
                SceneKind::Box => make_box_scene(&BoxSceneParams {
                    emitter_strength: a.strength,
                    ..BoxSceneParams::default()
                }),
                SceneKind::TwoSurface => make_two_surface_scene(a.strength),
            };
            let cfg = SynthConfig {
                spp: a.spp,
                bounces: a.bounces,
                seed: cli.seed,
                ..SynthConfig::default()
            };
            synthesize_dataset(&scene, a.views, a.resolution, &cli.out, &cfg)?;
            println!(
                "wrote {} views ({} LDR images) to {}",
                a.views,
                2 * a.views,
                cli.out.display()
            );
        }
        Cmd::Train(a) => {
            ensure_out(&cli.out)?;
            let dataset = load_dataset(&a.data)?;
            let cfg = load_train_config(&cli)?;
            let log_path = cli.out.join("train_log.ndjson");
            let mut log_file =
                std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
            let out = train(&dataset, &cfg, Some(&cli.out), |rec| {
                use std::io::Write;
                let line = serde_json::to_string(rec).expect("log record serializes");
                let _ = writeln!(log_file, "{line}");
                eprintln!(
                    "step {} phase {} render {:.5} lts_s {:.5} lts_e {:.5} supp {:.6} |U| {} |C| {}",
                    rec.step,
                    rec.phase,
                    rec.loss_render,
                    rec.loss_lts_s,
                    rec.loss_lts_e,
                    rec.loss_supp,
                    rec.n_uncertain,
                    rec.n_certain
                );
            })?;
            println!(
                "trained {} steps; {} checkpoints under {}",
                cfg.total_steps(),
                out.checkpoints.len(),
                cli.out.display()
            );
        }
        Cmd::Render(a) => {
            ensure_out(&cli.out)?;
            let dataset = load_dataset(&a.data)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let frame = dataset
                .frames
                .get(a.view)
                .ok_or_else(|| Error::Config(format!("view {} out of range", a.view)))?;
            match a.mode {
                RenderMode::Ldr => {
                    let img = render_image(
                        &ck.fields,
                        &frame.camera,
                        &dataset.bbox,
                        ColorMode::Gamma,
                        frame.on,
                        a.samples,
                    );
                    let path = cli.out.join(format!("render_{:03}_ldr.png", a.view));
                    write_srgb_png(&path, dataset.width, dataset.height, &img)?;
                    println!("wrote {}", path.display());
                }
                RenderMode::Hdr => {
                    let img = render_image(
                        &ck.fields,
                        &frame.camera,
                        &dataset.bbox,
                        ColorMode::Hdr,
                        frame.on,
                        a.samples,
                    );
                    let path = cli.out.join(format!("render_{:03}_hdr.pfm", a.view));
                    write_pfm(&path, dataset.width, dataset.height, &img)?;
                    println!("wrote {}", path.display());
                }
                RenderMode::Decomposition => {
                    let buffers = render_decomposition(
                        &ck.fields,
                        &frame.camera,
                        a.samples.min(64),
                        32,
                        32,
                        cli.seed,
                    );
                    let picks: [(&str, fn(&relume_core::renderer::IlluminationBuffers) -> Vec3); 4] = [
                        ("env_direct", |b| b.env_direct),
                        ("env_indirect", |b| b.env_indirect),
                        ("emission", |b| b.emission),
                        ("emission_reflection", |b| b.emission_reflection),
                    ];
                    for (name, pick) in picks {
                        let img: Vec<Vec3> = buffers.iter().map(pick).collect();
                        let path = cli.out.join(format!("decomp_{:03}_{}.pfm", a.view, name));
                        write_pfm(&path, dataset.width, dataset.height, &img)?;
                        println!("wrote {}", path.display());
                    }
                }
            }
        }
        Cmd::Identify(a) => {
            ensure_out(&cli.out)?;
            let dataset = load_dataset(&a.data)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            for (fi, frame) in dataset.frames.iter().enumerate() {
                if !frame.on {
                    continue;
                }
                let strengths =
                    emission_strength_image(&ck.fields, &frame.camera, &dataset.bbox, 100);
                let img: Vec<Vec3> = strengths.iter().map(|&s| Vec3::splat(s)).collect();
                write_pfm(
                    &cli.out.join(format!("strength_{fi:03}.pfm")),
                    dataset.width,
                    dataset.height,
                    &img,
                )?;
                let mask = identify_frame(&ck.fields, &dataset, ck.groups.as_ref(), fi, 100);
                write_mask_png(
                    &cli.out.join(format!("identified_{fi:03}.png")),
                    dataset.width,
                    dataset.height,
                    &mask,
                )?;
            }
            println!("wrote identification maps to {}", cli.out.display());
        }
        Cmd::Edit(a) => {
            ensure_out(&cli.out)?;
            let dataset = load_dataset(&a.data)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let spec = EditSpec::load(&a.spec)?;
            let groups = ck.groups.clone().ok_or_else(|| {
                Error::EditSpec("checkpoint carries no ray groups; train first".into())
            })?;
            let rays = dataset_rays(&dataset);
            let hits = match_rays(&ck.fields, &groups, &rays, &spec, 100);
            let n_hit: usize = hits.iter().map(|h| h.len()).sum();
            println!("matched {n_hit} uncertain rays across {} sources", hits.len());
            let edit = EmissionEdit::build(&ck.fields, &spec, &hits);

            let frame = dataset
                .frames
                .get(a.view)
                .ok_or_else(|| Error::Config(format!("view {} out of range", a.view)))?;
            if a.direct {
                let w = dataset.width;
                let img: Vec<Vec3> = (0..w * dataset.height)
                    .map(|i| {
                        let ray = frame.camera.pixel_ray(i % w, i / w, &dataset.bbox, true);
                        let tcfg = TransportConfig::new(
                            32,
                            32,
                            relume_core::sampler::mix(&[cli.seed, i as u64]),
                        );
                        let out = direct_relight(&ck.fields, &edit, &ray, 64, &tcfg);
                        tone_curve_vec(out.total)
                    })
                    .collect();
                let path = cli.out.join(format!("edit_direct_{:03}.png", a.view));
                write_srgb_png(&path, w, dataset.height, &img)?;
                println!("wrote {}", path.display());
            } else {
                let mut fields = ck.fields.clone();
                let ft = FinetuneConfig { seed: cli.seed, ..FinetuneConfig::default() };
                let out = finetune_radiance(&mut fields, &edit, &rays, &ft)?;
                println!(
                    "fine-tuned {} steps; final loss {:.6}; parameter delta {:.4}",
                    ft.steps,
                    out.loss_curve.last().copied().unwrap_or(0.0),
                    out.param_delta
                );
                let ck_path = cli.out.join("checkpoint_edited.bin");
                save_checkpoint(
                    &ck_path,
                    &Checkpoint {
                        fields: fields.clone(),
                        groups: Some(groups),
                        step: ck.step,
                        config_json: ck.config_json.clone(),
                    },
                )?;
                let model = EditedModel { fields: &fields, edit: &edit };
                let w = dataset.width;
                let img: Vec<Vec3> = (0..w * dataset.height)
                    .map(|i| {
                        let ray = frame.camera.pixel_ray(i % w, i / w, &dataset.bbox, true);
                        let rr = relume_core::renderer::shade::render_ray(
                            &model,
                            None,
                            &ray,
                            64,
                            relume_core::renderer::Strata::Midpoint,
                        );
                        rr.c_gamma
                    })
                    .collect();
                let path = cli.out.join(format!("edit_finetuned_{:03}.png", a.view));
                write_srgb_png(&path, w, dataset.height, &img)?;
                println!("wrote {} and {}", path.display(), ck_path.display());
            }
        }
        Cmd::Eval(a) => {
            let dataset = load_dataset(&a.data)?;
            let ck = load_checkpoint(&a.checkpoint)?;
            let report = evaluate(&ck.fields, &dataset, ck.groups.as_ref(), a.samples);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Gradcheck(a) => {
            let fields = probe_fields(a.grid, cli.seed);
            let probe = Probe::build(&fields, 4, 16, 4, cli.seed.wrapping_add(42));
            let mut worst: f64 = 0.0;
            for sel in LossSelector::ALL {
                let report = gradient_check(&fields, &probe, sel, a.n, cli.seed.wrapping_add(7));
                println!("{:<16} max rel err {:.3e}", report.loss, report.max_rel_err);
                worst = worst.max(report.max_rel_err);
            }
            let mut sg_clean = true;
            for (name, clean) in stop_gradient_zeros(&fields, &probe) {
                if !clean {
                    println!("stop-gradient leak: {name}");
                    sg_clean = false;
                }
            }
            if worst > a.tolerance || !sg_clean {
                return Err(Error::NonFiniteLoss {
                    step: 0,
                    diagnostic: format!("gradient check failed: worst rel err {worst:.3e}"),
                });
            }
            println!("gradcheck passed (worst rel err {worst:.3e})");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFiniteLoss { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
