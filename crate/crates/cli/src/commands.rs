use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use layoutkit::agents::remote::RemoteConfig;
use layoutkit::config::{BackendConfig, PipelineConfig};
use layoutkit::gen::{generate, GenOptions};
use layoutkit::grid_refine::{build_grid, refine};
use layoutkit::metrics::{score_scene, SceneScore};
use layoutkit::orchestrator::{group_render_suffix, Pipeline, SetupError, Synthesis, FINAL_RENDER_SUFFIX};
use layoutkit::render::{render_topdown, write_png, RenderOptions};
use layoutkit::scene::{load_scene, save_scene, Layout, Scene, SceneError};
use serde_json::json;

use crate::{BackendKind, Cli, Command, Common};

/// Exit 2: bad invocation, config or input. Exit 1: runtime failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Reading a scene fails as a usage error; the file is an input.
fn read_scene(path: &Path) -> Result<Scene, CliError> {
    load_scene(path).map_err(|e| match e {
        SceneError::Io { .. } => usage(format!("{e}\nsee `layoutkit --help`")),
        _ => usage(format!("{}: {e}", path.display())),
    })
}

fn scene_layout(scene: &Scene, path: &Path) -> Result<Layout, CliError> {
    scene
        .to_layout()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .ok_or_else(|| usage(format!("{}: scene has no layout block", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| runtime(format!("failed to write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| runtime(format!("failed to create {}: {e}", path.display())))
}

fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    match common.backend {
        Some(BackendKind::Mock) => config.backend = BackendConfig::Mock,
        Some(BackendKind::Remote) if !matches!(config.backend, BackendConfig::Remote(_)) => {
            config.backend = BackendConfig::Remote(RemoteConfig::default());
        }
        _ => {}
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn score_json(name: &str, score: &SceneScore) -> serde_json::Value {
    let mut v = serde_json::to_value(score).expect("score serializes");
    v.as_object_mut()
        .expect("score is an object")
        .insert("scene".into(), json!(name));
    v
}

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let common = cli.common;
    match cli.command {
        Command::Synth { scenes, jobs, no_render } => synth(&common, &scenes, jobs as usize, !no_render),
        Command::Refine {
            scene,
            report,
            grid_spacing,
        } => cmd_refine(&common, &scene, report.as_deref(), grid_spacing),
        Command::Eval { scenes, csv } => eval(&common, &scenes, csv.as_deref()),
        Command::Render { scene, grid, long_side } => cmd_render(&common, &scene, grid, long_side),
        Command::Gen {
            count,
            min_side,
            max_side,
            min_assets,
            max_assets,
        } => gen(
            &common,
            GenOptions {
                count: count as usize,
                seed: common.seed.unwrap_or(0),
                min_side,
                max_side,
                min_assets,
                max_assets,
                ..Default::default()
            },
        ),
    }
}

fn synth(common: &Common, paths: &[PathBuf], jobs: usize, render: bool) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let scenes: Vec<Scene> = paths.iter().map(|p| read_scene(p)).collect::<Result<_, _>>()?;
    let pipeline = Pipeline::from_config(config).map_err(|e| match e {
        SetupError::Config(e) => usage(e),
        SetupError::Backend(e) => usage(e),
    })?;
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    create_dir(&out_dir)?;

    let mut all_valid = true;
    let mut failures = 0;
    for (path, (scene, result)) in paths.iter().zip(scenes.iter().zip(pipeline.synthesize_many(&scenes, jobs))) {
        let name = stem(path);
        let base = |suffix: &str| out_dir.join(format!("{name}{suffix}"));
        match result {
            Ok(s) => {
                write_outputs(&s, scene, &name, &out_dir, pipeline.config().render.clone(), render)?;
                all_valid &= s.score.physically_valid();
                if common.quiet {
                    println!("{}", score_json(&name, &s.score));
                } else {
                    println!(
                        "{name}: collision {:.2}% oob {:.2}% pos {:.1}% rot {:.1}% deleted {} flagged {}/{} -> {}",
                        s.score.collision_rate,
                        s.score.oob_rate,
                        s.score.pos_proxy,
                        s.score.rot_proxy,
                        s.deleted.len(),
                        s.flagged,
                        s.checked,
                        base("-layout.json").display()
                    );
                }
            }
            Err(e) => {
                failures += 1;
                e.trace
                    .write(base("-trace.ndjson"))
                    .map_err(|w| runtime(format!("{name}: {e}; writing the partial trace also failed: {w}")))?;
                eprintln!("layoutkit: {name}: {e} (partial trace in {})", base("-trace.ndjson").display());
            }
        }
    }
    if failures > 0 {
        return Err(runtime(format!("{failures} of {} scenes failed", paths.len())));
    }
    Ok(if all_valid { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn write_outputs(
    s: &Synthesis,
    scene: &Scene,
    name: &str,
    dir: &Path,
    render_options: RenderOptions,
    render: bool,
) -> Result<(), CliError> {
    let base = |suffix: &str| dir.join(format!("{name}{suffix}"));
    let mut out_scene = scene.with_layout(&s.layout);
    out_scene.constraints = Some(s.constraints.clone());
    save_scene(&out_scene, base("-layout.json")).map_err(runtime)?;
    s.trace.write(base("-trace.ndjson")).map_err(runtime)?;
    let report = json!({
        "scene": name,
        "score": s.score,
        "groups": s.plan.groups,
        "deleted": s.deleted,
        "checked": s.checked,
        "flagged": s.flagged,
    });
    write_file(
        &base("-score.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    if render {
        for (i, layout) in s.group_layouts.iter().enumerate() {
            write_png(&render_topdown(layout, &render_options), base(&group_render_suffix(i + 1))).map_err(runtime)?;
        }
        write_png(&render_topdown(&s.layout, &render_options), base(FINAL_RENDER_SUFFIX)).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_refine(
    common: &Common,
    path: &Path,
    report_path: Option<&Path>,
    grid_spacing: Option<f64>,
) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let scene = read_scene(path)?;
    let layout = scene_layout(&scene, path)?;
    let constraints = scene.constraints.clone().unwrap_or_default();
    let grid = build_grid(&scene.room, grid_spacing.unwrap_or(config.grid_spacing)).map_err(usage)?;
    let (refined, report) = refine(&layout, &constraints, &grid);
    let score = score_scene(&refined, &constraints, &config.relations, report.deleted.len());
    let out_scene = scene.with_layout(&refined);
    match &common.out {
        Some(out) => save_scene(&out_scene, out).map_err(runtime)?,
        None if !common.quiet => print!("{}", out_scene.to_json()),
        None => {}
    }
    let report_json = json!({
        "moved": report.moved,
        "deleted": report.deleted,
        "grid_points_scanned": report.grid_points_scanned,
        "score": score,
    });
    if let Some(p) = report_path {
        write_file(p, serde_json::to_string_pretty(&report_json).expect("report serializes") + "\n")?;
    }
    if common.quiet {
        println!("{}", score_json(&stem(path), &score));
    } else {
        eprintln!(
            "{}: moved {}, deleted {}{}",
            stem(path),
            report.moved.len(),
            report.deleted.len(),
            if report.deleted.is_empty() {
                String::new()
            } else {
                format!(" ({})", report.deleted_names().join(", "))
            }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(common: &Common, paths: &[PathBuf], csv_path: Option<&Path>) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let mut rows = Vec::new();
    for path in paths {
        let scene = read_scene(path)?;
        let layout = scene_layout(&scene, path)?;
        let constraints = scene.constraints.clone().unwrap_or_default();
        let missing = scene.assets.len().saturating_sub(layout.len());
        let score = score_scene(&layout, &constraints, &config.relations, missing);
        if common.quiet {
            println!("{}", score_json(&stem(path), &score));
        } else {
            println!("{}", serde_json::to_string_pretty(&score_json(&stem(path), &score)).expect("serializes"));
        }
        rows.push((stem(path), layout.len(), score));
    }
    if let Some(p) = csv_path {
        let mut w = csv::Writer::from_path(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        let header = [
            "scene",
            "objects",
            "collision_rate",
            "oob_rate",
            "pos_proxy",
            "rot_proxy",
            "deleted_count",
        ];
        w.write_record(header).map_err(runtime)?;
        for (name, n, s) in rows {
            w.write_record([
                name,
                n.to_string(),
                format!("{:.4}", s.collision_rate),
                format!("{:.4}", s.oob_rate),
                format!("{:.4}", s.pos_proxy),
                format!("{:.4}", s.rot_proxy),
                s.deleted_count.to_string(),
            ])
            .map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(common: &Common, path: &Path, grid: bool, long_side: Option<u32>) -> Result<ExitCode, CliError> {
    let config = load_config(common)?;
    let scene = read_scene(path)?;
    let layout = scene
        .to_layout()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .unwrap_or_else(|| Layout::empty(scene.room));
    let mut options = config.render.clone();
    options.show_grid |= grid;
    if let Some(n) = long_side {
        options.long_side = n;
    }
    options.validate().map_err(usage)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| path.with_file_name(format!("{}.png", stem(path))));
    write_png(&render_topdown(&layout, &options), &out).map_err(runtime)?;
    if !common.quiet {
        eprintln!("wrote {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn gen(common: &Common, options: GenOptions) -> Result<ExitCode, CliError> {
    let scenes = generate(&options).map_err(usage)?;
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from("scenes"));
    create_dir(&out_dir)?;
    for (i, scene) in scenes.iter().enumerate() {
        let path = out_dir.join(format!("scene-{i:03}.json"));
        save_scene(scene, &path).map_err(runtime)?;
    }
    if !common.quiet {
        eprintln!("wrote {} scenes to {}", scenes.len(), out_dir.display());
    }
    Ok(ExitCode::SUCCESS)
}
