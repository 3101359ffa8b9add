//! `marktrack`: batch driver for marking, tracking, correction and evaluation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use marktrack_core::chunking::plan_chunks;
use marktrack_core::harness::{evaluate, generate_scene, marks_from_gt, write_scene, GroundTruth, MetricsReport, SceneSpec};
use marktrack_core::marking::{schedule_for_marks, schedule_mark_frames, MarkDocument};
use marktrack_core::media::{open_sequence, Video};
use marktrack_core::pipeline::{Progress, Project};
use marktrack_core::tracklets::TrackDocument;
use marktrack_core::Config;

#[derive(Parser)]
#[command(name = "marktrack", version, about = "Mark-driven batch multi-object tracking")]
struct Cli {
    /// Seed for every random choice; defaults to the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON file overriding engine constants.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the frames that need marks.
    MarkSchedule {
        manifest: PathBuf,
        /// Marks gathered so far; the schedule adapts to their count.
        #[arg(long)]
        marks: Option<PathBuf>,
    },
    /// Create a project directory for a video.
    Init {
        project: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        marks: Option<PathBuf>,
    },
    /// Replace the marks of a project.
    Marks { project: PathBuf, marks: PathBuf },
    /// Run foreground, detection, tracklet building and matching.
    Track {
        project: PathBuf,
        /// Also write the track document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the current review list as JSON.
    Reviews { project: PathBuf },
    /// Answer every review from ground truth.
    Simulate {
        project: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        match_dist: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_answers: usize,
        /// Write the answer transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Score a track document against ground truth.
    Eval {
        /// Track document, or a project directory.
        tracks: PathBuf,
        gt: PathBuf,
        /// Defaults to the GT body length.
        #[arg(long)]
        match_dist: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Render a synthetic scene with ground truth and simulated marks.
    Synth {
        /// TOML or JSON scene description.
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a project's tracks as CSV.
    Export {
        project: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API over a directory of projects.
    Serve {
        root: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<marktrack_core::Error>())
                .map_or("error", |c| c.code());
            let line = serde_json::json!({ "error": code, "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::MarkSchedule { manifest, marks } => {
            let video = open_sequence(&manifest)?;
            let plan = plan_chunks(video.frame_count(), &config.chunking)?;
            let marks = match marks {
                Some(p) => read_marks(&p)?,
                None => MarkDocument::new(vec![]),
            };
            let frames = schedule_for_marks(video.frame_count(), &plan.overlaps, &marks, &config.marking);
            writeln!(out, "{}", serde_json::to_string(&frames)?)?;
        }
        Command::Init { project, manifest, marks } => {
            let mut p = Project::create(&project, &manifest, config, seed)?;
            if let Some(m) = marks {
                p.set_marks(read_marks(&m)?)?;
            }
            writeln!(out, "{}", serde_json::to_string(&p.meta)?)?;
        }
        Command::Marks { project, marks } => {
            let mut p = Project::open(&project)?;
            p.set_marks(read_marks(&marks)?)?;
            writeln!(out, "{}", serde_json::to_string(&p.meta)?)?;
        }
        Command::Track { project, out: copy } => {
            let mut p = Project::open(&project)?;
            if cli.config.is_some() {
                p.config = config;
            }
            if let Some(s) = cli.seed {
                p.meta.seed = s;
            }
            let run = p.track(&print_progress)?;
            if let Some(c) = copy {
                std::fs::write(&c, run.document.to_json()).with_context(|| format!("writing {}", c.display()))?;
            }
            let summary = serde_json::json!({
                "tracks": p.tracks_path(),
                "tracklets": run.document.tracklets.len(),
                "initial_tracklets": run.initial.tracklets.len(),
                "chunks": run.chunks,
                "stitch_ties": run.stitch_ties.len(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Reviews { project } => {
            let p = Project::open(&project)?;
            let batch = serde_json::json!({ "token": p.batch_token(), "reviews": p.reviews()? });
            writeln!(out, "{}", serde_json::to_string_pretty(&batch)?)?;
        }
        Command::Simulate {
            project,
            gt,
            match_dist,
            max_answers,
            transcript,
        } => {
            let mut p = Project::open(&project)?;
            let gt = GroundTruth::load(&gt)?;
            let t = p.simulate(&gt, match_dist, max_answers)?;
            if let Some(path) = transcript {
                std::fs::write(&path, serde_json::to_string_pretty(&t)?).with_context(|| format!("writing {}", path.display()))?;
            }
            let playback_s = t.playback_frames() as f64 / p.config.harness.fps;
            writeln!(
                out,
                "reviews {}  annotations {}  playback {:.1} s",
                t.entries.len(),
                t.annotations(),
                playback_s
            )?;
            write_table(&mut out, &[("before", &t.initial), ("after", t.final_report())])?;
        }
        Command::Eval {
            tracks,
            gt,
            match_dist,
            json,
        } => {
            let doc = read_tracks(&tracks)?;
            let gt = GroundTruth::load(&gt)?;
            let report = evaluate(
                &doc.tracklets,
                &gt,
                match_dist.unwrap_or(gt.body_length),
                config.harness.id_return_window,
            );
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write_table(&mut out, &[("tracks", &report)])?;
            }
        }
        Command::Synth { spec, out: dir } => {
            let mut spec = SceneSpec::load(&spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let scene = generate_scene(&spec)?;
            let manifest = write_scene(&scene, &dir)?;
            let plan = plan_chunks(spec.frames, &config.chunking)?;
            let at_start = scene.gt.targets.iter().filter(|g| g.state(1).is_some()).count();
            let frames = schedule_mark_frames(spec.frames, &plan.overlaps, at_start.max(1), config.marking.min_total_marks);
            let marks = marks_from_gt(&scene.gt, &frames);
            let marks_path = dir.join("marks.json");
            std::fs::write(&marks_path, serde_json::to_string_pretty(&marks)?)
                .with_context(|| format!("writing {}", marks_path.display()))?;
            let summary = serde_json::json!({
                "manifest": manifest,
                "gt": dir.join("gt.json"),
                "marks": marks_path,
                "marked_frames": frames,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Command::Export { project, out: path } => {
            let p = Project::open(&project)?;
            match path {
                Some(path) => {
                    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    p.write_csv(std::io::BufWriter::new(f))?;
                }
                None => p.write_csv(&mut out)?,
            }
        }
        Command::Serve { root, port, host } => {
            drop(out);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(marktrack_service::serve(root, (host, port).into()))?;
        }
    }
    Ok(())
}

fn print_progress(pr: Progress) {
    eprintln!("{}", serde_json::json!({ "chunk": pr.chunk, "stage": pr.stage }));
}

fn read_marks(path: &Path) -> Result<MarkDocument> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing marks {}", path.display()))
}

fn read_tracks(path: &Path) -> Result<TrackDocument> {
    let file = if path.is_dir() { path.join("tracks.json") } else { path.to_path_buf() };
    if !file.is_file() {
        bail!("no track document at {}", file.display());
    }
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    Ok(TrackDocument::from_json(&text)?)
}

/// Metrics in the usual column order of tracking result tables.
fn write_table(out: &mut impl Write, rows: &[(&str, &MetricsReport)]) -> Result<()> {
    writeln!(
        out,
        "{:<10} {:>7} {:>6} {:>8} {:>8} {:>8} {:>6} {:>4} {:>4} {:>4}",
        "", "GT Cov", "FAF", "Pos Err", "FN Assoc", "ID Integ", "ID Sw", "MT", "PT", "ML"
    )?;
    for (name, r) in rows {
        writeln!(
            out,
            "{:<10} {:>7.3} {:>6.3} {:>8.2} {:>8} {:>8} {:>6} {:>4} {:>4} {:>4}",
            name, r.gt_cov, r.faf, r.avg_pos_error, r.fn_assoc, r.id_integ, r.ids, r.mt, r.pt, r.ml
        )?;
    }
    Ok(())
}
