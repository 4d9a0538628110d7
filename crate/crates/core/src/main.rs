//! Pipeline CLI: ingest, train, evaluate, conflicts. Stages communicate
//! only through files in the configured output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use traj_conflict::config::{DataConfig, PredictorKind, RunConfig};
use traj_conflict::conflict::{
    aggregate, min_ttc_events, scan_conflicts, timeline_events, write_events_csv,
    write_heatmap_csv, ConflictMode, Extent, ScanParams, TtcSummary,
};
use traj_conflict::data::synthetic::generate_synthetic;
use traj_conflict::data::{
    filter_stationary, ingest_csv, read_samples_csv, split_dataset, window_sequences,
    write_samples_csv, Trajectory,
};
use traj_conflict::error::{Error, Result};
use traj_conflict::eval::{compare_predictors, format_report_table, write_report_csv};
use traj_conflict::predict::lstm::train::{load_model, save_model, train_seq2seq};
use traj_conflict::predict::probabilistic::{fit_probabilistic, ProbModel};
use traj_conflict::predict::{ConstantVelocity, Predictor};

#[derive(Parser)]
#[command(name = "traj-conflict", version, about = "Trajectory prediction and TTC conflict analysis")]
struct Cli {
    /// Print the full default configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Load or synthesize trajectories and write windowed samples.
    Ingest {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Train the sequence model and fit the probabilistic model.
    Train {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Compare predictors on the held-out test set.
    Evaluate {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Scan trajectories for TTC conflicts and export summaries.
    Conflicts {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn load_trajectories(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    match &cfg.data {
        DataConfig::Csv { path, mapping } => {
            let (trajs, _) = ingest_csv(path, mapping)?;
            Ok(trajs)
        }
        DataConfig::Synthetic { n_vehicles, noise_std_ft, seed, spec } => {
            generate_synthetic(spec, *n_vehicles, *noise_std_ft, *seed)
        }
    }
}

fn samples_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("samples.csv")
}

fn read_samples(cfg: &RunConfig) -> Result<Vec<traj_conflict::data::SequenceSample>> {
    let path = samples_path(cfg);
    let file = File::open(&path).map_err(|e| {
        Error::Usage(format!("cannot open {} (run `ingest` first): {e}", path.display()))
    })?;
    read_samples_csv(std::io::BufReader::new(file))
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let trajs = load_trajectories(cfg)?;
    let mut stationary = 0usize;
    let mut moving = 0usize;
    for t in &trajs {
        for w in &t.waypoints {
            if w.speed_mph <= cfg.filter.speed_eps_mph {
                stationary += 1;
            } else {
                moving += 1;
            }
        }
    }
    let total = (stationary + moving).max(1);
    let mut samples = Vec::new();
    for t in &trajs {
        for seg in filter_stationary(t, cfg.filter.speed_eps_mph, cfg.filter.min_run_frames) {
            samples.extend(window_sequences(
                &seg,
                cfg.window.in_steps,
                cfg.window.out_steps,
                cfg.window.stride_frames,
            ));
        }
    }
    cfg.write_resolved()?;
    let path = samples_path(cfg);
    write_samples_csv(BufWriter::new(File::create(&path)?), &samples)?;
    println!(
        "waypoints: {} stationary, {} moving (ratio {:.2}/{:.2})",
        stationary,
        moving,
        stationary as f64 / total as f64,
        moving as f64 / total as f64
    );
    println!("samples: {} -> {}", samples.len(), path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let samples = read_samples(cfg)?;
    let split = split_dataset(&samples, cfg.split.test_fraction, cfg.split.seed)?;
    cfg.write_resolved()?;

    let prob = fit_probabilistic(&split.train)?;
    let prob_path = cfg.output_dir.join("prob_model.json");
    prob.save(&prob_path)?;
    println!("probabilistic model ({} keys) -> {}", prob.n_train, prob_path.display());

    let (params, history) = train_seq2seq(&split.train, &cfg.train)?;
    let model_path = cfg.output_dir.join("model.json");
    save_model(&model_path, &params, &cfg.train)?;

    let hist_path = cfg.output_dir.join("history.csv");
    let mut w = csv::Writer::from_path(&hist_path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "learning_rate"])?;
    for e in &history {
        w.write_record([
            e.epoch.to_string(),
            format!("{}", e.train_loss),
            format!("{}", e.val_loss),
            format!("{}", e.learning_rate),
        ])?;
    }
    w.flush()?;
    let best = history.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    println!(
        "trained {} epochs, best val loss {:.4} -> {}",
        history.len(),
        best,
        model_path.display()
    );
    Ok(())
}

fn build_predictor(cfg: &RunConfig, kind: PredictorKind) -> Result<Box<dyn Predictor>> {
    match kind {
        PredictorKind::ConstantVelocity => Ok(Box::new(ConstantVelocity)),
        PredictorKind::Probabilistic => {
            let path = cfg.output_dir.join("prob_model.json");
            let model = ProbModel::load(&path).map_err(|e| {
                Error::Usage(format!("cannot load {} (run `train` first): {e}", path.display()))
            })?;
            Ok(Box::new(model))
        }
        PredictorKind::LstmSeq2seq => {
            let path = cfg.output_dir.join("model.json");
            let file = load_model(&path).map_err(|e| {
                Error::Usage(format!("cannot load {} (run `train` first): {e}", path.display()))
            })?;
            Ok(Box::new(file.params))
        }
    }
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let samples = read_samples(cfg)?;
    let split = split_dataset(&samples, cfg.split.test_fraction, cfg.split.seed)?;
    cfg.write_resolved()?;

    let named: Vec<(String, Box<dyn Predictor>)> = cfg
        .predictors
        .iter()
        .map(|k| Ok((k.to_string(), build_predictor(cfg, *k)?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&str, &dyn Predictor)> =
        named.iter().map(|(n, p)| (n.as_str(), p.as_ref())).collect();
    let report = compare_predictors(&split.test, &refs, &cfg.fingerprint()?)?;
    let path = cfg.output_dir.join("report.csv");
    write_report_csv(&report, &path)?;
    print!("{}", format_report_table(&report));
    println!("report -> {}", path.display());
    Ok(())
}

fn scene_extent(trajs: &[Trajectory]) -> Extent {
    let mut e = Extent { min_x: f64::MAX, min_y: f64::MAX, max_x: f64::MIN, max_y: f64::MIN };
    for t in trajs {
        for w in &t.waypoints {
            e.min_x = e.min_x.min(w.x_ft);
            e.min_y = e.min_y.min(w.y_ft);
            e.max_x = e.max_x.max(w.x_ft);
            e.max_y = e.max_y.max(w.y_ft);
        }
    }
    if e.min_x >= e.max_x || e.min_y >= e.max_y {
        e = Extent { min_x: -1.0, min_y: -1.0, max_x: 1.0, max_y: 1.0 };
    }
    e
}

fn print_summary(label: &str, s: &TtcSummary) {
    println!("{label}");
    let th: Vec<String> = s.thresholds_s.iter().map(|t| format!("{t:>8.1}")).collect();
    let tet: Vec<String> = s.tet_s.iter().map(|t| format!("{t:>8.3}")).collect();
    let mp: Vec<String> = s.min_ttc_pairs.iter().map(|c| format!("{c:>8}")).collect();
    println!("  threshold_s {}", th.join(""));
    println!("  tet_s       {}", tet.join(""));
    println!("  minttc_pairs{}", mp.join(""));
}

fn cmd_conflicts(cfg: &RunConfig) -> Result<()> {
    let trajs = load_trajectories(cfg)?;
    cfg.write_resolved()?;
    let predictor = build_predictor(cfg, cfg.conflict.predictor)?;
    let extent = scene_extent(&trajs);

    for mode in [ConflictMode::BoundingBox, ConflictMode::CenterPoint] {
        let params = ScanParams { mode, ..cfg.conflict.scan.clone() };
        let timelines = scan_conflicts(&trajs, predictor.as_ref(), &params)?;
        let summary = aggregate(&timelines, params.cadence_frames, params.fps);
        print_summary(&format!("mode {mode}"), &summary);

        let events = timeline_events(&timelines, mode);
        let ev_path = cfg.output_dir.join(format!("events_{mode}.csv"));
        write_events_csv(BufWriter::new(File::create(&ev_path)?), &events)?;

        let min_events = min_ttc_events(&timelines, mode);
        let hm = traj_conflict::conflict::heatmap(&min_events, cfg.conflict.heatmap_cell_ft, extent)?;
        let hm_path = cfg.output_dir.join(format!("heatmap_{mode}.csv"));
        write_heatmap_csv(BufWriter::new(File::create(&hm_path)?), &hm, 3.0, mode)?;
        println!(
            "  {} detections, {} pairs -> {}, {}",
            events.len(),
            min_events.len(),
            ev_path.display(),
            hm_path.display()
        );
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => return Err(Error::Usage(e.to_string())),
    };
    if cli.print_config {
        print!("{}", RunConfig::default().to_toml()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Usage("no subcommand given; see --help".into()));
    };
    match command {
        Command::Ingest { config } => cmd_ingest(&RunConfig::load(&config)?),
        Command::Train { config } => cmd_train(&RunConfig::load(&config)?),
        Command::Evaluate { config } => cmd_evaluate(&RunConfig::load(&config)?),
        Command::Conflicts { config } => cmd_conflicts(&RunConfig::load(&config)?),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
