//! Command-line front end: `synth`, `train`, `infer` and `eval`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, KMode};
use crate::error::{Error, Result};
use crate::infer_eval::{evaluate, infer_streams, read_truths, Predictions};
use crate::ingest::{synth_corpus, write_stream, CorpusSpec, MotionPattern, StreamDims};
use crate::learn::{train_streams, Checkpoint};

pub const STREAM_EXTENSION: &str = "mapf";
pub const TRUTH_SUFFIX: &str = ".gt.txt";

#[derive(Debug, Parser)]
#[command(name = "actorgraph", version, about = "Streaming multi-actor predictive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of streams and ground truth.
    Synth(SynthArgs),
    /// Train in one pass over feature streams and write a checkpoint.
    Train(TrainArgs),
    /// Infer labels for feature streams with a trained checkpoint.
    Infer(InferArgs),
    /// Score prediction files against ground truth.
    Eval(EvalArgs),
}

/// Config file and per-key overrides. Flags win over the file.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Plain-text key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub bptt_window: Option<usize>,
    /// Drop the action node from every action graph.
    #[arg(long)]
    pub no_action_node: bool,
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=2))]
    pub spatial_layers: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=2))]
    pub temporal_layers: Option<u64>,
    /// `gt` uses the configured k; `opt` picks k by the elbow rule.
    #[arg(long)]
    pub k_mode: Option<KMode>,
    #[arg(long)]
    pub group_k: Option<usize>,
    #[arg(long)]
    pub action_k: Option<usize>,
    /// Communities per frame; 0 picks the count from the eigengap.
    #[arg(long)]
    pub membership_groups: Option<usize>,
    /// Any config key, as key=value. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    /// Applies the config file, then the flags, on top of `base`.
    pub fn resolve(&self, mut base: Config) -> Result<Config> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            base.apply_text(&text)?;
        }
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            match value {
                Some(v) => base.set(key, &v),
                None => Ok(()),
            }
        };
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("bptt_window", self.bptt_window.map(|v| v.to_string()))?;
        set("action_node", self.no_action_node.then(|| "false".to_string()))?;
        set("spatial_layers", self.spatial_layers.map(|v| v.to_string()))?;
        set("temporal_layers", self.temporal_layers.map(|v| v.to_string()))?;
        set("k_mode", self.k_mode.map(|v| v.to_string()))?;
        set("group_k", self.group_k.map(|v| v.to_string()))?;
        set("action_k", self.action_k.map(|v| v.to_string()))?;
        set("membership_groups", self.membership_groups.map(|v| v.to_string()))?;
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            base.set(k.trim(), v)?;
        }
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives `<video>.mapf` and `<video>.gt.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated motion pattern per social group; repeat for more
    /// templates. Patterns: stationary, walk, crossing, queue.
    #[arg(long = "template", value_name = "PATTERNS")]
    pub templates: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub videos_per_template: usize,
    #[arg(long, default_value_t = 3)]
    pub actors_per_group: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = StreamDims::default().channels)]
    pub channels: usize,
    #[arg(long, default_value_t = StreamDims::default().height)]
    pub height: usize,
    #[arg(long, default_value_t = StreamDims::default().width)]
    pub width: usize,
    #[arg(long, default_value_t = StreamDims::default().feature_dim)]
    pub feature_dim: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Stream files or directories of `.mapf` files, trained in order.
    #[arg(long, num_args = 1.., required = true)]
    pub streams: Vec<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub streams: Vec<PathBuf>,
    /// Prediction file path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides on top of the checkpoint's config.
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub predictions: Vec<PathBuf>,
    /// Ground-truth files or directories of `.gt.txt` files.
    #[arg(long, num_args = 1.., required = true)]
    pub gt: Vec<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Files named on the command line, with directories replaced by their
/// entries ending in `suffix`, sorted by name.
pub fn expand_inputs(paths: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.to_string_lossy().ends_with(suffix))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Error::invalid(format!("{} holds no *{suffix} files", path.display())));
            }
            out.extend(found);
        } else if path.is_file() {
            out.push(path.clone());
        } else {
            return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(out)
}

fn parse_template(text: &str) -> Result<Vec<MotionPattern>> {
    text.split(',').map(|p| p.trim().parse()).collect()
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let templates = if args.templates.is_empty() {
        vec![
            vec![MotionPattern::LinearWalk, MotionPattern::LinearWalk],
            vec![MotionPattern::Queueing, MotionPattern::Queueing],
        ]
    } else {
        args.templates.iter().map(|t| parse_template(t)).collect::<Result<_>>()?
    };
    let spec = CorpusSpec {
        templates,
        videos_per_template: args.videos_per_template,
        actors_per_group: args.actors_per_group,
        frames: args.frames,
        noise: args.noise,
        seed: args.seed,
        dims: StreamDims {
            channels: args.channels,
            height: args.height,
            width: args.width,
            feature_dim: args.feature_dim,
        },
    };
    let videos = synth_corpus(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for v in &videos {
        write_stream(args.out.join(format!("{}.{STREAM_EXTENSION}", v.name)), spec.dims, &v.frames)?;
        v.truth.write(args.out.join(format!("{}{TRUTH_SUFFIX}", v.name)))?;
    }
    writeln!(out, "wrote {} videos to {}", videos.len(), args.out.display()).map_err(|e| Error::io(Path::new("stdout"), e))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.config.resolve(Config::default())?;
    let streams = expand_inputs(&args.streams, &format!(".{STREAM_EXTENSION}"))?;
    let (checkpoint, stats) = train_streams(&streams, &config)?;
    checkpoint.save(&args.out)?;
    writeln!(
        out,
        "trained on {} videos, {} frames; {} updates, {} skipped; checkpoint {}",
        stats.videos,
        stats.frames_read,
        stats.updates,
        stats.skipped_updates,
        args.out.display()
    )
    .map_err(|e| Error::io(Path::new("stdout"), e))
}

pub fn cmd_infer(args: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let config = args.config.resolve(checkpoint.config.clone())?;
    let streams = expand_inputs(&args.streams, &format!(".{STREAM_EXTENSION}"))?;
    let (predictions, summary) = infer_streams(&checkpoint, config, &streams)?;
    predictions.write(&args.out)?;
    let stdout = |e| Error::io(Path::new("stdout"), e);
    writeln!(
        out,
        "labelled {} videos ({} actor nodes, group k={}, action k={}); predictions {}",
        summary.videos,
        summary.actor_nodes,
        summary.group_k,
        summary.action_k,
        args.out.display()
    )
    .map_err(stdout)?;
    for name in &summary.flagged_videos {
        writeln!(out, "warning: video {name} has no actor nodes").map_err(stdout)?;
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut predictions = Predictions::default();
    for path in &args.predictions {
        predictions.videos.extend(Predictions::read(path)?.videos);
    }
    let truths = read_truths(&expand_inputs(&args.gt, TRUTH_SUFFIX)?)?;
    let report = evaluate(&predictions, &truths)?;
    if let Some(path) = &args.out {
        report.write(path)?;
    }
    out.write_all(report.to_text().as_bytes())
        .map_err(|e| Error::io(Path::new("stdout"), e))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Infer(a) => cmd_infer(a, out),
        Command::Eval(a) => cmd_eval(a, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "seed=5\ntemporal_layers=2\ngroup_k=4\n").unwrap();
        let cli = Cli::parse_from([
            "actorgraph",
            "train",
            "--streams",
            "x.mapf",
            "--out",
            "c.bin",
            "--config",
            path.to_str().unwrap(),
            "--temporal-layers",
            "0",
            "--no-action-node",
            "--set",
            "w_iou=2.5",
        ]);
        let Command::Train(args) = cli.command else { panic!("train expected") };
        let c = args.config.resolve(Config::default()).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.group_k, 4);
        assert_eq!(c.temporal_layers, 0);
        assert!(!c.action_node);
        assert_eq!(c.w_iou, 2.5);
    }

    #[test]
    fn bad_overrides_rejected() {
        let args = ConfigArgs {
            overrides: vec!["nonsense=1".into()],
            ..ConfigArgs::default()
        };
        assert!(args.resolve(Config::default()).is_err());
        let args = ConfigArgs {
            bptt_window: Some(1),
            ..ConfigArgs::default()
        };
        assert!(args.resolve(Config::default()).is_err());
        assert!(Cli::try_parse_from(["actorgraph", "train", "--streams", "a", "--out", "b", "--spatial-layers", "3"]).is_err());
    }

    #[test]
    fn templates_parse() {
        assert_eq!(
            parse_template("walk, queue").unwrap(),
            vec![MotionPattern::LinearWalk, MotionPattern::Queueing]
        );
        assert!(parse_template("walk,fly").is_err());
    }

    #[test]
    fn missing_inputs_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(expand_inputs(&[dir.path().join("absent.mapf")], ".mapf").is_err());
        assert!(expand_inputs(&[dir.path().to_path_buf()], ".mapf").is_err());
    }
}
