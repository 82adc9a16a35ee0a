#![allow(dead_code)]

pub mod checks;

use std::path::{Path, PathBuf};

use actorgraph::infer_eval::{evaluate, infer_streams, Report};
use actorgraph::ingest::{synth_corpus, write_stream, CorpusSpec, GroundTruth, MotionPattern, StreamDims, SynthVideo};
use actorgraph::learn::{train_streams, TrainStats};
use actorgraph::Config;

pub const CORPUS_SEED: u64 = 2024;

/// Two activity templates (walking, queueing) with two social groups each,
/// at the stream dimensions the `synth` command uses by default.
pub fn corpus_spec(seed: u64, videos_per_template: usize) -> CorpusSpec {
    CorpusSpec {
        templates: vec![
            vec![MotionPattern::LinearWalk, MotionPattern::LinearWalk],
            vec![MotionPattern::Queueing, MotionPattern::Queueing],
        ],
        videos_per_template,
        actors_per_group: 3,
        frames: 16,
        noise: 0.05,
        seed,
        dims: StreamDims::default(),
    }
}

pub fn corpus(seed: u64, videos_per_template: usize) -> Vec<SynthVideo> {
    synth_corpus(&corpus_spec(seed, videos_per_template)).expect("corpus")
}

/// A corpus written to disk as streams plus in-memory ground truth.
pub struct CorpusFiles {
    pub streams: Vec<PathBuf>,
    pub truths: Vec<(String, GroundTruth)>,
    pub frames: u64,
}

pub fn write_corpus(dir: &Path, videos: &[SynthVideo]) -> CorpusFiles {
    let mut streams = Vec::new();
    let mut truths = Vec::new();
    let mut frames = 0;
    for v in videos {
        let dims = v.frames[0].dims().expect("dims");
        let path = dir.join(format!("{}.mapf", v.name));
        write_stream(&path, dims, &v.frames).expect("write stream");
        streams.push(path);
        truths.push((v.name.clone(), v.truth.clone()));
        frames += v.frames.len() as u64;
    }
    CorpusFiles { streams, truths, frames }
}

pub struct PipelineRun {
    pub checkpoint: Vec<u8>,
    pub stats: TrainStats,
    pub report: Report,
    pub report_text: String,
}

/// Train, infer and evaluate through the file-based entry points.
pub fn run_pipeline(files: &CorpusFiles, config: &Config) -> PipelineRun {
    let (checkpoint, stats) = train_streams(&files.streams, config).expect("train");
    let (predictions, _) = infer_streams(&checkpoint, config.clone(), &files.streams).expect("infer");
    let report = evaluate(&predictions, &files.truths).expect("evaluate");
    PipelineRun {
        checkpoint: checkpoint.to_bytes(),
        stats,
        report_text: report.to_text(),
        report,
    }
}

pub fn config_with(seed: u64, spatial_layers: usize, temporal_layers: usize) -> Config {
    Config {
        seed,
        spatial_layers,
        temporal_layers,
        ..Config::default()
    }
}
