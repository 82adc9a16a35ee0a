//! Feature-stream I/O and synthetic scene generation.

mod stream;
mod synth;
mod truth;

pub use stream::{
    read_stream, write_stream, FrameFeatures, StreamDims, StreamReader, StreamWriter, HEADER_BYTES,
    STREAM_MAGIC, STREAM_VERSION,
};
pub use synth::{
    mix_seed, pattern_prototype, synth_corpus, synth_generate, CorpusSpec, MotionPattern, SceneSpec,
    SynthVideo, PERSON_CLASS,
};
pub use truth::{GroundTruth, TruthRecord, TRUTH_HEADER};
