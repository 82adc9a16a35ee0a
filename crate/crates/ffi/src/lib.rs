//! C ABI for the actorgraph engine.
//!
//! Every function returns an [`AgStatus`]; on failure a message describing
//! the error is kept per thread and can be fetched with
//! [`ag_last_error_message`]. Objects are opaque handles created and freed
//! through this API. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use actorgraph::assignment::hungarian;
use actorgraph::infer_eval::{evaluate, infer_streams, read_truths, Predictions};
use actorgraph::ingest::{read_stream, synth_corpus, write_stream, CorpusSpec, FrameFeatures, MotionPattern, StreamDims, StreamReader};
use actorgraph::learn::{train_streams, Checkpoint};
use actorgraph::Config;

/// Result code of every API call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    NonFinite = 6,
    Shape = 7,
    /// The stream has no further frames.
    EndOfStream = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[derive(Debug, thiserror::Error)]
enum FfiError {
    #[error("argument `{0}` is null")]
    Null(&'static str),
    #[error("argument `{0}` is not valid UTF-8")]
    Utf8(&'static str),
    #[error("buffer of {given} bytes is too small, {needed} needed")]
    BufferTooSmall { given: usize, needed: usize },
    #[error(transparent)]
    Core(#[from] actorgraph::Error),
}

impl FfiError {
    fn status(&self) -> AgStatus {
        use actorgraph::Error as E;
        match self {
            FfiError::Null(_) => AgStatus::NullArgument,
            FfiError::Utf8(_) => AgStatus::InvalidArgument,
            FfiError::BufferTooSmall { .. } => AgStatus::BufferTooSmall,
            FfiError::Core(e) => match e {
                E::Io { .. } => AgStatus::Io,
                E::Format { .. } | E::Parse { .. } => AgStatus::Format,
                E::Config(_) => AgStatus::Config,
                E::NonFinite(_) => AgStatus::NonFinite,
                E::Shape { .. } | E::NonScalarLoss(_) => AgStatus::Shape,
                _ => AgStatus::InvalidArgument,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> AgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AgStatus::Ok
        }
        Ok(Err(e)) => {
            let status = e.status();
            set_last_error(e.to_string());
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            AgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(name))
}

unsafe fn paths(list: *const *const c_char, count: usize, name: &'static str) -> Result<Vec<PathBuf>, FfiError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if list.is_null() {
        return Err(FfiError::Null(name));
    }
    std::slice::from_raw_parts(list, count)
        .iter()
        .map(|&p| text(p, name).map(PathBuf::from))
        .collect()
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, FfiError> {
    p.as_mut().ok_or(FfiError::Null(name))
}

/// Copies `s` with a trailing NUL into `buf`; `needed` receives the full size.
unsafe fn write_text(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), FfiError> {
    let bytes = s.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if buf.is_null() {
        return Err(FfiError::Null("buf"));
    }
    if len < bytes.len() + 1 {
        return Err(FfiError::BufferTooSmall {
            given: len,
            needed: bytes.len() + 1,
        });
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------- config

/// Opaque engine configuration.
pub struct AgConfig(Config);

/// Creates a configuration holding the defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_config_new(out: *mut *mut AgConfig) -> AgStatus {
    guard(|| {
        *self::out(out, "out")? = Box::into_raw(Box::new(AgConfig(Config::default())));
        Ok(())
    })
}

/// Reads a `key=value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_config_read(path: *const c_char, out: *mut *mut AgConfig) -> AgStatus {
    guard(|| {
        let config = Config::read(text(path, "path")?)?;
        *self::out(out, "out")? = Box::into_raw(Box::new(AgConfig(config)));
        Ok(())
    })
}

/// # Safety
/// `config` must come from this API and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ag_config_free(config: *mut AgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets one key from its text form; the config is validated afterwards and
/// left unchanged on failure.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ag_config_set(config: *mut AgConfig, key: *const c_char, value: *const c_char) -> AgStatus {
    guard(|| {
        let config = out(config, "config")?;
        let mut next = config.0.clone();
        next.set(text(key, "key")?, text(value, "value")?)?;
        next.validate()?;
        config.0 = next;
        Ok(())
    })
}

/// Writes the text form of one key into `buf`. `needed` (nullable) receives
/// the size including the NUL.
///
/// # Safety
/// `config` must be a live handle, `key` NUL-terminated, `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ag_config_get(
    config: *const AgConfig,
    key: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> AgStatus {
    guard(|| {
        let config = config.as_ref().ok_or(FfiError::Null("config"))?;
        let value = config.0.get(text(key, "key")?)?;
        write_text(&value, buf, len, needed)
    })
}

// ---------------------------------------------------------------- streams

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AgStreamDims {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub feature_dim: u32,
}

/// Opaque reader over a feature stream file.
pub struct AgStream(StreamReader<BufReader<File>>);

/// Opaque decoded frame.
pub struct AgFrame(FrameFeatures);

/// Opens a stream file and validates its header.
///
/// # Safety
/// `path` must be NUL-terminated, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_stream_open(path: *const c_char, out: *mut *mut AgStream) -> AgStatus {
    guard(|| {
        let reader = read_stream(text(path, "path")?)?;
        *self::out(out, "out")? = Box::into_raw(Box::new(AgStream(reader)));
        Ok(())
    })
}

/// # Safety
/// `stream` must be a live handle and `dims` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_stream_dims(stream: *const AgStream, dims: *mut AgStreamDims) -> AgStatus {
    guard(|| {
        let s = stream.as_ref().ok_or(FfiError::Null("stream"))?;
        let d = s.0.dims();
        *out(dims, "dims")? = AgStreamDims {
            channels: d.channels as u32,
            height: d.height as u32,
            width: d.width as u32,
            feature_dim: d.feature_dim as u32,
        };
        Ok(())
    })
}

/// Decodes the next frame. Returns `EndOfStream` (and a null frame) after
/// the last one.
///
/// # Safety
/// `stream` must be a live handle and `frame` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_stream_next(stream: *mut AgStream, frame: *mut *mut AgFrame) -> AgStatus {
    let mut end = false;
    let status = guard(|| {
        let s = out(stream, "stream")?;
        let slot = out(frame, "frame")?;
        *slot = ptr::null_mut();
        match s.0.next() {
            Some(f) => *slot = Box::into_raw(Box::new(AgFrame(f?))),
            None => end = true,
        }
        Ok(())
    });
    if status == AgStatus::Ok && end {
        AgStatus::EndOfStream
    } else {
        status
    }
}

/// # Safety
/// `stream` must come from this API; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ag_stream_close(stream: *mut AgStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// # Safety
/// `frame` must come from this API; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ag_frame_free(frame: *mut AgFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Frame index and ROI count.
///
/// # Safety
/// `frame` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ag_frame_info(frame: *const AgFrame, frame_index: *mut u32, n_rois: *mut u32) -> AgStatus {
    guard(|| {
        let f = frame.as_ref().ok_or(FfiError::Null("frame"))?;
        *out(frame_index, "frame_index")? = f.0.frame_index;
        *out(n_rois, "n_rois")? = f.0.rois.len() as u32;
        Ok(())
    })
}

/// One ROI: box `[x1, y1, x2, y2]`, score and class id.
///
/// # Safety
/// `frame` must be a live handle, `bbox` writable for 4 floats, other outputs valid.
#[no_mangle]
pub unsafe extern "C" fn ag_frame_roi(
    frame: *const AgFrame,
    index: u32,
    bbox: *mut f32,
    score: *mut f32,
    class_id: *mut u32,
) -> AgStatus {
    guard(|| {
        let f = &frame.as_ref().ok_or(FfiError::Null("frame"))?.0;
        let i = index as usize;
        let b = f.rois.get(i).ok_or_else(|| {
            actorgraph::Error::Invalid(format!("ROI {i} out of range for {} ROIs", f.rois.len()))
        })?;
        if bbox.is_null() {
            return Err(FfiError::Null("bbox"));
        }
        std::slice::from_raw_parts_mut(bbox, 4).copy_from_slice(&b.to_array());
        *out(score, "score")? = f.roi_scores[i];
        *out(class_id, "class_id")? = f.roi_class_ids[i];
        Ok(())
    })
}

/// Copies the global map (`C·H·W` floats, channel-major) into `buf`.
///
/// # Safety
/// `frame` must be a live handle and `buf` writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn ag_frame_global_map(frame: *const AgFrame, buf: *mut f32, len: usize) -> AgStatus {
    guard(|| {
        let data = frame.as_ref().ok_or(FfiError::Null("frame"))?.0.global_map.data();
        if buf.is_null() {
            return Err(FfiError::Null("buf"));
        }
        if len < data.len() {
            return Err(FfiError::BufferTooSmall {
                given: len,
                needed: data.len(),
            });
        }
        std::slice::from_raw_parts_mut(buf, data.len()).copy_from_slice(data);
        Ok(())
    })
}

// ---------------------------------------------------------------- assignment

/// Minimum-cost assignment of a row-major `rows × cols` cost matrix.
/// `assignment[r]` receives the column of row `r`, or -1 when the row is
/// unassigned (more rows than columns).
///
/// # Safety
/// `cost` must hold `rows·cols` doubles and `assignment` `rows` slots.
#[no_mangle]
pub unsafe extern "C" fn ag_hungarian(cost: *const f64, rows: usize, cols: usize, assignment: *mut i64) -> AgStatus {
    guard(|| {
        if rows == 0 {
            return Ok(());
        }
        if cost.is_null() && cols > 0 {
            return Err(FfiError::Null("cost"));
        }
        if assignment.is_null() {
            return Err(FfiError::Null("assignment"));
        }
        let costs = if cols == 0 { &[][..] } else { std::slice::from_raw_parts(cost, rows * cols) };
        let result = hungarian(costs, rows, cols)?;
        let dst = std::slice::from_raw_parts_mut(assignment, rows);
        for (d, r) in dst.iter_mut().zip(result) {
            *d = r.map_or(-1, |c| c as i64);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- pipeline

/// Metric summary.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AgReport {
    pub group_activity_mca: f64,
    pub group_activity_accuracy: f64,
    pub action_detection_map: f64,
    pub membership_accuracy: f64,
    pub social_activity_accuracy: f64,
    pub video_map: f64,
}

/// Writes a synthetic corpus of walking and queueing scenes (two social
/// groups each) to `out_dir` as `<video>.mapf` plus `<video>.gt.txt`.
///
/// # Safety
/// `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ag_synth(
    out_dir: *const c_char,
    videos_per_template: u32,
    frames: u32,
    noise: f32,
    seed: u64,
) -> AgStatus {
    guard(|| {
        let dir = PathBuf::from(text(out_dir, "out_dir")?);
        let spec = CorpusSpec {
            templates: vec![
                vec![MotionPattern::LinearWalk, MotionPattern::LinearWalk],
                vec![MotionPattern::Queueing, MotionPattern::Queueing],
            ],
            videos_per_template: videos_per_template as usize,
            actors_per_group: 3,
            frames: frames as usize,
            noise,
            seed,
            dims: StreamDims::default(),
        };
        let videos = synth_corpus(&spec)?;
        std::fs::create_dir_all(&dir).map_err(|e| actorgraph::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for v in &videos {
            write_stream(dir.join(format!("{}.mapf", v.name)), spec.dims, &v.frames)?;
            v.truth.write(dir.join(format!("{}.gt.txt", v.name)))?;
        }
        Ok(())
    })
}

/// Trains in one pass over `n_streams` stream files and writes a checkpoint.
/// `config` may be null for the defaults. `frames_read` (nullable) receives
/// the number of frames consumed.
///
/// # Safety
/// `streams` must hold `n_streams` NUL-terminated paths.
#[no_mangle]
pub unsafe extern "C" fn ag_train(
    config: *const AgConfig,
    streams: *const *const c_char,
    n_streams: usize,
    checkpoint_out: *const c_char,
    frames_read: *mut u64,
) -> AgStatus {
    guard(|| {
        let config = config.as_ref().map_or_else(Config::default, |c| c.0.clone());
        let streams = paths(streams, n_streams, "streams")?;
        let (checkpoint, stats) = train_streams(&streams, &config)?;
        checkpoint.save(text(checkpoint_out, "checkpoint_out")?)?;
        if let Some(f) = frames_read.as_mut() {
            *f = stats.frames_read;
        }
        Ok(())
    })
}

/// Labels streams with a trained checkpoint and writes a prediction file.
/// `config` may be null to use the checkpoint's own configuration.
///
/// # Safety
/// String arguments must be NUL-terminated; `streams` holds `n_streams` paths.
#[no_mangle]
pub unsafe extern "C" fn ag_infer(
    checkpoint: *const c_char,
    config: *const AgConfig,
    streams: *const *const c_char,
    n_streams: usize,
    predictions_out: *const c_char,
) -> AgStatus {
    guard(|| {
        let checkpoint = Checkpoint::load(text(checkpoint, "checkpoint")?)?;
        let config = config.as_ref().map_or_else(|| checkpoint.config.clone(), |c| c.0.clone());
        let streams = paths(streams, n_streams, "streams")?;
        let (predictions, _) = infer_streams(&checkpoint, config, &streams)?;
        predictions.write(text(predictions_out, "predictions_out")?)?;
        Ok(())
    })
}

/// Scores a prediction file against ground-truth files (videos are named by
/// file stem).
///
/// # Safety
/// String arguments must be NUL-terminated; `report` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_eval(
    predictions: *const c_char,
    truths: *const *const c_char,
    n_truths: usize,
    report: *mut AgReport,
) -> AgStatus {
    guard(|| {
        let predictions = Predictions::read(text(predictions, "predictions")?)?;
        let truths = read_truths(&paths(truths, n_truths, "truths")?)?;
        let r = evaluate(&predictions, &truths)?;
        *out(report, "report")? = AgReport {
            group_activity_mca: r.group_activity_mca,
            group_activity_accuracy: r.group_activity_accuracy,
            action_detection_map: r.action_detection_map,
            membership_accuracy: r.membership_accuracy,
            social_activity_accuracy: r.social_activity_accuracy,
            video_map: r.video_map,
        };
        Ok(())
    })
}
