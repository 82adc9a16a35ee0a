//! The `MAPF` feature-stream format.
//!
//! Little-endian layout:
//!
//! ```text
//! "MAPF" | version u32 = 1 | C u32 | H u32 | W u32 | D u32
//! per frame:
//!   frame_index u32 | global_map C·H·W f32 | n_rois u32
//!   per ROI: x1 y1 x2 y2 f32 | score f32 | class_id u32 | D × f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::numerics::Tensor;

pub const STREAM_MAGIC: &[u8; 4] = b"MAPF";
pub const STREAM_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 24;

/// Per-stream dimension constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub feature_dim: usize,
}

impl Default for StreamDims {
    fn default() -> Self {
        Self {
            channels: 32,
            height: 8,
            width: 8,
            feature_dim: 64,
        }
    }
}

impl StreamDims {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Bytes taken by one frame record holding `n_rois` ROIs.
    pub fn frame_bytes(&self, n_rois: usize) -> u64 {
        let map = 4 * (self.channels * self.height * self.width) as u64;
        let roi = 4 * (4 + 1 + 1 + self.feature_dim) as u64;
        4 + map + 4 + n_rois as u64 * roi
    }
}

/// One frame of detector output.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    pub frame_index: u32,
    /// `[C, H, W]`
    pub global_map: Tensor<f32>,
    pub rois: Vec<BBox>,
    /// `[n_rois, D]`
    pub roi_features: Tensor<f32>,
    pub roi_scores: Vec<f32>,
    pub roi_class_ids: Vec<u32>,
}

impl FrameFeatures {
    pub fn dims(&self) -> Option<StreamDims> {
        let s = self.global_map.shape();
        if s.len() != 3 || self.roi_features.rank() != 2 {
            return None;
        }
        Some(StreamDims {
            channels: s[0],
            height: s[1],
            width: s[2],
            feature_dim: self.roi_features.shape()[1],
        })
    }

    pub fn n_rois(&self) -> usize {
        self.rois.len()
    }

    /// Checks the frame against the stream's dimension constants.
    pub fn validate(&self, dims: &StreamDims) -> Result<()> {
        if self.dims() != Some(*dims) {
            return Err(Error::invalid(format!(
                "frame {} has map {:?} and features {:?}, stream expects {dims:?}",
                self.frame_index,
                self.global_map.shape(),
                self.roi_features.shape()
            )));
        }
        let n = self.rois.len();
        if self.roi_features.shape()[0] != n || self.roi_scores.len() != n || self.roi_class_ids.len() != n {
            return Err(Error::invalid(format!(
                "frame {}: {} boxes but {} feature rows, {} scores, {} class ids",
                self.frame_index,
                n,
                self.roi_features.shape()[0],
                self.roi_scores.len(),
                self.roi_class_ids.len()
            )));
        }
        for b in &self.rois {
            b.validate()?;
        }
        if self.roi_scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid(format!("frame {}: score outside [0,1]", self.frame_index)));
        }
        if !self.global_map.is_finite() || !self.roi_features.is_finite() {
            return Err(Error::NonFinite(format!("frame {}", self.frame_index)));
        }
        Ok(())
    }
}

/// Writes frames one at a time.
pub struct StreamWriter<W: Write> {
    out: W,
    dims: StreamDims,
    last_index: Option<u32>,
}

impl StreamWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, dims: StreamDims) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), dims).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut out: W, dims: StreamDims) -> Result<Self> {
        let mut header = Vec::with_capacity(HEADER_BYTES as usize);
        header.extend_from_slice(STREAM_MAGIC);
        for v in [
            STREAM_VERSION,
            dims.channels as u32,
            dims.height as u32,
            dims.width as u32,
            dims.feature_dim as u32,
        ] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&header).map_err(|e| Error::io("<stream>", e))?;
        Ok(Self {
            out,
            dims,
            last_index: None,
        })
    }

    pub fn write_frame(&mut self, frame: &FrameFeatures) -> Result<()> {
        frame.validate(&self.dims)?;
        if let Some(last) = self.last_index {
            if frame.frame_index <= last {
                return Err(Error::invalid(format!(
                    "frame_index {} does not follow {last}",
                    frame.frame_index
                )));
            }
        }
        let mut buf = Vec::with_capacity(self.dims.frame_bytes(frame.n_rois()) as usize);
        buf.extend_from_slice(&frame.frame_index.to_le_bytes());
        for v in frame.global_map.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(frame.n_rois() as u32).to_le_bytes());
        for i in 0..frame.n_rois() {
            for v in frame.rois[i].to_array() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&frame.roi_scores[i].to_le_bytes());
            buf.extend_from_slice(&frame.roi_class_ids[i].to_le_bytes());
            for v in frame.roi_features.row(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        self.out.write_all(&buf).map_err(|e| Error::io("<stream>", e))?;
        self.last_index = Some(frame.frame_index);
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<stream>", e))?;
        Ok(self.out)
    }
}

/// Writes a whole stream file.
pub fn write_stream<'a>(
    path: impl AsRef<Path>,
    dims: StreamDims,
    frames: impl IntoIterator<Item = &'a FrameFeatures>,
) -> Result<()> {
    let mut w = StreamWriter::create(path, dims)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish().map(|_| ())
}

/// Yields frames lazily; nothing beyond the current record is buffered.
pub struct StreamReader<R: Read> {
    input: R,
    dims: StreamDims,
    offset: u64,
    frames_read: u64,
    last_index: Option<u32>,
    done: bool,
}

/// Opens a stream file for reading.
pub fn read_stream(path: impl AsRef<Path>) -> Result<StreamReader<BufReader<File>>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    StreamReader::new(BufReader::new(file))
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut header = [0u8; HEADER_BYTES as usize];
        read_exact_at(&mut input, &mut header, 0)?;
        if &header[0..4] != STREAM_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}", &header[0..4]),
            });
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != STREAM_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let dims = StreamDims {
            channels: word(8) as usize,
            height: word(12) as usize,
            width: word(16) as usize,
            feature_dim: word(20) as usize,
        };
        if dims.channels == 0 || dims.height == 0 || dims.width == 0 {
            return Err(Error::Format {
                offset: 8,
                message: format!("degenerate dimensions {dims:?}"),
            });
        }
        Ok(Self {
            input,
            dims,
            offset: HEADER_BYTES,
            frames_read: 0,
            last_index: None,
            done: false,
        })
    }

    pub fn dims(&self) -> StreamDims {
        self.dims
    }

    pub fn frames_read(&self) -> u64 {
        self.frames_read
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        read_exact_at(&mut self.input, &mut b, self.offset)?;
        self.offset += 4;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Result<()> {
        let mut bytes = vec![0u8; n * 4];
        read_exact_at(&mut self.input, &mut bytes, self.offset)?;
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: self.offset + 4 * i as u64,
                    message: format!("non-finite float {v}"),
                });
            }
            out.push(v);
        }
        self.offset += bytes.len() as u64;
        Ok(())
    }

    fn next_frame(&mut self) -> Result<Option<FrameFeatures>> {
        let record_start = self.offset;
        let mut first = [0u8; 4];
        // A clean end of file is only allowed on a record boundary.
        let mut got = 0;
        while got < 4 {
            match self.input.read(&mut first[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => {
                    return Err(Error::Format {
                        offset: record_start + got as u64,
                        message: "truncated frame header".into(),
                    })
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io("<stream>", e)),
            }
        }
        self.offset += 4;
        let frame_index = u32::from_le_bytes(first);
        if let Some(last) = self.last_index {
            if frame_index <= last {
                return Err(Error::Format {
                    offset: record_start,
                    message: format!("frame_index {frame_index} does not follow {last}"),
                });
            }
        }

        let d = self.dims;
        let mut map = Vec::with_capacity(d.channels * d.height * d.width);
        self.read_f32s(d.channels * d.height * d.width, &mut map)?;
        let n_rois = self.read_u32()? as usize;

        let mut rois = Vec::new();
        let mut scores = Vec::new();
        let mut classes = Vec::new();
        let mut feats = Vec::new();
        for _ in 0..n_rois {
            let box_offset = self.offset;
            let mut b = Vec::with_capacity(5);
            self.read_f32s(5, &mut b)?;
            let bbox = BBox::new(b[0], b[1], b[2], b[3]);
            bbox.validate().map_err(|e| Error::Format {
                offset: box_offset,
                message: e.to_string(),
            })?;
            if !(0.0..=1.0).contains(&b[4]) {
                return Err(Error::Format {
                    offset: box_offset + 16,
                    message: format!("score {} outside [0,1]", b[4]),
                });
            }
            rois.push(bbox);
            scores.push(b[4]);
            classes.push(self.read_u32()?);
            self.read_f32s(d.feature_dim, &mut feats)?;
        }

        self.frames_read += 1;
        self.last_index = Some(frame_index);
        Ok(Some(FrameFeatures {
            frame_index,
            global_map: Tensor::new(vec![d.channels, d.height, d.width], map)?,
            rois,
            roi_features: Tensor::new(vec![n_rois, d.feature_dim], feats)?,
            roi_scores: scores,
            roi_class_ids: classes,
        }))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<FrameFeatures>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format {
                offset,
                message: format!("truncated record: needed {} bytes", buf.len()),
            }
        } else {
            Error::io("<stream>", e)
        }
    })
}
