//! Line-delimited prediction files.
//!
//! ```text
//! # actorgraph predictions v1
//! video <name> <group_activity_id>
//! det <name> <frame_index> <chain_id> <x1> <y1> <x2> <y2> <action_id> <score> <membership_id> <social_id>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ingest::GroundTruth;

pub const PREDICTIONS_HEADER: &str = "# actorgraph predictions v1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame_index: u32,
    /// Registration chain the detection belongs to (its tube).
    pub chain_id: u32,
    pub bbox: BBox,
    pub action: u32,
    pub score: f64,
    pub membership: u32,
    pub social: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoPrediction {
    pub name: String,
    pub group_activity: u32,
    pub detections: Vec<Detection>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub videos: Vec<VideoPrediction>,
}

impl VideoPrediction {
    /// Ground truth restated as a prediction: every annotated actor becomes
    /// a detection with score 1 and its actor id as chain id.
    pub fn from_truth(name: &str, truth: &GroundTruth) -> Self {
        Self {
            name: name.to_string(),
            group_activity: truth.group_activity().unwrap_or(0),
            detections: truth
                .records
                .iter()
                .map(|r| Detection {
                    frame_index: r.frame_index,
                    chain_id: r.actor_id,
                    bbox: r.bbox,
                    action: r.action,
                    score: 1.0,
                    membership: r.membership,
                    social: r.social_activity,
                })
                .collect(),
        }
    }
}

impl Predictions {
    pub fn to_text(&self) -> String {
        let mut s = format!("{PREDICTIONS_HEADER}\n");
        for v in &self.videos {
            let _ = writeln!(s, "video {} {}", v.name, v.group_activity);
            for d in &v.detections {
                let b = d.bbox;
                let _ = writeln!(
                    s,
                    "det {} {} {} {} {} {} {} {} {} {} {}",
                    v.name, d.frame_index, d.chain_id, b.x1, b.y1, b.x2, b.y2, d.action, d.score, d.membership, d.social
                );
            }
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut videos: Vec<VideoPrediction> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line: lineno + 1,
                message,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<u32> {
                f[i].parse().map_err(|_| err(format!("field {} is not an integer: {:?}", i + 1, f[i])))
            };
            let real = |i: usize| -> Result<f64> {
                let v: f64 = f[i].parse().map_err(|_| err(format!("field {} is not a number: {:?}", i + 1, f[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("field {} is not finite", i + 1)))
                }
            };
            match f[0] {
                "video" if f.len() == 3 => {
                    if index.contains_key(f[1]) {
                        return Err(err(format!("video {} declared twice", f[1])));
                    }
                    index.insert(f[1].to_string(), videos.len());
                    videos.push(VideoPrediction {
                        name: f[1].to_string(),
                        group_activity: num(2)?,
                        detections: Vec::new(),
                    });
                }
                "det" if f.len() == 12 => {
                    let v = *index
                        .get(f[1])
                        .ok_or_else(|| err(format!("detection for undeclared video {}", f[1])))?;
                    let bbox = BBox::new(real(4)? as f32, real(5)? as f32, real(6)? as f32, real(7)? as f32);
                    bbox.validate().map_err(|e| err(e.to_string()))?;
                    videos[v].detections.push(Detection {
                        frame_index: num(2)?,
                        chain_id: num(3)?,
                        bbox,
                        action: num(8)?,
                        score: real(9)?,
                        membership: num(10)?,
                        social: num(11)?,
                    });
                }
                other => {
                    return Err(err(format!("unrecognised record {other:?} with {} fields", f.len())));
                }
            }
        }
        Ok(Self { videos })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
