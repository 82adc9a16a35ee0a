//! Line-delimited ground-truth annotations.
//!
//! One record per annotated actor per frame:
//!
//! ```text
//! frame_index actor_id x1 y1 x2 y2 action group_activity membership social_activity
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const TRUTH_HEADER: &str =
    "# frame_index actor_id x1 y1 x2 y2 action group_activity membership social_activity";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub frame_index: u32,
    pub actor_id: u32,
    pub bbox: BBox,
    pub action: u32,
    pub group_activity: u32,
    pub membership: u32,
    pub social_activity: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub records: Vec<TruthRecord>,
}

impl GroundTruth {
    /// Records grouped by frame, in ascending frame order.
    pub fn frames(&self) -> BTreeMap<u32, Vec<&TruthRecord>> {
        let mut out: BTreeMap<u32, Vec<&TruthRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.frame_index).or_default().push(r);
        }
        out
    }

    /// Video-level activity: the label carried by the most records, ties to
    /// the smallest label.
    pub fn group_activity(&self) -> Option<u32> {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.group_activity).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(label, _)| label)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(TRUTH_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {}",
                r.frame_index,
                r.actor_id,
                r.bbox.x1,
                r.bbox.y1,
                r.bbox.x2,
                r.bbox.y2,
                r.action,
                r.group_activity,
                r.membership,
                r.social_activity
            );
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut records = Vec::new();
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
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 10 {
                return Err(err(format!("expected 10 fields, found {}", fields.len())));
            }
            let int = |i: usize| -> Result<u32> {
                fields[i]
                    .parse()
                    .map_err(|_| err(format!("field {} is not an integer: {:?}", i + 1, fields[i])))
            };
            let float = |i: usize| -> Result<f32> {
                fields[i]
                    .parse()
                    .map_err(|_| err(format!("field {} is not a number: {:?}", i + 1, fields[i])))
            };
            let bbox = BBox::new(float(2)?, float(3)?, float(4)?, float(5)?);
            bbox.validate().map_err(|e| err(e.to_string()))?;
            records.push(TruthRecord {
                frame_index: int(0)?,
                actor_id: int(1)?,
                bbox,
                action: int(6)?,
                group_activity: int(7)?,
                membership: int(8)?,
                social_activity: int(9)?,
            });
        }
        Ok(Self { records })
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
