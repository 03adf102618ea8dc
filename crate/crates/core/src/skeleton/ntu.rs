//! Reader and writer for the `.skeleton` text layout.
//!
//! Layout, line by line:
//!
//! ```text
//! N                      frame count
//! per frame:
//!   B                    body count (may be 0)
//!   per body:
//!     id f1 .. f9        body metadata: id plus 9 numeric flags
//!     25                 joint count
//!     25 x joint line    12 fields: x y z depthX depthY colorX colorY
//!                        orientW orientX orientY orientZ trackingState
//! ```
//!
//! Only the joint positions (meters, camera frame) and the tracking state are
//! interpreted; the remaining fields are parsed, validated as numeric and
//! carried through so a file can be written back without loss. The body
//! metadata line is preserved verbatim.

use super::{
    RawJoint, RawSkeletonFrame, RawSkeletonSequence, TrackingState, NOMINAL_FRAME_RATE,
    RAW_JOINT_COUNT,
};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("empty skeleton file")]
    Empty,
    #[error("skeleton file is not valid UTF-8")]
    Encoding,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    /// 1-based number of the line most recently returned.
    current: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines(),
            current: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        match self.inner.next() {
            Some(line) => {
                self.current += 1;
                Ok((self.current, line.trim_end()))
            }
            None => Err(ParseError::Malformed {
                line: self.current + 1,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    }
}

fn parse_count(line: usize, text: &str, what: &str) -> Result<usize, ParseError> {
    text.trim().parse::<usize>().map_err(|_| ParseError::Malformed {
        line,
        msg: format!("expected {what}, got {text:?}"),
    })
}

fn parse_f64(line: usize, token: &str, what: &str) -> Result<f64, ParseError> {
    token.parse::<f64>().map_err(|_| ParseError::Malformed {
        line,
        msg: format!("non-numeric {what} {token:?}"),
    })
}

/// Parses a `.skeleton` file into one sequence per tracked body id, in order
/// of first appearance. Frames keep their original ordinals, so bodies that
/// drop out of tracking have gaps in `timestamp_index`.
pub fn parse_skeleton_file(bytes: &[u8]) -> Result<Vec<RawSkeletonSequence>, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Encoding)?;
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut lines = Lines::new(text);

    let (ln, first) = lines.next("frame count")?;
    let frame_count = parse_count(ln, first, "frame count")?;

    let mut bodies: Vec<RawSkeletonSequence> = Vec::new();

    for frame_idx in 0..frame_count {
        let (ln, line) = lines.next("body count")?;
        let body_count = parse_count(ln, line, "body count")?;

        for _ in 0..body_count {
            let (meta_ln, meta) = lines.next("body metadata")?;
            let tokens: Vec<&str> = meta.split_whitespace().collect();
            if tokens.len() != 10 {
                return Err(ParseError::Malformed {
                    line: meta_ln,
                    msg: format!(
                        "body metadata must be an id plus 9 flags (10 fields), got {}",
                        tokens.len()
                    ),
                });
            }
            for flag in &tokens[1..] {
                parse_f64(meta_ln, flag, "body flag")?;
            }
            let body_id = tokens[0].to_string();

            let (ln, line) = lines.next("joint count")?;
            let joint_count = parse_count(ln, line, "joint count")?;
            if joint_count != RAW_JOINT_COUNT {
                return Err(ParseError::Malformed {
                    line: ln,
                    msg: format!("joint count must be {RAW_JOINT_COUNT}, got {joint_count}"),
                });
            }

            let mut joints = Vec::with_capacity(RAW_JOINT_COUNT);
            for _ in 0..RAW_JOINT_COUNT {
                let (jln, jline) = lines.next("joint line")?;
                let fields: Vec<&str> = jline.split_whitespace().collect();
                if fields.len() != 12 {
                    return Err(ParseError::Malformed {
                        line: jln,
                        msg: format!("joint line must have 12 fields, got {}", fields.len()),
                    });
                }
                let mut values = [0.0f64; 12];
                for (i, f) in fields.iter().enumerate() {
                    values[i] = parse_f64(jln, f, "joint field")?;
                }
                let position = Vector3::new(values[0], values[1], values[2]);
                if !position.iter().all(|v| v.is_finite()) {
                    return Err(ParseError::Malformed {
                        line: jln,
                        msg: "non-finite joint position".into(),
                    });
                }
                let tracking_code = values[11];
                let tracking = if tracking_code.fract() == 0.0 {
                    TrackingState::from_code(tracking_code as i64)
                } else {
                    None
                }
                .ok_or_else(|| ParseError::Malformed {
                    line: jln,
                    msg: format!("tracking state must be 0, 1 or 2, got {tracking_code}"),
                })?;
                let mut extra = [0.0f64; 8];
                extra.copy_from_slice(&values[3..11]);
                joints.push(RawJoint {
                    position,
                    extra,
                    tracking,
                });
            }

            let frame = RawSkeletonFrame {
                joints,
                body_meta: meta.to_string(),
                timestamp_index: frame_idx,
            };
            match bodies.iter_mut().find(|b| b.body_id == body_id) {
                Some(seq) => seq.frames.push(frame),
                None => bodies.push(RawSkeletonSequence {
                    body_id,
                    frames: vec![frame],
                    frame_rate: NOMINAL_FRAME_RATE,
                    source_label: String::new(),
                }),
            }
        }
    }

    Ok(bodies)
}

/// Writes body sequences back to the `.skeleton` text layout, regrouping
/// frames by ordinal. Frames in which no body is present are written with a
/// body count of 0 so ordinals survive a round trip.
pub fn write_skeleton_file(bodies: &[RawSkeletonSequence]) -> String {
    let frame_count = bodies
        .iter()
        .flat_map(|b| b.frames.iter().map(|f| f.timestamp_index + 1))
        .max()
        .unwrap_or(0);

    let mut out = String::new();
    out.push_str(&format!("{frame_count}\n"));
    for t in 0..frame_count {
        let present: Vec<&RawSkeletonFrame> = bodies
            .iter()
            .filter_map(|b| b.frames.iter().find(|f| f.timestamp_index == t))
            .collect();
        out.push_str(&format!("{}\n", present.len()));
        for frame in present {
            out.push_str(&frame.body_meta);
            out.push('\n');
            out.push_str(&format!("{RAW_JOINT_COUNT}\n"));
            for j in &frame.joints {
                out.push_str(&format!(
                    "{} {} {} {} {} {} {} {} {} {} {} {}\n",
                    j.position.x,
                    j.position.y,
                    j.position.z,
                    j.extra[0],
                    j.extra[1],
                    j.extra[2],
                    j.extra[3],
                    j.extra[4],
                    j.extra[5],
                    j.extra[6],
                    j.extra[7],
                    j.tracking.code()
                ));
            }
        }
    }
    out
}
