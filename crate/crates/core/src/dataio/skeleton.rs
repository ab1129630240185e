use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{read_text, write_atomic};
use crate::dgnn::{frame_graph, Encoding, SKELETON_JOINTS};
use crate::graphs::Graph;
use crate::{Error, Result};

/// Actions kept from UTKinect-Action3D, in class-index order.
pub const ACTIONS: [&str; 6] = ["walk", "sitDown", "standUp", "pickUp", "waveHands", "clapHands"];

const NORMALIZED_HEADER: &str = "# dgnn-skeletons v1";
const NORMALIZED_FILE: &str = "skeletons.txt";

pub type Frame = [[f64; 3]; SKELETON_JOINTS];

/// One recorded action segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    /// Recording id such as `s01_e02` (subject 1, repetition 2).
    pub subject: String,
    /// Index into [`ACTIONS`].
    pub action: usize,
    pub frames: Vec<Frame>,
}

fn action_index(name: &str) -> Option<usize> {
    ACTIONS.iter().position(|a| a.eq_ignore_ascii_case(name))
}

fn parse_frame(path: &Path, line: usize, values: &[&str]) -> Result<Frame> {
    if values.len() != 3 * SKELETON_JOINTS {
        return Err(Error::parse(
            path,
            line,
            format!("expected {} coordinates, got {}", 3 * SKELETON_JOINTS, values.len()),
        ));
    }
    let mut frame = [[0.0; 3]; SKELETON_JOINTS];
    for (k, v) in values.iter().enumerate() {
        frame[k / 3][k % 3] = v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::parse(path, line, format!("bad coordinate {v:?}")))?;
    }
    Ok(frame)
}

/// Frames of a UTKinect joints file keyed by frame index; repeated indices
/// keep their first row.
fn read_joints(path: &Path) -> Result<BTreeMap<i64, Frame>> {
    let mut frames = BTreeMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let index: i64 = cols[0]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad frame index {:?}", cols[0])))?;
        let frame = parse_frame(path, i + 1, &cols[1..])?;
        frames.entry(index).or_insert(frame);
    }
    Ok(frames)
}

/// `(recording, action, first frame, last frame)` rows of `actionLabel.txt`;
/// segments with a missing bound are dropped.
fn read_action_labels(path: &Path) -> Result<Vec<(String, String, i64, i64)>> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for (i, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(':') {
            None => current = Some(line.to_string()),
            Some((action, bounds)) => {
                let rec = current
                    .clone()
                    .ok_or_else(|| Error::parse(path, i + 1, "action row before any recording id"))?;
                let b: Vec<&str> = bounds.split_whitespace().collect();
                if b.len() != 2 {
                    return Err(Error::parse(path, i + 1, "expected `action: start end`"));
                }
                if let (Ok(s), Ok(e)) = (b[0].parse::<i64>(), b[1].parse::<i64>()) {
                    out.push((rec, action.trim().to_string(), s, e));
                }
            }
        }
    }
    Ok(out)
}

fn load_utkinect(dir: &Path) -> Result<Vec<SkeletonSequence>> {
    let labels = read_action_labels(&dir.join("actionLabel.txt"))?;
    let joints_dir = if dir.join("joints").is_dir() { dir.join("joints") } else { dir.to_path_buf() };
    let mut cache: BTreeMap<String, BTreeMap<i64, Frame>> = BTreeMap::new();
    let mut out = Vec::new();
    for (rec, action, start, end) in labels {
        let Some(action) = action_index(&action) else { continue };
        if !cache.contains_key(&rec) {
            let frames = read_joints(&joints_dir.join(format!("joints_{rec}.txt")))?;
            cache.insert(rec.clone(), frames);
        }
        let frames: Vec<Frame> = cache[&rec].range(start..=end).map(|(_, f)| *f).collect();
        if !frames.is_empty() {
            out.push(SkeletonSequence {
                subject: rec,
                action,
                frames,
            });
        }
    }
    Ok(out)
}

fn load_normalized(path: &Path) -> Result<Vec<SkeletonSequence>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == NORMALIZED_HEADER => {}
        other => {
            return Err(Error::Version {
                path: path.into(),
                expected: NORMALIZED_HEADER.into(),
                found: other.map(|(_, h)| h.trim().to_string()).unwrap_or_default(),
            })
        }
    }
    let mut out: Vec<SkeletonSequence> = Vec::new();
    let mut remaining = 0usize;
    let mut keep = false;
    for (i, line) in lines {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if remaining == 0 {
            if cols.len() != 4 || cols[0] != "seq" {
                return Err(Error::parse(path, i + 1, "expected `seq <recording> <action> <frames>`"));
            }
            remaining = cols[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad frame count {:?}", cols[3])))?;
            let action = action_index(cols[2]);
            keep = action.is_some();
            if let Some(action) = action {
                out.push(SkeletonSequence {
                    subject: cols[1].to_string(),
                    action,
                    frames: Vec::with_capacity(remaining),
                });
            }
        } else {
            let frame = parse_frame(path, i + 1, &cols)?;
            if keep {
                out.last_mut().expect("pushed above").frames.push(frame);
            }
            remaining -= 1;
        }
    }
    if remaining != 0 {
        return Err(Error::parse(path, text.lines().count(), format!("{remaining} frames missing at end of file")));
    }
    Ok(out)
}

/// Loads the six-action subset from either a UTKinect directory
/// (`actionLabel.txt` plus `joints_<recording>.txt`, optionally under
/// `joints/`) or the normalized `skeletons.txt` form (file or directory).
pub fn load_skeleton_dataset(path: &Path) -> Result<Vec<SkeletonSequence>> {
    if path.is_file() {
        return load_normalized(path);
    }
    if path.join("actionLabel.txt").is_file() {
        return load_utkinect(path);
    }
    load_normalized(&path.join(NORMALIZED_FILE))
}

/// Writes sequences in the normalized form; a directory gets `skeletons.txt`.
pub fn save_skeleton_dataset(sequences: &[SkeletonSequence], path: &Path) -> Result<()> {
    let path = if path.is_dir() { path.join(NORMALIZED_FILE) } else { path.to_path_buf() };
    let mut out = String::from(NORMALIZED_HEADER);
    out.push('\n');
    for s in sequences {
        let action = ACTIONS
            .get(s.action)
            .ok_or_else(|| Error::Domain(format!("action index {} out of range", s.action)))?;
        if s.subject.is_empty() || s.subject.contains(char::is_whitespace) {
            return Err(Error::Domain(format!("recording id {:?} must be a single token", s.subject)));
        }
        let _ = writeln!(out, "seq {} {action} {}", s.subject, s.frames.len());
        for f in &s.frames {
            let cells: Vec<String> = f.iter().flatten().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    write_atomic(&path, out.as_bytes())
}

/// Per-axis min-max scaling of one frame into the encoding range; an axis
/// with no spread maps to the lower bound.
pub fn normalize_frame(frame: &Frame, encoding: Encoding) -> Frame {
    let (lo, hi) = encoding.range();
    let mut out = *frame;
    for a in 0..3 {
        let min = frame.iter().map(|j| j[a]).fold(f64::INFINITY, f64::min);
        let max = frame.iter().map(|j| j[a]).fold(f64::NEG_INFINITY, f64::max);
        for (o, j) in out.iter_mut().zip(frame) {
            o[a] = if max > min {
                (lo + (j[a] - min) / (max - min) * (hi - lo)).clamp(lo, hi)
            } else {
                lo
            };
        }
    }
    out
}

/// Normalized skeleton graph of every frame.
pub fn sequence_frames(sequence: &SkeletonSequence, encoding: Encoding) -> Result<Vec<Graph>> {
    sequence
        .frames
        .iter()
        .map(|f| frame_graph(&normalize_frame(f, encoding)))
        .collect()
}

/// Test recordings of one fold and the sequence indices on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub test_subjects: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the distinct recording ids with `seed` and deals them into
/// `folds` equal groups.
pub fn kfold_by_subject(sequences: &[SkeletonSequence], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let mut subjects: Vec<String> = sequences
        .iter()
        .map(|s| s.subject.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if folds == 0 || subjects.len() % folds != 0 || subjects.is_empty() {
        return Err(Error::Domain(format!(
            "{} recordings cannot be split evenly into {folds} folds",
            subjects.len()
        )));
    }
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let per_fold = subjects.len() / folds;
    Ok(subjects
        .chunks(per_fold)
        .map(|chunk| {
            let mut test_subjects = chunk.to_vec();
            test_subjects.sort();
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..sequences.len()).partition(|&i| test_subjects.contains(&sequences[i].subject));
            Fold {
                test_subjects,
                train,
                test,
            }
        })
        .collect())
}
