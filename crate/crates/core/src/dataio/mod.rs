//! On-disk formats: plain-text graph bundles, PCA preprocessing, skeleton
//! sequences with subject-wise folds, and model checkpoints.

mod bundle;
mod checkpoint;
mod pca;
mod skeleton;

use std::fs;
use std::io::Write as _;
use std::path::Path;

pub use bundle::{load_bundle_meta, load_graph_bundle, save_graph_bundle, BundleMeta, BUNDLE_VERSION};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_HEADER};
pub use pca::{pca_reduce, PcaTransform, TargetRange};
pub use skeleton::{
    kfold_by_subject, load_skeleton_dataset, normalize_frame, save_skeleton_dataset, sequence_frames, Fold,
    SkeletonSequence, ACTIONS,
};

use crate::{Error, Result};

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
