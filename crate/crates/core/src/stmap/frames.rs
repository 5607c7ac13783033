use super::{Frame, Result, StmapError};
use std::path::{Path, PathBuf};

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(h as usize, w as usize, img.into_raw())
}

/// Lists `*.png`/`*.ppm` files in `dir`; lexicographic order is time order.
pub fn frame_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Lazily decodes every frame in `dir` in time order.
pub fn read_frame_dir(dir: impl AsRef<Path>) -> Result<impl Iterator<Item = Result<Frame>>> {
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(StmapError::EmptySource);
    }
    Ok(paths.into_iter().map(read_frame))
}
