//! Binary morphology and connected components on row-major label grids.

/// 8-connected components of nonzero pixels, labelled in raster scan order
/// of their first pixel. Returns the pixel lists of each component.
pub fn components8(labels: &[u8], rows: usize, cols: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if labels[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            pixels.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if labels[j] != 0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(pixels);
    }
    out
}

fn dilate3(labels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = vec![0u8; labels.len()];
    for r in 0..rows {
        for c in 0..cols {
            let hit = (r.saturating_sub(1)..(r + 2).min(rows))
                .any(|rr| (c.saturating_sub(1)..(c + 2).min(cols)).any(|cc| labels[rr * cols + cc] != 0));
            out[r * cols + c] = hit as u8;
        }
    }
    out
}

// Out-of-image neighbours are ignored, so closing never removes pixels that
// touch the border.
fn erode3(labels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = vec![0u8; labels.len()];
    for r in 0..rows {
        for c in 0..cols {
            let keep = (r.saturating_sub(1)..(r + 2).min(rows))
                .all(|rr| (c.saturating_sub(1)..(c + 2).min(cols)).all(|cc| labels[rr * cols + cc] != 0));
            out[r * cols + c] = keep as u8;
        }
    }
    out
}

/// 3x3 closing (dilation then erosion). The result is a superset of the input.
pub fn close3(labels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    erode3(&dilate3(labels, rows, cols), rows, cols)
}

/// Zeroes every 8-connected component with fewer than `min_area` pixels.
pub fn remove_small(labels: &[u8], rows: usize, cols: usize, min_area: usize) -> Vec<u8> {
    let mut out = vec![0u8; labels.len()];
    for comp in components8(labels, rows, cols) {
        if comp.len() >= min_area {
            for (r, c) in comp {
                out[r * cols + c] = 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_touch_is_connected() {
        let l = [1, 0, 0, 0, 1, 0, 0, 0, 1];
        assert_eq!(components8(&l, 3, 3).len(), 1);
        let l = [1, 0, 1, 0, 0, 0, 1, 0, 1];
        assert_eq!(components8(&l, 3, 3).len(), 4);
    }

    #[test]
    fn closing_bridges_single_gap() {
        let l = [1, 1, 0, 1, 1];
        assert_eq!(close3(&l, 1, 5), vec![1, 1, 1, 1, 1]);
    }

    #[test]
    fn closing_is_extensive() {
        let l = [1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0];
        let c = close3(&l, 3, 4);
        assert!(l.iter().zip(&c).all(|(a, b)| *b >= *a));
    }
}
