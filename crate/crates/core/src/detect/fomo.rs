use serde::{Deserialize, Serialize};

use super::{BBox, DetectError, Detection};

/// Class-score map at 1/`stride` resolution; channel 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct FomoGrid {
    pub gh: usize,
    pub gw: usize,
    pub stride: usize,
    /// Classes plus background.
    pub channels: usize,
    /// Row-major `gh x gw x channels` scores.
    pub scores: Vec<f64>,
}

impl FomoGrid {
    pub fn new(gh: usize, gw: usize, stride: usize, channels: usize, scores: Vec<f64>) -> Result<Self, DetectError> {
        if gh == 0 || gw == 0 || stride == 0 || channels < 2 {
            return Err(DetectError::InvalidGrid(format!("{gh}x{gw}x{channels} with stride {stride}")));
        }
        if scores.len() != gh * gw * channels {
            return Err(DetectError::LengthMismatch { what: "FOMO scores", expected: gh * gw * channels, got: scores.len() });
        }
        Ok(FomoGrid { gh, gw, stride, channels, scores })
    }

    /// Applies a per-cell softmax to raw logits.
    pub fn from_logits(gh: usize, gw: usize, stride: usize, channels: usize, logits: &[f64]) -> Result<Self, DetectError> {
        let mut scores = logits.to_vec();
        for cell in scores.chunks_mut(channels.max(1)) {
            let m = cell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cell.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s: f64 = cell.iter().sum();
            cell.iter_mut().for_each(|v| *v /= s);
        }
        Self::new(gh, gw, stride, channels, scores)
    }

    /// Checks the grid covers an input image exactly.
    pub fn matches_input(&self, height: usize, width: usize) -> bool {
        self.gh * self.stride == height && self.gw * self.stride == width
    }

    #[inline]
    pub fn score(&self, i: usize, j: usize, c: usize) -> f64 {
        self.scores[(i * self.gw + j) * self.channels + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FomoDetection {
    #[serde(flatten)]
    pub detection: Detection,
    /// Score-weighted mean of the component's cell centers, in pixels.
    pub centroid: (f64, f64),
    pub cells: usize,
}

/// One detection per 4-connected component of cells scoring at least
/// `score_thr`, per non-background class. Components are reported by class,
/// then by their first cell in row-major order.
pub fn decode_fomo(grid: &FomoGrid, score_thr: f64) -> Vec<FomoDetection> {
    let mut out = Vec::new();
    let s = grid.stride as f64;
    for c in 1..grid.channels {
        let hot = |i: usize, j: usize| grid.score(i, j, c) >= score_thr;
        let mut seen = vec![false; grid.gh * grid.gw];
        for i0 in 0..grid.gh {
            for j0 in 0..grid.gw {
                if seen[i0 * grid.gw + j0] || !hot(i0, j0) {
                    continue;
                }
                let mut stack = vec![(i0, j0)];
                seen[i0 * grid.gw + j0] = true;
                let (mut r0, mut r1, mut c0, mut c1) = (i0, i0, j0, j0);
                let (mut wsum, mut wx, mut wy, mut best) = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
                let mut cells = 0;
                while let Some((i, j)) = stack.pop() {
                    cells += 1;
                    let v = grid.score(i, j, c);
                    best = best.max(v);
                    wsum += v;
                    wx += v * (j as f64 + 0.5) * s;
                    wy += v * (i as f64 + 0.5) * s;
                    (r0, r1, c0, c1) = (r0.min(i), r1.max(i), c0.min(j), c1.max(j));
                    let mut visit = |ni: usize, nj: usize| {
                        if !seen[ni * grid.gw + nj] && hot(ni, nj) {
                            seen[ni * grid.gw + nj] = true;
                            stack.push((ni, nj));
                        }
                    };
                    if i > 0 {
                        visit(i - 1, j);
                    }
                    if i + 1 < grid.gh {
                        visit(i + 1, j);
                    }
                    if j > 0 {
                        visit(i, j - 1);
                    }
                    if j + 1 < grid.gw {
                        visit(i, j + 1);
                    }
                }
                let bbox = BBox { x1: c0 as f64 * s, y1: r0 as f64 * s, x2: (c1 + 1) as f64 * s, y2: (r1 + 1) as f64 * s };
                let centroid = if wsum > 0.0 { (wx / wsum, wy / wsum) } else { ((bbox.x1 + bbox.x2) / 2.0, (bbox.y1 + bbox.y2) / 2.0) };
                out.push(FomoDetection { detection: Detection { bbox, class_id: c - 1, score: best }, centroid, cells });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 2-channel grid (background + one class) from a hot-cell mask.
    fn grid(gh: usize, gw: usize, hot: &[(usize, usize)]) -> FomoGrid {
        let mut scores = vec![0.0; gh * gw * 2];
        for i in 0..gh * gw {
            scores[2 * i] = 1.0;
        }
        for &(i, j) in hot {
            scores[(i * gw + j) * 2] = 0.1;
            scores[(i * gw + j) * 2 + 1] = 0.9;
        }
        FomoGrid::new(gh, gw, 8, 2, scores).unwrap()
    }

    #[test]
    fn single_cell_geometry() {
        let d = decode_fomo(&grid(3, 3, &[(1, 1)]), 0.5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].detection.bbox, BBox::new(8.0, 8.0, 16.0, 16.0).unwrap());
        assert_eq!(d[0].centroid, (12.0, 12.0));
    }

    #[test]
    fn adjacent_cells_merge() {
        let d = decode_fomo(&grid(3, 3, &[(1, 1), (1, 2)]), 0.5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].detection.bbox, BBox::new(8.0, 8.0, 24.0, 16.0).unwrap());
        assert_eq!(d[0].cells, 2);
    }

    #[test]
    fn diagonal_cells_stay_separate() {
        assert_eq!(decode_fomo(&grid(3, 3, &[(0, 0), (1, 1)]), 0.5).len(), 2);
    }

    #[test]
    fn grid_validation() {
        assert!(FomoGrid::new(2, 2, 8, 2, vec![0.0; 7]).is_err());
        assert!(FomoGrid::new(2, 2, 8, 1, vec![0.0; 4]).is_err());
        assert!(grid(12, 12, &[]).matches_input(96, 96));
    }

    #[test]
    fn logits_become_probabilities() {
        let g = FomoGrid::from_logits(1, 1, 8, 3, &[0.0, 2f64.ln(), 0.0]).unwrap();
        assert!((g.score(0, 0, 1) - 0.5).abs() < 1e-12);
    }

    /// Independent component count by repeated flood fill with a queue.
    fn oracle_components(mask: &[bool], gh: usize, gw: usize) -> usize {
        let mut label = vec![0usize; mask.len()];
        let mut n = 0;
        for start in 0..mask.len() {
            if !mask[start] || label[start] != 0 {
                continue;
            }
            n += 1;
            let mut queue = std::collections::VecDeque::from([start]);
            label[start] = n;
            while let Some(k) = queue.pop_front() {
                let (i, j) = ((k / gw) as isize, (k % gw) as isize);
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= gh as isize || nj >= gw as isize {
                        continue;
                    }
                    let nk = ni as usize * gw + nj as usize;
                    if mask[nk] && label[nk] == 0 {
                        label[nk] = n;
                        queue.push_back(nk);
                    }
                }
            }
        }
        n
    }

    proptest! {
        #[test]
        fn count_matches_flood_fill(gh in 1usize..8, gw in 1usize..8, bits in proptest::collection::vec(any::<bool>(), 64)) {
            let mask: Vec<bool> = bits[..gh * gw].to_vec();
            let hot: Vec<(usize, usize)> = (0..gh * gw).filter(|&k| mask[k]).map(|k| (k / gw, k % gw)).collect();
            prop_assert_eq!(decode_fomo(&grid(gh, gw, &hot), 0.5).len(), oracle_components(&mask, gh, gw));
        }
    }
}
