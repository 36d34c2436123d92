use std::collections::HashMap;

/// Uniform bucket grid over a fixed point set.
#[derive(Debug, Clone)]
pub struct PointGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl PointGrid {
    pub fn new(points: &[[f64; 2]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            buckets.entry(key(*p, cell)).or_default().push(k as u32);
        }
        Self { cell, buckets }
    }

    /// Grid sized for about two points per cell, suited to nearest queries.
    pub fn for_nearest(points: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let cell = if points.len() > 1 && extent > 0.0 {
            (extent * extent * 2.0 / points.len() as f64).sqrt()
        } else {
            1.0
        };
        Self::new(points, cell)
    }

    /// Indices of points within squared distance `r2` of `p` (unsorted).
    /// Requires `r2 <= cell^2`.
    pub fn within(&self, points: &[[f64; 2]], p: [f64; 2], r2: f64) -> Vec<u32> {
        let (cx, cy) = key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    out.extend(b.iter().copied().filter(|&j| {
                        let q = points[j as usize];
                        let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
                        ex * ex + ey * ey <= r2
                    }));
                }
            }
        }
        out
    }

    /// Nearest point to `p`; ties go to the lowest index.
    pub fn nearest(&self, points: &[[f64; 2]], p: [f64; 2]) -> Option<usize> {
        if self.buckets.is_empty() {
            return None;
        }
        let (cx, cy) = key(p, self.cell);
        let mut best: Option<(f64, u32)> = None;
        let mut ring = 0i64;
        loop {
            for (x, y) in ring_cells(cx, cy, ring) {
                if let Some(b) = self.buckets.get(&(x, y)) {
                    for &j in b {
                        let q = points[j as usize];
                        let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                        let better = match best {
                            None => true,
                            Some((bd, bj)) => d2 < bd || (d2 == bd && j < bj),
                        };
                        if better {
                            best = Some((d2, j));
                        }
                    }
                }
            }
            // Cells of ring r + 1 are at least r * cell away from p.
            if let Some((bd, _)) = best {
                let reach = ring as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
            ring += 1;
            if ring > MAX_RINGS {
                return Some(scan_nearest(points, p));
            }
        }
        best.map(|(_, j)| j as usize)
    }
}

/// Past this many empty-ish rings a linear scan is cheaper.
const MAX_RINGS: i64 = 64;

fn scan_nearest(points: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (j, q) in points.iter().enumerate() {
        let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if d2 < best.0 {
            best = (d2, j);
        }
    }
    best.1
}

fn key(p: [f64; 2], cell: f64) -> (i64, i64) {
    ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
}

fn ring_cells(cx: i64, cy: i64, r: i64) -> Vec<(i64, i64)> {
    if r == 0 {
        return vec![(cx, cy)];
    }
    let mut cells = Vec::with_capacity(8 * r as usize);
    for d in -r..=r {
        cells.push((cx + d, cy - r));
        cells.push((cx + d, cy + r));
    }
    for d in -r + 1..r {
        cells.push((cx - r, cy + d));
        cells.push((cx + r, cy + d));
    }
    cells
}
