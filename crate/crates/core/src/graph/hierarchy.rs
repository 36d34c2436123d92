use serde::{Deserialize, Serialize};

use super::{build_radius_graph_on, derive_seed, draw_subset, PointGrid, RadiusGraph};
use crate::error::{Error, Result};

/// One level of a [`ScaleHierarchy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    /// Indices into the level-0 point list.
    pub nodes: Vec<usize>,
    pub graph: RadiusGraph,
    /// Positions (into this scale) of the nodes kept at the next scale.
    /// Empty on the coarsest scale.
    pub retained: Vec<usize>,
    /// For every node of this scale, the position in the next scale of its
    /// nearest retained node. Empty on the coarsest scale.
    pub parent: Vec<usize>,
}

impl Scale {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nested random-downsampling ladder with a radius graph per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleHierarchy {
    pub scales: Vec<Scale>,
}

impl ScaleHierarchy {
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.scales.iter().map(Scale::len).collect()
    }

    /// Fine nodes grouped by their coarse parent (children of scale `level + 1`).
    pub fn children(&self, level: usize) -> Vec<Vec<usize>> {
        let coarse = self.scales[level + 1].len();
        let mut out = vec![Vec::new(); coarse];
        for (i, &p) in self.scales[level].parent.iter().enumerate() {
            out[p].push(i);
        }
        out
    }
}

/// Ladder definition: `ratios.len() + 1` scales, one radius and one cap per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub ratios: Vec<f64>,
    pub radii: Vec<f64>,
    pub caps: Vec<usize>,
    /// Fail unless the coarsest graph is connected.
    pub require_connected_top: bool,
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.radii.len() != self.ratios.len() + 1 {
            return arg(format!(
                "{} ratios need {} radii, got {}",
                self.ratios.len(),
                self.ratios.len() + 1,
                self.radii.len()
            ));
        }
        if self.caps.len() != self.radii.len() {
            return arg(format!(
                "need one neighbor cap per scale ({}), got {}",
                self.radii.len(),
                self.caps.len()
            ));
        }
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return arg(format!("downsampling ratio {r} outside (0, 1]"));
        }
        Ok(())
    }

    /// The same ladder with every cap replaced by `cap`.
    pub fn with_cap(&self, cap: usize) -> Self {
        Self {
            caps: vec![cap; self.caps.len()],
            ..self.clone()
        }
    }
}

/// Builds the ladder with connectivity of the top scale unchecked.
pub fn pooling_hierarchy(
    points: &[[f64; 2]],
    ratios: &[f64],
    radii: &[f64],
    caps: &[usize],
    seed: u64,
) -> Result<ScaleHierarchy> {
    let spec = HierarchySpec {
        ratios: ratios.to_vec(),
        radii: radii.to_vec(),
        caps: caps.to_vec(),
        require_connected_top: false,
    };
    pooling_hierarchy_with(points, &spec, seed)
}

/// Scale `k + 1` is a seeded uniform subset of scale `k` of size
/// `round(ratio_k * |scale k|)`; every node is assigned to its nearest
/// retained node (ties to the lowest index, retained nodes to themselves).
pub fn pooling_hierarchy_with(
    points: &[[f64; 2]],
    spec: &HierarchySpec,
    seed: u64,
) -> Result<ScaleHierarchy> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::Argument("hierarchy over an empty point set".into()));
    }
    let mut nodes: Vec<usize> = (0..points.len()).collect();
    let mut scales = Vec::with_capacity(spec.radii.len());
    for (level, (&radius, &cap)) in spec.radii.iter().zip(&spec.caps).enumerate() {
        let graph = build_radius_graph_on(
            points,
            &nodes,
            radius,
            cap,
            derive_seed(seed, 2 * level as u64),
        )?;
        let mut scale = Scale {
            nodes: nodes.clone(),
            graph,
            retained: Vec::new(),
            parent: Vec::new(),
        };
        if let Some(&ratio) = spec.ratios.get(level) {
            let size = (ratio * nodes.len() as f64).round() as usize;
            if size == 0 {
                return Err(Error::Argument(format!(
                    "scale {} collapses to 0 nodes ({} x {ratio})",
                    level + 1,
                    nodes.len()
                )));
            }
            let retained = draw_subset(nodes.len(), size, derive_seed(seed, 2 * level as u64 + 1))?;
            let kept_pts: Vec<[f64; 2]> = retained.iter().map(|&k| points[nodes[k]]).collect();
            let grid = PointGrid::for_nearest(&kept_pts);
            let mut parent: Vec<usize> = nodes
                .iter()
                .map(|&g| grid.nearest(&kept_pts, points[g]).expect("non-empty"))
                .collect();
            for (c, &k) in retained.iter().enumerate() {
                parent[k] = c;
            }
            let next = retained.iter().map(|&k| nodes[k]).collect();
            scale.retained = retained;
            scale.parent = parent;
            nodes = next;
        }
        scales.push(scale);
    }
    if spec.require_connected_top {
        let top = &scales.last().expect("at least one scale").graph;
        if !top.is_connected() {
            return Err(Error::Argument(format!(
                "coarsest graph (radius {}) is not connected",
                top.radius
            )));
        }
    }
    Ok(ScaleHierarchy { scales })
}
