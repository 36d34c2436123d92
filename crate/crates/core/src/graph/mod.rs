//! Node subsampling, capped radius graphs and multi-scale hierarchies.

mod grid;
mod hierarchy;

pub use grid::PointGrid;
pub use hierarchy::{
    pooling_hierarchy, pooling_hierarchy_with, HierarchySpec, Scale, ScaleHierarchy,
};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MeshSample;

/// Directed radius graph over a node subset.
///
/// `edges` hold `(src, dst)` positions into `nodes`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGraph {
    /// Indices into the parent point set.
    pub nodes: Vec<usize>,
    pub edges: Vec<(u32, u32)>,
    pub radius: f64,
    pub max_neighbors: usize,
}

/// In-edges grouped by destination (CSR).
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub n_nodes: usize,
    /// `offsets[i]..offsets[i + 1]` indexes the in-edges of node `i`.
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
    /// Position of each in-edge in [`RadiusGraph::edges`].
    pub edge_ids: Vec<usize>,
}

impl Adjacency {
    pub fn from_edges(n_nodes: usize, edges: &[(u32, u32)]) -> Self {
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(_, d) in edges {
            offsets[d as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut sources = vec![0; edges.len()];
        let mut edge_ids = vec![0; edges.len()];
        for (e, &(s, d)) in edges.iter().enumerate() {
            let slot = &mut fill[d as usize];
            sources[*slot] = s as usize;
            edge_ids[*slot] = e;
            *slot += 1;
        }
        Self {
            n_nodes,
            offsets,
            sources,
            edge_ids,
        }
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn in_edges(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.sources[r.clone()]
            .iter()
            .copied()
            .zip(self.edge_ids[r].iter().copied())
    }
}

impl RadiusGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// A graph over `n` nodes without edges.
    pub fn empty(n: usize) -> Self {
        Self {
            nodes: (0..n).collect(),
            edges: Vec::new(),
            radius: 0.0,
            max_neighbors: 0,
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_edges(self.n_nodes(), &self.edges)
    }

    pub fn src(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0 as usize).collect()
    }

    pub fn dst(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1 as usize).collect()
    }

    /// Weak connectivity of the edge set over all nodes.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n <= 1 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut components = n;
        for &(s, d) in &self.edges {
            let (a, b) = (find(&mut parent, s as usize), find(&mut parent, d as usize));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components == 1
    }
}

/// Mixes a base seed with a stream index into an independent seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` distinct node indices drawn uniformly without replacement, sorted.
pub fn subsample(sample: &MeshSample, n: usize, seed: u64) -> Result<Vec<usize>> {
    draw_subset(sample.n_nodes(), n, seed)
}

pub(crate) fn draw_subset(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(Error::Argument(format!(
            "subsample size {n} outside 1..={total}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    match points
        .iter()
        .position(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        Some(k) => Err(Error::Argument(format!(
            "point {k} has non-finite coordinates"
        ))),
        None => Ok(()),
    }
}

/// Connects every ordered pair within `radius` (inclusive), keeping at most
/// `max_neighbors` in-edges per destination. When the cap binds, the kept
/// sources are a uniform draw seeded by `(seed, destination)`.
pub fn build_radius_graph(
    points: &[[f64; 2]],
    radius: f64,
    max_neighbors: usize,
    seed: u64,
) -> Result<RadiusGraph> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Argument(format!("radius must be > 0, got {radius}")));
    }
    if max_neighbors == 0 {
        return Err(Error::Argument("max_neighbors must be >= 1".into()));
    }
    check_points(points)?;
    let grid = PointGrid::new(points, radius);
    let r2 = radius * radius;

    let kept: Vec<Vec<u32>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut cand = grid.within(points, points[i], r2);
            cand.retain(|&j| j != i as u32);
            cand.sort_unstable();
            if cand.len() > max_neighbors {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                let mut pick = index::sample(&mut rng, cand.len(), max_neighbors).into_vec();
                pick.sort_unstable();
                cand = pick.into_iter().map(|k| cand[k]).collect();
            }
            cand
        })
        .collect();

    let mut edges: Vec<(u32, u32)> = kept
        .iter()
        .enumerate()
        .flat_map(|(dst, srcs)| srcs.iter().map(move |&s| (s, dst as u32)))
        .collect();
    edges.sort_unstable();
    Ok(RadiusGraph {
        nodes: (0..points.len()).collect(),
        edges,
        radius,
        max_neighbors,
    })
}

/// [`build_radius_graph`] over `nodes` of a larger point set; the result's
/// `nodes` keeps the parent indices.
pub fn build_radius_graph_on(
    all_points: &[[f64; 2]],
    nodes: &[usize],
    radius: f64,
    max_neighbors: usize,
    seed: u64,
) -> Result<RadiusGraph> {
    let pts: Vec<[f64; 2]> = nodes.iter().map(|&i| all_points[i]).collect();
    let mut g = build_radius_graph(&pts, radius, max_neighbors, seed)?;
    g.nodes = nodes.to_vec();
    Ok(g)
}

/// O(n^2) reference: all ordered pairs `(src, dst)`, `src != dst`, with
/// distance <= `radius`, sorted.
pub fn brute_force_neighbors(points: &[[f64; 2]], radius: f64) -> Vec<(u32, u32)> {
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (s, ps) in points.iter().enumerate() {
        for (d, pd) in points.iter().enumerate() {
            if s == d {
                continue;
            }
            let (dx, dy) = (ps[0] - pd[0], ps[1] - pd[1]);
            if dx * dx + dy * dy <= r2 {
                edges.push((s as u32, d as u32));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn uniform(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.gen(), rng.gen()]).collect()
    }

    #[test]
    fn pair_inside_and_outside_radius() {
        let g = build_radius_graph(&[[0.0, 0.0], [0.05, 0.0]], 0.1, 64, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 0)]);
        let g = build_radius_graph(&[[0.0, 0.0], [0.15, 0.0]], 0.1, 64, 0).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn brute_force_includes_boundary() {
        // Spacing 0.05 in binary floating point: the outer pair sits at 0.1 within rounding,
        // so use an exactly representable layout.
        let pts = [[0.0, 0.0], [0.0625, 0.0], [0.125, 0.0]];
        let edges: HashSet<_> = brute_force_neighbors(&pts, 0.125).into_iter().collect();
        let want: HashSet<_> = [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)].into();
        assert_eq!(edges, want);
        let decimal = [[0.0, 0.0], [0.05, 0.0], [0.1, 0.0]];
        let edges: HashSet<_> = brute_force_neighbors(&decimal, 0.1).into_iter().collect();
        assert_eq!(edges, want);
        assert!(brute_force_neighbors(&[[1.0, 1.0]], 0.1).is_empty());
        let dup = brute_force_neighbors(&[[0.3, 0.3], [0.3, 0.3]], 0.1);
        assert_eq!(dup, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn uncapped_equals_oracle() {
        let pts = uniform(500, 11);
        let g = build_radius_graph(&pts, 0.1, 1000, 5).unwrap();
        assert_eq!(g.edges, brute_force_neighbors(&pts, 0.1));
    }

    #[test]
    fn cap_binds_uniformly_and_deterministically() {
        let pts = uniform(400, 2);
        let g = build_radius_graph(&pts, 0.3, 16, 9).unwrap();
        let adj = g.adjacency();
        for i in 0..pts.len() {
            assert!(adj.in_degree(i) <= 16);
        }
        for &(s, d) in &g.edges {
            let (a, b) = (pts[s as usize], pts[d as usize]);
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) <= 0.3);
            assert_ne!(s, d);
        }
        assert!(g.edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g, build_radius_graph(&pts, 0.3, 16, 9).unwrap());
        assert_ne!(
            g.edges,
            build_radius_graph(&pts, 0.3, 16, 10).unwrap().edges
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_radius_graph(&[[f64::NAN, 0.0]], 0.1, 4, 0).is_err());
        assert!(build_radius_graph(&[[0.0, 0.0]], 0.0, 4, 0).is_err());
        assert!(build_radius_graph(&[[0.0, 0.0]], 0.1, 0, 0).is_err());
    }

    #[test]
    fn subsample_contract() {
        assert_eq!(draw_subset(10, 10, 3).unwrap(), (0..10).collect::<Vec<_>>());
        let a = draw_subset(13012, 1600, 1).unwrap();
        assert_eq!(a.len(), 1600);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 1600);
        assert_eq!(a, draw_subset(13012, 1600, 1).unwrap());
        assert_ne!(a, draw_subset(13012, 1600, 2).unwrap());
        assert!(draw_subset(5, 0, 0).is_err());
        assert!(draw_subset(5, 6, 0).is_err());
    }

    #[test]
    fn connectivity() {
        let g = build_radius_graph(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0]], 0.1, 8, 0).unwrap();
        assert!(!g.is_connected());
        let g = build_radius_graph(&[[0.0, 0.0], [0.05, 0.0], [5.0, 5.0]], 10.0, 8, 0).unwrap();
        assert!(g.is_connected());
    }

    #[test]
    fn adjacency_groups_by_destination() {
        let g = RadiusGraph {
            nodes: vec![0, 1, 2],
            edges: vec![(0, 2), (1, 0), (1, 2)],
            radius: 1.0,
            max_neighbors: 4,
        };
        let adj = g.adjacency();
        assert_eq!(adj.in_edges(2).collect::<Vec<_>>(), vec![(0, 0), (1, 2)]);
        assert_eq!(adj.in_edges(0).collect::<Vec<_>>(), vec![(1, 1)]);
        assert_eq!(adj.in_degree(1), 0);
    }

    proptest! {
        #[test]
        fn generous_cap_matches_oracle(seed in 0u64..1000, n in 1usize..200, r in 0.01f64..0.5) {
            let pts = uniform(n, seed);
            let g = build_radius_graph(&pts, r, n, seed).unwrap();
            prop_assert_eq!(&g.edges, &brute_force_neighbors(&pts, r));
            let set: HashSet<_> = g.edges.iter().copied().collect();
            prop_assert!(g.edges.iter().all(|&(s, d)| set.contains(&(d, s))));
        }
    }
}
