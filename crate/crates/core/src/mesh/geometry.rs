use super::MeshSample;
use crate::error::{Error, Result};

/// Wall nodes in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceLoop {
    pub nodes: Vec<usize>,
    pub closed: bool,
}

impl SurfaceLoop {
    /// Consecutive node pairs `(a, b)` as positions into `nodes`, in traversal order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.nodes.len();
        let count = if self.closed { m } else { m.saturating_sub(1) };
        (0..count).map(move |k| (k, (k + 1) % m))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orders the wall edges into a single loop (or a single open chain when the
/// sample declares an open wall).
pub fn surface_loop(s: &MeshSample) -> Result<SurfaceLoop> {
    let topo = |msg: String| Err(Error::Topology(msg));
    if s.surface_edges.is_empty() {
        return topo("no surface edges".into());
    }
    let n = s.n_nodes();
    let mut next = vec![usize::MAX; n];
    let mut indeg = vec![0u32; n];
    for (e, &[a, b]) in s.surface_edges.iter().enumerate() {
        let (a, b) = (a as usize, b as usize);
        if a >= n || b >= n {
            return topo(format!("surface edge {e} references a missing node"));
        }
        if a == b {
            return topo(format!("surface edge {e} is a self-loop"));
        }
        if next[a] != usize::MAX {
            return topo(format!("node {a} starts more than one surface edge"));
        }
        next[a] = b;
        indeg[b] += 1;
        if indeg[b] > 1 {
            return topo(format!("node {b} ends more than one surface edge"));
        }
    }

    let start = if s.surface_closed {
        s.surface_edges[0][0] as usize
    } else {
        let starts: Vec<usize> = s
            .surface_edges
            .iter()
            .map(|e| e[0] as usize)
            .filter(|&a| indeg[a] == 0)
            .collect();
        match starts.as_slice() {
            [a] => *a,
            [] => return topo("open wall declared but the edges close on themselves".into()),
            _ => return topo(format!("wall splits into {} open chains", starts.len())),
        }
    };

    let mut nodes = Vec::with_capacity(s.surface_edges.len() + 1);
    let mut cur = start;
    loop {
        nodes.push(cur);
        let nxt = next[cur];
        if nxt == usize::MAX {
            if s.surface_closed {
                return topo(format!("surface loop is open at node {cur}"));
            }
            break;
        }
        if nxt == start {
            break;
        }
        if nodes.len() > s.surface_edges.len() {
            return topo("surface edges contain a cycle not through the start node".into());
        }
        cur = nxt;
    }
    let walked = if s.surface_closed {
        nodes.len()
    } else {
        nodes.len() - 1
    };
    if walked != s.surface_edges.len() {
        return topo(format!(
            "surface edges form more than one loop ({walked} of {} edges reached)",
            s.surface_edges.len()
        ));
    }
    Ok(SurfaceLoop {
        nodes,
        closed: s.surface_closed,
    })
}

/// Unit normal of every wall node, ordered like [`surface_loop`], pointing
/// from the solid into the fluid.
///
/// Each edge contributes its direction rotated by -90 degrees; a node takes
/// the normalized mean of its (one or two) adjacent edge normals.
pub fn surface_normals(s: &MeshSample) -> Result<Vec<[f64; 2]>> {
    let wall = surface_loop(s)?;
    normals_on_loop(&wall, &s.node_pos)
}

pub fn normals_on_loop(wall: &SurfaceLoop, pos: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let mut acc = vec![[0.0f64; 2]; wall.len()];
    for (a, b) in wall.edges() {
        let (pa, pb) = (pos[wall.nodes[a]], pos[wall.nodes[b]]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = d[0].hypot(d[1]);
        if len == 0.0 || !len.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "zero-length surface edge between nodes {} and {}",
                wall.nodes[a], wall.nodes[b]
            )));
        }
        let n = [d[1] / len, -d[0] / len];
        for k in [a, b] {
            acc[k][0] += n[0];
            acc[k][1] += n[1];
        }
    }
    acc.iter()
        .zip(&wall.nodes)
        .map(|(v, &node)| {
            let len = v[0].hypot(v[1]);
            if len < 1e-14 {
                Err(Error::DegenerateGeometry(format!(
                    "surface normal at node {node} vanishes (cusp)"
                )))
            } else {
                Ok([v[0] / len, v[1] / len])
            }
        })
        .collect()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let w = [p[0] - a[0], p[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        ((w[0] * d[0] + w[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (w[0] - t * d[0]).hypot(w[1] - t * d[1])
}

/// Euclidean distance from `point` to the nearest wall segment.
pub fn sdf_to_surface(point: [f64; 2], s: &MeshSample) -> f64 {
    assert!(!s.surface_edges.is_empty(), "sample has no surface edges");
    s.surface_edges
        .iter()
        .map(|&[a, b]| segment_distance(point, s.node_pos[a as usize], s.node_pos[b as usize]))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::unit_square;
    use proptest::prelude::*;

    fn polygon(m: usize, radius: f64) -> MeshSample {
        let node_pos: Vec<[f64; 2]> = (0..m)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        MeshSample {
            sdf: vec![0.0; m],
            surface_mask: vec![true; m],
            targets: vec![[0.0; 4]; m],
            triangles: vec![],
            surface_edges: (0..m as u32).map(|i| [i, (i + 1) % m as u32]).collect(),
            surface_closed: true,
            node_pos,
            inlet_speed: 1.0,
            angle_of_attack: 0.0,
        }
    }

    #[test]
    fn square_normals_point_out_of_the_body() {
        let s = unit_square();
        let wall = surface_loop(&s).unwrap();
        assert_eq!(wall.nodes, (0..8).collect::<Vec<_>>());
        let n = surface_normals(&s).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [
            [-h, -h],
            [0.0, -1.0],
            [h, -h],
            [1.0, 0.0],
            [h, h],
            [0.0, 1.0],
            [-h, h],
            [-1.0, 0.0],
        ];
        for (got, want) in n.iter().zip(expect) {
            assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn polygon_normals_are_radial() {
        let s = polygon(256, 0.7);
        let n = surface_normals(&s).unwrap();
        for (k, nk) in n.iter().enumerate() {
            let p = s.node_pos[k];
            let r = p[0].hypot(p[1]);
            assert!((nk[0] - p[0] / r).abs() < 1e-3 && (nk[1] - p[1] / r).abs() < 1e-3);
            assert!((nk[0].hypot(nk[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let mut s = unit_square();
        s.node_pos[1] = s.node_pos[0];
        assert!(matches!(
            surface_normals(&s),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn open_loop_is_a_topology_error() {
        let mut s = unit_square();
        s.surface_edges.pop();
        assert!(matches!(surface_loop(&s), Err(Error::Topology(_))));
        assert!(matches!(surface_normals(&s), Err(Error::Topology(_))));
    }

    #[test]
    fn two_disjoint_loops_rejected() {
        let mut s = unit_square();
        s.surface_edges = vec![[0, 1], [1, 2], [2, 0], [3, 4], [4, 5], [5, 3]];
        assert!(matches!(surface_loop(&s), Err(Error::Topology(_))));
    }

    #[test]
    fn open_wall_chain_uses_one_sided_normals() {
        let mut s = unit_square();
        // floor walked right to left: fluid above
        s.surface_edges = vec![[2, 1], [1, 0]];
        s.surface_closed = false;
        let wall = surface_loop(&s).unwrap();
        assert_eq!(wall.nodes, vec![2, 1, 0]);
        for n in surface_normals(&s).unwrap() {
            assert_eq!(n, [0.0, 1.0]);
        }
    }

    #[test]
    fn sdf_examples() {
        let s = unit_square();
        assert_eq!(sdf_to_surface(s.node_pos[3], &s), 0.0);
        assert!((sdf_to_surface([2.0, 0.5], &s) - 1.0).abs() < 1e-15);
        assert!((segment_distance([0.3, 0.25], [-1.0, 0.0], [1.0, 0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sdf_matches_dense_resampling() {
        use rand::{Rng, SeedableRng};
        let s = polygon(40, 1.0);
        // Resample the boundary densely; the nearest sample is within half a step of the
        // true foot point, so the brute-force distance overshoots by at most step^2/(8 d).
        let per_edge = 20_000;
        let mut dense = Vec::with_capacity(40 * per_edge);
        for &[a, b] in &s.surface_edges {
            let (pa, pb) = (s.node_pos[a as usize], s.node_pos[b as usize]);
            for k in 0..per_edge {
                let t = k as f64 / per_edge as f64;
                dense.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let brute = dense
                .iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            assert!((sdf_to_surface(p, &s) - brute).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn normals_rotate_with_the_body(theta in -3.2f64..3.2) {
            let s = polygon(37, 1.3);
            let base = surface_normals(&s).unwrap();
            let (c, si) = (theta.cos(), theta.sin());
            let mut r = s.clone();
            for p in &mut r.node_pos {
                *p = [c * p[0] - si * p[1], si * p[0] + c * p[1]];
            }
            let rotated = surface_normals(&r).unwrap();
            for (a, b) in base.iter().zip(&rotated) {
                let back = [c * b[0] + si * b[1], -si * b[0] + c * b[1]];
                prop_assert!((a[0] - back[0]).abs() < 1e-12 && (a[1] - back[1]).abs() < 1e-12);
            }
        }
    }
}
