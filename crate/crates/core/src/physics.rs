//! Velocity-gradient reconstruction and wall stress forces.
//!
//! Gradients come from linear (P1) element gradients averaged to nodes by
//! triangle area, with a weighted least-squares fit over graph neighbors for
//! nodes that touch no triangle. Forces are in reduced units (`rho = 1`):
//!
//! * wall shear stress `tau = 2 (nu + nu_t) S n`, `S = (J + J^T) / 2`
//! * wall pressure `P = -p n`
//! * drag / lift are the x / y components of `oint P dS + oint tau dS`,
//!   integrated with the trapezoidal rule along the wall polyline.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RadiusGraph;
use crate::mesh::{
    surface_loop, MeshSample, PhysicsConfig, SurfaceLoop, CH_NUT, CH_P, CH_UX, CH_UY,
};

pub type Mat2 = [[f64; 2]; 2];

/// Per-node `(u_x, u_y, p, nu_t)` in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub values: Vec<[f64; 4]>,
}

impl FlowField {
    pub fn new(values: Vec<[f64; 4]>) -> Self {
        Self { values }
    }

    /// The sample's ground-truth targets.
    pub fn from_sample(s: &MeshSample) -> Self {
        Self::new(s.targets.clone())
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![[0.0; 4]; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn velocity(&self, i: usize) -> [f64; 2] {
        [self.values[i][CH_UX], self.values[i][CH_UY]]
    }

    fn check(&self, s: &MeshSample) -> Result<()> {
        if self.len() != s.n_nodes() {
            return Err(Error::Shape(format!(
                "field has {} nodes, sample has {}",
                self.len(),
                s.n_nodes()
            )));
        }
        if let Some(k) = self
            .values
            .iter()
            .position(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Validation(format!(
                "node {k}: non-finite field value"
            )));
        }
        Ok(())
    }
}

/// Wall stresses and their integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceForces {
    /// Wall nodes in traversal order.
    pub nodes: Vec<usize>,
    pub tau: Vec<[f64; 2]>,
    pub wp: Vec<[f64; 2]>,
    pub integral_tau: [f64; 2],
    pub integral_wp: [f64; 2],
    pub drag: f64,
    pub lift: f64,
}

impl SurfaceForces {
    pub fn write_csv(&self, sample: &MeshSample, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("node,x,y,tau_x,tau_y,p_x,p_y\n");
        for (k, &node) in self.nodes.iter().enumerate() {
            let [x, y] = sample.node_pos[node];
            out.push_str(&format!(
                "{node},{x},{y},{},{},{},{}\n",
                self.tau[k][0], self.tau[k][1], self.wp[k][0], self.wp[k][1]
            ));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Gradient of the linear interpolant on one triangle, and its signed double area.
fn p1_gradient(p: [[f64; 2]; 3], f: [f64; 3]) -> ([f64; 2], f64) {
    let (e1, e2) = (
        [p[1][0] - p[0][0], p[1][1] - p[0][1]],
        [p[2][0] - p[0][0], p[2][1] - p[0][1]],
    );
    let det = e1[0] * e2[1] - e2[0] * e1[1];
    let (d1, d2) = (f[1] - f[0], f[2] - f[0]);
    (
        [
            (d1 * e2[1] - d2 * e1[1]) / det,
            (d2 * e1[0] - d1 * e2[0]) / det,
        ],
        det,
    )
}

/// Per-node velocity Jacobian `J[r][c] = d u_r / d x_c`.
///
/// Nodes without an incident triangle fall back to a `1/d^2`-weighted
/// least-squares fit over their neighbors in `fallback`.
pub fn velocity_jacobian(
    sample: &MeshSample,
    field: &FlowField,
    fallback: Option<&RadiusGraph>,
) -> Result<Vec<Mat2>> {
    field.check(sample)?;
    let n = sample.n_nodes();
    let pos = &sample.node_pos;
    let mut acc = vec![[[0.0f64; 2]; 2]; n];
    let mut weight = vec![0.0f64; n];

    for (t, tri) in sample.triangles.iter().enumerate() {
        let idx = tri.map(|v| v as usize);
        let p = idx.map(|v| pos[v]);
        let scale = (0..3)
            .map(|k| {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
            })
            .fold(0.0, f64::max);
        let (gx, det) = p1_gradient(p, idx.map(|v| field.velocity(v)[0]));
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::DegenerateGeometry(format!(
                "triangle {t} has (near) zero area"
            )));
        }
        let (gy, _) = p1_gradient(p, idx.map(|v| field.velocity(v)[1]));
        let area = 0.5 * det.abs();
        for &v in &idx {
            for c in 0..2 {
                acc[v][0][c] += area * gx[c];
                acc[v][1][c] += area * gy[c];
            }
            weight[v] += area;
        }
    }

    let mut neighbors: Option<Vec<Vec<usize>>> = None;
    let mut jac = Vec::with_capacity(n);
    for i in 0..n {
        if weight[i] > 0.0 {
            let w = weight[i];
            jac.push([
                [acc[i][0][0] / w, acc[i][0][1] / w],
                [acc[i][1][0] / w, acc[i][1][1] / w],
            ]);
            continue;
        }
        let graph = fallback.ok_or_else(|| {
            Error::Rank(format!(
                "node {i} has no incident triangle and no fallback graph"
            ))
        })?;
        let nbrs = neighbors.get_or_insert_with(|| global_neighbors(graph, n));
        jac.push(least_squares_jacobian(i, &nbrs[i], pos, field)?);
    }
    Ok(jac)
}

/// Undirected neighbor lists keyed by sample node index.
fn global_neighbors(graph: &RadiusGraph, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for &(s, d) in &graph.edges {
        let (gs, gd) = (graph.nodes[s as usize], graph.nodes[d as usize]);
        out[gd].push(gs);
        out[gs].push(gd);
    }
    for l in &mut out {
        l.sort_unstable();
        l.dedup();
    }
    out
}

fn least_squares_jacobian(
    i: usize,
    nbrs: &[usize],
    pos: &[[f64; 2]],
    field: &FlowField,
) -> Result<Mat2> {
    if nbrs.len() < 2 {
        return Err(Error::Rank(format!(
            "node {i} has {} neighbors, least squares needs 2",
            nbrs.len()
        )));
    }
    let (pi, ui) = (pos[i], field.velocity(i));
    let mut a = [[0.0f64; 2]; 2];
    let mut b = [[0.0f64; 2]; 2];
    for &j in nbrs {
        let d = [pos[j][0] - pi[0], pos[j][1] - pi[1]];
        let d2 = d[0] * d[0] + d[1] * d[1];
        if d2 == 0.0 {
            continue;
        }
        let w = 1.0 / d2;
        let uj = field.velocity(j);
        for r in 0..2 {
            for c in 0..2 {
                a[r][c] += w * d[r] * d[c];
            }
            for c in 0..2 {
                b[r][c] += w * d[c] * (uj[r] - ui[r]);
            }
        }
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let trace = a[0][0] + a[1][1];
    if !(det.abs() > 1e-12 * trace * trace) {
        return Err(Error::Rank(format!(
            "node {i}: neighbor offsets do not span the plane"
        )));
    }
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let mut j = [[0.0f64; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            j[r][c] = inv[c][0] * b[r][0] + inv[c][1] * b[r][1];
        }
    }
    Ok(j)
}

/// Symmetric part `(J + J^T) / 2`.
pub fn strain_rate(j: &Mat2) -> Mat2 {
    let off = 0.5 * (j[0][1] + j[1][0]);
    [[j[0][0], off], [off, j[1][1]]]
}

/// Skew part `J - S`.
pub fn rotation_rate(j: &Mat2) -> Mat2 {
    let s = strain_rate(j);
    [
        [j[0][0] - s[0][0], j[0][1] - s[0][1]],
        [j[1][0] - s[1][0], j[1][1] - s[1][1]],
    ]
}

fn normals_for(sample: &MeshSample) -> Result<(SurfaceLoop, Vec<[f64; 2]>)> {
    let wall = surface_loop(sample)?;
    let normals = crate::mesh::normals_on_loop(&wall, &sample.node_pos)?;
    Ok((wall, normals))
}

fn shear_on_wall(
    wall: &SurfaceLoop,
    normals: &[[f64; 2]],
    jac: &[Mat2],
    field: &FlowField,
    physics: &PhysicsConfig,
) -> Vec<[f64; 2]> {
    wall.nodes
        .iter()
        .zip(normals)
        .map(|(&i, n)| {
            let s = strain_rate(&jac[i]);
            let visc = 2.0 * (physics.nu + field.values[i][CH_NUT]);
            [
                visc * (s[0][0] * n[0] + s[0][1] * n[1]),
                visc * (s[1][0] * n[0] + s[1][1] * n[1]),
            ]
        })
        .collect()
}

/// `tau_i = 2 (nu + nu_t,i) S_i n_i` at every wall node (traversal order).
pub fn wall_shear_stress(
    sample: &MeshSample,
    field: &FlowField,
    physics: &PhysicsConfig,
) -> Result<Vec<[f64; 2]>> {
    let (wall, normals) = normals_for(sample)?;
    let jac = velocity_jacobian(sample, field, None)?;
    Ok(shear_on_wall(&wall, &normals, &jac, field, physics))
}

/// `P_i = -p_i n_i` at every wall node (traversal order).
pub fn wall_pressure(sample: &MeshSample, field: &FlowField) -> Result<Vec<[f64; 2]>> {
    field.check(sample)?;
    let (wall, normals) = normals_for(sample)?;
    Ok(pressure_on_wall(&wall, &normals, field))
}

fn pressure_on_wall(wall: &SurfaceLoop, normals: &[[f64; 2]], field: &FlowField) -> Vec<[f64; 2]> {
    wall.nodes
        .iter()
        .zip(normals)
        .map(|(&i, n)| {
            let p = field.values[i][CH_P];
            [-p * n[0], -p * n[1]]
        })
        .collect()
}

/// Trapezoidal `sum_edges (v_a + v_b) / 2 * |edge|` over the wall polyline;
/// `values` follows the traversal order of [`surface_loop`].
pub fn integrate_surface(sample: &MeshSample, values: &[[f64; 2]]) -> Result<[f64; 2]> {
    let wall = surface_loop(sample)?;
    integrate_on_loop(&wall, &sample.node_pos, values)
}

pub fn integrate_on_loop(
    wall: &SurfaceLoop,
    pos: &[[f64; 2]],
    values: &[[f64; 2]],
) -> Result<[f64; 2]> {
    if values.len() != wall.len() {
        return Err(Error::Shape(format!(
            "{} values for {} wall nodes",
            values.len(),
            wall.len()
        )));
    }
    let mut total = [0.0f64; 2];
    for (a, b) in wall.edges() {
        let (pa, pb) = (pos[wall.nodes[a]], pos[wall.nodes[b]]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        for c in 0..2 {
            total[c] += 0.5 * (values[a][c] + values[b][c]) * len;
        }
    }
    Ok(total)
}

/// Wall shear stress, wall pressure, their integrals, drag and lift.
pub fn drag_lift(
    sample: &MeshSample,
    field: &FlowField,
    physics: &PhysicsConfig,
) -> Result<SurfaceForces> {
    physics.validate()?;
    let (wall, normals) = normals_for(sample)?;
    let jac = velocity_jacobian(sample, field, None)?;
    let tau = shear_on_wall(&wall, &normals, &jac, field, physics);
    let wp = pressure_on_wall(&wall, &normals, field);
    let integral_tau = integrate_on_loop(&wall, &sample.node_pos, &tau)?;
    let integral_wp = integrate_on_loop(&wall, &sample.node_pos, &wp)?;
    Ok(SurfaceForces {
        nodes: wall.nodes,
        tau,
        wp,
        integral_tau,
        integral_wp,
        drag: integral_wp[0] + integral_tau[0],
        lift: integral_wp[1] + integral_tau[1],
    })
}

/// `div U = tr J` at every node.
pub fn divergence(sample: &MeshSample, field: &FlowField) -> Result<Vec<f64>> {
    Ok(velocity_jacobian(sample, field, None)?
        .iter()
        .map(|j| j[0][0] + j[1][1])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Structured triangulated grid over `[0, 1] x [0, h]` with the floor as an
    /// open wall walked right to left.
    fn channel(nx: usize, ny: usize, h: f64) -> MeshSample {
        let mut node_pos = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                // shear the interior slightly so triangles are not all congruent
                let x = i as f64 / nx as f64;
                let y = h * j as f64 / ny as f64;
                let wobble = if i > 0 && i < nx && j > 0 && j < ny {
                    0.1 / nx as f64
                } else {
                    0.0
                };
                node_pos.push([x + wobble * ((i * 7 + j * 3) % 5) as f64 / 5.0, y]);
            }
        }
        let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
        let mut triangles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let n = node_pos.len();
        let surface_mask = (0..n).map(|k| k <= nx).collect();
        let sdf = node_pos.iter().map(|p| p[1]).collect();
        MeshSample {
            node_pos,
            inlet_speed: 1.0,
            angle_of_attack: 0.0,
            sdf,
            surface_mask,
            targets: vec![[0.0; 4]; n],
            triangles,
            surface_edges: (0..nx).rev().map(|i| [id(i + 1, 0), id(i, 0)]).collect(),
            surface_closed: false,
        }
    }

    fn with_field(s: &MeshSample, f: impl Fn([f64; 2]) -> [f64; 4]) -> FlowField {
        FlowField::new(s.node_pos.iter().map(|&p| f(p)).collect())
    }

    #[test]
    fn affine_fields_are_exact() {
        let s = channel(7, 5, 1.0);
        let shear = with_field(&s, |p| [p[1], 0.0, 0.0, 0.0]);
        for j in velocity_jacobian(&s, &shear, None).unwrap() {
            assert!((j[0][1] - 1.0).abs() < 1e-12 && j[0][0].abs() < 1e-12);
            assert!(j[1][0].abs() < 1e-12 && j[1][1].abs() < 1e-12);
        }
        let strain = with_field(&s, |p| [p[0], -p[1], 0.0, 0.0]);
        for j in velocity_jacobian(&s, &strain, None).unwrap() {
            assert!((j[0][0] - 1.0).abs() < 1e-12 && (j[1][1] + 1.0).abs() < 1e-12);
            assert!(j[0][1].abs() < 1e-12 && j[1][0].abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_fallback_is_exact_for_affine() {
        let mut s = channel(4, 4, 1.0);
        s.triangles.clear();
        let pts = s.node_pos.clone();
        let g = crate::graph::build_radius_graph(&pts, 0.6, 64, 0).unwrap();
        let f = with_field(&s, |p| [2.0 * p[0] + 3.0 * p[1], -p[0], 0.0, 0.0]);
        for j in velocity_jacobian(&s, &f, Some(&g)).unwrap() {
            assert!((j[0][0] - 2.0).abs() < 1e-12 && (j[0][1] - 3.0).abs() < 1e-12);
            assert!((j[1][0] + 1.0).abs() < 1e-12 && j[1][1].abs() < 1e-12);
        }
        assert!(matches!(
            velocity_jacobian(&s, &f, None),
            Err(Error::Rank(_))
        ));
        let sparse = crate::graph::build_radius_graph(&pts, 0.01, 64, 0).unwrap();
        assert!(matches!(
            velocity_jacobian(&s, &f, Some(&sparse)),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn zero_area_triangle_rejected() {
        let mut s = channel(2, 2, 1.0);
        s.triangles.push([0, 1, 2]);
        let f = FlowField::zeros(s.n_nodes());
        assert!(matches!(
            velocity_jacobian(&s, &f, None),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn strain_examples() {
        assert_eq!(
            strain_rate(&[[0.0, 1.0], [0.0, 0.0]]),
            [[0.0, 0.5], [0.5, 0.0]]
        );
        let sym = [[1.0, 2.0], [2.0, -3.0]];
        assert_eq!(strain_rate(&sym), sym);
    }

    proptest! {
        #[test]
        fn strain_plus_spin_is_jacobian(a in -9.0f64..9.0, b in -9.0f64..9.0, c in -9.0f64..9.0, d in -9.0f64..9.0) {
            let j = [[a, b], [c, d]];
            let (s, w) = (strain_rate(&j), rotation_rate(&j));
            for r in 0..2 {
                for k in 0..2 {
                    prop_assert!((s[r][k] + w[r][k] - j[r][k]).abs() < 1e-14);
                    prop_assert!((w[r][k] + w[k][r]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn couette_wall_stress() {
        let s = channel(8, 4, 1.0);
        let f = with_field(&s, |p| [p[1], 0.0, 0.0, 0.0]);
        let physics = PhysicsConfig::default();
        for t in wall_shear_stress(&s, &f, &physics).unwrap() {
            assert!((t[0] - 1e-5).abs() < 1e-12 && t[1].abs() < 1e-12);
        }
        let zero = FlowField::zeros(s.n_nodes());
        assert!(wall_shear_stress(&s, &zero, &physics)
            .unwrap()
            .iter()
            .all(|t| *t == [0.0, 0.0]));
    }

    #[test]
    fn doubling_viscosity_doubles_stress() {
        let s = channel(5, 3, 1.0);
        let f1 = with_field(&s, |p| [p[1] * p[1], p[0], 0.0, 2e-5]);
        let f2 = with_field(&s, |p| [p[1] * p[1], p[0], 0.0, 5e-5]);
        let t1 = wall_shear_stress(
            &s,
            &f1,
            &PhysicsConfig {
                nu: 1e-5,
                ..Default::default()
            },
        )
        .unwrap();
        let t2 = wall_shear_stress(
            &s,
            &f2,
            &PhysicsConfig {
                nu: 1e-5,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in t1.iter().zip(&t2) {
            assert!((2.0 * a[0] - b[0]).abs() <= 1e-15 * b[0].abs().max(1e-300));
            assert!((2.0 * a[1] - b[1]).abs() <= 1e-15 * b[1].abs().max(1e-300));
        }
    }

    #[test]
    fn wall_pressure_examples() {
        let s = channel(3, 2, 1.0);
        let f = with_field(&s, |_| [0.0, 0.0, 2.0, 0.0]);
        for p in wall_pressure(&s, &f).unwrap() {
            assert_eq!(p, [-0.0, -2.0]);
        }
        let zero = FlowField::zeros(s.n_nodes());
        assert!(wall_pressure(&s, &zero)
            .unwrap()
            .iter()
            .all(|p| p[0] == 0.0 && p[1] == 0.0));
    }

    #[test]
    fn zero_fields_give_zero_forces() {
        let s = channel(4, 3, 1.0);
        let f = drag_lift(
            &s,
            &FlowField::zeros(s.n_nodes()),
            &PhysicsConfig::default(),
        )
        .unwrap();
        assert_eq!((f.drag, f.lift), (0.0, 0.0));
        assert_eq!(f.integral_tau, [0.0, 0.0]);
        assert_eq!(f.integral_wp, [0.0, 0.0]);
    }

    #[test]
    fn constant_integrand_gives_perimeter() {
        let s = channel(6, 2, 1.0);
        let vals = vec![[2.0, -1.0]; 7];
        let got = integrate_surface(&s, &vals).unwrap();
        assert!((got[0] - 2.0).abs() < 1e-14 && (got[1] + 1.0).abs() < 1e-14);
        assert!(matches!(
            integrate_surface(&s, &vals[..3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn divergence_examples() {
        let s = channel(5, 5, 1.0);
        let uniform = with_field(&s, |_| [3.0, -1.0, 0.0, 0.0]);
        assert!(divergence(&s, &uniform)
            .unwrap()
            .iter()
            .all(|d| d.abs() < 1e-12));
        let radial = with_field(&s, |p| [p[0], p[1], 0.0, 0.0]);
        assert!(divergence(&s, &radial)
            .unwrap()
            .iter()
            .all(|d| (d - 2.0).abs() < 1e-12));
    }

    #[test]
    fn forces_csv_has_one_row_per_wall_node() {
        let s = channel(4, 2, 1.0);
        let f = with_field(&s, |p| [p[1], 0.0, 1.0, 0.0]);
        let forces = drag_lift(&s, &f, &PhysicsConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        forces.write_csv(&s, &path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "node,x,y,tau_x,tau_y,p_x,p_y");
        assert_eq!(text.lines().count(), 6);
    }
}
