//! Mesh/flow data model for one geometry case.
//!
//! A [`MeshSample`] carries the node cloud, the per-node input features and
//! regression targets, the volume triangulation and the ordered wall
//! boundary. Everything downstream (graphs, normalization, stress forces)
//! reads samples through this type.

mod geometry;
mod io;

pub use geometry::{
    normals_on_loop, sdf_to_surface, segment_distance, surface_loop, surface_normals, SurfaceLoop,
};
pub use io::{
    list_samples, read_sample, read_sidecar, sidecar_path, write_sample, write_sample_with_meta,
    SampleMeta, MAGIC as SAMPLE_MAGIC,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target channel layout (0-based): `u_x`, `u_y`, reduced pressure, turbulent viscosity.
pub const CH_UX: usize = 0;
pub const CH_UY: usize = 1;
pub const CH_P: usize = 2;
pub const CH_NUT: usize = 3;

/// Nodes flagged as surface must sit on the wall to this precision.
pub const SURFACE_SDF_TOL: f64 = 1e-9;

/// One geometry/flow case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSample {
    /// Node coordinates in meters.
    pub node_pos: Vec<[f64; 2]>,
    /// Free-stream speed (m/s).
    pub inlet_speed: f64,
    /// Angle of attack in degrees. Realized in the geometry/flow, not fed as a feature.
    pub angle_of_attack: f64,
    /// Distance from each node to the wall (m).
    pub sdf: Vec<f64>,
    pub surface_mask: Vec<bool>,
    /// Per node `(u_x, u_y, p, nu_t)` in physical units.
    pub targets: Vec<[f64; 4]>,
    pub triangles: Vec<[u32; 3]>,
    /// Directed wall edges. Traversal keeps the solid on the left, so a
    /// closed body is walked counter-clockwise and the fluid lies to the right.
    pub surface_edges: Vec<[u32; 2]>,
    /// `true` when the wall edges close into a loop (a body), `false` for a
    /// single open wall segment such as a channel floor.
    pub surface_closed: bool,
}

impl MeshSample {
    pub fn n_nodes(&self) -> usize {
        self.node_pos.len()
    }

    /// Model input `(x, y, inlet speed, sdf)` of node `i`.
    pub fn input_features(&self, i: usize) -> [f64; 4] {
        let [x, y] = self.node_pos[i];
        [x, y, self.inlet_speed, self.sdf[i]]
    }

    pub fn surface_node_count(&self) -> usize {
        self.surface_mask.iter().filter(|&&m| m).count()
    }

    /// Checks every structural invariant; the first violation is reported.
    pub fn validate(&self) -> Result<()> {
        validate(self)
    }
}

/// Physical constants in reduced (per-density) units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    /// Kinematic viscosity (m^2/s).
    pub nu: f64,
    pub rho: f64,
    /// Characteristic length (m).
    pub char_length: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            nu: 1e-5,
            rho: 1.0,
            char_length: 1.0,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.nu) {
            return Err(Error::Config(format!("nu must be > 0, got {}", self.nu)));
        }
        if !ok(self.rho) {
            return Err(Error::Config(format!("rho must be > 0, got {}", self.rho)));
        }
        if !ok(self.char_length) {
            return Err(Error::Config(format!(
                "char_length must be > 0, got {}",
                self.char_length
            )));
        }
        Ok(())
    }
}

/// Checks every [`MeshSample`] invariant and names the offending node or element.
pub fn validate(s: &MeshSample) -> Result<()> {
    let n = s.n_nodes();
    let bad = |msg: String| Err(Error::Validation(msg));

    if s.sdf.len() != n || s.surface_mask.len() != n || s.targets.len() != n {
        return bad(format!(
            "per-node array lengths differ: pos {n}, sdf {}, surface_mask {}, targets {}",
            s.sdf.len(),
            s.surface_mask.len(),
            s.targets.len()
        ));
    }
    if !s.inlet_speed.is_finite() || !s.angle_of_attack.is_finite() {
        return bad("inlet_speed and angle_of_attack must be finite".into());
    }
    for (k, p) in s.node_pos.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return bad(format!("node {k}: non-finite coordinates"));
        }
    }
    for (k, (&d, &on_wall)) in s.sdf.iter().zip(&s.surface_mask).enumerate() {
        if !d.is_finite() || d < 0.0 {
            return bad(format!("node {k}: sdf = {d} must be finite and >= 0"));
        }
        if on_wall && d > SURFACE_SDF_TOL {
            return bad(format!("node {k}: surface node has sdf = {d}"));
        }
    }
    for (k, t) in s.targets.iter().enumerate() {
        if t.iter().any(|v| !v.is_finite()) {
            return bad(format!("node {k}: non-finite target"));
        }
    }
    for (e, tri) in s.triangles.iter().enumerate() {
        if let Some(&v) = tri.iter().find(|&&v| v as usize >= n) {
            return bad(format!(
                "triangle {e}: node index {v} out of range ({n} nodes)"
            ));
        }
    }
    for (e, edge) in s.surface_edges.iter().enumerate() {
        for &v in edge {
            if v as usize >= n {
                return bad(format!("surface edge {e}: node index {v} out of range"));
            }
            if !s.surface_mask[v as usize] {
                return bad(format!("surface edge {e}: node {v} is not surface-masked"));
            }
        }
    }
    let wall = surface_loop(s).map_err(|e| Error::Validation(e.to_string()))?;
    let mut on_loop = vec![false; n];
    for &v in &wall.nodes {
        on_loop[v] = true;
    }
    if let Some(k) = (0..n).find(|&k| s.surface_mask[k] && !on_loop[k]) {
        return bad(format!("node {k}: surface-masked but not on the wall loop"));
    }
    Ok(())
}
