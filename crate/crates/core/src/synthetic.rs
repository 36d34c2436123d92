//! Analytic incompressible flows on generated meshes, with closed-form forces.
//!
//! * Couette: channel `[0, 1] x [0, h]`, `u = (U y / h, 0)`, constant pressure;
//!   the floor is an open wall walked right to left.
//! * Potential flow past a cylinder of radius `a` with circulation `Gamma`
//!   (positive clockwise, so that `Gamma > 0` lifts for a free stream along
//!   +x). Pressure follows Bernoulli with zero far-field pressure.
//!
//! Turbulent viscosity is zero unless `nut_amplitude > 0`, in which case a
//! smooth wall-hugging bump exercises the surface statistics.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::derive_seed;
use crate::mesh::{sdf_to_surface, write_sample_with_meta, MeshSample, PhysicsConfig, SampleMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Couette,
    CylinderPotential,
}

impl std::str::FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "couette" => Ok(Self::Couette),
            "cylinder_potential" | "cylinder" => Ok(Self::CylinderPotential),
            _ => Err(Error::Argument(format!(
                "unknown case {s:?} (expected couette or cylinder_potential)"
            ))),
        }
    }
}

/// Node placement for the cylinder annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Log-polar rings aligned with the wall vertices.
    Structured,
    /// Log-polar rings with seeded phase and jitter.
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub kind: CaseKind,
    /// Free-stream speed (cylinder) or lid speed (Couette), m/s.
    pub u_inf: f64,
    /// Circulation (m^2/s), positive clockwise. Ignored for Couette.
    pub circulation: f64,
    /// Cylinder radius `a` or channel height `h` (m).
    pub scale: f64,
    /// Wall segments: polygon sides of the cylinder, floor cells of the channel.
    pub surface_segments: usize,
    /// Approximate number of non-wall nodes.
    pub volume_nodes: usize,
    pub seed: u64,
    /// Degrees; rotates the free stream of the cylinder.
    pub angle_of_attack: f64,
    /// Outer radius of the cylinder annulus (m).
    pub outer_radius: f64,
    pub layout: Layout,
    /// Amplitude of the synthetic turbulent-viscosity bump (m^2/s); 0 disables it.
    pub nut_amplitude: f64,
}

impl CaseSpec {
    pub fn couette(u_inf: f64, h: f64) -> Self {
        Self {
            kind: CaseKind::Couette,
            u_inf,
            circulation: 0.0,
            scale: h,
            surface_segments: 16,
            volume_nodes: 16 * 17,
            seed: 0,
            angle_of_attack: 0.0,
            outer_radius: 0.0,
            layout: Layout::Structured,
            nut_amplitude: 0.0,
        }
    }

    pub fn cylinder(u_inf: f64, circulation: f64, radius: f64) -> Self {
        Self {
            kind: CaseKind::CylinderPotential,
            u_inf,
            circulation,
            scale: radius,
            surface_segments: 64,
            volume_nodes: 64 * 21,
            seed: 0,
            angle_of_attack: 0.0,
            outer_radius: 4.0,
            layout: Layout::Scattered,
            nut_amplitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.surface_segments < 8 || self.volume_nodes < 8 {
            return arg(format!(
                "need at least 8 surface segments and volume nodes, got {} / {}",
                self.surface_segments, self.volume_nodes
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return arg(format!("geometry scale must be > 0, got {}", self.scale));
        }
        if ![
            self.u_inf,
            self.circulation,
            self.angle_of_attack,
            self.nut_amplitude,
        ]
        .iter()
        .all(|v| v.is_finite())
            || self.nut_amplitude < 0.0
        {
            return arg("flow parameters must be finite and nut_amplitude >= 0".into());
        }
        if self.kind == CaseKind::CylinderPotential && !(self.outer_radius > 2.0 * self.scale) {
            return arg(format!(
                "outer radius {} must exceed twice the cylinder radius {}",
                self.outer_radius, self.scale
            ));
        }
        Ok(())
    }
}

/// Either analytic case.
pub fn generate(spec: &CaseSpec) -> Result<MeshSample> {
    match spec.kind {
        CaseKind::Couette => gen_couette(spec),
        CaseKind::CylinderPotential => gen_cylinder_potential(spec),
    }
}

pub fn gen_couette(spec: &CaseSpec) -> Result<MeshSample> {
    spec.validate()?;
    let h = spec.scale;
    let nx = spec.surface_segments;
    let ny = (spec.volume_nodes as f64 / (nx + 1) as f64)
        .round()
        .max(1.0) as usize;
    let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut node_pos = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            node_pos.push([i as f64 / nx as f64, h * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let n = node_pos.len();
    let targets = node_pos
        .iter()
        .map(|p| [spec.u_inf * p[1] / h, 0.0, 0.0, 0.0])
        .collect();
    let sample = MeshSample {
        sdf: node_pos.iter().map(|p| p[1]).collect(),
        surface_mask: (0..n).map(|k| k <= nx).collect(),
        targets,
        triangles,
        surface_edges: (0..nx).rev().map(|i| [id(i + 1, 0), id(i, 0)]).collect(),
        surface_closed: false,
        node_pos,
        inlet_speed: spec.u_inf,
        angle_of_attack: 0.0,
    };
    sample.validate()?;
    Ok(sample)
}

/// Analytic `(u_x, u_y, p)` of the cylinder case at `p`.
pub fn cylinder_flow(spec: &CaseSpec, p: [f64; 2]) -> [f64; 3] {
    let (a, u, gamma) = (spec.scale, spec.u_inf, spec.circulation);
    let alpha = spec.angle_of_attack.to_radians();
    let r = p[0].hypot(p[1]);
    let theta = p[1].atan2(p[0]);
    let phi = theta - alpha;
    let q = a * a / (r * r);
    let ur = u * (1.0 - q) * phi.cos();
    let ut = -u * (1.0 + q) * phi.sin() - gamma / (2.0 * PI * r);
    let (c, s) = (theta.cos(), theta.sin());
    let ux = ur * c - ut * s;
    let uy = ur * s + ut * c;
    [ux, uy, 0.5 * u * u - 0.5 * (ux * ux + uy * uy)]
}

/// `A (0.05 + s) exp(-s) (1 + cos(phi) / 2)` with `s = sdf / (0.1 a)`: a
/// wall-hugging bump, small but non-zero on the wall so the wall statistic
/// has spread.
fn nut_bump(spec: &CaseSpec, sdf: f64, p: [f64; 2]) -> f64 {
    if spec.nut_amplitude == 0.0 {
        return 0.0;
    }
    let s = sdf / (0.1 * spec.scale);
    let phi = p[1].atan2(p[0]) - spec.angle_of_attack.to_radians();
    spec.nut_amplitude * (0.05 + s) * (-s).exp() * (1.0 + 0.5 * phi.cos())
}

pub fn gen_cylinder_potential(spec: &CaseSpec) -> Result<MeshSample> {
    spec.validate()?;
    let a = spec.scale;
    let m = spec.surface_segments;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut node_pos: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / m as f64;
            [a * t.cos(), a * t.sin()]
        })
        .collect();

    let rings = (spec.volume_nodes as f64 / m as f64).round().max(2.0) as usize;
    let dlog = (spec.outer_radius / a).ln() / rings as f64;
    let dtheta = 2.0 * PI / m as f64;
    let scattered = spec.layout == Layout::Scattered;
    for j in 1..=rings {
        let outer = j == rings;
        let phase = if scattered && !outer {
            rng.gen_range(0.0..dtheta)
        } else {
            0.0
        };
        for k in 0..m {
            let (mut lr, mut t) = (j as f64 * dlog, phase + k as f64 * dtheta);
            if scattered && !outer {
                // first ring only moves outwards to keep clear of the wall
                let lo = if j == 1 { 0.0 } else { -0.25 };
                lr += rng.gen_range(lo..0.25) * dlog;
                t += rng.gen_range(-0.25..0.25) * dtheta;
            }
            let r = a * lr.exp();
            node_pos.push([r * t.cos(), r * t.sin()]);
        }
    }

    let pts: Vec<delaunator::Point> = node_pos
        .iter()
        .map(|p| delaunator::Point { x: p[0], y: p[1] })
        .collect();
    let tri = delaunator::triangulate(&pts);
    // inscribed radius of the wall polygon
    let inner = a * (PI / m as f64).cos();
    let mut triangles = Vec::with_capacity(tri.triangles.len() / 3);
    for t in tri.triangles.chunks_exact(3) {
        if t.iter().all(|&v| v < m) {
            continue;
        }
        let c = [
            t.iter().map(|&v| node_pos[v][0]).sum::<f64>() / 3.0,
            t.iter().map(|&v| node_pos[v][1]).sum::<f64>() / 3.0,
        ];
        if c[0].hypot(c[1]) < inner {
            return Err(Error::DegenerateGeometry(
                "triangulation crosses the cylinder wall".into(),
            ));
        }
        triangles.push([t[0] as u32, t[1] as u32, t[2] as u32]);
    }

    let mut sample = MeshSample {
        sdf: vec![0.0; node_pos.len()],
        surface_mask: (0..node_pos.len()).map(|k| k < m).collect(),
        targets: Vec::new(),
        triangles,
        surface_edges: (0..m as u32).map(|k| [k, (k + 1) % m as u32]).collect(),
        surface_closed: true,
        node_pos,
        inlet_speed: spec.u_inf,
        angle_of_attack: spec.angle_of_attack,
    };
    for k in m..sample.n_nodes() {
        sample.sdf[k] = sdf_to_surface(sample.node_pos[k], &sample);
    }
    sample.targets = sample
        .node_pos
        .iter()
        .zip(&sample.sdf)
        .map(|(&p, &d)| {
            let [ux, uy, pr] = cylinder_flow(spec, p);
            [ux, uy, pr, nut_bump(spec, d, p)]
        })
        .collect();
    sample.validate()?;
    Ok(sample)
}

/// Closed-form wall integrals, drag and lift in reduced units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticForces {
    pub integral_tau: [f64; 2],
    pub integral_wp: [f64; 2],
    pub drag: f64,
    pub lift: f64,
}

pub fn analytic_forces(spec: &CaseSpec, physics: &PhysicsConfig) -> Result<AnalyticForces> {
    physics.validate()?;
    match spec.kind {
        CaseKind::Couette => {
            // wall length 1, tau = nu U / h along +x
            let tau = physics.nu * spec.u_inf / spec.scale;
            Ok(AnalyticForces {
                integral_tau: [tau, 0.0],
                integral_wp: [0.0, 0.0],
                drag: tau,
                lift: 0.0,
            })
        }
        CaseKind::CylinderPotential => {
            // d'Alembert: no drag; Kutta-Joukowski: rho U Gamma normal to the stream.
            // The irrotational viscous stress integrates to zero on the circle.
            let alpha = spec.angle_of_attack.to_radians();
            let f = physics.rho * spec.u_inf * spec.circulation;
            let wp = [-f * alpha.sin(), f * alpha.cos()];
            Ok(AnalyticForces {
                integral_tau: [0.0, 0.0],
                integral_wp: wp,
                drag: wp[0],
                lift: wp[1],
            })
        }
    }
}

/// Parameter ranges for a seeded corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kind: CaseKind,
    pub n_samples: usize,
    pub seed: u64,
    pub u_range: [f64; 2],
    /// Degrees.
    pub aoa_range: [f64; 2],
    pub scale_range: [f64; 2],
    /// Circulation as a fraction of `2 pi a U` (cylinder only).
    pub circulation_range: [f64; 2],
    pub surface_segments: usize,
    pub volume_nodes: usize,
    pub outer_radius: f64,
    /// Synthetic turbulent viscosity peak per unit inlet speed (m).
    pub nut_per_speed: f64,
}

impl CorpusSpec {
    pub fn new(kind: CaseKind, n_samples: usize, seed: u64) -> Self {
        let (scale_range, segments, volume) = match kind {
            CaseKind::CylinderPotential => ([0.4, 0.6], 64, 64 * 21),
            CaseKind::Couette => ([0.5, 1.5], 16, 16 * 17),
        };
        Self {
            kind,
            n_samples,
            seed,
            u_range: [10.0, 50.0],
            aoa_range: [-0.3, 0.3],
            scale_range,
            circulation_range: [-0.2, 0.2],
            surface_segments: segments,
            volume_nodes: volume,
            outer_radius: 4.0,
            nut_per_speed: 2e-5,
        }
    }

    /// Case `k` of the corpus; independent of the other cases.
    pub fn case(&self, k: usize) -> CaseSpec {
        let seed = derive_seed(self.seed, k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: [f64; 2]| {
            if r[0] < r[1] {
                rng.gen_range(r[0]..=r[1])
            } else {
                r[0]
            }
        };
        let u = draw(self.u_range);
        let aoa = draw(self.aoa_range);
        let scale = draw(self.scale_range);
        let frac = draw(self.circulation_range);
        let cylinder = self.kind == CaseKind::CylinderPotential;
        CaseSpec {
            kind: self.kind,
            u_inf: u,
            circulation: if cylinder {
                frac * 2.0 * PI * scale * u
            } else {
                0.0
            },
            scale,
            surface_segments: self.surface_segments,
            volume_nodes: self.volume_nodes,
            seed,
            angle_of_attack: if cylinder { aoa } else { 0.0 },
            outer_radius: self.outer_radius,
            layout: Layout::Scattered,
            nut_amplitude: if cylinder {
                self.nut_per_speed * u
            } else {
                0.0
            },
        }
    }
}

pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<MeshSample>> {
    (0..spec.n_samples)
        .into_par_iter()
        .map(|k| generate(&spec.case(k)))
        .collect()
}

/// Writes `sample_NNNN.afm` files plus sidecars; returns the paths in order.
pub fn write_corpus(
    spec: &CorpusSpec,
    physics: &PhysicsConfig,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let samples = gen_corpus(spec)?;
    let provenance = match spec.kind {
        CaseKind::Couette => "synthetic:couette",
        CaseKind::CylinderPotential => "synthetic:cylinder_potential",
    };
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = dir.join(format!("sample_{k:04}.afm"));
            let meta = SampleMeta::for_sample(s, physics.nu, provenance);
            write_sample_with_meta(s, &path, &meta)?;
            Ok(path)
        })
        .collect()
}
