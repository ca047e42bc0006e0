use serde::{Deserialize, Serialize};

use super::design::{
    DesignSample, IMPACT_SPEED, MORPH_CURVATURE, MORPH_FRONT_DEPTH, MORPH_SECTION_DEPTH, MORPH_WIDTH, POLE_POSITION,
    THICKNESS_OUTER, THICKNESS_PATCH,
};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::mesh::{MeshGraph, NodeRole, Sample, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub stiffness: f64,
    pub damping: f64,
    pub rest: f64,
    pub rest0: f64,
}

/// Rigid circle the FREE nodes are pushed out of by a penalty force.
#[derive(Clone, Debug, PartialEq)]
pub struct Pole {
    pub center: Vec<f64>,
    pub radius: f64,
    pub stiffness: f64,
    pub damping: f64,
}

/// Explicit mass-spring system advanced with semi-implicit Euler.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringSystem {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub masses: Vec<f64>,
    pub fixed: Vec<bool>,
    /// Per-node standoff added to the pole radius (half the thickness).
    pub standoff: Vec<f64>,
    pub springs: Vec<Spring>,
    pub pole: Option<Pole>,
    /// Elastic strain limit; beyond it the rest length flows.
    pub yield_strain: Option<f64>,
    pub min_rest_ratio: f64,
}

impl SpringSystem {
    pub fn new(dim: usize, positions: Vec<f64>, masses: Vec<f64>) -> Self {
        let n = masses.len();
        Self {
            dim,
            velocities: vec![0.0; positions.len()],
            positions,
            fixed: vec![false; n],
            standoff: vec![0.0; n],
            masses,
            springs: Vec::new(),
            pole: None,
            yield_strain: None,
            min_rest_ratio: 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.masses.len()
    }

    pub fn add_spring(&mut self, i: usize, j: usize, stiffness: f64, damping: f64) {
        let rest = self.distance(i, j);
        self.springs.push(Spring {
            i,
            j,
            stiffness,
            damping,
            rest,
            rest0: rest,
        });
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self.p(i)
            .iter()
            .zip(self.p(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Upper bound on the highest angular frequency (Gershgorin on the
    /// mass-scaled stiffness, pole penalty included).
    pub fn omega_max(&self) -> f64 {
        let n = self.node_count();
        let mut row = vec![0.0; n];
        for s in &self.springs {
            row[s.i] += s.stiffness;
            row[s.j] += s.stiffness;
        }
        let kc = self.pole.as_ref().map_or(0.0, |p| p.stiffness);
        (0..n)
            .filter(|&i| !self.fixed[i])
            .map(|i| ((2.0 * row[i] + kc) / self.masses[i]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn stability_bound(&self) -> f64 {
        let w = self.omega_max();
        if w > 0.0 {
            2.0 / w
        } else {
            f64::INFINITY
        }
    }

    fn forces(&mut self) -> Vec<f64> {
        let dim = self.dim;
        let mut f = vec![0.0; self.positions.len()];
        let mut dir = vec![0.0; dim];
        for s in self.springs.iter_mut() {
            let mut len2 = 0.0;
            let mut rel_v = 0.0;
            for c in 0..dim {
                dir[c] = self.positions[s.j * dim + c] - self.positions[s.i * dim + c];
                len2 += dir[c] * dir[c];
            }
            let len = len2.sqrt();
            if len <= 0.0 {
                continue;
            }
            for c in 0..dim {
                dir[c] /= len;
                rel_v += (self.velocities[s.j * dim + c] - self.velocities[s.i * dim + c]) * dir[c];
            }
            if let Some(ey) = self.yield_strain {
                let lim = ey * s.rest0;
                if len - s.rest > lim {
                    s.rest = len - lim;
                } else if s.rest - len > lim {
                    s.rest = (len + lim).max(self.min_rest_ratio * s.rest0);
                }
            }
            let mag = s.stiffness * (len - s.rest) + s.damping * rel_v;
            for c in 0..dim {
                f[s.i * dim + c] += mag * dir[c];
                f[s.j * dim + c] -= mag * dir[c];
            }
        }
        if let Some(p) = &self.pole {
            for i in 0..self.node_count() {
                if self.fixed[i] {
                    continue;
                }
                let mut d2 = 0.0;
                for c in 0..dim {
                    let d = self.positions[i * dim + c] - p.center[c];
                    d2 += d * d;
                }
                let d = d2.sqrt();
                let pen = p.radius + self.standoff[i] - d;
                if pen <= 0.0 || d <= 0.0 {
                    continue;
                }
                let mut vn = 0.0;
                for c in 0..dim {
                    vn += self.velocities[i * dim + c] * (self.positions[i * dim + c] - p.center[c]) / d;
                }
                let mag = (p.stiffness * pen - p.damping * vn).max(0.0);
                for c in 0..dim {
                    f[i * dim + c] += mag * (self.positions[i * dim + c] - p.center[c]) / d;
                }
            }
        }
        f
    }

    /// One semi-implicit Euler step: velocities first, then positions.
    pub fn step(&mut self, dt: f64) {
        let f = self.forces();
        let dim = self.dim;
        for i in 0..self.node_count() {
            if self.fixed[i] {
                continue;
            }
            for c in 0..dim {
                let k = i * dim + c;
                self.velocities[k] += dt * f[k] / self.masses[i];
                self.positions[k] += dt * self.velocities[k];
            }
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        (0..self.node_count())
            .map(|i| {
                let v2: f64 = self.velocities[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .map(|v| v * v)
                    .sum();
                0.5 * self.masses[i] * v2
            })
            .sum()
    }

    /// Spring plus pole-penalty potential energy.
    pub fn elastic_energy(&self) -> f64 {
        let springs: f64 = self
            .springs
            .iter()
            .map(|s| {
                let e = self.distance(s.i, s.j) - s.rest;
                0.5 * s.stiffness * e * e
            })
            .sum();
        let pole = match &self.pole {
            None => 0.0,
            Some(p) => (0..self.node_count())
                .filter(|&i| !self.fixed[i])
                .map(|i| {
                    let d: f64 = self
                        .p(i)
                        .iter()
                        .zip(&p.center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let pen = (p.radius + self.standoff[i] - d).max(0.0);
                    0.5 * p.stiffness * pen * pen
                })
                .sum(),
        };
        springs + pole
    }

    pub fn position_tensor(&self) -> Tensor {
        Tensor::from_rows(self.node_count(), self.dim, self.positions.clone()).expect("consistent buffer")
    }
}

/// Lattice, material, pole and timing parameters of the pole-impact oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub nx: usize,
    pub ny: usize,
    /// Nominal column spacing in mm.
    pub spacing_x: f64,
    /// Nominal row spacing in mm.
    pub spacing_y: f64,
    pub node_mass: f64,
    pub back_row_mass: f64,
    /// Axial stiffness per mm of thickness at the nominal column spacing.
    pub stiffness: f64,
    /// Spring damping as a multiple of stiffness (ms).
    pub damping: f64,
    pub yield_strain: f64,
    pub min_rest_ratio: f64,
    pub pole_radius: f64,
    pub pole_nodes: usize,
    pub pole_stiffness: f64,
    pub pole_damping: f64,
    /// Clearance between pole and nearest lattice surface at frame 0.
    pub initial_gap: f64,
    pub substeps: usize,
    /// Output interval in ms.
    pub output_dt: f64,
    pub horizon: usize,
    /// Allowed pole penetration as a fraction of the pole radius.
    pub penetration_tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            nx: 24,
            ny: 8,
            spacing_x: 10.0,
            spacing_y: 8.0,
            node_mass: 1.0,
            back_row_mass: 8.0,
            stiffness: 1.0,
            damping: 0.2,
            yield_strain: 0.04,
            min_rest_ratio: 0.35,
            pole_radius: 20.0,
            pole_nodes: 16,
            pole_stiffness: 20.0,
            pole_damping: 1.0,
            initial_gap: 2.0,
            substeps: 50,
            output_dt: 5.0,
            horizon: 15,
            penetration_tolerance: 0.02,
        }
    }
}

impl OracleConfig {
    pub fn inner_dt(&self) -> f64 {
        self.output_dt / self.substeps as f64
    }

    pub fn free_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_count(&self) -> usize {
        self.free_count() + self.pole_nodes
    }

    /// Centre-column nodes on the second and second-to-last rows.
    pub fn survival_pair(&self) -> (usize, usize) {
        let c = self.nx / 2;
        (self.nx + c, (self.ny - 2) * self.nx + c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("oracle config: {m}")));
        if self.nx < 3 || self.ny < 4 {
            return bad("lattice needs nx >= 3 and ny >= 4");
        }
        if self.pole_nodes < 3 {
            return bad("pole needs at least 3 nodes");
        }
        if self.substeps == 0 || self.horizon == 0 || !(self.output_dt > 0.0) {
            return bad("substeps, horizon and output_dt must be positive");
        }
        let positive = [
            self.spacing_x,
            self.spacing_y,
            self.node_mass,
            self.back_row_mass,
            self.stiffness,
            self.pole_radius,
            self.pole_stiffness,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return bad("spacings, masses, stiffnesses and radius must be positive");
        }
        if self.damping < 0.0 || self.pole_damping < 0.0 || self.yield_strain <= 0.0 || self.initial_gap < 0.0 {
            return bad("damping, yield strain and gap must be non-negative");
        }
        Ok(())
    }
}

fn design_value(design: &DesignSample, name: &str) -> Result<f64> {
    design
        .get(name)
        .ok_or_else(|| Error::InvalidArgument(format!("design {} lacks `{name}`", design.id)))
}

/// Mesh, initial spring system and initial velocity for one design.
pub struct Scene {
    pub graph: MeshGraph,
    pub system: SpringSystem,
    pub initial_velocity: Tensor,
}

pub fn build_scene(design: &DesignSample, cfg: &OracleConfig) -> Result<Scene> {
    cfg.validate()?;
    design.validate()?;
    let pole_x = design_value(design, POLE_POSITION)?;
    let t_outer = design_value(design, THICKNESS_OUTER)?;
    let t_patch = design_value(design, THICKNESS_PATCH)?;
    let front = design_value(design, MORPH_FRONT_DEPTH)?;
    let width = design_value(design, MORPH_WIDTH)?;
    let section = design_value(design, MORPH_SECTION_DEPTH)?;
    let curvature = design_value(design, MORPH_CURVATURE)?;
    let speed = design_value(design, IMPACT_SPEED)?;

    let (nx, ny) = (cfg.nx, cfg.ny);
    let dx = cfg.spacing_x * (1.0 + width / 50.0);
    let dy = cfg.spacing_y * (1.0 + section / 50.0);
    let half = 0.5 * (nx - 1) as f64 * dx;
    let bow_rows = 3.0_f64.min(ny as f64 - 1.0);
    let nf = cfg.free_count();
    let n = cfg.node_count();
    let mut pos = Vec::with_capacity(2 * n);
    let mut thick = Vec::with_capacity(n);
    for r in 0..ny {
        for c in 0..nx {
            let x = c as f64 * dx - half;
            let s = x / half;
            let mut y = r as f64 * dy;
            y -= front * (1.0 - s * s) * (1.0 - r as f64 / bow_rows).max(0.0);
            y += curvature * s * s * r as f64 / (ny - 1) as f64;
            pos.extend([x, y]);
            let patch = (c as f64 - 0.5 * (nx - 1) as f64).abs() <= nx as f64 / 6.0 && r < ny / 2;
            thick.push(if patch { t_patch } else { t_outer });
        }
    }

    let reach = cfg.pole_radius + cfg.initial_gap;
    let mut cy = f64::INFINITY;
    for i in 0..nf {
        let rr = reach + 0.5 * thick[i];
        let ddx = pos[2 * i] - pole_x;
        if ddx.abs() < rr {
            cy = cy.min(pos[2 * i + 1] - (rr * rr - ddx * ddx).sqrt());
        }
    }
    if !cy.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "design {}: pole misses the lattice",
            design.id
        )));
    }
    for k in 0..cfg.pole_nodes {
        let a = std::f64::consts::TAU * k as f64 / cfg.pole_nodes as f64;
        pos.extend([pole_x + cfg.pole_radius * a.cos(), cy + cfg.pole_radius * a.sin()]);
        thick.push(0.0);
    }

    let mut masses = vec![cfg.node_mass; n];
    for m in &mut masses[(ny - 1) * nx..nf] {
        *m = cfg.back_row_mass;
    }
    let mut sys = SpringSystem::new(2, pos.clone(), masses);
    for i in nf..n {
        sys.fixed[i] = true;
    }
    for i in 0..nf {
        sys.standoff[i] = 0.5 * thick[i];
    }
    sys.yield_strain = Some(cfg.yield_strain);
    sys.min_rest_ratio = cfg.min_rest_ratio;

    let id = |r: usize, c: usize| r * nx + c;
    let mut pairs = Vec::new();
    for r in 0..ny {
        for c in 0..nx {
            if c + 1 < nx {
                pairs.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < ny {
                pairs.push((id(r, c), id(r + 1, c)));
                if c + 1 < nx {
                    pairs.push((id(r, c), id(r + 1, c + 1)));
                    pairs.push((id(r, c + 1), id(r + 1, c)));
                }
            }
        }
    }
    for (i, j) in pairs.clone() {
        let l0 = sys.distance(i, j);
        let k = cfg.stiffness * 0.5 * (thick[i] + thick[j]) * cfg.spacing_x / l0;
        sys.add_spring(i, j, k, cfg.damping * k);
    }
    for k in 0..cfg.pole_nodes {
        pairs.push((nf + k, nf + (k + 1) % cfg.pole_nodes));
    }
    sys.pole = Some(Pole {
        center: vec![pole_x, cy],
        radius: cfg.pole_radius,
        stiffness: cfg.pole_stiffness,
        damping: cfg.pole_damping,
    });

    let mut roles = vec![NodeRole::Free; nf];
    roles.extend(std::iter::repeat_n(NodeRole::Rigid, cfg.pole_nodes));
    let graph = MeshGraph::from_undirected(Tensor::from_rows(n, 2, pos)?, &pairs, roles, &thick)?;
    let mut v0 = vec![0.0; 2 * n];
    for i in 0..nf {
        v0[2 * i + 1] = -speed;
    }
    for i in 0..nf {
        sys.velocities[2 * i + 1] = -speed;
    }
    Ok(Scene {
        graph,
        system: sys,
        initial_velocity: Tensor::from_rows(n, 2, v0)?,
    })
}

/// Integrate one design and sample `T + 1` output frames.
pub fn simulate(design: &DesignSample, cfg: &OracleConfig) -> Result<Sample> {
    let Scene {
        graph,
        mut system,
        initial_velocity,
    } = build_scene(design, cfg)?;
    let dt = cfg.inner_dt();
    let bound = system.stability_bound();
    if dt > bound {
        return Err(Error::Unstable { dt, bound });
    }
    let mut frames = Vec::with_capacity(cfg.horizon + 1);
    frames.push(system.position_tensor());
    for _ in 0..cfg.horizon {
        for _ in 0..cfg.substeps {
            system.step(dt);
        }
        let x = system.position_tensor();
        if !x.is_finite() {
            return Err(Error::NonFinite { step: frames.len() });
        }
        frames.push(x);
    }
    let trajectory = Trajectory::from_positions(
        frames,
        initial_velocity,
        cfg.output_dt,
        Some(design.clone()),
        cfg.survival_pair(),
    )?;
    Ok(Sample {
        id: design.id,
        graph,
        trajectory,
    })
}
