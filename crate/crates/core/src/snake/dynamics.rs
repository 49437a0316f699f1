//! Planar inextensible body with prescribed curvature and anisotropic Coulomb
//! friction, reduced to the dynamics of its centre of mass.
//!
//! The body shape is kept in a frame attached to the COM and rotated by the
//! heading `θ̄`. Per substep the generalised velocity `q = (V, ω)` solves
//!
//! ```text
//! M' q' = M q + (Hs - Hs') e3 + dt Φ(q')
//! ```
//!
//! where `M = diag(ρL, ρL, J)`, `Hs` is the shape angular momentum and `Φ` the
//! net friction force and torque. `Φ(q')` is linearised about `q`, which keeps
//! the regularised friction stable at millisecond steps. Positions then move
//! with the new velocities.

use std::io::Write;

use super::params::PhysicalParams;
use super::quadrature::Grid;
use crate::{Error, Result};

pub type Vec2 = [f64; 2];

/// Body-frame shape for one curvature profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyShape {
    /// Tangent angle relative to the heading, `I0[κ]`.
    pub phi: Vec<f64>,
    pub cos_phi: Vec<f64>,
    pub sin_phi: Vec<f64>,
    /// Positions relative to the COM.
    pub rx: Vec<f64>,
    pub ry: Vec<f64>,
    /// Shape velocities relative to the COM frame.
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    /// `J = ρ ∫ |r|² ds`.
    pub inertia: f64,
    /// `Hs = ρ ∫ r × u ds`.
    pub spin: f64,
}

impl BodyShape {
    fn zeros(n: usize) -> Self {
        Self {
            phi: vec![0.0; n],
            cos_phi: vec![0.0; n],
            sin_phi: vec![0.0; n],
            rx: vec![0.0; n],
            ry: vec![0.0; n],
            ux: vec![0.0; n],
            uy: vec![0.0; n],
            inertia: 0.0,
            spin: 0.0,
        }
    }

    /// Shape for curvature `kappa` and its rate, each constant on equal-length segments.
    pub fn new(grid: &Grid, kappa: &[f64], kappa_rate: &[f64], density: f64) -> Self {
        let mut shape = Self::zeros(grid.len());
        let mut scratch = Scratch::new(grid.len());
        shape.compute(grid, kappa, kappa_rate, density, &mut scratch);
        shape
    }

    fn compute(&mut self, grid: &Grid, kappa: &[f64], kappa_rate: &[f64], density: f64, tmp: &mut Scratch) {
        grid.piecewise_i0_into(kappa, &mut self.phi);
        for (j, phi) in self.phi.iter().enumerate() {
            let (s, c) = phi.sin_cos();
            self.cos_phi[j] = c;
            self.sin_phi[j] = s;
        }
        grid.i0_into(&self.cos_phi, &mut self.rx);
        grid.i0_into(&self.sin_phi, &mut self.ry);

        grid.piecewise_i0_into(kappa_rate, &mut tmp.psi);
        for j in 0..grid.len() {
            let psi = tmp.psi[j];
            tmp.a[j] = -self.sin_phi[j] * psi;
            tmp.b[j] = self.cos_phi[j] * psi;
        }
        grid.i0_into(&tmp.a, &mut self.ux);
        grid.i0_into(&tmp.b, &mut self.uy);

        let w = grid.weights();
        let mut inertia = 0.0;
        let mut spin = 0.0;
        for j in 0..grid.len() {
            inertia += w[j] * (self.rx[j] * self.rx[j] + self.ry[j] * self.ry[j]);
            spin += w[j] * (self.rx[j] * self.uy[j] - self.ry[j] * self.ux[j]);
        }
        self.inertia = density * inertia;
        self.spin = density * spin;
    }
}

struct Scratch {
    psi: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            psi: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }
}

/// COM pose and rates plus the body curvature and its time derivative.
///
/// Curvature is held per equal-length segment (one per actuator), which lets
/// the tangent angle be integrated exactly across the jumps between segments.
/// [`SnakeBody::kappa_samples`] gives the values on the arc-length grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnakeBody {
    pub com: Vec2,
    pub heading: f64,
    pub com_vel: Vec2,
    pub heading_rate: f64,
    pub kappa: Vec<f64>,
    pub kappa_rate: Vec<f64>,
}

impl SnakeBody {
    /// Body at rest with the given curvature.
    pub fn at_rest(com: Vec2, heading: f64, kappa: Vec<f64>) -> Self {
        let n = kappa.len();
        Self {
            com,
            heading,
            com_vel: [0.0; 2],
            heading_rate: 0.0,
            kappa,
            kappa_rate: vec![0.0; n],
        }
    }

    pub fn shape(&self, grid: &Grid, density: f64) -> BodyShape {
        BodyShape::new(grid, &self.kappa, &self.kappa_rate, density)
    }

    pub fn kappa_samples(&self, grid: &Grid) -> Vec<f64> {
        grid.piecewise_samples(&self.kappa)
    }

    pub fn kappa_rate_samples(&self, grid: &Grid) -> Vec<f64> {
        grid.piecewise_samples(&self.kappa_rate)
    }
}

fn rotate(c: f64, s: f64, x: f64, y: f64) -> Vec2 {
    [c * x - s * y, s * x + c * y]
}

/// World positions `X(s_j)` and tangent angles `θ(s_j)`.
pub fn reconstruct_shape(body: &SnakeBody, grid: &Grid) -> (Vec<Vec2>, Vec<f64>) {
    let shape = body.shape(grid, 1.0);
    let (s, c) = body.heading.sin_cos();
    let points = shape
        .rx
        .iter()
        .zip(&shape.ry)
        .map(|(x, y)| {
            let r = rotate(c, s, *x, *y);
            [body.com[0] + r[0], body.com[1] + r[1]]
        })
        .collect();
    let angles = shape.phi.iter().map(|p| body.heading + p).collect();
    (points, angles)
}

/// `Ẋ(s_j) = V + ω ẑ × r + u`, all in the world frame.
pub fn point_velocities(body: &SnakeBody, grid: &Grid) -> Vec<Vec2> {
    let shape = body.shape(grid, 1.0);
    let (s, c) = body.heading.sin_cos();
    (0..grid.len())
        .map(|j| {
            let r = rotate(c, s, shape.rx[j], shape.ry[j]);
            let u = rotate(c, s, shape.ux[j], shape.uy[j]);
            [
                body.com_vel[0] - body.heading_rate * r[1] + u[0],
                body.com_vel[1] + body.heading_rate * r[0] + u[1],
            ]
        })
        .collect()
}

/// Friction force per unit length at a point sliding with `v` whose tangent
/// makes angle `tangent` with the x-axis.
pub fn friction_density(v: Vec2, tangent: f64, params: &PhysicalParams) -> Vec2 {
    let (s, c) = tangent.sin_cos();
    friction_with_jacobian(v, c, s, params).0
}

/// Force and its derivative with respect to `v`.
fn friction_with_jacobian(v: Vec2, c: f64, s: f64, p: &PhysicalParams) -> (Vec2, [[f64; 2]; 2]) {
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let d = speed + p.velocity_eps_m_per_s;
    let u = [v[0] / d, v[1] / d];
    let fwd = [c, s];
    let trn = [-s, c];
    let a = u[0] * fwd[0] + u[1] * fwd[1];
    let b = u[0] * trn[0] + u[1] * trn[1];

    let th = (a / p.switch_width).tanh();
    let h = 0.5 * (1.0 + th);
    let dh = 0.5 * (1.0 - th * th) / p.switch_width;
    let mu_l = p.mu_forward * h + p.mu_backward * (1.0 - h);
    let dmu_l = mu_l + a * (p.mu_forward - p.mu_backward) * dh;

    let k = -p.density_kg_per_m * p.gravity_m_per_s2;
    let force = [
        k * (p.mu_transverse * b * trn[0] + mu_l * a * fwd[0]),
        k * (p.mu_transverse * b * trn[1] + mu_l * a * fwd[1]),
    ];

    // df/du
    let mut dfu = [[0.0; 2]; 2];
    for (i, row) in dfu.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = k * (p.mu_transverse * trn[i] * trn[j] + dmu_l * fwd[i] * fwd[j]);
        }
    }
    // du/dv = (I - (|v|/d) v̂ v̂ᵀ) / d
    let vh = if speed > 0.0 {
        [v[0] / speed, v[1] / speed]
    } else {
        [0.0, 0.0]
    };
    let shrink = speed / d;
    let mut duv = [[0.0; 2]; 2];
    for (i, row) in duv.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let id = if i == j { 1.0 } else { 0.0 };
            *x = (id - shrink * vh[i] * vh[j]) / d;
        }
    }
    let mut jac = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            jac[i][j] = dfu[i][0] * duv[0][j] + dfu[i][1] * duv[1][j];
        }
    }
    (force, jac)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det(&m) / d;
    }
    out
}

/// COM state after a substep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub com: Vec2,
    pub heading: f64,
    pub com_vel: Vec2,
    pub heading_rate: f64,
}

impl TrajectorySample {
    fn of(t: f64, body: &SnakeBody) -> Self {
        Self {
            t,
            com: body.com,
            heading: body.heading,
            com_vel: body.com_vel,
            heading_rate: body.heading_rate,
        }
    }
}

pub const TRAJECTORY_HEADER: &str = "t_s,x_m,y_m,heading_rad,vx_m_per_s,vy_m_per_s,heading_rate_rad_per_s";

/// Writes samples as comma-separated rows under [`TRAJECTORY_HEADER`].
pub fn write_trajectory<W: Write>(samples: &[TrajectorySample], mut w: W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.com[0], s.com[1], s.heading, s.com_vel[0], s.com_vel[1], s.heading_rate
        )?;
    }
    Ok(())
}

/// Net friction force and torque on a body, in the world frame.
pub fn friction_wrench(body: &SnakeBody, grid: &Grid, params: &PhysicalParams) -> (Vec2, f64) {
    let shape = body.shape(grid, params.density_kg_per_m);
    let mut force = [0.0; 2];
    let mut torque = 0.0;
    let (s, c) = body.heading.sin_cos();
    let w = grid.weights();
    for j in 0..grid.len() {
        let r = rotate(c, s, shape.rx[j], shape.ry[j]);
        let u = rotate(c, s, shape.ux[j], shape.uy[j]);
        let v = [
            body.com_vel[0] - body.heading_rate * r[1] + u[0],
            body.com_vel[1] + body.heading_rate * r[0] + u[1],
        ];
        let f = friction_density(v, body.heading + shape.phi[j], params);
        force[0] += w[j] * f[0];
        force[1] += w[j] * f[1];
        torque += w[j] * (r[0] * f[1] - r[1] * f[0]);
    }
    (force, torque)
}

/// Integrates the COM dynamics on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    params: PhysicalParams,
    grid: Grid,
}

impl Simulator {
    pub fn new(params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        let grid = Grid::new(params.samples, params.length_m)?;
        Ok(Self { params, grid })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advances `body` by `duration` seconds.
    ///
    /// `curvature(t, kappa, kappa_rate)` fills the prescribed segment curvatures
    /// and their time derivatives at time `t` measured from the start of the
    /// call; the segment count is that of `body.kappa`. The
    /// returned body carries the curvature at `duration`. When `record` is set,
    /// one sample per substep is returned, starting with the initial state.
    pub fn integrate<F>(
        &self,
        body: &SnakeBody,
        duration: f64,
        mut curvature: F,
        record: bool,
    ) -> Result<(SnakeBody, Vec<TrajectorySample>)>
    where
        F: FnMut(f64, &mut [f64], &mut [f64]),
    {
        let n = self.grid.len();
        let segments = body.kappa.len();
        if segments == 0 || body.kappa_rate.len() != segments {
            return Err(Error::DimensionMismatch {
                context: "snake curvature segments",
                expected: segments.max(1),
                got: body.kappa_rate.len(),
            });
        }
        let mut out = body.clone();
        let mut samples = Vec::new();
        if record {
            samples.push(TrajectorySample::of(0.0, &out));
        }
        if duration <= 0.0 {
            return Ok((out, samples));
        }
        let p = &self.params;
        let steps = ((duration / p.dt_s).round() as usize).max(1);
        let dt = duration / steps as f64;
        let rho = p.density_kg_per_m;
        let mass = p.mass();
        let w = self.grid.weights();

        let mut scratch = Scratch::new(n);
        let mut kappa = vec![0.0; segments];
        let mut kappa_rate = vec![0.0; segments];
        curvature(0.0, &mut kappa, &mut kappa_rate);
        let mut now = BodyShape::zeros(n);
        now.compute(&self.grid, &kappa, &kappa_rate, rho, &mut scratch);
        let mut next = BodyShape::zeros(n);

        for step in 0..steps {
            let (s, c) = out.heading.sin_cos();
            let [vx, vy] = out.com_vel;
            let om = out.heading_rate;
            let mut phi_sum = [0.0; 3];
            let mut g = [[0.0; 3]; 3];
            for j in 0..n {
                let r = rotate(c, s, now.rx[j], now.ry[j]);
                let u = rotate(c, s, now.ux[j], now.uy[j]);
                let px = -r[1];
                let py = r[0];
                let v = [vx + om * px + u[0], vy + om * py + u[1]];
                let (ts, tc) = (now.sin_phi[j], now.cos_phi[j]);
                // tangent angle heading + phi
                let (fc, fs) = (c * tc - s * ts, s * tc + c * ts);
                let (f, d) = friction_with_jacobian(v, fc, fs, p);
                let wj = w[j];
                phi_sum[0] += wj * f[0];
                phi_sum[1] += wj * f[1];
                phi_sum[2] += wj * (px * f[0] + py * f[1]);
                let db = [
                    [d[0][0], d[0][1], d[0][0] * px + d[0][1] * py],
                    [d[1][0], d[1][1], d[1][0] * px + d[1][1] * py],
                ];
                for k in 0..3 {
                    g[0][k] += wj * db[0][k];
                    g[1][k] += wj * db[1][k];
                    g[2][k] += wj * (px * db[0][k] + py * db[1][k]);
                }
            }

            let t_next = (step + 1) as f64 * dt;
            curvature(t_next, &mut kappa, &mut kappa_rate);
            next.compute(&self.grid, &kappa, &kappa_rate, rho, &mut scratch);

            let q = [vx, vy, om];
            let (j_lhs, h_rhs) = if p.shape_momentum {
                (next.inertia, now.inertia * om + now.spin - next.spin)
            } else {
                (now.inertia, now.inertia * om)
            };
            let mut a = [[0.0; 3]; 3];
            let mut rhs = [mass * vx, mass * vy, h_rhs];
            for i in 0..3 {
                for k in 0..3 {
                    a[i][k] = -dt * g[i][k];
                }
                let gq: f64 = (0..3).map(|k| g[i][k] * q[k]).sum();
                rhs[i] += dt * (phi_sum[i] - gq);
            }
            a[0][0] += mass;
            a[1][1] += mass;
            a[2][2] += j_lhs;
            let q_new = solve3(a, rhs);

            out.com_vel = [q_new[0], q_new[1]];
            out.heading_rate = q_new[2];
            out.com[0] += dt * q_new[0];
            out.com[1] += dt * q_new[1];
            out.heading += dt * q_new[2];
            if !(q_new.iter().all(|x| x.is_finite()) && out.com.iter().all(|x| x.is_finite()) && out.heading.is_finite())
            {
                return Err(Error::Integration { substep: step });
            }
            std::mem::swap(&mut now, &mut next);
            if record {
                samples.push(TrajectorySample::of(t_next, &out));
            }
        }
        out.kappa.copy_from_slice(&kappa);
        out.kappa_rate.copy_from_slice(&kappa_rate);
        Ok((out, samples))
    }
}
