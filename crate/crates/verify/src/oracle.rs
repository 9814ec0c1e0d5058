//! Reference implementations written from the model equations alone, sharing
//! no code with `handover-core`. Everything here works on plain arrays.

use serde_json::Value;

pub type V3 = [f64; 3];

fn norm(p: &V3) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn scale(p: &V3, s: f64) -> V3 {
    [p[0] * s, p[1] * s, p[2] * s]
}

// tanh from exponentials; exact enough for |u| < 350.
fn tanh_exp(u: f64) -> f64 {
    if u > 20.0 {
        return 1.0 - 2.0 * (-2.0 * u).exp();
    }
    let e = (2.0 * u).exp();
    (e - 1.0) / (e + 1.0)
}

pub fn spring_force(f_max: f64, k: f64, p: &V3) -> V3 {
    let r = norm(p);
    if r == 0.0 {
        return [0.0; 3];
    }
    scale(p, f_max * tanh_exp(k * r / f_max) / r)
}

/// `∫₀^|p| f_max·tanh(k s / f_max) ds`, evaluated directly for moderate arguments.
pub fn spring_potential(f_max: f64, k: f64, p: &V3) -> f64 {
    let u = k * norm(p) / f_max;
    f_max * f_max / k * (0.5 * ((u).exp() + (-u).exp())).ln()
}

pub fn damper_force(c1: f64, c2: f64, beta_d: f64, p: &V3, pdot: &V3) -> V3 {
    scale(pdot, c1 + c2 * tanh_exp(beta_d * norm(p)))
}

pub fn repulsive_force(f_max: f64, sigma: f64, p_r: &V3) -> V3 {
    let r = norm(p_r);
    let k_r = f_max / sigma * 0.5f64.exp();
    scale(p_r, k_r * (-(r * r) / (2.0 * sigma * sigma)).exp())
}

pub fn repulsive_energy(f_max: f64, sigma: f64, p_r: &V3) -> f64 {
    let r = norm(p_r);
    let k_r = f_max / sigma * 0.5f64.exp();
    k_r * sigma * sigma * (-(r * r) / (2.0 * sigma * sigma)).exp()
}

/// Central-difference gradient with step `h`.
pub fn gradient(f: &impl Fn(&V3) -> f64, p: &V3, h: f64) -> V3 {
    let mut g = [0.0; 3];
    for i in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

/// Maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn identity() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn from_rotation(r: [[f64; 3]; 3], t: V3) -> M4 {
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j];
        }
        m[i][3] = t[i];
    }
    m
}

/// Rodrigues rotation about a unit axis.
fn axis_angle(axis: V3, angle: f64) -> [[f64; 3]; 3] {
    let n = norm(&axis);
    let [x, y, z] = scale(&axis, 1.0 / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Fixed-axis roll, pitch, yaw: `Rz(yaw)·Ry(pitch)·Rx(roll)`.
fn rpy(r: V3) -> [[f64; 3]; 3] {
    let m = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        o
    };
    m(
        axis_angle([0.0, 0.0, 1.0], r[2]),
        m(axis_angle([0.0, 1.0, 0.0], r[1]), axis_angle([1.0, 0.0, 0.0], r[0])),
    )
}

fn v3(v: &Value) -> V3 {
    let a = v.as_array().expect("3-vector");
    [0, 1, 2].map(|i| a[i].as_f64().expect("number"))
}

fn origin(v: Option<&Value>) -> M4 {
    match v {
        None | Some(Value::Null) => identity(),
        Some(o) => {
            let xyz = o.get("xyz").map(v3).unwrap_or([0.0; 3]);
            let r = o.get("rpy").map(v3).unwrap_or([0.0; 3]);
            from_rotation(rpy(r), xyz)
        }
    }
}

/// Forward kinematics read straight from the chain description file.
#[derive(Debug, Clone)]
pub struct FkOracle {
    base: M4,
    joints: Vec<(V3, M4, Option<(f64, f64)>)>,
    attachments: Vec<(String, usize, V3)>,
}

impl FkOracle {
    pub fn from_json(text: &str) -> Self {
        let v: Value = serde_json::from_str(text).expect("chain json");
        let joints = v["joints"]
            .as_array()
            .expect("joints")
            .iter()
            .map(|j| {
                let limits = j.get("limits").and_then(|l| l.as_array()).map(|l| {
                    (l[0].as_f64().unwrap(), l[1].as_f64().unwrap())
                });
                (v3(&j["axis"]), origin(j.get("origin")), limits)
            })
            .collect();
        let attachments = v["attachments"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|x| {
                        (
                            x["name"].as_str().unwrap().to_owned(),
                            x["body"].as_u64().unwrap() as usize,
                            v3(&x["offset"]),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            base: origin(v.get("base")),
            joints,
            attachments,
        }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.joints
            .iter()
            .map(|j| j.2.unwrap_or((-std::f64::consts::PI, std::f64::consts::PI)))
            .collect()
    }

    /// Homogeneous transform of every body, base first.
    pub fn bodies(&self, q: &[f64]) -> Vec<M4> {
        let mut out = vec![self.base];
        let mut current = self.base;
        for ((axis, org, _), &angle) in self.joints.iter().zip(q) {
            current = mul(&mul(&current, org), &from_rotation(axis_angle(*axis, angle), [0.0; 3]));
            out.push(current);
        }
        out
    }

    pub fn point(&self, q: &[f64], attachment: &str) -> V3 {
        let (_, body, offset) = self
            .attachments
            .iter()
            .find(|a| a.0 == attachment)
            .unwrap_or_else(|| panic!("no attachment {attachment}"));
        let m = self.bodies(q)[*body];
        [0, 1, 2].map(|i| m[i][0] * offset[0] + m[i][1] * offset[1] + m[i][2] * offset[2] + m[i][3])
    }

    /// Central-difference Jacobian (row-major, 3 × dof) of any point map.
    pub fn jacobian(&self, q: &[f64], h: f64, point: impl Fn(&[f64]) -> V3) -> Vec<V3> {
        (0..q.len())
            .map(|j| {
                let mut a = q.to_vec();
                let mut b = q.to_vec();
                a[j] += h;
                b[j] -= h;
                let (pa, pb) = (point(&a), point(&b));
                [0, 1, 2].map(|i| (pa[i] - pb[i]) / (2.0 * h))
            })
            .collect()
    }
}

/// Back gripper point pushed out to `length` from the finger midpoint.
pub fn extended_back(left: &V3, right: &V3, back: &V3, length: f64) -> V3 {
    let mid = [0, 1, 2].map(|i| 0.5 * (left[i] + right[i]));
    let d = [0, 1, 2].map(|i| back[i] - mid[i]);
    let n = norm(&d);
    [0, 1, 2].map(|i| mid[i] + d[i] * length / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefPhase {
    Tracking,
    FinalApproach,
    Grasping,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefCommand {
    None,
    Close,
    Open,
}

/// Handover state machine transcribed from its rules.
///
/// Tracking starts the final approach once every pair is within `d_activate`
/// and the hand is still. The approach shrinks the offset and closes the
/// gripper once the offset is gone and every pair has stayed within `d_grasp`
/// for `t_dwell`. Any pair leaving `d_activate` or the hand moving sends it
/// back to tracking with the default offset.
#[derive(Debug, Clone, Copy)]
pub struct RefFsm {
    pub phase: RefPhase,
    pub alpha: f64,
    pub inside_ticks: usize,
    pub d_activate: f64,
    pub d_grasp: f64,
    pub t_dwell: f64,
    pub v_low: f64,
    pub ramp_rate: f64,
    pub alpha_default: f64,
}

impl RefFsm {
    pub fn step(&mut self, d: [f64; 3], speed: f64, closed: bool, dt: f64) -> RefCommand {
        let near = d.iter().all(|x| *x < self.d_activate);
        let still = speed < self.v_low;
        match self.phase {
            RefPhase::Done => RefCommand::None,
            RefPhase::Tracking => {
                if near && still {
                    self.phase = RefPhase::FinalApproach;
                    self.inside_ticks = 0;
                }
                RefCommand::None
            }
            RefPhase::FinalApproach | RefPhase::Grasping if !(near && still) => {
                self.phase = RefPhase::Tracking;
                self.alpha = self.alpha_default;
                self.inside_ticks = 0;
                RefCommand::Open
            }
            RefPhase::FinalApproach => {
                self.alpha = (self.alpha - self.ramp_rate * dt).max(0.0);
                if d.iter().all(|x| *x < self.d_grasp) {
                    self.inside_ticks += 1;
                } else {
                    self.inside_ticks = 0;
                }
                // Counted in whole ticks: the first tick at which at least
                // `t_dwell` has elapsed.
                let dwell_ticks = (self.t_dwell / dt - 1e-6).ceil() as usize;
                if self.alpha == 0.0 && self.inside_ticks >= dwell_ticks {
                    self.phase = RefPhase::Grasping;
                    RefCommand::Close
                } else {
                    RefCommand::None
                }
            }
            RefPhase::Grasping => {
                if closed {
                    self.phase = RefPhase::Done;
                }
                RefCommand::None
            }
        }
    }
}
