//! Benchmark models: an analytical ridge function, a two-dimensional
//! additive function, the borehole flow model and the piston cycle time.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::orthobasis::MarginalFamily;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub description: String,
    pub unit: String,
    pub distribution: MarginalFamily,
}

/// Exported description of a benchmark model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
    pub output: String,
    pub inputs: Vec<InputSpec>,
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct BenchmarkModel {
    spec: ModelSpec,
    eval: Evaluator,
}

impl fmt::Debug for BenchmarkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkModel").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl BenchmarkModel {
    fn new(name: &str, output: &str, inputs: Vec<InputSpec>, eval: Evaluator) -> Self {
        let spec = ModelSpec { name: name.to_string(), dim: inputs.len(), output: output.to_string(), inputs };
        BenchmarkModel { spec, eval }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn families(&self) -> Vec<MarginalFamily> {
        self.spec.inputs.iter().map(|i| i.distribution).collect()
    }

    pub fn input_names(&self) -> Vec<String> {
        self.spec.inputs.iter().map(|i| i.name.clone()).collect()
    }
}

impl Model for BenchmarkModel {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

fn input(name: &str, description: &str, unit: &str, distribution: MarginalFamily) -> InputSpec {
    InputSpec { name: name.into(), description: description.into(), unit: unit.into(), distribution }
}

fn uniform(a: f64, b: f64) -> MarginalFamily {
    MarginalFamily::Uniform { lower: a, upper: b }
}

/// Matrix whose column span defines the active plane of the analytical
/// ridge benchmark (stored row by row, 6 x 2).
const RIDGE_GENERATOR: [[f64; 2]; 6] = [[2.0, -3.0], [3.0, 1.0], [1.0, -2.0], [-4.0, 1.0], [1.0, -1.0], [0.1, -0.3]];

/// Full orthogonal factor of the Householder QR of the ridge generator;
/// the first two columns span the active plane, the other four its
/// orthogonal complement.
pub fn ridge_frame() -> (DMatrix<f64>, DMatrix<f64>) {
    let g = DMatrix::from_fn(6, 2, |i, j| RIDGE_GENERATOR[i][j]);
    let qr = g.qr();
    let mut qt = DMatrix::<f64>::identity(6, 6);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    (q.columns(0, 2).into_owned(), q.columns(2, 4).into_owned())
}

fn quartic_pair(a: f64, b: f64) -> f64 {
    a * a - 0.1 * b * b - 2.0 * a * a * b * b + 2.0 * a * b
}

/// `f(x) = g(U^T x) + s g(W^T x)` on `[-1, 1]^6`, with
/// `g(a, b) = a^2 - 0.1 b^2 - 2 a^2 b^2 + 2 a b` acting on the leading two
/// coordinates.
pub fn analytical_ridge(s: f64) -> Result<BenchmarkModel> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("ridge perturbation strength must be >= 0, got {s}")));
    }
    let (u, w) = ridge_frame();
    let inputs = (1..=6).map(|i| input(&format!("x{i}"), "standardized input", "-", MarginalFamily::legendre())).collect();
    let eval = Arc::new(move |x: &[f64]| {
        let dot = |m: &DMatrix<f64>, c: usize| (0..6).map(|k| m[(k, c)] * x[k]).sum::<f64>();
        let mut v = quartic_pair(dot(&u, 0), dot(&u, 1));
        if s != 0.0 {
            v += s * quartic_pair(dot(&w, 0), dot(&w, 1));
        }
        v
    });
    let name = if s == 0.0 { "analytical_ridge".to_string() } else { format!("analytical_ridge({s})") };
    Ok(BenchmarkModel::new(&name, "f", inputs, eval))
}

/// `f(x) = -x1 (x1 - 2) + x2^4` on `[0, 1]^2`.
pub fn additive_2d() -> BenchmarkModel {
    let inputs = vec![
        input("x1", "first input", "-", uniform(0.0, 1.0)),
        input("x2", "second input", "-", uniform(0.0, 1.0)),
    ];
    BenchmarkModel::new("additive_2d", "f", inputs, Arc::new(|x: &[f64]| -x[0] * (x[0] - 2.0) + x[1].powi(4)))
}

/// Steady-state water flow through a borehole (m^3/yr).
pub fn borehole() -> BenchmarkModel {
    let inputs = vec![
        input("r_w", "Radius of borehole", "m", MarginalFamily::Gaussian { mean: 0.10, stddev: 0.0161812 }),
        input("r", "Radius of influence", "m", uniform(100.0, 50000.0)),
        input("T_u", "Transmissivity of upper aquifer", "m^2/yr", uniform(63070.0, 115600.0)),
        input("H_u", "Potentiometric head of upper aquifer", "m", uniform(990.0, 1110.0)),
        input("T_l", "Transmissivity of lower aquifer", "m^2/yr", uniform(63.1, 116.0)),
        input("H_l", "Potentiometric head of lower aquifer", "m", uniform(700.0, 820.0)),
        input("L", "Length of borehole", "m", uniform(1120.0, 1680.0)),
        input("K_w", "Hydraulic conductivity of borehole", "m/yr", uniform(1500.0, 15000.0)),
    ];
    let eval = Arc::new(|x: &[f64]| {
        let (rw, r, tu, hu, tl, hl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
        let lr = (r / rw).ln();
        2.0 * PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl))
    });
    BenchmarkModel::new("borehole", "water flow rate (m^3/yr)", inputs, eval)
}

/// Piston cycle time (s). The volume input is the initial gas volume; the
/// working volume is solved from the quadratic equilibrium.
pub fn piston() -> BenchmarkModel {
    let inputs = vec![
        input("M", "Piston mass", "kg", uniform(30.0, 60.0)),
        input("S", "Piston surface area", "m^2", uniform(0.005, 0.020)),
        input("V", "Initial gas volume", "m^3", uniform(0.002, 0.010)),
        input("k", "Spring coefficient", "N/m", uniform(1000.0, 5000.0)),
        input("P_0", "Atmospheric pressure", "N/m^2", uniform(90000.0, 110000.0)),
        input("T_a", "Ambient temperature", "K", uniform(290.0, 296.0)),
        input("T_0", "Filling gas temperature", "K", uniform(340.0, 360.0)),
    ];
    let eval = Arc::new(|x: &[f64]| {
        let (m, s, v0, k, p0, ta, t0) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
        let a = p0 * s + 19.62 * m - k * v0 / s;
        let v = s / (2.0 * k) * ((a * a + 4.0 * k * p0 * v0 / t0 * ta).sqrt() - a);
        2.0 * PI * (m / (k + s * s * p0 * v0 * ta / (t0 * v * v))).sqrt()
    });
    BenchmarkModel::new("piston", "cycle time (s)", inputs, eval)
}

pub const MODEL_NAMES: [&str; 4] = ["analytical_ridge", "additive_2d", "borehole", "piston"];

/// Looks a model up by name; `analytical_ridge(0.1)` selects the perturbed
/// ridge variant.
pub fn by_name(name: &str) -> Result<BenchmarkModel> {
    let name = name.trim();
    match name {
        "analytical_ridge" => analytical_ridge(0.0),
        "additive_2d" => Ok(additive_2d()),
        "borehole" => Ok(borehole()),
        "piston" => Ok(piston()),
        _ => {
            if let Some(arg) = name.strip_prefix("analytical_ridge(").and_then(|r| r.strip_suffix(')')) {
                let s: f64 = arg.trim().parse().map_err(|_| Error::invalid(format!("bad ridge strength '{arg}'")))?;
                return analytical_ridge(s);
            }
            Err(Error::invalid(format!("unknown model '{name}'; expected one of {}", MODEL_NAMES.join(", "))))
        }
    }
}
