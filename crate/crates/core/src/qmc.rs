//! Sobol' low-discrepancy points and pick-freeze Sobol' index estimators.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::orthobasis::MarginalFamily;
use crate::subset::Subset;

const DIRECTION_TABLE: &str = include_str!("../assets/sobol_joe_kuo_64.txt");
const BITS: usize = 32;

struct TableRow {
    degree: usize,
    poly: u32,
    initial: Vec<u32>,
}

fn table() -> &'static Vec<TableRow> {
    static TABLE: OnceLock<Vec<TableRow>> = OnceLock::new();
    TABLE.get_or_init(|| {
        DIRECTION_TABLE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let nums: Vec<u32> = l.split_whitespace().map(|t| t.parse().expect("direction table entry")).collect();
                TableRow { degree: nums[1] as usize, poly: nums[2], initial: nums[3..].to_vec() }
            })
            .collect()
    })
}

/// Largest supported dimension.
pub fn max_dim() -> usize {
    table().len()
}

/// Gray-code Sobol' generator.
#[derive(Clone, Debug)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > max_dim() {
            return Err(Error::invalid(format!("Sobol' dimension must be in 1..={}, got {dim}", max_dim())));
        }
        let directions = table()[..dim]
            .iter()
            .map(|row| {
                let mut v = [0u32; BITS];
                if row.degree == 0 {
                    for (k, vk) in v.iter_mut().enumerate() {
                        *vk = 1 << (BITS - 1 - k);
                    }
                    return v;
                }
                let s = row.degree;
                for k in 0..s.min(BITS) {
                    v[k] = row.initial[k] << (BITS - 1 - k);
                }
                for k in s..BITS {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for i in 1..s {
                        if (row.poly >> (s - 1 - i)) & 1 == 1 {
                            x ^= v[k - i];
                        }
                    }
                    v[k] = x;
                }
                v
            })
            .collect();
        Ok(SobolSequence { directions })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Points `skip .. skip + n` of the sequence as rows in `[0, 1)^dim`.
    pub fn points(&self, n: usize, skip: usize) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::invalid("at least one Sobol' point must be requested"));
        }
        if (skip + n) as u64 > 1u64 << BITS {
            return Err(Error::invalid("requested Sobol' points exceed the 2^32 period"));
        }
        let d = self.dim();
        let mut state = vec![0u32; d];
        // jump to index `skip` directly through its Gray code
        let gray = (skip as u64 ^ (skip as u64 >> 1)) as u32;
        for (j, st) in state.iter_mut().enumerate() {
            for k in 0..BITS {
                if (gray >> k) & 1 == 1 {
                    *st ^= self.directions[j][k];
                }
            }
        }
        let scale = 1.0 / (1u64 << BITS) as f64;
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                out[(i, j)] = state[j] as f64 * scale;
            }
            let c = (skip + i + 1).trailing_zeros() as usize;
            if c < BITS {
                for (j, st) in state.iter_mut().enumerate() {
                    *st ^= self.directions[j][c];
                }
            }
        }
        Ok(out)
    }
}

/// `n x dim` Sobol' points starting at index `skip`.
pub fn sobol_points(dim: usize, n: usize, skip: usize) -> Result<DMatrix<f64>> {
    SobolSequence::new(dim)?.points(n, skip)
}

/// Pick-freeze estimates from one QMC design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickFreezeEstimate {
    pub mean: f64,
    pub variance: f64,
    /// Pure interaction indices of the requested subsets.
    pub sobol: Vec<(Subset, f64)>,
    /// Total indices per variable, when requested.
    pub total: Option<Vec<f64>>,
    pub points_per_block: usize,
    pub evaluations: usize,
}

/// Number of model-evaluation blocks needed for the requested indices.
pub fn blocks_needed(d: usize, subsets: &[Subset], totals: bool) -> usize {
    2 + closed_subsets(subsets).len() + if totals { d } else { 0 }
}

fn closed_subsets(subsets: &[Subset]) -> Vec<Subset> {
    let mut all: Vec<Subset> = subsets.iter().flat_map(|s| s.subsets()).filter(|u| !u.is_empty()).collect();
    all.sort_by_key(|s| (s.len(), s.bits()));
    all.dedup();
    all
}

/// Pick-freeze estimates with `n` points per block. Closed indices use the
/// centered product `(f(A) - mu)(f(C_U) - mu)`, where `C_U` takes the
/// coordinates in `U` from block `A` and the rest from block `B`; pure
/// interactions follow by inclusion-exclusion. Totals use the complementary
/// freeze `1 - V^c_{-i} / V`.
pub fn pick_freeze<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    subsets: &[Subset],
    totals: bool,
    n: usize,
    skip: usize,
) -> Result<PickFreezeEstimate> {
    let d = families.len();
    if model.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: model.dim() });
    }
    for s in subsets {
        if s.is_empty() || s.span() > d {
            return Err(Error::invalid(format!("subset {s} is not a nonempty subset of 1..={d}")));
        }
    }
    let u = sobol_points(2 * d, n, skip)?;
    let a = DMatrix::from_fn(n, d, |i, j| families[j].inverse_cdf(u[(i, j)]));
    let b = DMatrix::from_fn(n, d, |i, j| families[j].inverse_cdf(u[(i, d + j)]));
    let mix = |keep_from_a: Subset| {
        DMatrix::from_fn(n, d, |i, j| if keep_from_a.contains(j) { a[(i, j)] } else { b[(i, j)] })
    };
    let fa = model.eval_rows(&a)?;
    let fb = model.eval_rows(&b)?;
    let mut evaluations = 2 * n;
    let mu = (fa.sum() + fb.sum()) / (2 * n) as f64;
    let variance = (fa.iter().chain(fb.iter()).map(|v| (v - mu).powi(2)).sum::<f64>()) / (2 * n) as f64;
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance("model output is constant over the design"));
    }
    let closed_of = |f_mix: &nalgebra::DVector<f64>| {
        fa.iter().zip(f_mix.iter()).map(|(x, y)| (x - mu) * (y - mu)).sum::<f64>() / n as f64
    };
    let mut closed: BTreeMap<u64, f64> = BTreeMap::new();
    for s in closed_subsets(subsets) {
        let fm = model.eval_rows(&mix(s))?;
        evaluations += n;
        closed.insert(s.bits(), closed_of(&fm) / variance);
    }
    let sobol = subsets
        .iter()
        .map(|&s| {
            let v: f64 = s
                .subsets()
                .filter(|u| !u.is_empty())
                .map(|u| {
                    let sign = if (s.len() - u.len()) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * closed[&u.bits()]
                })
                .sum();
            (s, v)
        })
        .collect();
    let total = if totals {
        let full = Subset::full(d);
        let mut t = Vec::with_capacity(d);
        for i in 0..d {
            let fm = model.eval_rows(&mix(full.without(i)))?;
            evaluations += n;
            t.push(1.0 - closed_of(&fm) / variance);
        }
        Some(t)
    } else {
        None
    };
    Ok(PickFreezeEstimate { mean: mu, variance, sobol, total, points_per_block: n, evaluations })
}

/// Pick-freeze with the points per block chosen so the total number of
/// model evaluations stays within `budget`.
pub fn pick_freeze_with_budget<M: Model + ?Sized>(
    model: &M,
    families: &[MarginalFamily],
    subsets: &[Subset],
    totals: bool,
    budget: usize,
    skip: usize,
) -> Result<PickFreezeEstimate> {
    let blocks = blocks_needed(families.len(), subsets, totals);
    let n = budget / blocks;
    if n < 2 {
        return Err(Error::TooFewSamples { got: budget, needed: 2 * blocks, context: "pick-freeze budget" });
    }
    pick_freeze(model, families, subsets, totals, n, skip)
}
