//! Monte Carlo estimate of the expected signature from exactly sampled
//! paths, signatures of their piecewise-linear interpolations via Chen.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou::{ExactStepper, GaussianSource, ModelParams, PathStream};
use crate::tensor::{ChenScratch, Tensor, TruncatedTensorSeries};

/// Paths per accumulation block. Blocks are reduced in index order, so the
/// result does not depend on the number of worker threads.
pub const BLOCK: u64 = 1024;

/// A sampled path on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl PathSample {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != points.len() || times.is_empty() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: points.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("path times must be strictly increasing".into()));
        }
        let d = points[0].len();
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
        }
        Ok(PathSample { times, points })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Which dynamics drive the simulated paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// dP = -(M/m)P dt + dW, exact transitions.
    #[default]
    Physical,
    /// Drift removed: P = p + W.
    DriftFree,
}

fn stepper(params: &ModelParams, dt: f64, dynamics: Dynamics) -> Result<ExactStepper> {
    match dynamics {
        Dynamics::Physical => ExactStepper::new(params, dt),
        Dynamics::DriftFree => ExactStepper::brownian(params.dim(), dt),
    }
}

fn check_grid(t: f64, steps: usize) -> Result<f64> {
    if steps < 1 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    Ok(t / steps as f64)
}

/// Samples P on the uniform grid of `steps` intervals over [0, t].
pub fn simulate_path(params: &ModelParams, t: f64, steps: usize, source: &mut dyn GaussianSource) -> Result<PathSample> {
    let dt = check_grid(t, steps)?;
    let st = ExactStepper::cached(params, dt)?;
    let d = params.dim();
    let mut state = params.p.clone();
    let mut scratch = vec![0.0; 2 * d];
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(state.clone());
    for k in 1..=steps {
        st.step_into(&mut state, &mut scratch, source);
        times.push(if k == steps { t } else { k as f64 * dt });
        points.push(state.clone());
    }
    PathSample::new(times, points)
}

/// Signature of the piecewise-linear interpolation, truncated at `depth`.
pub fn path_signature(path: &PathSample, depth: usize) -> Result<TruncatedTensorSeries<f64>> {
    let d = path.dim();
    let mut sig = TruncatedTensorSeries::one(d, depth)?;
    let mut scratch = ChenScratch::new();
    let mut delta = vec![0.0; d];
    for w in path.points.windows(2) {
        for i in 0..d {
            delta[i] = w[1][i] - w[0][i];
        }
        sig.mul_exp_inplace(&delta, &mut scratch)?;
    }
    Ok(sig)
}

/// Entrywise mean and standard error of the expected signature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub params: ModelParams,
    pub t: f64,
    #[serde(rename = "N")]
    pub depth: usize,
    pub paths: u64,
    pub steps: usize,
    pub seed: u64,
    pub dynamics: Dynamics,
    pub mean: TruncatedTensorSeries<f64>,
    pub stderr: TruncatedTensorSeries<f64>,
}

/// Running count, mean and centred second moment per entry.
#[derive(Clone, Debug)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: impl Iterator<Item = f64>) {
        self.n += 1.0;
        let n = self.n;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let w = other.n / n;
        let cross = self.n * other.n / n;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * w;
            self.m2[i] += other.m2[i] + delta * delta * cross;
        }
        self.n = n;
    }
}

/// Monte Carlo estimate under the model dynamics.
pub fn expected_signature_mc(
    params: &ModelParams,
    t: f64,
    depth: usize,
    paths: u64,
    steps: usize,
    seed: u64,
) -> Result<McEstimate> {
    expected_signature_mc_with(params, t, depth, paths, steps, seed, Dynamics::Physical)
}

pub fn expected_signature_mc_with(
    params: &ModelParams,
    t: f64,
    depth: usize,
    paths: u64,
    steps: usize,
    seed: u64,
    dynamics: Dynamics,
) -> Result<McEstimate> {
    if paths < 2 {
        return Err(Error::InvalidArgument("at least 2 paths are needed".into()));
    }
    let dt = check_grid(t, steps)?;
    let st = stepper(params, dt, dynamics)?;
    let d = params.dim();
    let template = TruncatedTensorSeries::<f64>::one(d, depth)?;
    let len: usize = template.levels().iter().map(|l| l.entries().len()).sum();
    let blocks = paths.div_ceil(BLOCK);
    let partial: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::new(len);
            let mut scratch = ChenScratch::new();
            let mut noise = vec![0.0; 2 * d];
            let mut state = vec![0.0; d];
            let mut delta = vec![0.0; d];
            let mut sig = template.clone();
            for idx in b * BLOCK..((b + 1) * BLOCK).min(paths) {
                let mut stream = PathStream::new(seed, idx);
                state.copy_from_slice(&params.p);
                sig.clone_from(&template);
                for _ in 0..steps {
                    delta.copy_from_slice(&state);
                    st.step_into(&mut state, &mut noise, &mut stream);
                    for i in 0..d {
                        delta[i] = state[i] - delta[i];
                    }
                    sig.mul_exp_inplace(&delta, &mut scratch).expect("shapes fixed");
                }
                acc.push(sig.levels().iter().flat_map(|l| l.entries().iter().copied()));
            }
            acc
        })
        .collect();
    let mut total = Moments::new(len);
    for p in &partial {
        total.merge(p);
    }
    let n = total.n;
    let mut mean_levels = Vec::with_capacity(depth + 1);
    let mut err_levels = Vec::with_capacity(depth + 1);
    let mut off = 0;
    for lvl in template.levels() {
        let k = lvl.entries().len();
        mean_levels.push(Tensor::from_entries(d, lvl.level(), total.mean[off..off + k].to_vec())?);
        let se = total.m2[off..off + k].iter().map(|&s| (s.max(0.0) / (n - 1.0)).sqrt() / n.sqrt()).collect();
        err_levels.push(Tensor::from_entries(d, lvl.level(), se)?);
        off += k;
    }
    Ok(McEstimate {
        params: params.clone(),
        t,
        depth,
        paths,
        steps,
        seed,
        dynamics,
        mean: TruncatedTensorSeries::from_levels(mean_levels)?,
        stderr: TruncatedTensorSeries::from_levels(err_levels)?,
    })
}
