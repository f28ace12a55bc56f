//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsConfig {
    /// Upper bound on accepted steps.
    pub max_iterations: usize,
    pub memory: usize,
    /// Relative objective change below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations that end the run.
    pub patience: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { max_iterations: 35, memory: 5, tolerance: 1e-4, patience: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    /// Objective at the start point and after every accepted step.
    pub values: Vec<f64>,
    pub converged: bool,
}

impl Minimum {
    pub fn iterations(&self) -> usize {
        self.values.len() - 1
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

pub fn minimize<F>(x0: Vec<f64>, mut f: F, config: LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut values = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled = 0;
    let mut converged = false;

    while values.len() <= config.max_iterations {
        let gnorm = norm(&g);
        if gnorm <= 1e-10 * norm(&x).max(1.0) {
            converged = true;
            break;
        }
        let mut d = direction(&g, &pairs);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if pairs.is_empty() { 1.0 / norm(&d) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fn_).abs() / fn_.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        values.push(fx);
        stalled = if rel < config.tolerance { stalled + 1 } else { 0 };
        if stalled >= config.patience {
            converged = true;
            break;
        }
    }
    Minimum { x, values, converged }
}

fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
