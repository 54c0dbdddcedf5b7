use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ShapeNode, StepAccuracies, StepTriple};

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    /// Probability that a step reuses the trial's shared draw instead of its
    /// own; 0 gives independent steps. Marginal step accuracies are unchanged.
    pub correlation: f64,
    /// Each composite node solves a uniformly drawn number (1..=w) of its
    /// children instead of all of them.
    pub variable_width: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub successes: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let mean = successes as f64 / trials.max(1) as f64;
        Estimate {
            mean,
            stderr: (mean * (1.0 - mean) / trials.max(1) as f64).sqrt(),
            trials,
            successes,
        }
    }

    /// |mean − value| ≤ k·stderr.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + 1e-12
    }
}

struct Flat {
    triple: StepTriple,
    children: Vec<usize>,
}

fn flatten(shape: &ShapeNode, acc: &dyn StepAccuracies, out: &mut Vec<Flat>) -> usize {
    let idx = out.len();
    out.push(Flat {
        triple: acc.eval(&shape.class, shape.n),
        children: Vec::new(),
    });
    let children: Vec<usize> = shape.children.iter().map(|c| flatten(c, acc, out)).collect();
    out[idx].children = children;
    idx
}

struct Trial<'a> {
    nodes: &'a [Flat],
    opts: SimOptions,
    shared: f64,
}

impl Trial<'_> {
    fn step(&self, rng: &mut ChaCha8Rng, p: f64) -> bool {
        let x = if self.opts.correlation > 0.0 && rng.gen::<f64>() < self.opts.correlation {
            self.shared
        } else {
            rng.gen::<f64>()
        };
        x < p
    }

    fn run(&self, idx: usize, rng: &mut ChaCha8Rng) -> bool {
        let node = &self.nodes[idx];
        if node.children.is_empty() {
            return self.step(rng, node.triple.phi_u);
        }
        let mut ok = self.step(rng, node.triple.phi_d);
        let take = if self.opts.variable_width {
            rng.gen_range(1..=node.children.len())
        } else {
            node.children.len()
        };
        for &child in &node.children[..take] {
            ok &= self.run(child, rng);
        }
        ok & self.step(rng, node.triple.phi_m)
    }
}

pub fn monte_carlo_phi(shape: &ShapeNode, acc: &dyn StepAccuracies, trials: u64, seed: u64) -> Estimate {
    monte_carlo_phi_with(shape, acc, trials, seed, SimOptions::default())
}

/// Simulates every step as a Bernoulli draw; a run succeeds iff every step
/// on the recursive evaluation succeeds. Chunks of trials run in parallel,
/// each on its own seeded stream, so the estimate does not depend on
/// scheduling.
pub fn monte_carlo_phi_with(
    shape: &ShapeNode,
    acc: &dyn StepAccuracies,
    trials: u64,
    seed: u64,
    opts: SimOptions,
) -> Estimate {
    let mut nodes = Vec::new();
    flatten(shape, acc, &mut nodes);
    let chunks = trials.div_ceil(CHUNK);
    let successes: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let n = CHUNK.min(trials - chunk * CHUNK);
            (0..n)
                .filter(|_| {
                    let shared = rng.gen::<f64>();
                    Trial { nodes: &nodes, opts, shared }.run(0, &mut rng)
                })
                .count() as u64
        })
        .sum();
    Estimate::from_counts(successes, trials)
}
