//! Categorical tree-structured Parzen estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{propose_random, SearchHistory};
use crate::space::{ParameterSpace, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeOptions {
    /// Fraction of trials in the good set.
    pub gamma: f64,
    pub n_candidates: usize,
    pub n_startup: usize,
}

impl Default for TpeOptions {
    fn default() -> Self {
        TpeOptions {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
        }
    }
}

/// Add-one smoothed categorical density from option counts.
pub fn smoothed_density(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum::<usize>() + counts.len();
    counts.iter().map(|&c| (c + 1) as f64 / total as f64).collect()
}

fn draw<R: Rng + ?Sized>(density: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in density.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    density.len() - 1
}

/// Proposes the candidate maximizing `Π l_i(x_i) / g_i(x_i)`, drawing
/// candidates from the good-set densities. Uniform random until the history
/// has `n_startup` trials and two successes.
pub fn propose_tpe<R: Rng + ?Sized>(
    history: &SearchHistory,
    space: &ParameterSpace,
    rng: &mut R,
    opts: &TpeOptions,
) -> Sample {
    let mut ok: Vec<_> = history.successful().collect();
    if history.len() < opts.n_startup || ok.len() < 2 {
        return propose_random(space, rng);
    }
    ok.sort_by(|a, b| a.objective.partial_cmp(&b.objective).expect("finite objective"));
    let n_good = ((opts.gamma * ok.len() as f64).ceil() as usize).clamp(1, ok.len() - 1);
    let (good, bad) = ok.split_at(n_good);

    let counts = |set: &[&super::Trial], pos: usize, n: usize| {
        let mut c = vec![0usize; n];
        for t in set {
            c[t.sample.indices()[pos]] += 1;
        }
        c
    };
    let mut l = Vec::with_capacity(space.len());
    let mut g = Vec::with_capacity(space.len());
    for (pos, p) in space.params().iter().enumerate() {
        let n = p.option_count();
        l.push(smoothed_density(&counts(good, pos, n)));
        g.push(smoothed_density(&counts(bad, pos, n)));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..opts.n_candidates.max(1) {
        let cand: Vec<usize> = l.iter().map(|d| draw(d, rng)).collect();
        let score: f64 = cand
            .iter()
            .enumerate()
            .map(|(i, &x)| l[i][x].ln() - g[i][x].ln())
            .sum();
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, cand));
        }
    }
    Sample::new(best.expect("at least one candidate").1)
}
