//! Search-space partitioning with UCB1 descent.
//!
//! Observed genotypes are routed, in encoded form, down a binary tree of
//! axis-aligned splits. Every node counts the samples routed through it and
//! the sum of their rewards (negated objectives). A leaf holding
//! `split_threshold` samples splits on the encoded slot and threshold that
//! best separate its better half from its worse half; the better side
//! becomes the left child.
//!
//! Proposals descend from the root choosing the child with the largest UCB1
//! score, with mean rewards rescaled to `[0, 1]` over the observed range and
//! ties going left, then sample uniformly inside the chosen leaf by rejection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Observation};
use crate::space::{encode, sample_with, Genotype};

/// `v + c * sqrt(ln(total) / n)`, or `+inf` for an unvisited node (`n = 0`).
pub fn ucb1_score(v: f64, n: f64, total: f64, c: f64) -> f64 {
    if n <= 0.0 {
        return f64::INFINITY;
    }
    v + c * (total.ln() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanasConfig {
    pub exploration: f64,
    pub split_threshold: usize,
    pub max_rejections: usize,
}

impl Default for LanasConfig {
    fn default() -> Self {
        Self {
            exploration: 0.5,
            split_threshold: 8,
            max_rejections: 200,
        }
    }
}

/// `x[slot] <= threshold` when `below`, `x[slot] > threshold` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub slot: usize,
    pub threshold: f64,
    pub below: bool,
}

impl SplitRule {
    pub fn admits(&self, x: &[f64]) -> bool {
        (x[self.slot] <= self.threshold) == self.below
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanasNode {
    pub parent: Option<usize>,
    /// Rule a sample must satisfy to enter this node from its parent.
    pub rule: Option<SplitRule>,
    pub children: Option<[usize; 2]>,
    pub n: u64,
    pub reward_sum: f64,
    /// Sample indices, kept on leaves only.
    pub samples: Vec<usize>,
}

impl LanasNode {
    /// Mean reward (negated objective) of the samples routed here.
    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.reward_sum / self.n as f64
        }
    }

    fn leaf(parent: Option<usize>, rule: Option<SplitRule>) -> Self {
        Self {
            parent,
            rule,
            children: None,
            n: 0,
            reward_sum: 0.0,
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanasState {
    config: LanasConfig,
    rng: ChaCha8Rng,
    nodes: Vec<LanasNode>,
    /// Encoded genotype and objective of every observation.
    samples: Vec<(Vec<f64>, f64)>,
}

impl LanasState {
    pub fn new(config: LanasConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: vec![LanasNode::leaf(None, None)],
            samples: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[LanasNode] {
        &self.nodes
    }

    pub fn root(&self) -> &LanasNode {
        &self.nodes[0]
    }

    /// Leaf whose region contains the encoded point `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        while let Some([l, r]) = self.nodes[at].children {
            at = if self.nodes[l].rule.is_some_and(|rule| rule.admits(x)) {
                l
            } else {
                r
            };
        }
        at
    }

    /// Rules from the root down to `node`.
    pub fn constraints(&self, mut node: usize) -> Vec<SplitRule> {
        let mut rules = Vec::new();
        while let Some(parent) = self.nodes[node].parent {
            rules.extend(self.nodes[node].rule);
            node = parent;
        }
        rules.reverse();
        rules
    }

    fn reward_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .map(|s| -s.1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// UCB1 of a child under `parent`, values rescaled over the observed range.
    pub fn child_score(&self, parent: usize, child: usize) -> f64 {
        let (lo, hi) = self.reward_range();
        let node = &self.nodes[child];
        let v = if node.n == 0 {
            0.0
        } else if hi > lo {
            (node.value() - lo) / (hi - lo)
        } else {
            0.5
        };
        ucb1_score(
            v,
            node.n as f64,
            self.nodes[parent].n as f64,
            self.config.exploration,
        )
    }

    /// Descends by UCB1 from the root; ties go to the left child.
    pub fn select(&self) -> usize {
        let mut at = 0;
        while let Some([l, r]) = self.nodes[at].children {
            at = if self.child_score(at, r) > self.child_score(at, l) {
                r
            } else {
                l
            };
        }
        at
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        let leaf = self.select();
        let rules = self.constraints(leaf);
        let mut best: Option<(Genotype, usize)> = None;
        for _ in 0..self.config.max_rejections.max(1) {
            let g = sample_with(ctx.space, &mut self.rng);
            let x = encode(&g, ctx.space).values;
            let violations = rules.iter().filter(|r| !r.admits(&x)).count();
            if violations == 0 {
                return g;
            }
            if best.as_ref().is_none_or(|b| violations < b.1) {
                best = Some((g, violations));
            }
        }
        log::debug!("lanas: no sample satisfied the leaf constraints, using the closest");
        best.expect("at least one attempt").0
    }

    pub(crate) fn observe(&mut self, ctx: &Context, obs: &Observation) {
        let x = encode(&obs.genotype, ctx.space).values;
        let reward = -obs.objective;
        let id = self.samples.len();
        self.samples.push((x.clone(), obs.objective));
        let mut at = 0;
        loop {
            let node = &mut self.nodes[at];
            node.n += 1;
            node.reward_sum += reward;
            let children = node.children;
            match children {
                Some([l, r]) => {
                    at = if self.nodes[l].rule.is_some_and(|rule| rule.admits(&x)) {
                        l
                    } else {
                        r
                    };
                }
                None => {
                    node.samples.push(id);
                    break;
                }
            }
        }
        self.maybe_split(at);
    }

    fn maybe_split(&mut self, leaf: usize) {
        if self.nodes[leaf].samples.len() < self.config.split_threshold {
            return;
        }
        let Some(rule) = self.best_split(&self.nodes[leaf].samples) else {
            return;
        };
        let samples = std::mem::take(&mut self.nodes[leaf].samples);
        let other = SplitRule {
            below: !rule.below,
            ..rule
        };
        let mut children = [0; 2];
        for (k, r) in [rule, other].into_iter().enumerate() {
            let mut node = LanasNode::leaf(Some(leaf), Some(r));
            for &s in &samples {
                if r.admits(&self.samples[s].0) {
                    node.samples.push(s);
                    node.n += 1;
                    node.reward_sum -= self.samples[s].1;
                }
            }
            children[k] = self.nodes.len();
            self.nodes.push(node);
        }
        self.nodes[leaf].children = Some(children);
        for c in children {
            self.maybe_split(c);
        }
    }

    /// Slot and threshold classifying the most samples correctly as better or
    /// worse than the median; the better side is returned as the rule.
    fn best_split(&self, members: &[usize]) -> Option<SplitRule> {
        let mut order = members.to_vec();
        order.sort_by(|&a, &b| {
            self.samples[a]
                .1
                .total_cmp(&self.samples[b].1)
                .then(a.cmp(&b))
        });
        let half = order.len() / 2;
        let good: Vec<(usize, bool)> = order
            .iter()
            .enumerate()
            .map(|(rank, &s)| (s, rank < half))
            .collect();
        let n_good = half;
        let n_bad = order.len() - half;
        let slots = self.samples[members[0]].0.len();
        let mut best: Option<(usize, SplitRule)> = None;
        for slot in 0..slots {
            let mut pts: Vec<(f64, bool)> = good
                .iter()
                .map(|&(s, g)| (self.samples[s].0[slot], g))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut good_below, mut bad_below) = (0, 0);
            for i in 0..pts.len() - 1 {
                if pts[i].1 {
                    good_below += 1;
                } else {
                    bad_below += 1;
                }
                if pts[i].0 == pts[i + 1].0 {
                    continue;
                }
                let threshold = 0.5 * (pts[i].0 + pts[i + 1].0);
                let below_good = good_below + (n_bad - bad_below);
                let above_good = bad_below + (n_good - good_below);
                let (score, below) = if below_good >= above_good {
                    (below_good, true)
                } else {
                    (above_good, false)
                };
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((
                        score,
                        SplitRule {
                            slot,
                            threshold,
                            below,
                        },
                    ));
                }
            }
        }
        best.map(|b| b.1)
    }
}
