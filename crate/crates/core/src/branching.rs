//! Offspring allocation at correction times.
//!
//! Both algorithms take normalised weights `ā_j` and a population size `n`
//! and return integer offspring counts `o_j` with `Σ o_j = n` and
//! `E[o_j] = n·ā_j`.
//!
//! # Tree based branching
//!
//! The targets `g_j = n·ā_j` sit at the leaves of a balanced binary tree over
//! the index order; each inner node carries the sum of its children's
//! targets. The root receives the budget `n`. A node with target `g` always
//! receives a budget `N ∈ {⌊g⌋, ⌊g⌋+1}`, and `P(N = ⌊g⌋+1) = {g}` where
//! `{·}` is the fractional part. Writing `g = g_L + g_R`, the node passes
//! `N_L` to its left child and `N − N_L` to its right child:
//!
//! * no carry (`{g_L} + {g_R} < 1`): with `N = ⌊g⌋+1` the extra unit goes
//!   left with probability `{g_L}/{g}` and right otherwise; with `N = ⌊g⌋`
//!   both children get their floors.
//! * carry (`{g_L} + {g_R} ≥ 1`): with `N = ⌊g⌋+1` both children get
//!   floor + 1; with `N = ⌊g⌋` exactly one does, the left one with
//!   probability `(1 − {g_R})/(1 − {g})`.
//!
//! In both cases `P(N_L = ⌊g_L⌋+1) = {g_L}`, so by induction every leaf
//! receives `⌊g_j⌋` or `⌊g_j⌋+1` with `P(o_j = ⌊g_j⌋+1) = {g_j}`, the
//! counts add up to `n` by construction, and each `o_j` has the smallest
//! variance, `{g_j}(1 − {g_j})`, of any integer variable with mean `g_j`.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::fmt_f64;

/// Fractional parts within this distance of 0 or 1 are snapped.
pub const INTEGER_SNAP: f64 = 1e-12;

/// Tolerance on `|Σ ā_j − 1|` accepted by the allocators.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchingAlgorithm {
    Tbba,
    Multinomial,
}

impl BranchingAlgorithm {
    pub fn allocate<R: Rng + ?Sized>(
        self,
        weights: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<OffspringAllocation> {
        match self {
            BranchingAlgorithm::Tbba => tbba_allocate(weights, n, rng),
            BranchingAlgorithm::Multinomial => multinomial_allocate(weights, n, rng),
        }
    }
}

impl std::str::FromStr for BranchingAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tbba" => Ok(Self::Tbba),
            "multinomial" => Ok(Self::Multinomial),
            _ => Err(Error::Parse(format!("unknown branching algorithm {s:?}"))),
        }
    }
}

/// Offspring counts, one per parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffspringAllocation {
    counts: Vec<usize>,
}

impl OffspringAllocation {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn into_counts(self) -> Vec<usize> {
        self.counts
    }
}

/// `(⌊x⌋, {x})` with fractional parts near 0 or 1 snapped to an integer.
pub fn floor_frac(x: f64) -> (i64, f64) {
    let f = x.floor();
    let r = x - f;
    if r < INTEGER_SNAP {
        (f as i64, 0.0)
    } else if r > 1.0 - INTEGER_SNAP {
        (f as i64 + 1, 0.0)
    } else {
        (f as i64, r)
    }
}

/// Law of the left child's budget at one tree node: `first` with probability
/// `p_first`, `second` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLaw {
    pub first: usize,
    pub second: usize,
    pub p_first: f64,
}

impl SplitLaw {
    fn fixed(value: usize) -> Self {
        Self {
            first: value,
            second: value,
            p_first: 1.0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.first == self.second || self.p_first == 1.0 || self.p_first == 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.is_deterministic() {
            return if self.p_first == 0.0 { self.second } else { self.first };
        }
        if rng.random::<f64>() < self.p_first {
            self.first
        } else {
            self.second
        }
    }
}

/// The node rule described in the module docs.
///
/// # Panics
///
/// If `budget` is not `⌊g⌋` or `⌊g⌋+1` for `g = left + right`; the tree
/// never produces such a budget.
pub fn split_budget(budget: usize, left: f64, right: f64) -> SplitLaw {
    let (floor_l, frac_l) = floor_frac(left);
    let (floor_r, frac_r) = floor_frac(right);
    let (floor_g, _) = floor_frac(left + right);
    let extra = budget as i64 - floor_g;
    assert!(
        extra == 0 || extra == 1,
        "budget {budget} inconsistent with target {}",
        left + right
    );
    let fl = floor_l.max(0) as usize;
    let carry = floor_g - floor_l - floor_r;
    if carry <= 0 {
        if extra == 0 {
            return SplitLaw::fixed(fl);
        }
        let s = frac_l + frac_r;
        let p = if s > 0.0 { frac_l / s } else { 0.5 };
        SplitLaw {
            first: fl + 1,
            second: fl,
            p_first: p,
        }
    } else {
        if extra == 1 {
            return SplitLaw::fixed(fl + 1);
        }
        let p = ((1.0 - frac_r) / (2.0 - frac_l - frac_r)).clamp(0.0, 1.0);
        SplitLaw {
            first: fl + 1,
            second: fl,
            p_first: p,
        }
    }
}

fn validate_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    if let Some((j, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
    {
        return Err(Error::InvalidWeights(format!("weight {j} is {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
    }
    Ok(sum)
}

/// Subtree target sums of the balanced tree over `targets`, heap-indexed.
#[derive(Debug, Clone)]
pub struct TargetTree {
    sums: Vec<f64>,
    leaves: usize,
}

impl TargetTree {
    pub fn new(targets: &[f64]) -> Self {
        let leaves = targets.len();
        let mut sums = vec![0.0; 4 * leaves.max(1)];
        fn build(node: usize, lo: usize, hi: usize, t: &[f64], sums: &mut [f64]) -> f64 {
            let s = if hi - lo == 1 {
                t[lo]
            } else {
                let mid = lo + (hi - lo) / 2;
                build(2 * node + 1, lo, mid, t, sums) + build(2 * node + 2, mid, hi, t, sums)
            };
            sums[node] = s;
            s
        }
        if leaves > 0 {
            build(0, 0, leaves, targets, &mut sums);
        }
        Self { sums, leaves }
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn root_target(&self) -> f64 {
        self.sums[0]
    }

    /// Visits the tree top-down. `decide` maps a node's split law to the left
    /// budget; `leaf` receives `(index, budget)`.
    pub fn walk<D, L>(&self, budget: usize, decide: &mut D, leaf: &mut L)
    where
        D: FnMut(&SplitLaw) -> usize,
        L: FnMut(usize, usize),
    {
        self.walk_node(0, 0, self.leaves, budget, decide, leaf);
    }

    fn walk_node<D, L>(&self, node: usize, lo: usize, hi: usize, budget: usize, decide: &mut D, leaf: &mut L)
    where
        D: FnMut(&SplitLaw) -> usize,
        L: FnMut(usize, usize),
    {
        if hi - lo == 1 {
            leaf(lo, budget);
            return;
        }
        let (left, right) = (2 * node + 1, 2 * node + 2);
        let law = split_budget(budget, self.sums[left], self.sums[right]);
        let to_left = decide(&law);
        let mid = lo + (hi - lo) / 2;
        self.walk_node(left, lo, mid, to_left, decide, leaf);
        self.walk_node(right, mid, hi, budget - to_left, decide, leaf);
    }
}

/// Targets `n·ā_j`, with the weights renormalised to sum to one.
pub fn offspring_targets(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    let sum = validate_weights(weights)?;
    Ok(weights.iter().map(|w| n as f64 * (w / sum)).collect())
}

/// Tree based branching allocation.
pub fn tbba_allocate<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<OffspringAllocation> {
    let targets = offspring_targets(weights, n)?;
    let tree = TargetTree::new(&targets);
    let mut counts = vec![0usize; weights.len()];
    tree.walk(n, &mut |law| law.sample(rng), &mut |j, b| counts[j] = b);
    Ok(OffspringAllocation { counts })
}

/// Multinomial(n, ā) counts from `n` sorted uniforms generated by
/// normalised exponential spacings, in `O(n + len)`.
pub fn multinomial_allocate<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<OffspringAllocation> {
    let sum = validate_weights(weights)?;
    let mut counts = vec![0usize; weights.len()];
    if n == 0 {
        return Ok(OffspringAllocation { counts });
    }
    let spacings: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = spacings.iter().sum();
    let last_positive = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("validated weights have positive mass");

    let mut j = 0;
    let mut upper = weights[0] / sum;
    let mut partial = 0.0;
    for e in &spacings[..n] {
        partial += e;
        let u = partial / total;
        while u >= upper && j < last_positive {
            j += 1;
            upper += weights[j] / sum;
        }
        counts[j] += 1;
    }
    Ok(OffspringAllocation { counts })
}

/// Per-index summary from [`allocation_variance_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationStats {
    pub index: usize,
    pub target: f64,
    pub emp_mean: f64,
    pub emp_var: f64,
    pub theory_var: f64,
    pub z_mean: f64,
    pub z_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport {
    pub algorithm: BranchingAlgorithm,
    pub draws: usize,
    pub rows: Vec<AllocationStats>,
}

impl AllocationReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| [r.z_mean.abs(), r.z_var.abs()])
            .fold(0.0, f64::max)
    }

    /// CSV `index,target,emp_mean,emp_var,theory_var,z_mean,z_var`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "target", "emp_mean", "emp_var", "theory_var", "z_mean", "z_var"])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                fmt_f64(r.target),
                fmt_f64(r.emp_mean),
                fmt_f64(r.emp_var),
                fmt_f64(r.theory_var),
                fmt_f64(r.z_mean),
                fmt_f64(r.z_var),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Second and fourth central moments of `o_j` under each algorithm.
fn theoretical_moments(algorithm: BranchingAlgorithm, target: f64, weight: f64, n: usize) -> (f64, f64) {
    match algorithm {
        BranchingAlgorithm::Tbba => {
            let (_, p) = floor_frac(target);
            let pq = p * (1.0 - p);
            (pq, pq * (1.0 - 3.0 * pq))
        }
        BranchingAlgorithm::Multinomial => {
            let pq = weight * (1.0 - weight);
            let nf = n as f64;
            (nf * pq, nf * pq * (1.0 + 3.0 * (nf - 2.0) * pq))
        }
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Empirical mean and variance of each `o_j` over `draws` allocations,
/// with z-scores against `n·ā_j` and the theoretical variance
/// (`{nā_j}(1 − {nā_j})` for tree branching, `nā_j(1 − ā_j)` for
/// multinomial). The variance z-score uses the exact standard error of the
/// unbiased sample variance.
pub fn allocation_variance_check<R: Rng + ?Sized>(
    algorithm: BranchingAlgorithm,
    weights: &[f64],
    n: usize,
    draws: usize,
    rng: &mut R,
) -> Result<AllocationReport> {
    if draws < 2 {
        return Err(Error::InsufficientData("need at least two draws".into()));
    }
    let targets = offspring_targets(weights, n)?;
    let k = weights.len();
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    // Shift by the target to keep the accumulators well conditioned.
    for _ in 0..draws {
        let alloc = algorithm.allocate(weights, n, rng)?;
        for (j, &o) in alloc.counts().iter().enumerate() {
            let d = o as f64 - targets[j];
            sum[j] += d;
            sum_sq[j] += d * d;
        }
    }
    let total: f64 = weights.iter().sum();
    let nd = draws as f64;
    let rows = (0..k)
        .map(|j| {
            let mean_shift = sum[j] / nd;
            let emp_var = (sum_sq[j] - nd * mean_shift * mean_shift) / (nd - 1.0);
            let (theory_var, mu4) = theoretical_moments(algorithm, targets[j], weights[j] / total, n);
            let se_mean = (theory_var / nd).sqrt();
            let var_of_var = mu4 / nd - theory_var * theory_var * (nd - 3.0) / (nd * (nd - 1.0));
            let se_var = var_of_var.max(0.0).sqrt();
            AllocationStats {
                index: j,
                target: targets[j],
                emp_mean: targets[j] + mean_shift,
                emp_var,
                theory_var,
                z_mean: z_score(mean_shift, se_mean),
                z_var: z_score(emp_var - theory_var, se_var),
            }
        })
        .collect();
    Ok(AllocationReport { algorithm, draws, rows })
}
