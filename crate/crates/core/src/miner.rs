//! Rule discovery engines.
//!
//! `mine_beam` is the production engine: level-wise beam search that
//! seeds from all single-selector rules, keeps the top-W rules of each
//! level for specialization, and pools every evaluated rule above the
//! WRAcc threshold. `mine_exhaustive` enumerates every selector set up
//! to the length cap and serves as the verification oracle: at
//! saturating beam widths the two pools are identical.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{count_and, count_and2_and3, BitVec64};
use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::rule::{
    rule_order, stats_from_counts, P0Mode, Rule, RuleRecord, ScoredRule, Selector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Beam,
    Exhaustive,
}

/// Seed level 1 from a random subset of the usable features instead of
/// all of them. The draw is fully determined by the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level1Sample {
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub engine: Engine,
    pub beam_width: usize,
    pub max_len: usize,
    /// WRAcc threshold for pool admission.
    pub threshold: f64,
    /// Minimum subgroup size for pool admission.
    pub min_coverage: u64,
    pub p0_mode: P0Mode,
    #[serde(default)]
    pub level1_sample: Option<Level1Sample>,
    /// Refusal budget for the exhaustive engine.
    pub max_candidates: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            engine: Engine::Beam,
            beam_width: 2_000,
            max_len: 3,
            threshold: 5.0e-4,
            min_coverage: 0,
            p0_mode: P0Mode::DatasetRate,
            level1_sample: None,
            max_candidates: 5_000_000,
        }
    }
}

impl MinerConfig {
    fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be >= 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max rule length must be >= 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if let Some(s) = self.level1_sample {
            if s.size == 0 {
                return Err(Error::Config("level-1 sample size must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Candidate counts and timing for one search level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub candidates: u64,
    pub admitted: u64,
    pub seconds: f64,
}

/// Deduplicated set of rules above threshold, sorted by the miner's
/// total order, together with the provenance needed to reproduce it.
#[derive(Debug, Clone)]
pub struct RulePool {
    pub rules: Vec<ScoredRule>,
    pub config: MinerConfig,
    pub dataset_fingerprint: String,
    pub levels: Vec<LevelStats>,
}

impl RulePool {
    pub fn records(&self, table: &CohortTable) -> Vec<RuleRecord> {
        self.rules.iter().map(|r| RuleRecord::from_scored(r, table)).collect()
    }

    pub fn total_candidates(&self) -> u64 {
        self.levels.iter().map(|l| l.candidates).sum()
    }
}

/// First `k` rules of the pool under the total order.
pub fn top_k(pool: &RulePool, k: usize) -> Vec<ScoredRule> {
    pool.rules.iter().take(k).cloned().collect()
}

/// Dispatches on `config.engine`.
pub fn mine(table: &CohortTable, config: &MinerConfig) -> Result<RulePool> {
    match config.engine {
        Engine::Beam => mine_beam(table, config),
        Engine::Exhaustive => mine_exhaustive(table, config),
    }
}

fn usable_features(table: &CohortTable) -> Vec<Selector> {
    (0..table.features() as Selector).filter(|&f| !table.is_constant(f as usize)).collect()
}

/// One evaluated specialization, kept compact until selection: the full
/// selector set is `parents[parent].selectors() ++ [added]`.
struct Candidate {
    parent: u32,
    added: Selector,
    n: u64,
    p: u64,
    wracc: f64,
}

fn candidate_order(parents: &[Rule]) -> impl Fn(&Candidate, &Candidate) -> std::cmp::Ordering + '_ {
    move |a, b| {
        b.wracc.total_cmp(&a.wracc).then_with(|| {
            // Same length within a level: lexicographic selector order.
            let sa = parents[a.parent as usize].selectors();
            let sb = parents[b.parent as usize].selectors();
            let la = sa.iter().copied().chain(std::iter::once(a.added));
            let lb = sb.iter().copied().chain(std::iter::once(b.added));
            la.cmp(lb)
        })
    }
}

fn materialize(parents: &[Rule], cand: &Candidate, table: &CohortTable, mode: P0Mode) -> ScoredRule {
    let rule = parents[cand.parent as usize].specialize(cand.added);
    let stats = stats_from_counts(cand.n, cand.p, table, mode);
    debug_assert_eq!(stats.wracc, cand.wracc);
    ScoredRule { rule, stats }
}

fn admit(cand: &Candidate, config: &MinerConfig) -> bool {
    cand.wracc >= config.threshold && cand.n >= config.min_coverage
}

/// Level-wise beam search. Deterministic for a fixed table and config,
/// regardless of how many worker threads evaluate candidates.
pub fn mine_beam(table: &CohortTable, config: &MinerConfig) -> Result<RulePool> {
    config.validate()?;
    if table.features() == 0 {
        return Err(Error::NoFeatures);
    }
    let usable = usable_features(table);
    let seeds = match config.level1_sample {
        Some(sample) => sample_features(&usable, sample),
        None => usable.clone(),
    };

    let mut pool: Vec<ScoredRule> = Vec::new();
    let mut levels: Vec<LevelStats> = Vec::new();

    // Level 1: all (or sampled) single-selector rules.
    let mut level_start = Instant::now();
    let mut parents = vec![Rule::empty()];
    let mut candidates: Vec<Candidate> = seeds
        .par_iter()
        .map(|&f| {
            let col = table.column(f as usize).expect("usable feature in range");
            let n = col.count_ones();
            let p = count_and(col, table.label());
            let wracc = stats_from_counts(n, p, table, config.p0_mode).wracc;
            Candidate { parent: 0, added: f, n, p, wracc }
        })
        .collect();
    let mut level = 1usize;

    loop {
        candidates.sort_unstable_by(candidate_order(&parents));
        let admitted: Vec<ScoredRule> = candidates
            .iter()
            .filter(|c| admit(c, config))
            .map(|c| materialize(&parents, c, table, config.p0_mode))
            .collect();
        levels.push(LevelStats {
            level,
            candidates: candidates.len() as u64,
            admitted: admitted.len() as u64,
            seconds: level_start.elapsed().as_secs_f64(),
        });
        pool.extend(admitted);

        if level >= config.max_len || candidates.is_empty() {
            break;
        }

        // Beam: top-W evaluated rules of this level become the parents
        // of the next one.
        candidates.truncate(config.beam_width);
        let beam: Vec<Rule> = candidates
            .iter()
            .map(|c| parents[c.parent as usize].specialize(c.added))
            .collect();

        level_start = Instant::now();
        let next: Vec<Candidate> = beam
            .par_iter()
            .enumerate()
            .map(|(idx, rule)| {
                let mut cover = BitVec64::ones(table.patients());
                for &s in rule.selectors() {
                    cover.and_assign(table.column(s as usize).expect("selector in range"));
                }
                let from = rule.selectors().last().map_or(0, |&last| last + 1);
                let begin = usable.partition_point(|&f| f < from);
                let mut out = Vec::with_capacity(usable.len() - begin);
                for &f in &usable[begin..] {
                    let col = table.column(f as usize).expect("usable feature in range");
                    let (n, p) = count_and2_and3(&cover, col, table.label());
                    let wracc = stats_from_counts(n, p, table, config.p0_mode).wracc;
                    out.push(Candidate { parent: idx as u32, added: f, n, p, wracc });
                }
                out
            })
            .flatten()
            .collect();
        parents = beam;
        candidates = next;
        level += 1;
    }

    pool.sort_by(rule_order);
    debug_assert!(pool.windows(2).all(|w| w[0].rule != w[1].rule));
    Ok(RulePool {
        rules: pool,
        config: config.clone(),
        dataset_fingerprint: table.fingerprint().to_string(),
        levels,
    })
}

fn sample_features(usable: &[Selector], sample: Level1Sample) -> Vec<Selector> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
    let amount = sample.size.min(usable.len());
    let mut picked: Vec<Selector> = rand::seq::index::sample(&mut rng, usable.len(), amount)
        .into_iter()
        .map(|i| usable[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Number of selector sets of size 1..=max_len over `features` columns.
pub fn candidate_count(features: usize, max_len: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for k in 1..=max_len.min(features) {
        binom = binom * (features - k + 1) as u128 / k as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Evaluates every selector set of length <= max_len exactly once via
/// ordered specialization. Refuses when the candidate count exceeds the
/// configured budget.
pub fn mine_exhaustive(table: &CohortTable, config: &MinerConfig) -> Result<RulePool> {
    config.validate()?;
    if table.features() == 0 {
        return Err(Error::NoFeatures);
    }
    let usable = usable_features(table);
    let total = candidate_count(usable.len(), config.max_len);
    if total > config.max_candidates as u128 {
        return Err(Error::BudgetExceeded { candidates: total, budget: config.max_candidates });
    }

    let start = Instant::now();
    // One sequential DFS per first selector, in parallel; concatenation
    // order is fixed by the seed order so results are deterministic.
    let per_seed: Vec<(Vec<ScoredRule>, Vec<u64>)> = usable
        .par_iter()
        .enumerate()
        .map(|(seed_idx, &seed)| {
            let mut pool = Vec::new();
            let mut counts = vec![0u64; config.max_len];
            let col = table.column(seed as usize).expect("usable feature in range");
            let n = col.count_ones();
            let p = count_and(col, table.label());
            let rule = Rule::new(vec![seed]);
            counts[0] += 1;
            let stats = stats_from_counts(n, p, table, config.p0_mode);
            if stats.wracc >= config.threshold && stats.n >= config.min_coverage {
                pool.push(ScoredRule { rule: rule.clone(), stats });
            }
            if config.max_len > 1 {
                descend(
                    table,
                    config,
                    &usable[seed_idx + 1..],
                    &rule,
                    col.clone(),
                    &mut pool,
                    &mut counts,
                );
            }
            (pool, counts)
        })
        .collect();

    let mut pool = Vec::new();
    let mut counts = vec![0u64; config.max_len];
    for (rules, c) in per_seed {
        pool.extend(rules);
        for (acc, x) in counts.iter_mut().zip(c) {
            *acc += x;
        }
    }
    pool.sort_by(rule_order);

    let elapsed = start.elapsed().as_secs_f64();
    let mut admitted_per_level = vec![0u64; config.max_len];
    for r in &pool {
        admitted_per_level[r.rule.len() - 1] += 1;
    }
    let levels = counts
        .iter()
        .enumerate()
        .map(|(i, &candidates)| LevelStats {
            level: i + 1,
            candidates,
            admitted: admitted_per_level[i],
            seconds: if i == 0 { elapsed } else { 0.0 },
        })
        .collect();

    Ok(RulePool {
        rules: pool,
        config: config.clone(),
        dataset_fingerprint: table.fingerprint().to_string(),
        levels,
    })
}

fn descend(
    table: &CohortTable,
    config: &MinerConfig,
    remaining: &[Selector],
    rule: &Rule,
    cover: BitVec64,
    pool: &mut Vec<ScoredRule>,
    counts: &mut [u64],
) {
    for (i, &f) in remaining.iter().enumerate() {
        let col = table.column(f as usize).expect("usable feature in range");
        let (n, p) = count_and2_and3(&cover, col, table.label());
        let child = rule.specialize(f);
        counts[child.len() - 1] += 1;
        let stats = stats_from_counts(n, p, table, config.p0_mode);
        if stats.wracc >= config.threshold && stats.n >= config.min_coverage {
            pool.push(ScoredRule { rule: child.clone(), stats });
        }
        if child.len() < config.max_len {
            let mut child_cover = cover.clone();
            child_cover.and_assign(col);
            descend(table, config, &remaining[i + 1..], &child, child_cover, pool, counts);
        }
    }
}

/// Differences between two pools: selector sets present on one side
/// only, or shared rules whose stats diverge beyond `tolerance`.
/// Empty means the pools agree.
pub fn diff_pools(a: &RulePool, b: &RulePool, tolerance: f64) -> Vec<String> {
    let mut diffs = Vec::new();
    let by_rule = |pool: &RulePool| {
        pool.rules
            .iter()
            .map(|r| (r.rule.clone(), r.stats))
            .collect::<std::collections::BTreeMap<_, _>>()
    };
    let ma = by_rule(a);
    let mb = by_rule(b);
    for (rule, sa) in &ma {
        match mb.get(rule) {
            None => diffs.push(format!("rule {:?} only in first pool", rule.selectors())),
            Some(sb) => {
                let close = |x: f64, y: f64| (x - y).abs() <= tolerance;
                if sa.n != sb.n
                    || sa.p != sb.p
                    || !close(sa.support, sb.support)
                    || !close(sa.confidence, sb.confidence)
                    || !close(sa.expected_confidence, sb.expected_confidence)
                    || !close(sa.wracc, sb.wracc)
                {
                    diffs.push(format!("rule {:?} stats diverge", rule.selectors()));
                }
            }
        }
    }
    for rule in mb.keys() {
        if !ma.contains_key(rule) {
            diffs.push(format!("rule {:?} only in second pool", rule.selectors()));
        }
    }
    diffs
}
