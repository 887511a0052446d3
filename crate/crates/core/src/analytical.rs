//! The occupancy-driven tuning guideline and the multi-kernel FFT planner.
//!
//! The guideline needs no candidate evaluations: it scores every valid
//! configuration with the occupancy model and applies four rules in order.
//!
//! 1. Prefer configurations that saturate both warp slots and block slots.
//! 2. Otherwise maximize active blocks among configurations keeping warp
//!    occupancy in [60%, 100%], higher occupancy breaking ties.
//! 3. Otherwise maximize warp occupancy, larger P breaking ties.
//! 4. When the pattern admits a larger radix, promote to the largest radix
//!    that still clears the occupancy floor (60% when any candidate reaches
//!    it, else 25%) and re-apply the rules among that radix's candidates,
//!    accepting a smaller block count in exchange for fewer steps.
//!
//! Remaining ties break lexicographically by (r desc, P desc, L asc, S asc,
//! shuffle first).

use serde::{Deserialize, Serialize};

use crate::arch::{ArchDescriptor, OccupancyReport};
use crate::error::{Error, Result};
use crate::kernels::{log2, Algorithm};
use crate::space::{
    self, config_occupancy, enumerate, Candidate, KernelConfig, FFT_SMEM_BUDGET,
};

/// Which guideline rule produced the recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidelineRule {
    BothMax,
    BlocksWith60PctFloor,
    MaxOccupancyTiebreakP,
    RadixPromotion,
}

/// The recommendation plus the evidence that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidelineTrace {
    pub chosen: KernelConfig,
    pub rule_fired: GuidelineRule,
    pub occupancy: OccupancyReport,
    pub rejected_alternatives: Vec<(KernelConfig, String)>,
}

/// A large-FFT decomposition into m sequential kernel launches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiKernelPlan {
    pub kernel_configs: Vec<KernelConfig>,
    /// Radix stages resolved per kernel pass (s in m = ceil(n/s) over
    /// radix-stage counts).
    pub s_exponent: u32,
    pub kernel_count: u32,
    /// log2 of the element span each pass covers; sums to log2(N).
    pub coverage_bits: Vec<u32>,
}

struct Scored {
    config: KernelConfig,
    occupancy: OccupancyReport,
}

fn lex_better(a: &KernelConfig, b: &KernelConfig) -> bool {
    let key = |c: &KernelConfig| {
        (
            std::cmp::Reverse(c.radix),
            std::cmp::Reverse(c.p_per_thread),
            c.l_threads,
            c.s_elems,
            !c.shuffle,
        )
    };
    key(a) < key(b)
}

/// Applies rules 1-3 to a pool, returning the winner and the rule that fired.
fn pick<'a>(pool: &[&'a Scored], arch: &ArchDescriptor) -> Option<(&'a Scored, GuidelineRule)> {
    if pool.is_empty() {
        return None;
    }
    let both_max: Vec<&&Scored> = pool
        .iter()
        .filter(|s| {
            s.occupancy.active_warps == arch.max_warps_per_sm
                && s.occupancy.active_blocks == arch.max_blocks_per_sm
        })
        .collect();
    if !both_max.is_empty() {
        let win = both_max
            .into_iter()
            .reduce(|best, s| if lex_better(&s.config, &best.config) { s } else { best })
            .unwrap();
        return Some((win, GuidelineRule::BothMax));
    }

    let floor: Vec<&&Scored> = pool
        .iter()
        .filter(|s| s.occupancy.warp_occupancy >= 0.60)
        .collect();
    if !floor.is_empty() {
        let win = floor
            .into_iter()
            .reduce(|best, s| {
                let better = s.occupancy.active_blocks > best.occupancy.active_blocks
                    || (s.occupancy.active_blocks == best.occupancy.active_blocks
                        && (s.occupancy.warp_occupancy > best.occupancy.warp_occupancy
                            || (s.occupancy.warp_occupancy == best.occupancy.warp_occupancy
                                && lex_better(&s.config, &best.config))));
                if better {
                    s
                } else {
                    best
                }
            })
            .unwrap();
        return Some((win, GuidelineRule::BlocksWith60PctFloor));
    }

    let win = pool
        .iter()
        .reduce(|best, s| {
            let better = s.occupancy.warp_occupancy > best.occupancy.warp_occupancy
                || (s.occupancy.warp_occupancy == best.occupancy.warp_occupancy
                    && (s.config.p_per_thread > best.config.p_per_thread
                        || (s.config.p_per_thread == best.config.p_per_thread
                            && lex_better(&s.config, &best.config))));
            if better {
                s
            } else {
                best
            }
        })
        .unwrap();
    Some((win, GuidelineRule::MaxOccupancyTiebreakP))
}

/// Recommends a configuration for one single-kernel problem.
pub fn tune_analytical(
    algorithm: Algorithm,
    n: u32,
    arch: &ArchDescriptor,
) -> Result<GuidelineTrace> {
    let space = enumerate(algorithm, n, arch)?;
    let scored: Vec<Scored> = space
        .candidates
        .iter()
        .filter_map(|cand| match cand {
            Candidate::Single(config) => config_occupancy(algorithm, config, arch)
                .ok()
                .map(|occupancy| Scored {
                    config: *config,
                    occupancy,
                }),
            Candidate::Plan(_) => None,
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoFeasibleConfig(format!(
            "no valid configuration for {algorithm} at N={n}"
        )));
    }
    let all: Vec<&Scored> = scored.iter().collect();
    let (base, base_rule) = pick(&all, arch).expect("pool is non-empty");

    let mut chosen = base;
    let mut rule = base_rule;
    let mut rejected: Vec<(KernelConfig, String)> = Vec::new();

    if algorithm.allows_radix_increase() {
        // Promotion floor: hold the 60% line when anything reaches it,
        // otherwise fall back to the degenerate-pick floor of 25%.
        let any_60 = scored.iter().any(|s| s.occupancy.warp_occupancy >= 0.60);
        let floor = if any_60 { 0.60 } else { 0.25 };
        let admissible_radix = scored
            .iter()
            .filter(|s| s.occupancy.warp_occupancy >= floor && s.occupancy.active_blocks >= 1)
            .map(|s| s.config.radix)
            .max();
        if let Some(r) = admissible_radix {
            if r > base.config.radix {
                let sub: Vec<&Scored> =
                    scored.iter().filter(|s| s.config.radix == r).collect();
                if let Some((promoted, _)) = pick(&sub, arch) {
                    rejected.push((
                        base.config,
                        format!(
                            "radix {} promoted over it despite {} active blocks",
                            r, base.occupancy.active_blocks
                        ),
                    ));
                    chosen = promoted;
                    rule = GuidelineRule::RadixPromotion;
                }
            }
        }
    }

    for s in &scored {
        if s.config == chosen.config || rejected.len() >= 4 {
            continue;
        }
        if s.occupancy.active_blocks == chosen.occupancy.active_blocks
            && s.occupancy.warp_occupancy == chosen.occupancy.warp_occupancy
            && s.config.radix == chosen.config.radix
        {
            rejected.push((s.config, "lexicographic tiebreak".into()));
        }
    }

    Ok(GuidelineTrace {
        chosen: chosen.config,
        rule_fired: rule,
        occupancy: chosen.occupancy,
        rejected_alternatives: rejected,
    })
}

/// Radix used by multi-kernel FFT passes.
pub const PLAN_RADIX: u32 = 8;

/// The largest tile (elements) a multi-kernel pass stages in shared memory:
/// multi-kernel passes keep full complex elements resident, so the tile is
/// bounded by the plain (unmultiplexed) budget.
pub fn plan_tile_elems(arch: &ArchDescriptor) -> u32 {
    let budget = FFT_SMEM_BUDGET.min(arch.max_shared_mem_per_block);
    let mut s = 1u32;
    while 8 * (s * 2) <= budget {
        s *= 2;
    }
    s
}

fn plan_shape(n: u32, arch: &ArchDescriptor) -> Result<(u32, u32, Vec<u32>)> {
    if !n.is_power_of_two() {
        return Err(Error::Range(format!("N={n} is not a power of two")));
    }
    let tile = plan_tile_elems(arch);
    let r_bits = log2(PLAN_RADIX);
    // Stages per pass are radix-aligned: a pass resolves whole radix-8
    // stages inside its tile.
    let s_exponent = log2(tile) / r_bits;
    let bits_per_kernel = s_exponent * r_bits;
    let n_bits = log2(n);
    let m = n_bits.div_ceil(bits_per_kernel).max(1);
    let base = n_bits / m;
    let rem = n_bits % m;
    let coverage: Vec<u32> = (0..m).map(|k| if k < rem { base + 1 } else { base }).collect();
    Ok((m, s_exponent, coverage))
}

/// Per-kernel candidate set for multi-kernel FFT passes: the tile is fixed,
/// each pass chooses its radix/granularity and block size, covering the tile
/// in one or two rounds per block.
pub fn plan_kernel_candidates(arch: &ArchDescriptor) -> Vec<KernelConfig> {
    let tile = plan_tile_elems(arch);
    let mut out = Vec::new();
    for &p in space::granularity_set(Algorithm::Fft) {
        let mut l = arch.warp_size;
        while l <= arch.max_threads_per_block {
            let pl = p as u64 * l as u64;
            if pl == tile as u64 || pl == 2 * tile as u64 {
                let config = KernelConfig::new(tile, p, l, p, false);
                if config_occupancy(Algorithm::Fft, &config, arch)
                    .map(|o| o.active_blocks >= 1)
                    .unwrap_or(false)
                {
                    out.push(config);
                }
            }
            l *= 2;
        }
    }
    out.sort_by_key(|c| c.lex_key());
    out
}

/// Every multi-kernel plan for N: the decomposition is fixed by the tile
/// and plan radix; each pass independently picks from the per-kernel set.
pub fn enumerate_plan_space(n: u32, arch: &ArchDescriptor) -> Result<Vec<MultiKernelPlan>> {
    let (m, s_exponent, coverage) = plan_shape(n, arch)?;
    let per_kernel = plan_kernel_candidates(arch);
    if per_kernel.is_empty() {
        return Err(Error::NoFeasibleConfig(
            "no feasible multi-kernel pass configuration".into(),
        ));
    }
    let mut plans: Vec<Vec<KernelConfig>> = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::with_capacity(plans.len() * per_kernel.len());
        for prefix in &plans {
            for cfg in &per_kernel {
                let mut plan = prefix.clone();
                plan.push(*cfg);
                next.push(plan);
            }
        }
        plans = next;
    }
    Ok(plans
        .into_iter()
        .map(|kernel_configs| MultiKernelPlan {
            kernel_configs,
            s_exponent,
            kernel_count: m,
            coverage_bits: coverage.clone(),
        })
        .collect())
}

/// Plans a large FFT: minimize the kernel count by fixing the tile at the
/// shared-memory capacity, then tune each pass under the fixed tile and plan
/// radix. Sizes inside the single-kernel range degenerate to one kernel
/// chosen by the plain guideline.
pub fn plan_large_fft(n: u32, arch: &ArchDescriptor) -> Result<MultiKernelPlan> {
    if !n.is_power_of_two() {
        return Err(Error::Range(format!("N={n} is not a power of two")));
    }
    let (_, single_max) = space::single_kernel_range(Algorithm::Fft);
    if n <= single_max {
        let trace = tune_analytical(Algorithm::Fft, n, arch)?;
        return Ok(MultiKernelPlan {
            kernel_configs: vec![trace.chosen],
            s_exponent: log2(trace.chosen.s_elems) / log2(trace.chosen.radix.max(2)),
            kernel_count: 1,
            coverage_bits: vec![log2(n)],
        });
    }
    let (mlo, mhi) = space::FFT_MULTI_KERNEL_RANGE;
    if n < mlo || n > mhi {
        return Err(Error::Range(format!(
            "N={n} is outside the multi-kernel fft range [{mlo}, {mhi}]"
        )));
    }
    let (m, s_exponent, coverage) = plan_shape(n, arch)?;
    let candidates = plan_kernel_candidates(arch);
    let scored: Vec<Scored> = candidates
        .iter()
        .filter(|c| c.radix == PLAN_RADIX)
        .filter_map(|config| {
            config_occupancy(Algorithm::Fft, config, arch)
                .ok()
                .map(|occupancy| Scored {
                    config: *config,
                    occupancy,
                })
        })
        .collect();
    let pool: Vec<&Scored> = scored.iter().collect();
    let (win, _) = pick(&pool, arch).ok_or_else(|| {
        Error::NoFeasibleConfig("no feasible radix-8 multi-kernel pass".into())
    })?;
    Ok(MultiKernelPlan {
        kernel_configs: vec![win.config; m as usize],
        s_exponent,
        kernel_count: m,
        coverage_bits: coverage,
    })
}
