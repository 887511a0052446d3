//! Architecture descriptors and the per-SM occupancy calculator.
//!
//! An [`ArchDescriptor`] captures the hardware limits of one GPU-like
//! architecture (warp slots, block slots, register file, shared memory).
//! [`compute_occupancy`] derives how many thread blocks of a given resource
//! footprint can reside on one SM and which resource is the bottleneck.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled descriptor for the Maxwell GM20B GPU of the Jetson TX1 module.
pub const GM20B_JSON: &str = include_str!("../fixtures/gm20b.json");

/// Hardware limits of one GPU-like architecture.
///
/// The register file is split evenly across `sm_subpartitions` scheduler
/// partitions; register allocation rounds up to `register_alloc_granularity`
/// registers per warp inside each partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub name: String,
    pub sm_count: u32,
    pub warp_size: u32,
    pub max_warps_per_sm: u32,
    pub max_blocks_per_sm: u32,
    pub registers_per_sm: u32,
    pub max_registers_per_block: u32,
    pub register_alloc_granularity: u32,
    pub sm_subpartitions: u32,
    pub shared_mem_per_sm: u32,
    pub max_shared_mem_per_block: u32,
    pub shared_mem_alloc_granularity: u32,
    pub max_threads_per_block: u32,
}

impl ArchDescriptor {
    /// The bundled GM20B (Jetson TX1) descriptor.
    pub fn gm20b() -> Self {
        serde_json::from_str(GM20B_JSON).expect("bundled gm20b descriptor is valid")
    }

    /// Checks the structural invariants of the descriptor.
    pub fn validate(&self) -> Result<()> {
        let fail = |f: &str, why: &str| -> Result<()> {
            Err(Error::Validation(format!("field `{f}`: {why}")))
        };
        if self.warp_size == 0 {
            return fail("warp_size", "must be positive");
        }
        if self.sm_count == 0 {
            return fail("sm_count", "must be positive");
        }
        if self.max_warps_per_sm == 0 {
            return fail("max_warps_per_sm", "must be positive");
        }
        if self.max_blocks_per_sm == 0 {
            return fail("max_blocks_per_sm", "must be positive");
        }
        if self.sm_subpartitions == 0 {
            return fail("sm_subpartitions", "must be positive");
        }
        if self.max_threads_per_block == 0 {
            return fail("max_threads_per_block", "must be positive");
        }
        if self.max_warps_per_sm * self.warp_size < self.max_threads_per_block {
            return fail(
                "max_threads_per_block",
                "exceeds warp capacity (max_warps_per_sm x warp_size)",
            );
        }
        if self.max_registers_per_block > self.registers_per_sm {
            return fail("max_registers_per_block", "exceeds registers_per_sm");
        }
        if self.max_shared_mem_per_block > self.shared_mem_per_sm {
            return fail("max_shared_mem_per_block", "exceeds shared_mem_per_sm");
        }
        if self.registers_per_sm % self.sm_subpartitions != 0 {
            return fail("registers_per_sm", "not divisible by sm_subpartitions");
        }
        Ok(())
    }
}

/// Parses and validates an architecture descriptor document.
///
/// Unknown fields are rejected so that typos in hand-written descriptors
/// surface as errors instead of silently falling back to defaults.
pub fn load_arch(json: &str) -> Result<ArchDescriptor> {
    let arch: ArchDescriptor =
        serde_json::from_str(json).map_err(|e| Error::Validation(format!("descriptor: {e}")))?;
    arch.validate()?;
    Ok(arch)
}

/// Reads an architecture descriptor from a file path.
pub fn load_arch_file(path: &std::path::Path) -> Result<ArchDescriptor> {
    let text = std::fs::read_to_string(path)?;
    load_arch(&text)
}

/// Per-block resource footprint of a kernel launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelResourceUsage {
    /// Threads per block (L).
    pub threads_per_block: u32,
    /// Registers consumed per thread; 0 means untracked.
    pub registers_per_thread: u32,
    /// Shared memory bytes allocated per block; 0 imposes no limit.
    pub shared_mem_per_block: u32,
}

/// The resource that bounds the number of active blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingResource {
    Warps,
    Blocks,
    Registers,
    SharedMemory,
    /// Reserved for architectures with a separate per-SM thread cap; the
    /// modeled limits (a)-(d) never produce it.
    Threads,
}

impl std::fmt::Display for LimitingResource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LimitingResource::Warps => "warps",
            LimitingResource::Blocks => "blocks",
            LimitingResource::Registers => "registers",
            LimitingResource::SharedMemory => "shared_memory",
            LimitingResource::Threads => "threads",
        };
        write!(f, "{s}")
    }
}

/// Result of an occupancy computation for one SM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    /// Active blocks per SM (B_a).
    pub active_blocks: u32,
    /// Active warps per SM (W_SM = B_a x warps per block).
    pub active_warps: u32,
    /// W_SM / W^max, in [0, 1].
    pub warp_occupancy: f64,
    /// The binding limit, ties broken in order blocks, warps, registers,
    /// shared memory.
    pub limiting_resource: LimitingResource,
}

fn round_up(value: u32, granularity: u32) -> u32 {
    if granularity == 0 {
        value
    } else {
        value.div_ceil(granularity) * granularity
    }
}

/// Computes active blocks and warp occupancy for one SM.
///
/// The active block count is the minimum of four limits: (a) the
/// architectural block cap, (b) the warp-slot cap, (c) the register file,
/// accounted per warp with granularity rounding inside each SM subpartition,
/// and (d) shared memory with granularity rounding. `limiting_resource`
/// names the first binding limit in that order.
pub fn compute_occupancy(
    arch: &ArchDescriptor,
    usage: &KernelResourceUsage,
) -> Result<OccupancyReport> {
    arch.validate()?;
    if usage.threads_per_block == 0 {
        return Err(Error::Validation("threads_per_block must be positive".into()));
    }
    if usage.threads_per_block > arch.max_threads_per_block {
        return Err(Error::Validation(format!(
            "threads_per_block {} exceeds max_threads_per_block {}",
            usage.threads_per_block, arch.max_threads_per_block
        )));
    }
    let block_regs = usage.registers_per_thread as u64 * usage.threads_per_block as u64;
    if block_regs > arch.max_registers_per_block as u64 {
        return Err(Error::Validation(format!(
            "{} registers per block exceed max_registers_per_block {}",
            block_regs, arch.max_registers_per_block
        )));
    }
    if usage.shared_mem_per_block > arch.max_shared_mem_per_block {
        return Err(Error::Validation(format!(
            "shared_mem_per_block {} exceeds max_shared_mem_per_block {}",
            usage.shared_mem_per_block, arch.max_shared_mem_per_block
        )));
    }

    let warps_per_block = usage.threads_per_block.div_ceil(arch.warp_size);

    // (a) architectural block cap
    let by_blocks = arch.max_blocks_per_sm;

    // (b) warp slots
    let by_warps = arch.max_warps_per_sm / warps_per_block;

    // (c) register file, per subpartition
    let by_regs = if usage.registers_per_thread == 0 {
        u32::MAX
    } else {
        let regs_per_warp = round_up(
            usage.registers_per_thread * arch.warp_size,
            arch.register_alloc_granularity,
        );
        let per_partition = arch.registers_per_sm / arch.sm_subpartitions;
        let warps_by_regs = arch.sm_subpartitions * (per_partition / regs_per_warp);
        warps_by_regs / warps_per_block
    };

    // (d) shared memory
    let by_smem = if usage.shared_mem_per_block == 0 {
        u32::MAX
    } else {
        let rounded = round_up(usage.shared_mem_per_block, arch.shared_mem_alloc_granularity);
        arch.shared_mem_per_sm / rounded
    };

    let active_blocks = by_blocks.min(by_warps).min(by_regs).min(by_smem);
    let limiting_resource = if active_blocks == by_blocks {
        LimitingResource::Blocks
    } else if active_blocks == by_warps {
        LimitingResource::Warps
    } else if active_blocks == by_regs {
        LimitingResource::Registers
    } else {
        LimitingResource::SharedMemory
    };

    let active_warps = active_blocks * warps_per_block;
    Ok(OccupancyReport {
        active_blocks,
        active_warps,
        warp_occupancy: active_warps as f64 / arch.max_warps_per_sm as f64,
        limiting_resource,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(l: u32, regs: u32, smem: u32) -> OccupancyReport {
        compute_occupancy(
            &ArchDescriptor::gm20b(),
            &KernelResourceUsage {
                threads_per_block: l,
                registers_per_thread: regs,
                shared_mem_per_block: smem,
            },
        )
        .unwrap()
    }

    /// GM20B reference table: (warps per block, regs, smem) -> (occupancy %, blocks).
    /// The (2, 40, 2560) row is a known discrepancy in the published table;
    /// this model yields 75% / 24 (identical to the smem = 0 case, since
    /// registers bind first) and that value is pinned here.
    const GM20B_TABLE: &[(u32, u32, u32, f64, u32)] = &[
        (1, 64, 2048, 0.50, 32),
        (2, 40, 0, 0.75, 24),
        (2, 32, 2048, 1.00, 32),
        (2, 40, 2560, 0.75, 24),
        (4, 32, 4096, 1.00, 16),
        (4, 40, 5120, 0.75, 12),
        (8, 32, 8192, 1.00, 8),
        (8, 40, 10240, 0.75, 6),
        (16, 32, 16384, 1.00, 4),
        (32, 32, 32768, 1.00, 2),
    ];

    #[test]
    fn gm20b_reference_rows() {
        for &(wpb, regs, smem, expect_occ, expect_blocks) in GM20B_TABLE {
            let r = occ(wpb * 32, regs, smem);
            assert_eq!(r.active_blocks, expect_blocks, "row ({wpb},{regs},{smem})");
            assert!(
                (r.warp_occupancy - expect_occ).abs() < 1e-12,
                "row ({wpb},{regs},{smem}): got occupancy {}",
                r.warp_occupancy
            );
        }
    }

    #[test]
    fn subpartition_rule_forces_48_warps_at_40_regs() {
        // 40 regs/thread -> 1280 regs/warp; 4 x floor(16384/1280) = 48 warps.
        let r = occ(64, 40, 0);
        assert_eq!(r.active_warps, 48);
        assert_eq!(r.active_blocks, 24);
        assert_eq!(r.limiting_resource, LimitingResource::Registers);
    }

    #[test]
    fn minimal_usage_binds_on_block_or_warp_caps() {
        let arch = ArchDescriptor::gm20b();
        let r = occ(arch.warp_size, 1, 0);
        assert_eq!(
            r.active_blocks,
            arch.max_blocks_per_sm.min(arch.max_warps_per_sm)
        );
    }

    #[test]
    fn big_block_row() {
        let r = occ(1024, 32, 32768);
        assert_eq!(r.active_blocks, 2);
        assert!((r.warp_occupancy - 1.0).abs() < 1e-12);
        assert_eq!(r.active_warps, 64);
    }

    #[test]
    fn warp_occupancy_identity() {
        let arch = ArchDescriptor::gm20b();
        for &(wpb, regs, smem, _, _) in GM20B_TABLE {
            let r = occ(wpb * 32, regs, smem);
            assert_eq!(r.active_warps, r.active_blocks * wpb);
            assert!(r.active_warps <= arch.max_warps_per_sm);
            assert_eq!(
                r.warp_occupancy,
                r.active_warps as f64 / arch.max_warps_per_sm as f64
            );
        }
    }

    #[test]
    fn precondition_violations_name_the_limit() {
        let arch = ArchDescriptor::gm20b();
        let err = compute_occupancy(
            &arch,
            &KernelResourceUsage {
                threads_per_block: 2048,
                registers_per_thread: 16,
                shared_mem_per_block: 0,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("max_threads_per_block"));

        let err = compute_occupancy(
            &arch,
            &KernelResourceUsage {
                threads_per_block: 1024,
                registers_per_thread: 64,
                shared_mem_per_block: 0,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("max_registers_per_block"));

        let err = compute_occupancy(
            &arch,
            &KernelResourceUsage {
                threads_per_block: 64,
                registers_per_thread: 32,
                shared_mem_per_block: 65536,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("max_shared_mem_per_block"));
    }

    #[test]
    fn monotone_in_registers_and_smem() {
        // Increasing registers or shared memory never increases B_a.
        for l in [32u32, 64, 128, 256] {
            let mut prev = u32::MAX;
            for regs in [1u32, 8, 16, 24, 32] {
                let r = occ(l, regs, 0);
                assert!(r.active_blocks <= prev);
                prev = r.active_blocks;
            }
            let mut prev = u32::MAX;
            for smem in [0u32, 1024, 2048, 4096, 8192, 16384] {
                let r = occ(l, 32, smem);
                assert!(r.active_blocks <= prev);
                prev = r.active_blocks;
            }
        }
    }

    #[test]
    fn load_arch_round_trip_and_rejections() {
        let arch = ArchDescriptor::gm20b();
        assert_eq!(arch.sm_count, 2);
        assert_eq!(arch.max_warps_per_sm, 64);
        assert_eq!(arch.max_blocks_per_sm, 32);

        let text = serde_json::to_string(&arch).unwrap();
        let again = load_arch(&text).unwrap();
        assert_eq!(arch, again);

        let mut broken: serde_json::Value = serde_json::from_str(GM20B_JSON).unwrap();
        broken["max_warps_per_sm"] = 0.into();
        let err = load_arch(&broken.to_string()).unwrap_err();
        assert!(err.to_string().contains("max_warps_per_sm"));

        let mut unknown: serde_json::Value = serde_json::from_str(GM20B_JSON).unwrap();
        unknown["l2_cache"] = 262144.into();
        assert!(load_arch(&unknown.to_string()).is_err());
    }
}
