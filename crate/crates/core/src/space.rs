//! Tuning parameter spaces: the (S, P, L, r, shuffle) configuration vector,
//! per-algorithm validity rules, register estimates and the shared-memory
//! allocation model, plus deterministic enumeration.

use serde::{Deserialize, Serialize};

use crate::analytical::{enumerate_plan_space, MultiKernelPlan};
use crate::arch::{compute_occupancy, ArchDescriptor, KernelResourceUsage, OccupancyReport};
use crate::error::{Error, Result};
use crate::kernels::Algorithm;

/// One tuning candidate: elements in shared memory per block (S), elements
/// per thread (P), threads per block (L), node radix and the shuffle switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelConfig {
    pub s_elems: u32,
    pub p_per_thread: u32,
    pub l_threads: u32,
    pub radix: u32,
    pub shuffle: bool,
}

impl KernelConfig {
    pub fn new(s_elems: u32, p_per_thread: u32, l_threads: u32, radix: u32, shuffle: bool) -> Self {
        KernelConfig {
            s_elems,
            p_per_thread,
            l_threads,
            radix,
            shuffle,
        }
    }

    /// Deterministic ordering key: (r, P, L, S, shuffle).
    pub fn lex_key(&self) -> (u32, u32, u32, u32, bool) {
        (
            self.radix,
            self.p_per_thread,
            self.l_threads,
            self.s_elems,
            self.shuffle,
        )
    }
}

impl std::fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(S={}, P={}, L={}, r={}, shuffle={})",
            self.s_elems, self.p_per_thread, self.l_threads, self.radix, self.shuffle
        )
    }
}

/// A point the tuners evaluate: a single kernel or a multi-kernel plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    Single(KernelConfig),
    Plan(MultiKernelPlan),
}

impl Candidate {
    pub fn kernel_configs(&self) -> &[KernelConfig] {
        match self {
            Candidate::Single(c) => std::slice::from_ref(c),
            Candidate::Plan(p) => &p.kernel_configs,
        }
    }

    pub fn kernel_count(&self) -> usize {
        self.kernel_configs().len()
    }
}

impl std::fmt::Display for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Candidate::Single(c) => write!(f, "{c}"),
            Candidate::Plan(p) => {
                write!(f, "plan[")?;
                for (i, k) in p.kernel_configs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// The finite candidate set for one (algorithm, N) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    pub algorithm: Algorithm,
    pub n_size: u32,
    pub candidates: Vec<Candidate>,
    /// Data bytes per logical element (equation, equation pair, complex
    /// value or scalar).
    pub element_bytes: u32,
}

impl SearchSpace {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Data bytes per element: a tridiagonal equation is four single-precision
/// coefficients, a Ladner-Fischer solver element is two equations, an FFT
/// element is one complex value, a scan element one scalar.
pub fn element_bytes(algorithm: Algorithm) -> u32 {
    match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm => 16,
        Algorithm::TsLf => 32,
        Algorithm::Fft => 8,
        Algorithm::ScanLf | Algorithm::ScanKs => 4,
    }
}

/// Shared-memory byte budget available to one FFT block. Larger tiles
/// multiplex the real and imaginary halves through the same storage, so the
/// footprint never exceeds this budget; tiles whose multiplexed half still
/// overflows it are infeasible.
pub const FFT_SMEM_BUDGET: u32 = 16384;

/// Per-thread register estimates per algorithm family.
///
/// P = 2 fits the 32-register budget everywhere; larger granularity costs
/// registers at family-specific rates.
pub fn estimate_registers(algorithm: Algorithm, p: u32) -> Result<u32> {
    let table: &[(u32, u32)] = match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm | Algorithm::TsLf => {
            &[(2, 32), (4, 40), (8, 64)]
        }
        Algorithm::ScanLf | Algorithm::ScanKs => {
            &[(2, 32), (4, 32), (8, 56), (16, 56), (32, 56)]
        }
        Algorithm::Fft => &[(2, 32), (4, 40), (8, 48), (16, 64)],
    };
    table
        .iter()
        .find(|(tp, _)| *tp == p)
        .map(|(_, regs)| *regs)
        .ok_or_else(|| {
            Error::Validation(format!(
                "P={p} is outside the {algorithm} granularity set"
            ))
        })
}

/// Registers the compiler may shave off the estimate to fit the per-block
/// cap; estimates further past the cap would spill heavily and the kernel
/// templates are not instantiated for them.
pub const REGISTER_SPILL_TOLERANCE: u32 = 8;

/// Register estimate clamped to the per-block register cap: the compiler
/// caps per-thread registers (spilling a few) when the raw estimate would
/// not fit a full block of L threads.
pub fn effective_registers(algorithm: Algorithm, p: u32, l: u32, arch: &ArchDescriptor) -> Result<u32> {
    let raw = estimate_registers(algorithm, p)?;
    Ok(raw.min((arch.max_registers_per_block / l).max(1)))
}

/// P values the implementation exposes per algorithm family.
pub fn granularity_set(algorithm: Algorithm) -> &'static [u32] {
    match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm | Algorithm::TsLf => &[2, 4, 8],
        Algorithm::ScanLf | Algorithm::ScanKs => &[2, 4, 8, 16, 32],
        Algorithm::Fft => &[2, 4, 8, 16],
    }
}

/// Radix values the circuit pattern admits.
pub fn radix_set(algorithm: Algorithm) -> &'static [u32] {
    match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsLf => &[2],
        Algorithm::ScanLf | Algorithm::ScanKs => &[2],
        Algorithm::TsWm => &[2, 4, 8],
        Algorithm::Fft => &[2, 4, 8, 16],
    }
}

/// Supported single-kernel problem sizes (inclusive).
pub fn single_kernel_range(algorithm: Algorithm) -> (u32, u32) {
    match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm | Algorithm::TsLf => (8, 1024),
        Algorithm::ScanLf | Algorithm::ScanKs => (8, 4096),
        Algorithm::Fft => (8, 4096),
    }
}

/// Multi-kernel FFT problem sizes (inclusive).
pub const FFT_MULTI_KERNEL_RANGE: (u32, u32) = (8192, 8_388_608);

/// Canonical scan S: the figure convention counting warp-sized stage lines
/// for every problem packed into the block.
pub fn scan_s_elems(n: u32, p: u32, l: u32, warp_size: u32) -> u32 {
    (warp_size as u64 * p as u64 * l as u64 / n as u64) as u32
}

/// Shared-memory bytes one block of this configuration allocates.
///
/// Tridiagonal solvers stage equations through a double buffer (CR, PCR, WM)
/// or store equation pairs in place (LF), both 32 bytes per element. The
/// shuffle scan stages one scalar per thread. FFT tiles multiplex the real
/// and imaginary halves once the full complex tile would exceed the budget.
pub fn smem_alloc_bytes(algorithm: Algorithm, config: &KernelConfig) -> u32 {
    match algorithm {
        Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm | Algorithm::TsLf => {
            32 * config.s_elems
        }
        Algorithm::ScanLf | Algorithm::ScanKs => 4 * config.l_threads,
        Algorithm::Fft => {
            let full = 8 * config.s_elems;
            if full > FFT_SMEM_BUDGET {
                full / 2
            } else {
                full
            }
        }
    }
}

/// Resource footprint used for occupancy evaluation of one configuration.
pub fn resource_usage(
    algorithm: Algorithm,
    config: &KernelConfig,
    arch: &ArchDescriptor,
) -> Result<KernelResourceUsage> {
    Ok(KernelResourceUsage {
        threads_per_block: config.l_threads,
        registers_per_thread: effective_registers(
            algorithm,
            config.p_per_thread,
            config.l_threads,
            arch,
        )?,
        shared_mem_per_block: smem_alloc_bytes(algorithm, config),
    })
}

/// Occupancy of one configuration under its estimated resource footprint.
pub fn config_occupancy(
    algorithm: Algorithm,
    config: &KernelConfig,
    arch: &ArchDescriptor,
) -> Result<OccupancyReport> {
    compute_occupancy(arch, &resource_usage(algorithm, config, arch)?)
}

fn pow2_in(v: u32, lo: u32, hi: u32) -> bool {
    v.is_power_of_two() && v >= lo && v <= hi
}

/// Full validity check; `Err` carries the reason the configuration is
/// rejected.
pub fn check_config(
    config: &KernelConfig,
    algorithm: Algorithm,
    n: u32,
    arch: &ArchDescriptor,
) -> std::result::Result<(), String> {
    if !n.is_power_of_two() {
        return Err(format!("problem size {n} is not a power of two"));
    }
    let (lo, hi) = single_kernel_range(algorithm);
    if n < lo || n > hi {
        if algorithm == Algorithm::Fft && n > hi {
            return Err(format!(
                "N={n} exceeds shared capacity for a single kernel; a multi-kernel plan is required"
            ));
        }
        return Err(format!("N={n} is outside the supported range [{lo}, {hi}]"));
    }
    let p = config.p_per_thread;
    let l = config.l_threads;
    let r = config.radix;

    if !pow2_in(l, arch.warp_size, arch.max_threads_per_block) {
        return Err(format!(
            "L={l} is not a power of two in [{}, {}]",
            arch.warp_size, arch.max_threads_per_block
        ));
    }
    if !granularity_set(algorithm).contains(&p) {
        return Err(format!("P={p} is outside the {algorithm} granularity set"));
    }
    if p > n {
        return Err(format!("P={p} exceeds the problem size {n}"));
    }
    if !radix_set(algorithm).contains(&r) {
        let fixed = radix_set(algorithm);
        if fixed == [2] {
            return Err(format!("radix fixed at 2 for {algorithm}, got {r}"));
        }
        return Err(format!("radix {r} is outside the {algorithm} radix set"));
    }
    match algorithm {
        Algorithm::TsWm => {
            if r > p {
                return Err(format!("radix {r} exceeds the node granularity P={p}"));
            }
        }
        Algorithm::Fft => {
            if r != p {
                return Err(format!("fft requires radix = P, got r={r}, P={p}"));
            }
        }
        _ => {}
    }

    let pl = p as u64 * l as u64;
    if pl < n as u64 {
        return Err(format!(
            "block covers {pl} elements, fewer than one problem of size {n}"
        ));
    }

    let raw_regs = match estimate_registers(algorithm, p) {
        Ok(v) => v,
        Err(e) => return Err(e.to_string()),
    };
    let reg_cap = (arch.max_registers_per_block / l).max(1);
    if raw_regs > reg_cap + REGISTER_SPILL_TOLERANCE {
        return Err(format!(
            "register estimate {raw_regs} spills too far past the per-block cap of {reg_cap} at L={l}"
        ));
    }

    // Shuffle admissibility and the S relation.
    if algorithm.is_scan() {
        if !config.shuffle {
            return Err("scan kernels always communicate through shuffles".into());
        }
        let canonical = scan_s_elems(n, p, l, arch.warp_size);
        let alias = l / arch.warp_size;
        if config.s_elems != canonical && config.s_elems != alias {
            return Err(format!(
                "scan S={} matches neither the packed-problem count {canonical} nor the per-warp line count {alias}",
                config.s_elems
            ));
        }
    } else if algorithm.is_fft() {
        if config.shuffle {
            return Err("fft kernels do not support shuffle communication".into());
        }
        if config.s_elems as u64 != pl {
            return Err(format!("fft requires S = P x L, got S={}", config.s_elems));
        }
        if smem_alloc_bytes(algorithm, config) > FFT_SMEM_BUDGET.min(arch.max_shared_mem_per_block)
        {
            return Err(format!(
                "S={} exceeds shared capacity even with real/imaginary multiplexing",
                config.s_elems
            ));
        }
    } else {
        // Tridiagonal solvers.
        if config.shuffle {
            if config.s_elems != 0 {
                return Err(format!(
                    "shuffle communication leaves no shared footprint, got S={}",
                    config.s_elems
                ));
            }
            if n as u64 > p as u64 * arch.warp_size as u64 {
                return Err(format!(
                    "shuffle needs the problem inside one warp: N/P = {} exceeds {}",
                    n / p,
                    arch.warp_size
                ));
            }
            if p > 4 {
                return Err(format!(
                    "shuffle solver state at P={p} exceeds the register budget; P <= 4 required"
                ));
            }
        } else {
            if config.s_elems as u64 != pl {
                return Err(format!(
                    "shared-memory solvers require S = P x L, got S={}",
                    config.s_elems
                ));
            }
            if smem_alloc_bytes(algorithm, config) > arch.max_shared_mem_per_block {
                return Err(format!(
                    "S={} exceeds the shared-memory budget",
                    config.s_elems
                ));
            }
        }
    }
    if !config.s_elems.is_power_of_two() && config.s_elems != 0 {
        return Err(format!("S={} is not a power of two", config.s_elems));
    }

    match config_occupancy(algorithm, config, arch) {
        Ok(report) => {
            if report.active_blocks < 1 {
                return Err("configuration yields zero active blocks".into());
            }
        }
        Err(e) => return Err(e.to_string()),
    }
    Ok(())
}

/// Boolean validity with the rejection reason on the false branch.
pub fn is_valid(
    config: &KernelConfig,
    algorithm: Algorithm,
    n: u32,
    arch: &ArchDescriptor,
) -> (bool, Option<String>) {
    match check_config(config, algorithm, n, arch) {
        Ok(()) => (true, None),
        Err(reason) => (false, Some(reason)),
    }
}

fn pow2_range(lo: u32, hi: u32) -> impl Iterator<Item = u32> {
    let start = lo.next_power_of_two();
    std::iter::successors(Some(start), |v| v.checked_mul(2)).take_while(move |v| *v <= hi)
}

/// Enumerates every valid configuration for (algorithm, N), ordered
/// lexicographically by (r, P, L, S, shuffle).
pub fn enumerate(algorithm: Algorithm, n: u32, arch: &ArchDescriptor) -> Result<SearchSpace> {
    if !n.is_power_of_two() {
        return Err(Error::Range(format!("N={n} is not a power of two")));
    }
    let (lo, hi) = single_kernel_range(algorithm);
    if algorithm == Algorithm::Fft && n > hi {
        let (mlo, mhi) = FFT_MULTI_KERNEL_RANGE;
        if n < mlo || n > mhi {
            return Err(Error::Range(format!(
                "N={n} is outside the multi-kernel fft range [{mlo}, {mhi}]"
            )));
        }
        let plans = enumerate_plan_space(n, arch)?;
        return Ok(SearchSpace {
            algorithm,
            n_size: n,
            candidates: plans.into_iter().map(Candidate::Plan).collect(),
            element_bytes: element_bytes(algorithm),
        });
    }
    if n < lo || n > hi {
        return Err(Error::Range(format!(
            "N={n} is outside the supported range [{lo}, {hi}] for {algorithm}"
        )));
    }

    let mut configs = Vec::new();
    for &r in radix_set(algorithm) {
        for &p in granularity_set(algorithm) {
            for l in pow2_range(arch.warp_size, arch.max_threads_per_block) {
                for shuffle in [false, true] {
                    let s = if algorithm.is_scan() {
                        if !shuffle {
                            continue;
                        }
                        if (p as u64 * l as u64) < n as u64 {
                            continue;
                        }
                        scan_s_elems(n, p, l, arch.warp_size)
                    } else if shuffle {
                        0
                    } else {
                        let pl = p as u64 * l as u64;
                        if pl > u32::MAX as u64 {
                            continue;
                        }
                        pl as u32
                    };
                    let config = KernelConfig::new(s, p, l, r, shuffle);
                    if check_config(&config, algorithm, n, arch).is_ok() {
                        configs.push(config);
                    }
                }
            }
        }
    }
    configs.sort_by_key(|c| c.lex_key());
    configs.dedup();
    Ok(SearchSpace {
        algorithm,
        n_size: n,
        candidates: configs.into_iter().map(Candidate::Single).collect(),
        element_bytes: element_bytes(algorithm),
    })
}
