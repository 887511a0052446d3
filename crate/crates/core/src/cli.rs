//! Command-line wiring: architectures, spaces, tuners, backends and reports.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytical::{plan_large_fft, tune_analytical};
use crate::arch::{compute_occupancy, load_arch_file, ArchDescriptor, KernelResourceUsage};
use crate::backend::{backend_from_selector, Backend, Measurement, SimParams};
use crate::bayes::tune_bo;
use crate::error::{Error, Result};
use crate::kernels::fft::{fft_transform, max_abs_diff, oracle_dft, uniform_plan, Direction};
use crate::kernels::scan::{oracle_prefix, scan_inclusive, ScanPattern};
use crate::kernels::tridiag::{oracle_thomas, solve_tridiagonal, TridiagAlgorithm};
use crate::kernels::Algorithm;
use crate::metrics::{exhaustive_search, method_report, CompareReport};
use crate::space::{enumerate, single_kernel_range, Candidate, FFT_MULTI_KERNEL_RANGE};

/// Environment variable supplying a default architecture descriptor path.
pub const ARCH_ENV_VAR: &str = "PREFIXTUNE_ARCH";

#[derive(Debug, Parser)]
#[command(
    name = "prefixtune",
    about = "Tunes parallel-prefix kernel launch parameters for GPU-embedded architectures",
    version
)]
pub struct CliSpec {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Analytical,
    Bo,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Architecture descriptor path; defaults to the PREFIXTUNE_ARCH
    /// environment variable, then the bundled gm20b descriptor.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    /// Write the artifact here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Backend selector: sim, table:<path> or cmd:<path>.
    #[arg(long, default_value = "sim")]
    pub backend: String,
    /// Wall-clock timeout for external commands, in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// JSON document overriding the simulated cost constants.
    #[arg(long)]
    pub sim_params: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recommend a configuration for one problem size.
    Tune {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate every valid configuration and report the full map.
    Exhaustive {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the analytical, Bayesian and exhaustive methods over a size set
    /// and report per-size efficiencies and the portability score.
    Compare {
        #[arg(long)]
        algo: Algorithm,
        /// Size set: a range `64..1024` or a comma list `64,128,256`;
        /// powers of two only.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the occupancy report for one resource footprint.
    Occupancy {
        #[arg(long)]
        threads: u32,
        #[arg(long)]
        regs: u32,
        #[arg(long)]
        smem: u32,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run every reference kernel against its oracle.
    KernelsVerify,
}

fn resolve_arch(path: &Option<PathBuf>) -> Result<ArchDescriptor> {
    if let Some(p) = path {
        return load_arch_file(p);
    }
    if let Ok(env_path) = std::env::var(ARCH_ENV_VAR) {
        if !env_path.is_empty() {
            return load_arch_file(std::path::Path::new(&env_path));
        }
    }
    Ok(ArchDescriptor::gm20b())
}

fn resolve_backend(args: &BackendArgs, arch: &ArchDescriptor) -> Result<Box<dyn Backend>> {
    let params = match &args.sim_params {
        Some(path) => SimParams::from_json(&std::fs::read_to_string(path)?)?,
        None => SimParams::default(),
    };
    backend_from_selector(
        &args.backend,
        arch,
        params,
        Duration::from_secs(args.timeout_secs),
    )
}

fn parse_sizes(text: &str) -> Result<Vec<u32>> {
    let parse_one = |s: &str| -> Result<u32> {
        let v: u32 = s
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad size `{s}`")))?;
        if !v.is_power_of_two() {
            return Err(Error::Validation(format!("size {v} is not a power of two")));
        }
        Ok(v)
    };
    let mut sizes = if let Some((lo, hi)) = text.split_once("..") {
        let lo = parse_one(lo)?;
        let hi = parse_one(hi)?;
        if lo > hi {
            return Err(Error::Validation(format!("empty size range `{text}`")));
        }
        let mut out = Vec::new();
        let mut v = lo;
        while v <= hi {
            out.push(v);
            v = v.checked_mul(2).ok_or_else(|| {
                Error::Validation("size range overflows".into())
            })?;
        }
        out
    } else {
        text.split(',').map(parse_one).collect::<Result<Vec<_>>>()?
    };
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::Validation("empty size set".into()));
    }
    Ok(sizes)
}

fn emit(common: &CommonArgs, artifact: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, artifact)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(artifact.as_bytes())?;
            if !artifact.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes")
}

/// Executes one parsed command; the error's `exit_code` drives the process
/// status.
pub fn run(spec: &CliSpec) -> Result<()> {
    match &spec.command {
        Command::Tune {
            algo,
            n,
            method,
            seed,
            budget,
            window,
            backend,
            common,
        } => {
            let arch = resolve_arch(&common.arch)?;
            let artifact = match method {
                Method::Analytical => {
                    let (_, single_max) = single_kernel_range(*algo);
                    if *algo == Algorithm::Fft && *n > single_max {
                        let plan = plan_large_fft(*n, &arch)?;
                        to_json(&plan)
                    } else {
                        let trace = tune_analytical(*algo, *n, &arch)?;
                        to_json(&trace)
                    }
                }
                Method::Bo => {
                    let space = enumerate(*algo, *n, &arch)?;
                    let backend = resolve_backend(backend, &arch)?;
                    let run = tune_bo(&space, backend.as_ref(), *budget, *window, *seed)?;
                    to_json(&run)
                }
            };
            emit(common, &artifact)
        }
        Command::Exhaustive {
            algo,
            n,
            backend,
            common,
        } => {
            let arch = resolve_arch(&common.arch)?;
            let space = enumerate(*algo, *n, &arch)?;
            let backend = resolve_backend(backend, &arch)?;
            let (best, map) = exhaustive_search(&space, backend.as_ref())?;

            #[derive(Serialize)]
            struct Row {
                candidate: Candidate,
                status: &'static str,
                #[serde(skip_serializing_if = "Option::is_none")]
                time: Option<f64>,
            }
            #[derive(Serialize)]
            struct ExhaustiveReport {
                algorithm: Algorithm,
                n: u32,
                best: (Candidate, f64),
                evaluations: Vec<Row>,
            }
            let report = ExhaustiveReport {
                algorithm: *algo,
                n: *n,
                best,
                evaluations: map
                    .into_iter()
                    .map(|(candidate, m)| match m {
                        Measurement::Value(t) => Row {
                            candidate,
                            status: "ok",
                            time: Some(t),
                        },
                        Measurement::Invalid => Row {
                            candidate,
                            status: "invalid",
                            time: None,
                        },
                        Measurement::Timeout => Row {
                            candidate,
                            status: "timeout",
                            time: None,
                        },
                    })
                    .collect(),
            };
            emit(common, &to_json(&report))
        }
        Command::Compare {
            algo,
            sizes,
            seed,
            budget,
            window,
            backend,
            common,
        } => {
            let arch = resolve_arch(&common.arch)?;
            let backend = resolve_backend(backend, &arch)?;
            let sizes = parse_sizes(sizes)?;
            let report = compare(*algo, &sizes, backend.as_ref(), &arch, *seed, *budget, *window)?;
            eprint!("{}", report.to_text_table());
            emit(common, &report.to_json())
        }
        Command::Occupancy {
            threads,
            regs,
            smem,
            common,
        } => {
            let arch = resolve_arch(&common.arch)?;
            let usage = KernelResourceUsage {
                threads_per_block: *threads,
                registers_per_thread: *regs,
                shared_mem_per_block: *smem,
            };
            let report = compute_occupancy(&arch, &usage)?;
            let text = format!(
                "warp occupancy: {:.0}% ({}/{} warps)\nactive blocks per SM: {}\nlimiting resource: {}\n",
                report.warp_occupancy * 100.0,
                report.active_warps,
                arch.max_warps_per_sm,
                report.active_blocks,
                report.limiting_resource
            );
            emit(common, &text)
        }
        Command::KernelsVerify => kernels_verify(),
    }
}

/// Runs the analytical, Bayesian and exhaustive methods over a size set on a
/// shared backend. The analytical recommendation is replayed through the
/// backend once to price it; that replay does not count as a tuning
/// evaluation.
pub fn compare(
    algorithm: Algorithm,
    sizes: &[u32],
    backend: &dyn Backend,
    arch: &ArchDescriptor,
    seed: u64,
    budget: usize,
    window: usize,
) -> Result<CompareReport> {
    let mut oracle_best: Vec<(u32, f64)> = Vec::new();
    let mut exhaustive_rows: Vec<(u32, f64, Candidate, usize)> = Vec::new();
    let mut bo_rows: Vec<(u32, f64, Candidate, usize)> = Vec::new();
    let mut analytical_rows: Vec<(u32, f64, Candidate, usize)> = Vec::new();

    for &n in sizes {
        let space = enumerate(algorithm, n, arch)?;
        let ((best_cand, best_time), _pricing) = exhaustive_search(&space, backend)?;
        oracle_best.push((n, best_time));
        exhaustive_rows.push((n, best_time, best_cand, space.len()));

        let run = tune_bo(&space, backend, budget, window, seed.wrapping_add(n as u64))?;
        let (bo_cand, bo_time) = run.best.ok_or_else(|| {
            Error::NoFeasibleConfig(format!("search found no valid candidate at N={n}"))
        })?;
        bo_rows.push((n, bo_time, bo_cand, run.evaluations_used));

        let (_, single_max) = single_kernel_range(algorithm);
        let chosen = if algorithm == Algorithm::Fft && n > single_max {
            Candidate::Plan(plan_large_fft(n, arch)?)
        } else {
            Candidate::Single(tune_analytical(algorithm, n, arch)?.chosen)
        };
        let time = match backend.measure(algorithm, n, &chosen) {
            Measurement::Value(t) => t,
            _ => {
                return Err(Error::Backend(format!(
                    "backend cannot price the analytical recommendation at N={n}"
                )))
            }
        };
        analytical_rows.push((n, time, chosen, 0));
    }

    let methods = vec![
        method_report("analytical", algorithm, &analytical_rows, &oracle_best)?,
        method_report("bo", algorithm, &bo_rows, &oracle_best)?,
        method_report("exhaustive", algorithm, &exhaustive_rows, &oracle_best)?,
    ];
    Ok(CompareReport {
        algorithm,
        seed,
        size_set: sizes.to_vec(),
        methods,
    })
}

fn kernels_verify() -> Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{name}: {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Scans against the sequential fold.
    let mut state = 0xDEADBEEFu64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 4001) as i64 - 2000
    };
    for n in [64usize, 1024, 4096] {
        let values: Vec<i64> = (0..n).map(|_| next()).collect();
        let expect = oracle_prefix(&values);
        check(
            &format!("scan-lf vs sequential oracle (N={n})"),
            scan_inclusive(&values, ScanPattern::LadnerFischer).unwrap() == expect,
        );
        check(
            &format!("scan-ks vs sequential oracle (N={n})"),
            scan_inclusive(&values, ScanPattern::KoggeStone).unwrap() == expect,
        );
    }

    // Tridiagonal solvers against Thomas.
    for (label, algo) in [
        ("ts-cr", TridiagAlgorithm::CyclicReduction),
        ("ts-pcr", TridiagAlgorithm::ParallelCyclicReduction),
        ("ts-wm", TridiagAlgorithm::WangMou),
        ("ts-lf", TridiagAlgorithm::LadnerFischer),
    ] {
        let mut ok = true;
        for (n, seed) in [(64usize, 5u64), (1024, 17)] {
            let sys = test_support::dominant_system(n, seed);
            let x = solve_tridiagonal(&sys, algo).unwrap();
            let reference = oracle_thomas(&sys).unwrap();
            let norm = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
            let diff = x
                .iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            ok &= sys.relative_residual(&x) <= 1e-6 && diff / norm <= 1e-6;
        }
        check(&format!("{label} vs thomas oracle"), ok);
    }

    // FFT against the naive DFT and the round trip.
    let n = 1024usize;
    let signal = test_support::random_signal(n, 33);
    let expect = oracle_dft(&signal, Direction::Forward);
    let mut fft_ok = true;
    for radix in [2u32, 4, 8, 16] {
        let plan = uniform_plan(n, radix).unwrap();
        let got = fft_transform(&signal, Direction::Forward, &plan).unwrap();
        fft_ok &= max_abs_diff(&got, &expect) < 1e-3;
        let back = fft_transform(&got, Direction::Inverse, &plan).unwrap();
        let rt = signal
            .iter()
            .zip(&back)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).norm()));
        fft_ok &= rt < 1e-4;
    }
    check("fft vs naive dft oracle (all radices)", fft_ok);

    // Multi-kernel plan sanity on the bundled architecture.
    let arch = ArchDescriptor::gm20b();
    let (lo, hi) = FFT_MULTI_KERNEL_RANGE;
    check(
        "large-fft planner bounds",
        plan_large_fft(lo, &arch).unwrap().kernel_count == 2
            && plan_large_fft(hi, &arch).unwrap().kernel_count == 3,
    );

    if failures > 0 {
        return Err(Error::Validation(format!(
            "{failures} kernel verification properties failed"
        )));
    }
    Ok(())
}

mod test_support {
    use num_complex::Complex32;

    use crate::kernels::tridiag::TridiagonalSystem;

    pub fn dominant_system(n: usize, seed: u64) -> TridiagonalSystem {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2000) as f64 / 1000.0 - 1.0
        };
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut diagonal = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            if i > 0 {
                lower[i] = next();
            }
            if i + 1 < n {
                upper[i] = next();
            }
            diagonal[i] = lower[i].abs() + upper[i].abs() + 1.0 + next().abs();
            rhs[i] = 10.0 * next();
        }
        TridiagonalSystem::new(lower, diagonal, upper, rhs).expect("valid system")
    }

    pub fn random_signal(n: usize, seed: u64) -> Vec<Complex32> {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2000) as f32 / 1000.0 - 1.0
        };
        (0..n).map(|_| Complex32::new(next(), next())).collect()
    }
}
