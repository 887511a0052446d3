//! Objective-function backends: a deterministic simulated cost model, a
//! measurement-table lookup and an external-command runner.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::arch::ArchDescriptor;
use crate::error::{Error, Result};
use crate::kernels::{log2, steps_count, Algorithm, ProblemInstance};
use crate::space::{config_occupancy, Candidate, KernelConfig};

/// Outcome of measuring one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Value(f64),
    Invalid,
    Timeout,
}

/// An objective function mapping candidates to execution times.
pub trait Backend {
    fn name(&self) -> String;
    fn measure(&self, algorithm: Algorithm, n: u32, candidate: &Candidate) -> Measurement;
    /// Whether concurrent `measure` calls are allowed.
    fn concurrent_safe(&self) -> bool {
        true
    }
    /// One minute expressed in this backend's time unit; the penalty base
    /// when no successful time exists yet.
    fn minute_in_units(&self) -> f64 {
        60e6
    }
}

/// Constants of the simulated cost landscape. The defaults reward high
/// occupancy, fewer circuit steps, shuffle communication and fewer kernel
/// launches; all are overridable from a JSON document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub occupancy_floor: f64,
    pub shuffle_comm: f64,
    /// Batches are sized so G * N = 2^batch_exponent.
    pub batch_exponent: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            c0: 1.0,
            c1: 0.25,
            c2: 1.0,
            c3: 50.0,
            occupancy_floor: 0.05,
            shuffle_comm: 0.25,
            batch_exponent: 26,
        }
    }
}

impl SimParams {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("sim params: {e}")))
    }
}

/// Batch count used throughout: G = 2^batch_exponent / N, floored at 1.
pub fn batch_count(params: &SimParams, n: u32) -> u64 {
    ((1u64 << params.batch_exponent) / n as u64).max(1)
}

fn kernel_cost(
    params: &SimParams,
    arch: &ArchDescriptor,
    algorithm: Algorithm,
    total_elems: u64,
    coverage_bits: u32,
    config: &KernelConfig,
) -> std::result::Result<f64, String> {
    let occ = config_occupancy(algorithm, config, arch).map_err(|e| e.to_string())?;
    if occ.active_blocks == 0 {
        return Err("zero active blocks".into());
    }
    let coverage = 1u64 << coverage_bits;
    let instance = ProblemInstance {
        algorithm,
        n_size: coverage.min(u32::MAX as u64) as u32,
        batches: 1,
        radix: config.radix,
    };
    let steps = steps_count(&instance).map_err(|e| e.to_string())?;
    let elems_per_block = config.p_per_thread as u64 * config.l_threads as u64;
    let total_blocks = total_elems.div_ceil(elems_per_block).max(1);
    let waves = total_blocks.div_ceil(occ.active_blocks as u64 * arch.sm_count as u64);
    let comm = if config.shuffle {
        params.shuffle_comm
    } else {
        1.0
    };
    let work = params.c0 + params.c1 * config.p_per_thread as f64 + params.c2 * comm;
    Ok(waves as f64 * steps as f64 * work / occ.warp_occupancy.max(params.occupancy_floor))
}

/// Deterministic simulated time for a candidate, in abstract units.
pub fn sim_cost(
    params: &SimParams,
    arch: &ArchDescriptor,
    instance: &ProblemInstance,
    candidate: &Candidate,
) -> std::result::Result<f64, String> {
    let n = instance.n_size;
    let total_elems = instance.batches * n as u64;
    match candidate {
        Candidate::Single(config) => kernel_cost(
            params,
            arch,
            instance.algorithm,
            total_elems,
            log2(n),
            config,
        ),
        Candidate::Plan(plan) => {
            let mut total = 0.0;
            for (config, &bits) in plan.kernel_configs.iter().zip(&plan.coverage_bits) {
                total += kernel_cost(params, arch, instance.algorithm, total_elems, bits, config)?;
            }
            total += params.c3 * (plan.kernel_count.saturating_sub(1)) as f64;
            Ok(total)
        }
    }
}

/// Backend evaluating candidates on the simulated cost landscape.
#[derive(Debug, Clone)]
pub struct SimBackend {
    pub params: SimParams,
    pub arch: ArchDescriptor,
}

impl SimBackend {
    pub fn new(arch: ArchDescriptor) -> Self {
        SimBackend {
            params: SimParams::default(),
            arch,
        }
    }

    pub fn with_params(arch: ArchDescriptor, params: SimParams) -> Self {
        SimBackend { params, arch }
    }
}

impl Backend for SimBackend {
    fn name(&self) -> String {
        "sim".into()
    }

    fn measure(&self, algorithm: Algorithm, n: u32, candidate: &Candidate) -> Measurement {
        let instance = ProblemInstance {
            algorithm,
            n_size: n,
            batches: batch_count(&self.params, n),
            radix: 2,
        };
        match sim_cost(&self.params, &self.arch, &instance, candidate) {
            Ok(t) => Measurement::Value(t),
            Err(_) => Measurement::Invalid,
        }
    }
}

type TableKey = (String, u32, u32, u32, u32, u32, u8);

/// Measured times keyed by the full configuration tuple.
#[derive(Debug, Clone, Default)]
pub struct MeasurementTable {
    rows: BTreeMap<TableKey, f64>,
    pub provenance: String,
}

pub const TABLE_HEADER: &str = "algorithm,N,S,P,L,r,shuffle,time_us";

fn table_key(algorithm: Algorithm, n: u32, c: &KernelConfig) -> TableKey {
    (
        algorithm.as_str().to_string(),
        n,
        c.s_elems,
        c.p_per_thread,
        c.l_threads,
        c.radix,
        c.shuffle as u8,
    )
}

impl MeasurementTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(
        &mut self,
        algorithm: Algorithm,
        n: u32,
        config: &KernelConfig,
        time_us: f64,
    ) -> Result<()> {
        if !(time_us > 0.0) {
            return Err(Error::Validation(format!(
                "measured time must be positive, got {time_us}"
            )));
        }
        let key = table_key(algorithm, n, config);
        if self.rows.insert(key.clone(), time_us).is_some() {
            return Err(Error::Validation(format!("duplicate table key {key:?}")));
        }
        Ok(())
    }

    pub fn lookup(&self, algorithm: Algorithm, n: u32, config: &KernelConfig) -> Option<f64> {
        self.rows.get(&table_key(algorithm, n, config)).copied()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty measurement table".into()))?;
        if header.trim() != TABLE_HEADER {
            return Err(Error::Parse(format!(
                "bad table header `{header}`, expected `{TABLE_HEADER}`"
            )));
        }
        let mut table = MeasurementTable::default();
        for (idx, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse(format!(
                    "row {}: expected 8 comma-separated fields",
                    idx + 2
                )));
            }
            let algorithm: Algorithm = fields[0].parse()?;
            let parse_u32 = |s: &str, what: &str| {
                s.parse::<u32>()
                    .map_err(|_| Error::Parse(format!("row {}: bad {what} `{s}`", idx + 2)))
            };
            let n = parse_u32(fields[1], "N")?;
            let config = KernelConfig::new(
                parse_u32(fields[2], "S")?,
                parse_u32(fields[3], "P")?,
                parse_u32(fields[4], "L")?,
                parse_u32(fields[5], "r")?,
                match fields[6] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse(format!(
                            "row {}: shuffle must be 0 or 1, got `{other}`",
                            idx + 2
                        )))
                    }
                },
            );
            let time: f64 = fields[7]
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad time `{}`", idx + 2, fields[7])))?;
            table.insert(algorithm, n, &config, time)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut table = Self::parse(&text)?;
        table.provenance = path.display().to_string();
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        out.push('\n');
        for ((algo, n, s, p, l, r, shuffle), time) in &self.rows {
            out.push_str(&format!("{algo},{n},{s},{p},{l},{r},{shuffle},{time}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Backend answering from a measurement table; misses are invalid, never
/// fabricated.
#[derive(Debug, Clone)]
pub struct TableBackend {
    pub table: MeasurementTable,
}

impl Backend for TableBackend {
    fn name(&self) -> String {
        "table".into()
    }

    fn measure(&self, algorithm: Algorithm, n: u32, candidate: &Candidate) -> Measurement {
        match candidate {
            Candidate::Single(config) => match self.table.lookup(algorithm, n, config) {
                Some(t) => Measurement::Value(t),
                None => Measurement::Invalid,
            },
            // Plans are not addressable by the single-kernel key schema.
            Candidate::Plan(_) => Measurement::Invalid,
        }
    }
}

/// External command description: argument template with placeholders
/// {ALGO} {N} {S} {P} {L} {R} {SHUFFLE}, wall-clock timeout, concurrency
/// declaration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandSpec {
    pub executable: PathBuf,
    pub args_template: Vec<String>,
    pub timeout: Duration,
    pub concurrent_safe: bool,
}

impl CommandSpec {
    pub fn new(executable: PathBuf) -> Self {
        CommandSpec {
            executable,
            args_template: ["{ALGO}", "{N}", "{S}", "{P}", "{L}", "{R}", "{SHUFFLE}"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            timeout: Duration::from_secs(60),
            concurrent_safe: false,
        }
    }

    fn substituted_args(&self, algorithm: Algorithm, n: u32, config: &KernelConfig) -> Vec<String> {
        self.args_template
            .iter()
            .map(|arg| {
                arg.replace("{ALGO}", algorithm.as_str())
                    .replace("{N}", &n.to_string())
                    .replace("{S}", &config.s_elems.to_string())
                    .replace("{P}", &config.p_per_thread.to_string())
                    .replace("{L}", &config.l_threads.to_string())
                    .replace("{R}", &config.radix.to_string())
                    .replace("{SHUFFLE}", if config.shuffle { "1" } else { "0" })
            })
            .collect()
    }
}

/// Runs one candidate through the external command protocol: substituted
/// argv, single-line decimal microseconds on stdout, nonzero exit means
/// invalid, wall-clock overrun means timeout. The child never outlives the
/// timeout by more than a polling interval.
pub fn external_evaluate(
    spec: &CommandSpec,
    algorithm: Algorithm,
    n: u32,
    config: &KernelConfig,
) -> Measurement {
    let args = spec.substituted_args(algorithm, n, config);
    let mut child = match std::process::Command::new(&spec.executable)
        .args(&args)
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::null())
        .stdin(std::process::Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(_) => return Measurement::Invalid,
    };
    let deadline = Instant::now() + spec.timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                if !status.success() {
                    return Measurement::Invalid;
                }
                let mut text = String::new();
                if let Some(mut out) = child.stdout.take() {
                    if out.read_to_string(&mut text).is_err() {
                        return Measurement::Invalid;
                    }
                }
                return match text.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Measurement::Value(v),
                    _ => Measurement::Invalid,
                };
            }
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Measurement::Timeout;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Measurement::Invalid;
            }
        }
    }
}

/// Backend wrapping an external command.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    pub spec: CommandSpec,
}

impl Backend for CommandBackend {
    fn name(&self) -> String {
        format!("cmd:{}", self.spec.executable.display())
    }

    fn measure(&self, algorithm: Algorithm, n: u32, candidate: &Candidate) -> Measurement {
        match candidate {
            Candidate::Single(config) => external_evaluate(&self.spec, algorithm, n, config),
            Candidate::Plan(_) => Measurement::Invalid,
        }
    }

    fn concurrent_safe(&self) -> bool {
        self.spec.concurrent_safe
    }
}

/// Parses a backend selector: `sim`, `table:<path>` or `cmd:<path>`.
pub fn backend_from_selector(
    selector: &str,
    arch: &ArchDescriptor,
    sim_params: SimParams,
    timeout: Duration,
) -> Result<Box<dyn Backend>> {
    if selector == "sim" {
        return Ok(Box::new(SimBackend::with_params(arch.clone(), sim_params)));
    }
    if let Some(path) = selector.strip_prefix("table:") {
        let table = MeasurementTable::load(Path::new(path))?;
        return Ok(Box::new(TableBackend { table }));
    }
    if let Some(path) = selector.strip_prefix("cmd:") {
        let mut spec = CommandSpec::new(PathBuf::from(path));
        spec.timeout = timeout;
        return Ok(Box::new(CommandBackend { spec }));
    }
    Err(Error::Validation(format!(
        "unknown backend selector `{selector}` (expected sim, table:<path> or cmd:<path>)"
    )))
}
