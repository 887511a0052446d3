//! Reference implementations of the parallel-prefix circuits used as
//! correctness oracles and as the semantic subject of tuning.
//!
//! Everything here runs sequentially on the CPU; the batch dimension is a
//! plain outer loop at call sites. These kernels are oracles, not
//! performance subjects.

pub mod fft;
pub mod scan;
pub mod tridiag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The tuned algorithm families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ScanLf,
    ScanKs,
    TsCr,
    TsPcr,
    TsWm,
    TsLf,
    Fft,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::ScanLf,
        Algorithm::ScanKs,
        Algorithm::TsCr,
        Algorithm::TsPcr,
        Algorithm::TsWm,
        Algorithm::TsLf,
        Algorithm::Fft,
    ];

    pub fn is_tridiagonal(self) -> bool {
        matches!(
            self,
            Algorithm::TsCr | Algorithm::TsPcr | Algorithm::TsWm | Algorithm::TsLf
        )
    }

    pub fn is_scan(self) -> bool {
        matches!(self, Algorithm::ScanLf | Algorithm::ScanKs)
    }

    pub fn is_fft(self) -> bool {
        self == Algorithm::Fft
    }

    /// Whether the circuit pattern admits radix values above 2.
    pub fn allows_radix_increase(self) -> bool {
        matches!(self, Algorithm::TsWm | Algorithm::Fft)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::ScanLf => "scan_lf",
            Algorithm::ScanKs => "scan_ks",
            Algorithm::TsCr => "ts_cr",
            Algorithm::TsPcr => "ts_pcr",
            Algorithm::TsWm => "ts_wm",
            Algorithm::TsLf => "ts_lf",
            Algorithm::Fft => "fft",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan_lf" => Ok(Algorithm::ScanLf),
            "scan_ks" => Ok(Algorithm::ScanKs),
            "ts_cr" => Ok(Algorithm::TsCr),
            "ts_pcr" => Ok(Algorithm::TsPcr),
            "ts_wm" => Ok(Algorithm::TsWm),
            "ts_lf" => Ok(Algorithm::TsLf),
            "fft" => Ok(Algorithm::Fft),
            other => Err(Error::Parse(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// The fan of a prefix-circuit node; P = max(fan_in, fan_out).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOperator {
    pub fan_in: u32,
    pub fan_out: u32,
}

impl NodeOperator {
    pub fn new(fan_in: u32, fan_out: u32) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Validation("node fan values must be >= 1".into()));
        }
        Ok(NodeOperator { fan_in, fan_out })
    }

    /// Elements processed per thread when one thread evaluates one node.
    pub fn elements_per_thread(self) -> u32 {
        self.fan_in.max(self.fan_out)
    }
}

/// One problem shape: algorithm, size N = r^k, batch count G and radix r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub algorithm: Algorithm,
    pub n_size: u32,
    pub batches: u64,
    pub radix: u32,
}

impl ProblemInstance {
    pub fn new(algorithm: Algorithm, n_size: u32, batches: u64, radix: u32) -> Result<Self> {
        let inst = ProblemInstance {
            algorithm,
            n_size,
            batches,
            radix,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_size.is_power_of_two() {
            return Err(Error::Size(format!(
                "problem size {} is not a power of two",
                self.n_size
            )));
        }
        if self.batches == 0 {
            return Err(Error::Validation("batch count must be >= 1".into()));
        }
        if !self.radix.is_power_of_two() || self.radix < 2 {
            return Err(Error::UnsupportedRadix(format!(
                "radix {} is not a power of two >= 2",
                self.radix
            )));
        }
        Ok(())
    }
}

pub fn log2(v: u32) -> u32 {
    debug_assert!(v.is_power_of_two());
    v.trailing_zeros()
}

/// Number of circuit steps K taken by the instance's pattern.
///
/// Single-sweep patterns (Kogge-Stone scan, PCR, Wang&Mou, Stockham FFT)
/// take ceil(log_r N) steps; mixed-radix fills a shorter first step when
/// log2(N) is not a multiple of log2(r). The Ladner-Fischer reduce plus
/// downsweep and the cyclic-reduction forward plus backward phases both
/// take 2*log2(N) - 1 steps.
pub fn steps_count(instance: &ProblemInstance) -> Result<u32> {
    instance.validate()?;
    let n_bits = log2(instance.n_size);
    let r_bits = log2(instance.radix);
    let fixed_radix_2 = |name: &str| -> Result<()> {
        if instance.radix != 2 {
            return Err(Error::UnsupportedRadix(format!(
                "{name} pattern fixes the radix at 2, got {}",
                instance.radix
            )));
        }
        Ok(())
    };
    match instance.algorithm {
        Algorithm::ScanKs => {
            fixed_radix_2("kogge-stone scan")?;
            Ok(n_bits.max(1))
        }
        Algorithm::TsPcr => {
            fixed_radix_2("parallel cyclic reduction")?;
            Ok(n_bits.max(1))
        }
        Algorithm::ScanLf | Algorithm::TsLf => {
            fixed_radix_2("ladner-fischer")?;
            Ok((2 * n_bits).max(1).saturating_sub(1).max(1))
        }
        Algorithm::TsCr => {
            fixed_radix_2("cyclic reduction")?;
            Ok((2 * n_bits).max(1).saturating_sub(1).max(1))
        }
        Algorithm::TsWm => {
            if instance.radix > 8 {
                return Err(Error::UnsupportedRadix(format!(
                    "wang-mou supports radix 2..8, got {}",
                    instance.radix
                )));
            }
            Ok(n_bits.div_ceil(r_bits).max(1))
        }
        Algorithm::Fft => {
            if instance.radix > 16 {
                return Err(Error::UnsupportedRadix(format!(
                    "fft supports radix 2..16, got {}",
                    instance.radix
                )));
            }
            Ok(n_bits.div_ceil(r_bits).max(1))
        }
    }
}
