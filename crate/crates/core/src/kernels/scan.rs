//! Inclusive scan over the Ladner-Fischer and Kogge-Stone circuits.
//!
//! Both circuits are realized as level-synchronous loops, mirroring the step
//! structure the tuner reasons about. The combine operator is generic so the
//! same circuits drive the prefix phases of the tridiagonal LF solver.

use crate::error::{Error, Result};

/// Which prefix circuit realizes the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanPattern {
    LadnerFischer,
    KoggeStone,
}

fn check_len(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::Size(format!(
            "scan length {len} is not a power of two"
        )));
    }
    Ok(())
}

/// Ladner-Fischer prefix: an upsweep reduction followed by a downsweep that
/// fills the interior prefixes; 2*log2(n) - 1 levels in place.
///
/// `combine(earlier, later)` must be associative; the earlier prefix is the
/// left operand so non-commutative operators compose in element order.
pub(crate) fn lf_prefix<T: Copy>(values: &mut [T], combine: &impl Fn(T, T) -> T) {
    let n = values.len();
    if n < 2 {
        return;
    }
    let levels = n.trailing_zeros();
    for d in 0..levels {
        let stride = 1usize << (d + 1);
        let half = stride >> 1;
        let mut i = stride - 1;
        while i < n {
            values[i] = combine(values[i - half], values[i]);
            i += stride;
        }
    }
    for d in (1..levels).rev() {
        let stride = 1usize << d;
        let half = stride >> 1;
        let mut i = stride + half - 1;
        while i < n {
            values[i] = combine(values[i - half], values[i]);
            i += stride;
        }
    }
}

/// Kogge-Stone prefix: log2(n) doubling levels; iterating from the high end
/// keeps the previous level's values live without a second buffer.
pub(crate) fn ks_prefix<T: Copy>(values: &mut [T], combine: &impl Fn(T, T) -> T) {
    let n = values.len();
    let levels = n.trailing_zeros();
    for d in 0..levels {
        let offset = 1usize << d;
        for i in (offset..n).rev() {
            values[i] = combine(values[i - offset], values[i]);
        }
    }
}

pub(crate) fn prefix_with<T: Copy>(
    values: &[T],
    pattern: ScanPattern,
    combine: impl Fn(T, T) -> T,
) -> Result<Vec<T>> {
    check_len(values.len())?;
    let mut out = values.to_vec();
    match pattern {
        ScanPattern::LadnerFischer => lf_prefix(&mut out, &combine),
        ScanPattern::KoggeStone => ks_prefix(&mut out, &combine),
    }
    Ok(out)
}

/// Inclusive prefix sum; both patterns produce identical output.
pub fn scan_inclusive<T>(values: &[T], pattern: ScanPattern) -> Result<Vec<T>>
where
    T: Copy + std::ops::Add<Output = T>,
{
    prefix_with(values, pattern, |a, b| a + b)
}

/// Sequential left-fold prefix sum, the independent oracle for both circuits.
pub fn oracle_prefix<T>(values: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T>,
{
    let mut out = Vec::with_capacity(values.len());
    let mut acc: Option<T> = None;
    for &v in values {
        let next = match acc {
            None => v,
            Some(a) => a + v,
        };
        out.push(next);
        acc = Some(next);
    }
    out
}
