//! Mixed-radix complex FFT over the Stockham autosort pattern, with the
//! naive O(N^2) DFT as the independent oracle.
//!
//! Kernel data is single precision; twiddles are generated in double
//! precision and truncated. The oracle runs entirely in double precision.

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

/// Transform direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

fn check_plan(n: usize, plan: &[u32]) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(format!("signal length {n} is not a power of two")));
    }
    let mut product = 1usize;
    for &r in plan {
        if !matches!(r, 2 | 4 | 8 | 16) {
            return Err(Error::Plan(format!("radix {r} is not one of 2, 4, 8, 16")));
        }
        product = product
            .checked_mul(r as usize)
            .ok_or_else(|| Error::Plan("radix plan overflows".into()))?;
    }
    if product != n {
        return Err(Error::Plan(format!(
            "radix plan product {product} does not match signal length {n}"
        )));
    }
    Ok(())
}

/// Builds the all-`radix` plan for N, with a smaller leading step when
/// log2(N) is not a multiple of log2(radix).
pub fn uniform_plan(n: usize, radix: u32) -> Result<Vec<u32>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(format!("signal length {n} is not a power of two")));
    }
    if !matches!(radix, 2 | 4 | 8 | 16) {
        return Err(Error::Plan(format!("radix {radix} is not one of 2, 4, 8, 16")));
    }
    let n_bits = n.trailing_zeros();
    let r_bits = radix.trailing_zeros();
    let mut plan = Vec::new();
    let rem = n_bits % r_bits;
    if rem != 0 {
        plan.push(1u32 << rem);
    }
    for _ in 0..n_bits / r_bits {
        plan.push(radix);
    }
    if plan.is_empty() {
        plan.push(radix);
    }
    check_plan(n, &plan)?;
    Ok(plan)
}

/// Stockham autosort FFT. One pass per plan entry; output lands in natural
/// order without a separate bit-reversal stage.
pub fn fft_transform(
    signal: &[Complex32],
    direction: Direction,
    radix_plan: &[u32],
) -> Result<Vec<Complex32>> {
    let n = signal.len();
    check_plan(n, radix_plan)?;
    if n == 1 {
        return Ok(signal.to_vec());
    }
    let sign = direction.sign();
    let mut src = signal.to_vec();
    let mut dst = vec![Complex32::new(0.0, 0.0); n];

    let mut m = 1usize; // interleaving factor accumulated from earlier passes
    for &radix in radix_plan {
        let r = radix as usize;
        let l = n / (m * r);
        // r-point DFT twiddles, exp(sign*2*pi*i*p*q/r)
        let wr: Vec<Complex32> = (0..r * r)
            .map(|idx| {
                let (p, q) = (idx / r, idx % r);
                let angle = sign * 2.0 * std::f64::consts::PI * (p * q % r) as f64 / r as f64;
                Complex64::from_polar(1.0, angle).to_c32()
            })
            .collect();
        for j in 0..l {
            for q in 0..r {
                // Stage twiddle exp(sign*2*pi*i*j*q/(r*l))
                let angle = sign * 2.0 * std::f64::consts::PI * (j * q) as f64 / (r * l) as f64;
                let w_out = Complex64::from_polar(1.0, angle).to_c32();
                for k in 0..m {
                    let mut acc = Complex32::new(0.0, 0.0);
                    for p in 0..r {
                        acc += src[k + m * (j + l * p)] * wr[p * r + q];
                    }
                    dst[k + m * (r * j + q)] = acc * w_out;
                }
            }
        }
        std::mem::swap(&mut src, &mut dst);
        m *= r;
    }

    if direction == Direction::Inverse {
        let scale = 1.0 / n as f32;
        for v in &mut src {
            *v *= scale;
        }
    }
    Ok(src)
}

trait ToC32 {
    fn to_c32(self) -> Complex32;
}

impl ToC32 for Complex64 {
    fn to_c32(self) -> Complex32 {
        Complex32::new(self.re as f32, self.im as f32)
    }
}

/// Naive O(N^2) DFT oracle in double precision. Twiddles come from one
/// precomputed table indexed by (k*t) mod N.
pub fn oracle_dft(signal: &[Complex32], direction: Direction) -> Vec<Complex64> {
    let n = signal.len();
    let sign = direction.sign();
    let twiddles: Vec<Complex64> = (0..n)
        .map(|i| {
            Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * i as f64 / n as f64)
        })
        .collect();
    let promoted: Vec<Complex64> = signal
        .iter()
        .map(|v| Complex64::new(v.re as f64, v.im as f64))
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, v) in promoted.iter().enumerate() {
            acc += v * twiddles[(k * t) % n];
        }
        if direction == Direction::Inverse {
            acc /= n as f64;
        }
        *slot = acc;
    }
    out
}

/// Largest |a_i - b_i| between a single-precision vector and the oracle.
pub fn max_abs_diff(got: &[Complex32], expect: &[Complex64]) -> f64 {
    got.iter()
        .zip(expect)
        .fold(0.0f64, |m, (g, e)| {
            let dr = g.re as f64 - e.re;
            let di = g.im as f64 - e.im;
            m.max((dr * dr + di * di).sqrt())
        })
}
