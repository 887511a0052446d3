//! Tridiagonal system solvers over the four prefix circuits: cyclic
//! reduction, parallel cyclic reduction, Wang&Mou recursive doubling and the
//! Ladner-Fischer prefix formulation, plus the sequential Thomas oracle.
//!
//! All solvers run in double precision. Power-of-two sizes only; stability is
//! guaranteed for diagonally dominant systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::scan::lf_prefix;

const PIVOT_EPS: f64 = 1e-300;

/// One tridiagonal system a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(lower: Vec<f64>, diagonal: Vec<f64>, upper: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let sys = TridiagonalSystem {
            lower,
            diagonal,
            upper,
            rhs,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.diagonal.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Size(format!(
                "system size {n} is not a power of two"
            )));
        }
        if self.lower.len() != n || self.upper.len() != n || self.rhs.len() != n {
            return Err(Error::Size(
                "coefficient sequences must share one length".into(),
            ));
        }
        if self.lower[0] != 0.0 {
            return Err(Error::Validation("boundary coefficient a_0 must be 0".into()));
        }
        if self.upper[n - 1] != 0.0 {
            return Err(Error::Validation(format!(
                "boundary coefficient c_{} must be 0",
                n - 1
            )));
        }
        Ok(())
    }

    /// Residual A*x - d, one entry per equation.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.lower[i] * x[i - 1] } else { 0.0 };
                let right = if i + 1 < n {
                    self.upper[i] * x[i + 1]
                } else {
                    0.0
                };
                left + self.diagonal[i] * x[i] + right - self.rhs[i]
            })
            .collect()
    }

    /// max_i |A*x - d|_i / (|d|_inf + 1).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let num = self
            .residual(x)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        let den = self.rhs.iter().fold(0.0f64, |m, d| m.max(d.abs())) + 1.0;
        num / den
    }
}

/// Solver selection for [`solve_tridiagonal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TridiagAlgorithm {
    CyclicReduction,
    ParallelCyclicReduction,
    WangMou,
    LadnerFischer,
}

/// Solves the system with the chosen prefix circuit.
pub fn solve_tridiagonal(system: &TridiagonalSystem, algorithm: TridiagAlgorithm) -> Result<Vec<f64>> {
    system.validate()?;
    match algorithm {
        TridiagAlgorithm::CyclicReduction => solve_cr(system),
        TridiagAlgorithm::ParallelCyclicReduction => solve_pcr(system),
        TridiagAlgorithm::WangMou => solve_wm(system, 2),
        TridiagAlgorithm::LadnerFischer => solve_lf(system),
    }
}

/// Wang&Mou with an explicit node radix; `solve_tridiagonal` uses radix 2.
/// The radix only changes how many segments one sweep merges, never the
/// solution.
pub fn solve_wm_radix(system: &TridiagonalSystem, radix: u32) -> Result<Vec<f64>> {
    system.validate()?;
    if !matches!(radix, 2 | 4 | 8) {
        return Err(Error::UnsupportedRadix(format!(
            "wang-mou supports radix 2, 4 or 8, got {radix}"
        )));
    }
    solve_wm(system, radix)
}

/// Sequential Thomas algorithm, the independent oracle for all four solvers.
pub fn oracle_thomas(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    system.validate()?;
    let n = system.len();
    let mut diag = system.diagonal.clone();
    let mut rhs = system.rhs.clone();
    for i in 1..n {
        if diag[i - 1].abs() < PIVOT_EPS {
            return Err(Error::Singular(format!("zero pivot at row {}", i - 1)));
        }
        let m = system.lower[i] / diag[i - 1];
        diag[i] -= m * system.upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if diag[n - 1].abs() < PIVOT_EPS {
        return Err(Error::Singular(format!("zero pivot at row {}", n - 1)));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - system.upper[i] * x[i + 1]) / diag[i];
    }
    Ok(x)
}

fn solve_cr(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let mut a = system.lower.clone();
    let mut b = system.diagonal.clone();
    let mut c = system.upper.clone();
    let mut d = system.rhs.clone();
    if n == 1 {
        if b[0].abs() < PIVOT_EPS {
            return Err(Error::Singular("zero pivot in 1x1 system".into()));
        }
        return Ok(vec![d[0] / b[0]]);
    }

    // Forward: each level eliminates odd positions relative to stride,
    // leaving equations at indices congruent to 2s-1 mod 2s.
    let mut stride = 1usize;
    while 2 * stride < n {
        let mut i = 2 * stride - 1;
        while i < n {
            let lo = i - stride;
            if b[lo].abs() < PIVOT_EPS {
                return Err(Error::Singular(format!("zero pivot at row {lo}")));
            }
            let alpha = -a[i] / b[lo];
            let na = alpha * a[lo];
            let mut nb = b[i] + alpha * c[lo];
            let mut nd = d[i] + alpha * d[lo];
            let mut nc = 0.0;
            if i + stride < n {
                let hi = i + stride;
                if b[hi].abs() < PIVOT_EPS {
                    return Err(Error::Singular(format!("zero pivot at row {hi}")));
                }
                let gamma = -c[i] / b[hi];
                nb += gamma * a[hi];
                nd += gamma * d[hi];
                nc = gamma * c[hi];
            }
            a[i] = na;
            b[i] = nb;
            c[i] = nc;
            d[i] = nd;
            i += 2 * stride;
        }
        stride *= 2;
    }

    // Reduced 2x2 system over indices n/2-1 and n-1.
    let (i0, i1) = (n / 2 - 1, n - 1);
    let det = b[i0] * b[i1] - c[i0] * a[i1];
    if det.abs() < PIVOT_EPS {
        return Err(Error::Singular("singular reduced 2x2 system".into()));
    }
    let mut x = vec![0.0; n];
    x[i0] = (d[i0] * b[i1] - c[i0] * d[i1]) / det;
    x[i1] = (b[i0] * d[i1] - d[i0] * a[i1]) / det;

    // Backward substitution over halving strides.
    stride = n / 4;
    while stride >= 1 {
        let mut i = stride - 1;
        while i < n {
            // Solve only indices not yet known at this level.
            if (i + 1) % (2 * stride) == stride {
                if b[i].abs() < PIVOT_EPS {
                    return Err(Error::Singular(format!("zero pivot at row {i}")));
                }
                let left = if i >= stride { a[i] * x[i - stride] } else { 0.0 };
                let right = if i + stride < n {
                    c[i] * x[i + stride]
                } else {
                    0.0
                };
                x[i] = (d[i] - left - right) / b[i];
            }
            i += 2 * stride;
        }
        stride /= 2;
    }
    Ok(x)
}

fn solve_pcr(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let mut a = system.lower.clone();
    let mut b = system.diagonal.clone();
    let mut c = system.upper.clone();
    let mut d = system.rhs.clone();
    let mut stride = 1usize;
    while stride < n {
        let mut na = vec![0.0; n];
        let mut nb = vec![0.0; n];
        let mut nc = vec![0.0; n];
        let mut nd = vec![0.0; n];
        for i in 0..n {
            let mut bb = b[i];
            let mut dd = d[i];
            let mut aa = 0.0;
            let mut cc = 0.0;
            if i >= stride {
                let lo = i - stride;
                if b[lo].abs() < PIVOT_EPS {
                    return Err(Error::Singular(format!("zero pivot at row {lo}")));
                }
                let alpha = -a[i] / b[lo];
                aa = alpha * a[lo];
                bb += alpha * c[lo];
                dd += alpha * d[lo];
            }
            if i + stride < n {
                let hi = i + stride;
                if b[hi].abs() < PIVOT_EPS {
                    return Err(Error::Singular(format!("zero pivot at row {hi}")));
                }
                let gamma = -c[i] / b[hi];
                cc = gamma * c[hi];
                bb += gamma * a[hi];
                dd += gamma * d[hi];
            }
            na[i] = aa;
            nb[i] = bb;
            nc[i] = cc;
            nd[i] = dd;
        }
        a = na;
        b = nb;
        c = nc;
        d = nd;
        stride *= 2;
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        if b[i].abs() < PIVOT_EPS {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
        x[i] = d[i] / b[i];
    }
    Ok(x)
}

/// Wang&Mou full recursive doubling. Every index keeps a reduced equation
/// a x_{l-1} + b x_i + c x_{h+1} = d over its current segment [l, h]; merging
/// two adjacent segments solves the 2x2 interface system formed by the pair
/// of boundary equations and substitutes it into both halves. After the last
/// merge the exterior unknowns are zero and every equation is decoupled.
/// A radix-r node merges r segments per sweep via log2(r) pairwise passes.
fn solve_wm(system: &TridiagonalSystem, radix: u32) -> Result<Vec<f64>> {
    let n = system.len();
    let mut a = system.lower.clone();
    let b = system.diagonal.clone();
    let mut c = system.upper.clone();
    let mut d = system.rhs.clone();

    let mut seg = 1usize;
    while seg < n {
        let merges_per_node = (radix as usize).trailing_zeros().max(1);
        for _ in 0..merges_per_node {
            if seg >= n {
                break;
            }
            let mut left = 0usize;
            while left + seg < n {
                let m = left + seg - 1;
                let (al, bl, cl, dl) = (a[m], b[m], c[m], d[m]);
                let (ar, br, cr, dr) = (a[m + 1], b[m + 1], c[m + 1], d[m + 1]);
                let det = bl * br - cl * ar;
                if det.abs() < PIVOT_EPS {
                    return Err(Error::Singular(format!(
                        "singular interface pair at rows {m}, {}",
                        m + 1
                    )));
                }
                // Closed forms for the interface unknowns in terms of the
                // merged segment's exterior neighbors:
                //   x_{m+1} = p1 + q1 x_{l-1} + r1 x_{h+1}
                //   x_m     = p0 + q0 x_{l-1} + r0 x_{h+1}
                let p1 = (bl * dr - ar * dl) / det;
                let q1 = (ar * al) / det;
                let r1 = -(bl * cr) / det;
                let p0 = (br * dl - cl * dr) / det;
                let q0 = -(br * al) / det;
                let r0 = (cl * cr) / det;
                for i in left..left + seg {
                    // a x_{l-1} + b x_i + c x_{m+1} = d
                    let ci = c[i];
                    a[i] += ci * q1;
                    c[i] = ci * r1;
                    d[i] -= ci * p1;
                }
                let right_end = (left + 2 * seg).min(n);
                for i in left + seg..right_end {
                    // a x_m + b x_i + c x_{h+1} = d
                    let ai = a[i];
                    a[i] = ai * q0;
                    c[i] += ai * r0;
                    d[i] -= ai * p0;
                }
                left += 2 * seg;
            }
            seg *= 2;
        }
    }

    let mut x = vec![0.0; n];
    for i in 0..n {
        if b[i].abs() < PIVOT_EPS {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
        x[i] = d[i] / b[i];
    }
    Ok(x)
}

/// Homogeneous 2x2 state for the LU-pivot recurrence w_i = b_i - a_i c_{i-1} / w_{i-1},
/// kept scale-normalized so long products cannot overflow.
#[derive(Clone, Copy)]
struct Mobius {
    m00: f64,
    m01: f64,
    m10: f64,
    m11: f64,
}

impl Mobius {
    fn compose(first: Mobius, second: Mobius) -> Mobius {
        let mut m = Mobius {
            m00: second.m00 * first.m00 + second.m01 * first.m10,
            m01: second.m00 * first.m01 + second.m01 * first.m11,
            m10: second.m10 * first.m00 + second.m11 * first.m10,
            m11: second.m10 * first.m01 + second.m11 * first.m11,
        };
        let scale = m
            .m00
            .abs()
            .max(m.m01.abs())
            .max(m.m10.abs())
            .max(m.m11.abs());
        if scale > PIVOT_EPS {
            m.m00 /= scale;
            m.m01 /= scale;
            m.m10 /= scale;
            m.m11 /= scale;
        }
        m
    }
}

/// Affine map u -> scale*u + offset under left-to-right composition.
#[derive(Clone, Copy)]
struct Affine {
    scale: f64,
    offset: f64,
}

impl Affine {
    fn compose(first: Affine, second: Affine) -> Affine {
        Affine {
            scale: second.scale * first.scale,
            offset: second.scale * first.offset + second.offset,
        }
    }
}

/// Ladner-Fischer solver: the LU pivots, the forward substitution and the
/// backward substitution are each a linear recurrence evaluated as a prefix
/// computation over the LF circuit.
fn solve_lf(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = system.len();
    let a = &system.lower;
    let b = &system.diagonal;
    let c = &system.upper;
    let d = &system.rhs;

    // Pivots w_i as a Mobius prefix: (w, 1) -> (b_i w - a_i c_{i-1}, w).
    let mut pivot_maps: Vec<Mobius> = (0..n)
        .map(|i| {
            let prev_c = if i > 0 { c[i - 1] } else { 0.0 };
            Mobius {
                m00: b[i],
                m01: -a[i] * prev_c,
                m10: 1.0,
                m11: 0.0,
            }
        })
        .collect();
    lf_prefix(&mut pivot_maps, &Mobius::compose);
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Applied to the seed state (1, 0).
        let num = pivot_maps[i].m00;
        let den = pivot_maps[i].m10;
        if den.abs() < PIVOT_EPS || num.abs() < PIVOT_EPS * den.abs() {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
        w[i] = num / den;
        if !w[i].is_finite() || w[i].abs() < PIVOT_EPS {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
    }

    // Forward sweep y_i = d_i - (a_i / w_{i-1}) y_{i-1} as an affine prefix.
    let mut fwd: Vec<Affine> = (0..n)
        .map(|i| {
            let scale = if i > 0 { -a[i] / w[i - 1] } else { 0.0 };
            Affine {
                scale,
                offset: d[i],
            }
        })
        .collect();
    lf_prefix(&mut fwd, &Affine::compose);
    let y: Vec<f64> = fwd.iter().map(|m| m.offset).collect();

    // Backward sweep x_i = (y_i - c_i x_{i+1}) / w_i as a reversed affine prefix.
    let mut bwd: Vec<Affine> = (0..n)
        .rev()
        .map(|i| Affine {
            scale: -c[i] / w[i],
            offset: y[i] / w[i],
        })
        .collect();
    lf_prefix(&mut bwd, &Affine::compose);
    let mut x = vec![0.0; n];
    for (rev_idx, m) in bwd.iter().enumerate() {
        x[n - 1 - rev_idx] = m.offset;
    }
    Ok(x)
}
