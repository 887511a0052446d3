//! Throughput metrics, the harmonic-mean portability score and the
//! exhaustive-search oracle, plus comparison reports across tuning methods.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Measurement};
use crate::error::{Error, Result};
use crate::kernels::Algorithm;
use crate::space::{Candidate, SearchSpace};

/// Per-size efficiencies and their harmonic mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortabilityScore {
    /// (N, efficiency) pairs in ascending N order.
    pub per_size: Vec<(u32, f64)>,
    pub phi: f64,
    pub size_set: Vec<u32>,
}

/// Evaluates every candidate once; returns the best candidate with its time
/// and the full evaluation map in enumeration order.
pub fn exhaustive_search(
    space: &SearchSpace,
    backend: &dyn Backend,
) -> Result<((Candidate, f64), Vec<(Candidate, Measurement)>)> {
    if space.is_empty() {
        return Err(Error::NoFeasibleConfig(format!(
            "empty search space for {} at N={}",
            space.algorithm, space.n_size
        )));
    }
    let mut map = Vec::with_capacity(space.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in space.candidates.iter().enumerate() {
        let m = backend.measure(space.algorithm, space.n_size, cand);
        if let Measurement::Value(t) = m {
            if best.map(|(_, bt)| t < bt).unwrap_or(true) {
                best = Some((idx, t));
            }
        }
        map.push((cand.clone(), m));
    }
    let (idx, time) = best.ok_or_else(|| {
        Error::NoFeasibleConfig(format!(
            "every candidate failed for {} at N={}",
            space.algorithm, space.n_size
        ))
    })?;
    Ok(((space.candidates[idx].clone(), time), map))
}

/// e = best_time / achieved_time, in (0, 1] when best_time <= achieved_time.
pub fn efficiency(achieved_time: f64, best_time: f64) -> Result<f64> {
    if !(achieved_time > 0.0) || !(best_time > 0.0) {
        return Err(Error::Validation(
            "efficiency needs positive times".into(),
        ));
    }
    if best_time > achieved_time {
        return Err(Error::Validation(format!(
            "best time {best_time} exceeds achieved time {achieved_time}"
        )));
    }
    Ok(best_time / achieved_time)
}

/// Harmonic mean of efficiencies: |C| / sum(1/e_i).
pub fn phi(efficiencies: &[f64]) -> Result<f64> {
    if efficiencies.is_empty() {
        return Err(Error::Validation("phi needs at least one efficiency".into()));
    }
    for &e in efficiencies {
        if !(e > 0.0) || e > 1.0 {
            return Err(Error::Validation(format!(
                "efficiency {e} is outside (0, 1]"
            )));
        }
    }
    let denom: f64 = efficiencies.iter().map(|e| 1.0 / e).sum();
    Ok(efficiencies.len() as f64 / denom)
}

/// Throughput in the family's customary unit for a time in seconds:
/// rows/s scaled to MRows/s for tridiagonal solvers, MData/s for scans and
/// 5 N log2(N) flops scaled to GFlops/s for the FFT.
pub fn throughput(algorithm: Algorithm, n: u32, batches: u64, time_seconds: f64) -> Result<f64> {
    if !(time_seconds > 0.0) {
        return Err(Error::Validation("throughput needs a positive time".into()));
    }
    let nb = n as f64 * batches as f64;
    Ok(match algorithm {
        Algorithm::Fft => 5.0 * nb * (n as f64).log2() * 1e-9 / time_seconds,
        _ => nb * 1e-6 / time_seconds,
    })
}

/// Unit label matching [`throughput`].
pub fn throughput_unit(algorithm: Algorithm) -> &'static str {
    match algorithm {
        Algorithm::Fft => "GFlops/s",
        Algorithm::ScanLf | Algorithm::ScanKs => "MData/s",
        _ => "MRows/s",
    }
}

/// One method's result at one size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeOutcome {
    pub n: u32,
    pub best_time: f64,
    pub chosen_config: Candidate,
    pub efficiency: f64,
}

/// One method's full row of the comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub algorithm: Algorithm,
    pub sizes: Vec<SizeOutcome>,
    pub phi: f64,
    pub evaluations_used: usize,
}

/// The comparison document: one entry per method over a shared size set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub size_set: Vec<u32>,
    pub methods: Vec<MethodReport>,
}

/// Builds one method's report from per-size (best time, config, evaluation
/// count) outcomes and the oracle's best times.
pub fn method_report(
    method: &str,
    algorithm: Algorithm,
    outcomes: &[(u32, f64, Candidate, usize)],
    oracle_best: &[(u32, f64)],
) -> Result<MethodReport> {
    let mut sizes = Vec::with_capacity(outcomes.len());
    let mut evaluations_used = 0;
    let mut effs = Vec::with_capacity(outcomes.len());
    for (n, time, config, evals) in outcomes {
        let (_, best) = oracle_best
            .iter()
            .find(|(on, _)| on == n)
            .ok_or_else(|| Error::Validation(format!("oracle is missing N={n}")))?;
        let e = efficiency(*time, *best)?;
        effs.push(e);
        evaluations_used += evals;
        sizes.push(SizeOutcome {
            n: *n,
            best_time: *time,
            chosen_config: config.clone(),
            efficiency: e,
        });
    }
    Ok(MethodReport {
        method: method.to_string(),
        algorithm,
        sizes,
        phi: phi(&effs)?,
        evaluations_used,
    })
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table mirroring the JSON content.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "algorithm: {}  sizes: {:?}  seed: {}\n",
            self.algorithm, self.size_set, self.seed
        ));
        out.push_str(&format!(
            "{:<12} {:>10} {:>8} {}\n",
            "method", "phi", "evals", "per-size efficiency"
        ));
        for m in &self.methods {
            let effs: Vec<String> = m
                .sizes
                .iter()
                .map(|s| format!("{}:{:.4}", s.n, s.efficiency))
                .collect();
            out.push_str(&format!(
                "{:<12} {:>10.4} {:>8} {}\n",
                m.method,
                m.phi,
                m.evaluations_used,
                effs.join(" ")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ArchDescriptor;
    use crate::backend::SimBackend;
    use crate::space::enumerate;
    use proptest::prelude::*;

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(efficiency(20.0, 10.0).unwrap(), 0.5);
        assert!(efficiency(10.0, 20.0).is_err());
        assert!(efficiency(0.0, 1.0).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!((phi(&[1.0, 0.5]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(phi(&[]).is_err());
        assert!(phi(&[0.0]).is_err());
        assert!(phi(&[1.5]).is_err());
    }

    #[test]
    fn throughput_examples() {
        // FFT at N=1024, one batch, one second.
        let v = throughput(Algorithm::Fft, 1024, 1, 1.0).unwrap();
        assert!((v - 5.12e-5).abs() < 1e-12);
        // A million rows per second is 1 MRows/s.
        let v = throughput(Algorithm::TsCr, 1_000_000, 1, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Round-trip through the published scan figure of 18.72 MData/s.
        let n = 512u32;
        let b = 1u64 << 17;
        let t = n as f64 * b as f64 * 1e-6 / 18.72;
        let v = throughput(Algorithm::ScanLf, n, b, t).unwrap();
        assert!((v - 18.72).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_matches_brute_force_min() {
        let arch = ArchDescriptor::gm20b();
        let space = enumerate(Algorithm::Fft, 256, &arch).unwrap();
        let backend = SimBackend::new(arch);
        let ((_, best_time), map) = exhaustive_search(&space, &backend).unwrap();
        assert_eq!(map.len(), space.len());
        let brute = space
            .candidates
            .iter()
            .filter_map(
                |c| match backend.measure(space.algorithm, space.n_size, c) {
                    Measurement::Value(t) => Some(t),
                    _ => None,
                },
            )
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best_time, brute);
    }

    #[test]
    fn exhaustive_is_order_independent() {
        let arch = ArchDescriptor::gm20b();
        let mut space = enumerate(Algorithm::TsWm, 256, &arch).unwrap();
        let backend = SimBackend::new(arch);
        let ((_, t1), _) = exhaustive_search(&space, &backend).unwrap();
        space.candidates.reverse();
        let ((_, t2), _) = exhaustive_search(&space, &backend).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn single_candidate_space() {
        let arch = ArchDescriptor::gm20b();
        let mut space = enumerate(Algorithm::TsCr, 64, &arch).unwrap();
        space.candidates.truncate(1);
        let backend = SimBackend::new(arch);
        let ((best, _), map) = exhaustive_search(&space, &backend).unwrap();
        assert_eq!(best, space.candidates[0]);
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn oracle_against_itself_scores_one() {
        let effs = vec![1.0; 5];
        assert_eq!(phi(&effs).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn efficiency_algebraic_identity(t in 1e-3f64..1e3, k in 1.0f64..1e3) {
            let e = efficiency(t * k, t).unwrap();
            prop_assert!((e - 1.0 / k).abs() < 1e-12);
        }

        #[test]
        fn phi_permutation_invariant_and_strictly_decreasing(
            mut effs in proptest::collection::vec(0.01f64..=1.0, 1..8),
            seed in any::<u64>()
        ) {
            let base = phi(&effs).unwrap();
            // Harmonic mean never exceeds the arithmetic mean.
            let arith = effs.iter().sum::<f64>() / effs.len() as f64;
            prop_assert!(base <= arith + 1e-12);

            // Permutation invariance.
            let rot = (seed as usize) % effs.len();
            effs.rotate_left(rot);
            prop_assert!((phi(&effs).unwrap() - base).abs() < 1e-12);

            // Strictly decreasing when one efficiency drops.
            let victim = (seed as usize / 7) % effs.len();
            if effs[victim] > 0.02 {
                effs[victim] /= 2.0;
                prop_assert!(phi(&effs).unwrap() < base);
            }
        }
    }
}
