//! Bayesian-optimization search over a finite configuration space: seeded
//! random sampling, a Gaussian-process surrogate, Expected Improvement
//! acquisition and a sliding-window stopping rule.

pub mod gp;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Measurement};
use crate::error::{Error, Result};
use crate::space::{Candidate, SearchSpace};
pub use gp::{expected_improvement, SurrogateModel};

/// Outcome status of one candidate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Invalid,
    Timeout,
}

/// One evaluated candidate. Failed evaluations carry the penalty time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub candidate: Candidate,
    pub time: f64,
    pub status: EvalStatus,
}

/// Why the search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WindowStalled,
    BudgetExhausted,
    SpaceExhausted,
}

/// Full record of one tuning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningRun {
    pub seed: u64,
    pub history: Vec<Evaluation>,
    pub best: Option<(Candidate, f64)>,
    pub stop_reason: StopReason,
    pub evaluations_used: usize,
}

/// Penalty multiplier over the worst successful time.
const PENALTY_FACTOR: f64 = 10.0;
/// Cap on the random seeding phase so guided search keeps most of the
/// budget even on plan-product spaces.
const MAX_SEED_SAMPLE: usize = 16;

/// Encodes a candidate for the surrogate: per kernel
/// (log2(S+1), log2 P, log2 L, log2 r, shuffle), concatenated for plans.
pub fn encode_candidate(candidate: &Candidate) -> Vec<f64> {
    let mut out = Vec::new();
    for cfg in candidate.kernel_configs() {
        out.push((cfg.s_elems as f64 + 1.0).log2());
        out.push((cfg.p_per_thread as f64).log2());
        out.push((cfg.l_threads as f64).log2());
        out.push((cfg.radix as f64).log2());
        out.push(if cfg.shuffle { 1.0 } else { 0.0 });
    }
    out
}

/// Normalizes encodings to [0, 1] per dimension over the space.
fn normalized_encodings(space: &SearchSpace) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = space.candidates.iter().map(encode_candidate).collect();
    if raw.is_empty() {
        return raw;
    }
    let dims = raw[0].len();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for x in &raw {
        for d in 0..dims {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    raw.into_iter()
        .map(|x| {
            x.into_iter()
                .enumerate()
                .map(|(d, v)| {
                    if hi[d] - lo[d] < 1e-12 {
                        0.5
                    } else {
                        (v - lo[d]) / (hi[d] - lo[d])
                    }
                })
                .collect()
        })
        .collect()
}

/// Seeding size: a tenth of the space, at least 3, capped by the budget and
/// by [`MAX_SEED_SAMPLE`].
pub fn initial_sample_size(space_len: usize, budget: usize) -> usize {
    space_len
        .div_ceil(10)
        .max(3)
        .min(budget)
        .min(MAX_SEED_SAMPLE)
        .min(space_len)
}

struct RunState {
    history: Vec<Evaluation>,
    best: Option<(usize, f64)>,
    max_ok_time: f64,
    post_seed_since_improvement: usize,
}

impl RunState {
    fn penalty(&self, backend: &dyn Backend) -> f64 {
        if self.max_ok_time > 0.0 {
            PENALTY_FACTOR * self.max_ok_time
        } else {
            backend.minute_in_units()
        }
    }

    fn record(
        &mut self,
        space: &SearchSpace,
        backend: &dyn Backend,
        index: usize,
        seeding: bool,
    ) {
        let candidate = space.candidates[index].clone();
        let measured = backend.measure(space.algorithm, space.n_size, &candidate);
        let (time, status) = match measured {
            Measurement::Value(t) => (t, EvalStatus::Ok),
            Measurement::Invalid => (self.penalty(backend), EvalStatus::Invalid),
            Measurement::Timeout => (self.penalty(backend), EvalStatus::Timeout),
        };
        let improved = status == EvalStatus::Ok
            && self.best.map(|(_, t)| time < t).unwrap_or(true);
        if improved {
            self.best = Some((index, time));
        }
        if status == EvalStatus::Ok {
            self.max_ok_time = self.max_ok_time.max(time);
        }
        if !seeding {
            if improved {
                self.post_seed_since_improvement = 0;
            } else {
                self.post_seed_since_improvement += 1;
            }
        }
        self.history.push(Evaluation {
            candidate,
            time,
            status,
        });
    }
}

/// Runs the Bayesian-optimization search.
///
/// The run starts from a seeded random sample, then repeatedly fits the
/// surrogate to the whole history (penalized points included, to repel the
/// search) and evaluates the unevaluated candidate with the highest Expected
/// Improvement. It stops when `window` consecutive guided evaluations bring
/// no strict improvement, the budget is used up, or the space is exhausted.
/// Identical inputs and seed reproduce the run exactly.
pub fn tune_bo(
    space: &SearchSpace,
    backend: &dyn Backend,
    budget: usize,
    window: usize,
    seed: u64,
) -> Result<TuningRun> {
    if space.is_empty() {
        return Err(Error::NoFeasibleConfig(format!(
            "empty search space for {} at N={}",
            space.algorithm, space.n_size
        )));
    }
    if window == 0 {
        return Err(Error::Validation("window must be >= 1".into()));
    }
    let seed_n = initial_sample_size(space.len(), budget.max(1));
    if budget < seed_n {
        return Err(Error::Validation(format!(
            "budget {budget} is below the seeding sample size {seed_n}"
        )));
    }

    let encodings = normalized_encodings(space);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.shuffle(&mut rng);

    let mut state = RunState {
        history: Vec::new(),
        best: None,
        max_ok_time: 0.0,
        post_seed_since_improvement: 0,
    };
    let mut evaluated = vec![false; space.len()];
    for &idx in order.iter().take(seed_n) {
        state.record(space, backend, idx, true);
        evaluated[idx] = true;
    }

    let stop_reason = loop {
        if evaluated.iter().all(|&e| e) {
            break StopReason::SpaceExhausted;
        }
        if state.post_seed_since_improvement >= window {
            break StopReason::WindowStalled;
        }
        if state.history.len() >= budget {
            break StopReason::BudgetExhausted;
        }

        let next = select_next(space, &encodings, &state, &evaluated, &mut order, &mut rng);
        state.record(space, backend, next, false);
        evaluated[next] = true;
    };

    let best = state
        .best
        .map(|(idx, time)| (space.candidates[idx].clone(), time));
    let evaluations_used = state.history.len();
    Ok(TuningRun {
        seed,
        history: state.history,
        best,
        stop_reason,
        evaluations_used,
    })
}

fn select_next(
    space: &SearchSpace,
    encodings: &[Vec<f64>],
    state: &RunState,
    evaluated: &[bool],
    order: &mut Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> usize {
    // Train on every observation so penalties repel the search.
    //
    // Single-kernel times are modeled on a log scale: the landscape factors
    // (waves, steps, work, occupancy) multiply, so log-times are nearly
    // additive in the log2 encodings. Plan times stay on the raw scale,
    // where they are additive across passes, matching the summed per-block
    // kernel.
    let blocks = space
        .candidates
        .first()
        .map(|c| c.kernel_count())
        .unwrap_or(1);
    let log_scale = blocks == 1;
    let transform = |t: f64| {
        if log_scale {
            t.max(f64::MIN_POSITIVE).ln()
        } else {
            t
        }
    };
    let mut xs = Vec::with_capacity(state.history.len());
    let mut ys = Vec::with_capacity(state.history.len());
    for eval in &state.history {
        xs.push(encode_normalized(space, encodings, &eval.candidate));
        ys.push(transform(eval.time));
    }
    let ok_count = state
        .history
        .iter()
        .filter(|e| e.status == EvalStatus::Ok)
        .count();

    let block_len = xs[0].len() / blocks;
    let model = if ok_count >= 2 {
        SurrogateModel::fit_blocked(&xs, &ys, block_len).ok()
    } else {
        None
    };

    if let (Some(model), Some((_, best_time))) = (&model, state.best) {
        let best_ref = transform(best_time);
        let mut best_idx = None;
        let mut best_ei = f64::NEG_INFINITY;
        let mut best_mean = f64::INFINITY;
        for idx in 0..space.len() {
            if evaluated[idx] {
                continue;
            }
            let (mean, sd) = model.predict(&encodings[idx]);
            let ei = expected_improvement(mean, sd, best_ref);
            // Ties exploit the lower predicted mean.
            if ei > best_ei + 1e-15 || (ei >= best_ei - 1e-15 && mean < best_mean) {
                best_ei = ei;
                best_mean = mean;
                best_idx = Some(idx);
            }
        }
        if let Some(idx) = best_idx {
            return idx;
        }
    }

    // Fallback: next unevaluated index in the seeded random order.
    order.shuffle(rng);
    order
        .iter()
        .copied()
        .find(|&i| !evaluated[i])
        .expect("caller checked the space is not exhausted")
}

fn encode_normalized(
    space: &SearchSpace,
    encodings: &[Vec<f64>],
    candidate: &Candidate,
) -> Vec<f64> {
    // History candidates always come from the space itself.
    let idx = space
        .candidates
        .iter()
        .position(|c| c == candidate)
        .expect("evaluated candidate belongs to the space");
    encodings[idx].clone()
}
