//! Multi-start maximization over a box.

use nalgebra::DVector;
use rayon::prelude::*;

use super::cobyla::{cobyla_minimize, CobylaConfig, Evaluation};
use crate::error::{PlsError, Result};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone)]
pub struct MultistartOutcome {
    pub argmax: DVector<f64>,
    pub value: f64,
    /// Index into [`start_points`] of the winning start.
    pub start_index: usize,
    pub evaluations: usize,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Box centre first, then distinct corners: all of them in enumeration order
/// for `k <= 2`, otherwise corners picked by thresholding a Halton sequence.
pub fn start_points(bounds: &[(f64, f64)], starts: usize) -> Vec<DVector<f64>> {
    let k = bounds.len();
    let center = DVector::from_fn(k, |i, _| 0.5 * (bounds[i].0 + bounds[i].1));
    let mut out = vec![center];
    let corner = |bits: &dyn Fn(usize) -> bool| {
        DVector::from_fn(k, |i, _| if bits(i) { bounds[i].1 } else { bounds[i].0 })
    };
    let push = |p: DVector<f64>, out: &mut Vec<DVector<f64>>| {
        if !out.contains(&p) {
            out.push(p);
        }
    };
    if k <= 2 {
        for mask in 0..(1usize << k) {
            if out.len() >= starts {
                break;
            }
            push(corner(&|i| mask >> i & 1 == 1), &mut out);
        }
    } else {
        let mut j = 1u64;
        while out.len() < starts && j < 64 * starts as u64 {
            let bits = |i: usize| radical_inverse(j, u64::from(PRIMES[i % PRIMES.len()])) >= 0.5;
            push(corner(&bits), &mut out);
            j += 1;
        }
    }
    out.truncate(starts.max(1));
    out
}

/// Maximizes `objective` over `bounds` by running COBYLA on its negation from
/// each of [`start_points`]. Starts run in parallel; the best value wins, ties
/// going to the earliest start.
pub fn multistart_box_maximize<F>(
    objective: F,
    bounds: &[(f64, f64)],
    starts: usize,
    config: &CobylaConfig,
) -> Result<MultistartOutcome>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    if bounds.is_empty() {
        return Err(PlsError::invalid("multistart", "empty box"));
    }
    if starts == 0 {
        return Err(PlsError::invalid("multistart", "need at least one start"));
    }
    let points = start_points(bounds, starts);
    let runs: Vec<Result<_>> = points
        .par_iter()
        .map(|s| {
            cobyla_minimize(
                |x| {
                    Ok(Evaluation {
                        objective: -objective(x)?,
                        constraints: Vec::new(),
                    })
                },
                0,
                s,
                bounds,
                config,
            )
        })
        .collect();
    let mut best: Option<MultistartOutcome> = None;
    let mut evaluations = 0;
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        evaluations += run.evaluations;
        let mut value = -run.value;
        // bounds hold only to the feasibility tolerance; report a point inside the box
        let clamped = DVector::from_fn(bounds.len(), |j, _| run.argmin[j].clamp(bounds[j].0, bounds[j].1));
        if clamped != run.argmin {
            value = objective(&clamped)?;
            evaluations += 1;
        }
        if best.as_ref().map_or(true, |b| value > b.value) {
            best = Some(MultistartOutcome {
                argmax: clamped,
                value,
                start_index: i,
                evaluations: 0,
            });
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    Ok(best)
}
