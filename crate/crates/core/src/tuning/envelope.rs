use rayon::prelude::*;

use super::{Hypothesis, Objective, SufficientStats};

/// Upper envelope of lines `y = a + b x` given as `(a, b)`. Returns the
/// optimal line for each region as `(start, index)`, the first region
/// starting at negative infinity. Identical lines resolve to the lowest
/// index.
pub fn upper_envelope(lines: &[(f64, f64)]) -> Vec<(f64, usize)> {
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&x, &y| {
        let (ax, bx) = lines[x];
        let (ay, by) = lines[y];
        bx.total_cmp(&by).then(ay.total_cmp(&ax)).then(x.cmp(&y))
    });
    order.dedup_by(|later, earlier| lines[*later].1 == lines[*earlier].1);
    let mut hull: Vec<(f64, usize)> = Vec::with_capacity(order.len());
    for k in order {
        let (a, b) = lines[k];
        let mut start = f64::NEG_INFINITY;
        while let Some(&(top_start, top)) = hull.last() {
            let (ta, tb) = lines[top];
            // slopes strictly increase along the hull
            let x = (ta - a) / (b - tb);
            if x <= top_start {
                hull.pop();
            } else {
                start = x;
                break;
            }
        }
        hull.push((start, k));
    }
    hull
}

/// Exact line search along `direction` from `base`.
///
/// Every hypothesis score is linear in the step, so each sentence's 1-best
/// changes only at its envelope boundaries. Statistics are swept across
/// the merged boundaries and the objective is evaluated once per interval.
/// The best interval wins (ties: smallest `|step|`); the step returned is
/// zero when that interval contains zero, else its midpoint, or one unit
/// past the last boundary for an unbounded interval.
pub fn line_search(pool: &[Vec<Hypothesis>], base: &[f64], direction: &[f64], objective: Objective) -> (f64, f64) {
    let dot = |f: &[f64], w: &[f64]| -> f64 { f.iter().zip(w).map(|(a, b)| a * b).sum() };
    let per_sentence: Vec<(SufficientStats, Vec<(f64, SufficientStats)>)> = pool
        .par_iter()
        .filter(|h| !h.is_empty())
        .map(|hyps| {
            let lines: Vec<(f64, f64)> = hyps
                .iter()
                .map(|h| (dot(&h.features, base), dot(&h.features, direction)))
                .collect();
            let env = upper_envelope(&lines);
            let first = hyps[env[0].1].stats.clone();
            let deltas = env
                .windows(2)
                .map(|w| {
                    let mut d = hyps[w[1].1].stats.clone();
                    d.sub(&hyps[w[0].1].stats);
                    (w[1].0, d)
                })
                .collect();
            (first, deltas)
        })
        .collect();
    let Some(len) = per_sentence.first().map(|(s, _)| s.0.len()) else {
        return (0.0, 0.0);
    };
    let mut stats = SufficientStats::zeros(len);
    let mut events: Vec<(f64, &SufficientStats)> = Vec::new();
    for (first, deltas) in &per_sentence {
        stats.add(first);
        events.extend(deltas.iter().map(|(x, d)| (*x, d)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let represent = |lo: f64, hi: f64| -> f64 {
        if lo < 0.0 && 0.0 < hi {
            0.0
        } else if lo == f64::NEG_INFINITY {
            hi - 1.0
        } else if hi == f64::INFINITY {
            lo + 1.0
        } else {
            0.5 * (lo + hi)
        }
    };
    let mut best_step = 0.0f64;
    let mut best_value = f64::NEG_INFINITY;
    let mut consider = |lo: f64, hi: f64, value: f64| {
        if lo == hi {
            return;
        }
        let step = represent(lo, hi);
        if value > best_value || (value == best_value && step.abs() < best_step.abs()) {
            best_value = value;
            best_step = step;
        }
    };
    let mut lo = f64::NEG_INFINITY;
    let mut k = 0;
    while k < events.len() {
        let x = events[k].0;
        consider(lo, x, objective.score(&stats));
        while k < events.len() && events[k].0 == x {
            stats.add(events[k].1);
            k += 1;
        }
        lo = x;
    }
    consider(lo, f64::INFINITY, objective.score(&stats));
    (best_step, best_value)
}
