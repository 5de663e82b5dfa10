use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Edit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxMatchConfig {
    /// Unchanged tokens a merged edit may span when it reproduces a gold
    /// edit. Merges of adjacent changes need no unchanged tokens.
    pub max_unchanged: usize,
}

impl Default for MaxMatchConfig {
    fn default() -> Self {
        MaxMatchConfig { max_unchanged: 2 }
    }
}

/// Best suffix decomposition from one lattice node.
#[derive(Clone)]
struct Best {
    overlap: usize,
    edits: Vec<Edit>,
}

impl Best {
    /// `Less` means `self` is preferred: more gold overlap, then fewer
    /// edits, then the lexicographically smaller (leftmost) edit list.
    fn rank(&self, other: &Best) -> Ordering {
        other
            .overlap
            .cmp(&self.overlap)
            .then(self.edits.len().cmp(&other.edits.len()))
            .then_with(|| self.edits.cmp(&other.edits))
    }
}

struct Lattice<'a> {
    src: &'a [String],
    hyp: &'a [String],
    fwd: Vec<usize>,
    on: Vec<bool>,
    width: usize,
}

impl<'a> Lattice<'a> {
    fn new(src: &'a [String], hyp: &'a [String]) -> Self {
        let (n, m) = (src.len(), hyp.len());
        let width = m + 1;
        let idx = |i: usize, j: usize| i * width + j;
        let mut fwd = vec![0usize; (n + 1) * width];
        let mut bwd = vec![0usize; (n + 1) * width];
        for i in 0..=n {
            for j in 0..=m {
                fwd[idx(i, j)] = if i == 0 {
                    j
                } else if j == 0 {
                    i
                } else {
                    let c = usize::from(src[i - 1] != hyp[j - 1]);
                    (fwd[idx(i - 1, j - 1)] + c)
                        .min(fwd[idx(i - 1, j)] + 1)
                        .min(fwd[idx(i, j - 1)] + 1)
                };
            }
        }
        for i in (0..=n).rev() {
            for j in (0..=m).rev() {
                bwd[idx(i, j)] = if i == n {
                    m - j
                } else if j == m {
                    n - i
                } else {
                    let c = usize::from(src[i] != hyp[j]);
                    (bwd[idx(i + 1, j + 1)] + c)
                        .min(bwd[idx(i + 1, j)] + 1)
                        .min(bwd[idx(i, j + 1)] + 1)
                };
            }
        }
        let total = fwd[idx(n, m)];
        let on = fwd.iter().zip(&bwd).map(|(f, b)| f + b == total).collect();
        Lattice {
            src,
            hyp,
            fwd,
            on,
            width,
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    /// Lattice steps out of `(i, j)`: `(i', j', is_match)`.
    fn steps(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        let (n, m) = (self.src.len(), self.hyp.len());
        let here = self.fwd[self.idx(i, j)];
        let mut out: [Option<(usize, usize, bool)>; 3] = [None; 3];
        if i < n && j < m {
            let same = self.src[i] == self.hyp[j];
            out[0] = Some((i + 1, j + 1, same));
        }
        if i < n {
            out[1] = Some((i + 1, j, false));
        }
        if j < m {
            out[2] = Some((i, j + 1, false));
        }
        out.into_iter().flatten().filter(move |&(a, b, same)| {
            let cost = usize::from(!same);
            self.on[self.idx(a, b)] && self.fwd[self.idx(a, b)] == here + cost
        })
    }

    /// Fewest unchanged tokens on any lattice path from `(i, j)` to
    /// `(ti, tj)`, or `None` when unreachable.
    fn min_matches(&self, i: usize, j: usize, ti: usize, tj: usize) -> Option<usize> {
        let w = tj - j + 1;
        let mut best = vec![None::<usize>; (ti - i + 1) * w];
        best[0] = Some(0);
        for a in i..=ti {
            for b in j..=tj {
                let Some(here) = best[(a - i) * w + (b - j)] else {
                    continue;
                };
                for (na, nb, same) in self.steps(a, b) {
                    if na > ti || nb > tj {
                        continue;
                    }
                    let slot = &mut best[(na - i) * w + (nb - j)];
                    let v = here + usize::from(same);
                    if slot.map_or(true, |s| v < s) {
                        *slot = Some(v);
                    }
                }
            }
        }
        best[(ti - i) * w + (tj - j)]
    }
}

fn popcount(mask: u64) -> usize {
    mask.count_ones() as usize
}

/// Edits turning `source` into `hypothesis` that agree with `gold` as much
/// as possible.
///
/// Candidates come from minimal-cost Levenshtein paths. Any run of
/// adjacent changes on a path may form one edit; a span that also covers
/// up to `max_unchanged` unchanged tokens is allowed only when it equals a
/// gold edit. Among all decompositions the one with the most distinct gold
/// edits wins, then the one with fewer edits, then the leftmost.
///
/// The only edits that can repeat on one path are insertions at the same
/// source position, so each node keeps two optima: any suffix, and the
/// best suffix that does not open with an insertion. Runs of insertions
/// are decomposed as a group, counting each gold insertion once.
pub fn extract_system_edits(
    source: &[String],
    hypothesis: &[String],
    gold: &[Edit],
    cfg: &MaxMatchConfig,
) -> Vec<Edit> {
    let lat = Lattice::new(source, hypothesis);
    let (n, m) = (source.len(), hypothesis.len());
    let gold_set: HashSet<&Edit> = gold.iter().filter(|g| !g.is_noop(source)).collect();
    let mut by_start: Vec<Vec<&Edit>> = vec![Vec::new(); n + 1];
    // gold insertions per position, indexed for the bitmask below
    let mut insertions: Vec<Vec<&Edit>> = vec![Vec::new(); n + 1];
    for g in &gold_set {
        if g.start <= g.end && g.end <= n {
            by_start[g.start].push(g);
            if g.start == g.end && insertions[g.start].len() < 64 {
                insertions[g.start].push(g);
            }
        }
    }
    let size = (n + 1) * (m + 1);
    let mut any: Vec<Option<Best>> = vec![None; size];
    let mut no_ins: Vec<Option<Best>> = vec![None; size];
    let end = Best {
        overlap: 0,
        edits: Vec::new(),
    };
    any[lat.idx(n, m)] = Some(end.clone());
    no_ins[lat.idx(n, m)] = Some(end);
    let offer = |slot: &mut Option<Best>, cand: Best| {
        if slot.as_ref().map_or(true, |h| cand.rank(h) == Ordering::Less) {
            *slot = Some(cand);
        }
    };
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            if (i, j) == (n, m) || !lat.on[lat.idx(i, j)] {
                continue;
            }
            let mut here: Option<Best> = None;
            let via_edit = |ti: usize, tj: usize, any: &[Option<Best>]| -> Option<Best> {
                let next = any[lat.idx(ti, tj)].as_ref()?;
                let edit = Edit {
                    start: i,
                    end: ti,
                    replacement: hypothesis[j..tj].to_vec(),
                };
                let hit = usize::from(gold_set.contains(&edit));
                let mut edits = Vec::with_capacity(next.edits.len() + 1);
                edits.push(edit);
                edits.extend(next.edits.iter().cloned());
                Some(Best {
                    overlap: next.overlap + hit,
                    edits,
                })
            };
            // unchanged token
            if i < n && j < m && source[i] == hypothesis[j] && lat.on[lat.idx(i + 1, j + 1)] {
                if let Some(b) = &any[lat.idx(i + 1, j + 1)] {
                    offer(&mut here, b.clone());
                }
            }
            // runs of changes that consume source tokens
            let mut seen = HashSet::new();
            let mut frontier: Vec<(usize, usize)> = vec![(i, j)];
            while let Some((a, b)) = frontier.pop() {
                for (na, nb, same) in lat.steps(a, b) {
                    if same || !seen.insert((na, nb)) {
                        continue;
                    }
                    frontier.push((na, nb));
                    if na > i {
                        if let Some(c) = via_edit(na, nb, &any) {
                            offer(&mut here, c);
                        }
                    }
                }
            }
            // gold spans covering unchanged tokens
            for g in &by_start[i] {
                let (ti, tj) = (g.end, j + g.replacement.len());
                if ti == i || tj > m || hypothesis[j..tj] != g.replacement[..] || seen.contains(&(ti, tj)) {
                    continue;
                }
                if !lat.on[lat.idx(ti, tj)] {
                    continue;
                }
                if lat.min_matches(i, j, ti, tj).is_some_and(|k| k <= cfg.max_unchanged) {
                    if let Some(c) = via_edit(ti, tj, &any) {
                        offer(&mut here, c);
                    }
                }
            }
            no_ins[lat.idx(i, j)] = here.clone();

            // runs of insertions at position i, split into pieces; each
            // state is (end of run, gold insertions used) -> best pieces
            let gold_ins = &insertions[i];
            let mut states: Vec<std::collections::HashMap<u64, Vec<Edit>>> = vec![Default::default(); m + 1];
            states[j].insert(0, Vec::new());
            let mut reach = j;
            while reach < m && lat.steps(i, reach).any(|(a, b, _)| (a, b) == (i, reach + 1)) {
                reach += 1;
            }
            for p in j..reach {
                let current: Vec<(u64, Vec<Edit>)> = states[p].iter().map(|(k, v)| (*k, v.clone())).collect();
                for (mask, pieces) in current {
                    for q in p + 1..=reach {
                        let edit = Edit {
                            start: i,
                            end: i,
                            replacement: hypothesis[p..q].to_vec(),
                        };
                        let bit = gold_ins.iter().position(|g| **g == edit).map_or(0, |k| 1u64 << k);
                        let mut next = pieces.clone();
                        next.push(edit);
                        let slot = states[q].entry(mask | bit).or_insert_with(|| next.clone());
                        if next.len() < slot.len() || (next.len() == slot.len() && next < *slot) {
                            *slot = next;
                        }
                    }
                }
            }
            for (q, by_mask) in states.iter().enumerate().take(reach + 1).skip(j + 1) {
                let Some(rest) = &no_ins[lat.idx(i, q)] else {
                    continue;
                };
                for (mask, pieces) in by_mask {
                    let mut edits = pieces.clone();
                    edits.extend(rest.edits.iter().cloned());
                    offer(
                        &mut here,
                        Best {
                            overlap: popcount(*mask) + rest.overlap,
                            edits,
                        },
                    );
                }
            }
            any[lat.idx(i, j)] = here;
        }
    }
    any[0].take().map(|b| b.edits).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn run(src: &str, hyp: &str, gold: &[Edit]) -> Vec<Edit> {
        extract_system_edits(&t(src), &t(hyp), gold, &MaxMatchConfig::default())
    }

    #[test]
    fn identical_sentences_have_no_edits() {
        assert!(run("a b c", "a b c", &[Edit::new(0, 1, &["x"])]).is_empty());
    }

    #[test]
    fn single_substitution_matches_gold() {
        let gold = [Edit::new(1, 2, &["goes"])];
        assert_eq!(run("He go home", "He goes home", &gold), gold.to_vec());
    }

    #[test]
    fn merged_edit_chosen_when_gold() {
        let gold = [Edit::new(1, 2, &["c", "d"])];
        assert_eq!(run("a b", "a c d", &gold), gold.to_vec());
    }

    #[test]
    fn split_edits_chosen_when_gold() {
        let gold = [Edit::new(1, 2, &["x"]), Edit::new(2, 3, &["y"])];
        assert_eq!(run("a b c", "a x y", &gold), gold.to_vec());
        // without gold the run collapses into one edit
        assert_eq!(run("a b c", "a x y", &[]), vec![Edit::new(1, 3, &["x", "y"])]);
    }

    #[test]
    fn gold_span_over_unchanged_token() {
        let gold = [Edit::new(0, 2, &["x", "y"])];
        assert_eq!(run("x b", "x y", &gold), gold.to_vec());
        assert_eq!(run("x b", "x y", &[]), vec![Edit::new(1, 2, &["y"])]);
    }

    #[test]
    fn deletion_and_insertion() {
        assert_eq!(run("a the b", "a b", &[]), vec![Edit::new(1, 2, &[])]);
        assert_eq!(run("a b", "a the b", &[]), vec![Edit::new(1, 1, &["the"])]);
    }
}
