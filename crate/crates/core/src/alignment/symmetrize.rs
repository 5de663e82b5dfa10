use super::ibm2::{train_aligner, AlignerConfig, AlignmentModel};
use super::{AlignedPair, Links};
use crate::corpus::Sentence;
use crate::error::Result;

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// Grow-diag-final-and symmetrization. `forward` and `backward` are both
/// given as `(source, target)` links.
pub fn grow_diag_final_and(n_src: usize, n_tgt: usize, forward: &Links, backward: &Links) -> Links {
    let union: Links = forward.union(backward).copied().collect();
    let mut links: Links = forward.intersection(backward).copied().collect();
    let mut src_aligned = vec![false; n_src];
    let mut tgt_aligned = vec![false; n_tgt];
    for &(i, j) in &links {
        src_aligned[i] = true;
        tgt_aligned[j] = true;
    }
    loop {
        let mut added = false;
        for i in 0..n_src {
            for j in 0..n_tgt {
                if !links.contains(&(i, j)) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (Some(ni), Some(nj)) = (i.checked_add_signed(di), j.checked_add_signed(dj))
                    else {
                        continue;
                    };
                    if ni >= n_src || nj >= n_tgt {
                        continue;
                    }
                    if (!src_aligned[ni] || !tgt_aligned[nj])
                        && union.contains(&(ni, nj))
                        && links.insert((ni, nj))
                    {
                        src_aligned[ni] = true;
                        tgt_aligned[nj] = true;
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }
    for direction in [forward, backward] {
        for &(i, j) in direction {
            if !src_aligned[i] && !tgt_aligned[j] {
                links.insert((i, j));
                src_aligned[i] = true;
                tgt_aligned[j] = true;
            }
        }
    }
    links
}

/// Models for both directions.
#[derive(Clone, Debug)]
pub struct SymmetricAligner {
    /// Generates target words from source words.
    pub forward: AlignmentModel,
    /// Generates source words from target words.
    pub backward: AlignmentModel,
}

impl SymmetricAligner {
    pub fn align(&self, source: &Sentence, target: &Sentence) -> AlignedPair {
        let fwd = self.forward.align(source, target);
        let bwd: Links = self
            .backward
            .align(target, source)
            .into_iter()
            .map(|(j, i)| (i, j))
            .collect();
        AlignedPair {
            links: grow_diag_final_and(source.len(), target.len(), &fwd, &bwd),
            source: source.clone(),
            target: target.clone(),
        }
    }

    pub fn align_all(&self, pairs: &[(Sentence, Sentence)]) -> Vec<AlignedPair> {
        use rayon::prelude::*;
        pairs.par_iter().map(|(s, t)| self.align(s, t)).collect()
    }
}

pub fn train_symmetric(
    pairs: &[(Sentence, Sentence)],
    cfg: &AlignerConfig,
) -> Result<SymmetricAligner> {
    let forward = train_aligner(pairs, cfg)?;
    let flipped: Vec<(Sentence, Sentence)> =
        pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
    let backward = train_aligner(&flipped, cfg)?;
    Ok(SymmetricAligner { forward, backward })
}
