/// Levenshtein distance with the operation counts of one optimal path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditOps {
    pub distance: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
}

/// Edits turning `source` into `target`. The traceback runs from the end
/// and prefers substitution (or match) over deletion over insertion.
pub fn edit_ops<T: PartialEq>(source: &[T], target: &[T]) -> EditOps {
    let (n, m) = (source.len(), target.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        d[i * width] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(source[i - 1] != target[j - 1]);
            d[i * width + j] = (d[(i - 1) * width + j - 1] + cost)
                .min(d[(i - 1) * width + j] + 1)
                .min(d[i * width + j - 1] + 1);
        }
    }
    let mut ops = EditOps {
        distance: d[n * width + m],
        ..EditOps::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let cost = usize::from(source[i - 1] != target[j - 1]);
            if d[(i - 1) * width + j - 1] + cost == here {
                ops.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * width + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

/// Character-level edits between space-joined token sequences.
pub fn char_edit_ops<S: AsRef<str>>(source: &[S], target: &[S]) -> EditOps {
    let join = |t: &[S]| -> Vec<char> {
        t.iter()
            .map(AsRef::as_ref)
            .collect::<Vec<&str>>()
            .join(" ")
            .chars()
            .collect()
    };
    edit_ops(&join(source), &join(target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sequences_have_no_edits() {
        assert_eq!(edit_ops(&["a", "b"], &["a", "b"]), EditOps::default());
    }

    #[test]
    fn transposed_letters_prefer_two_substitutions() {
        let ops = char_edit_ops(&["teh"], &["the"]);
        assert_eq!(
            ops,
            EditOps {
                distance: 2,
                insertions: 0,
                deletions: 0,
                substitutions: 2
            }
        );
    }

    #[test]
    fn dropped_word_is_one_deletion() {
        let ops = edit_ops(&["a", "b"], &["b"]);
        assert_eq!((ops.distance, ops.deletions, ops.insertions, ops.substitutions), (1, 1, 0, 0));
        let ops = edit_ops(&["b"], &["a", "b"]);
        assert_eq!((ops.distance, ops.insertions), (1, 1));
    }

    proptest! {
        #[test]
        fn counts_add_up_to_distance(a in proptest::collection::vec(0u8..4, 0..8), b in proptest::collection::vec(0u8..4, 0..8)) {
            let ops = edit_ops(&a, &b);
            prop_assert_eq!(ops.insertions + ops.deletions + ops.substitutions, ops.distance);
            // lengths: |b| = |a| - del + ins
            prop_assert_eq!(b.len() + ops.deletions, a.len() + ops.insertions);
            prop_assert!(ops.distance <= a.len().max(b.len()));
        }
    }
}
