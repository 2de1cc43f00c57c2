//! PrefixSpan frequent-subsequence mining over sequences of single items.

use std::collections::BTreeMap;

/// A frequent subsequence and the number of database sequences containing it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pattern<T> {
    pub tokens: Vec<T>,
    pub support: usize,
}

/// All subsequences (order-preserving, not necessarily contiguous) with support
/// `>= min_support` and length `<= max_len`.
///
/// Output is sorted by support descending, then length descending, then tokens
/// lexicographically ascending.
pub fn prefixspan<T: Ord + Clone>(db: &[Vec<T>], min_support: usize, max_len: usize) -> Vec<Pattern<T>> {
    let min_support = min_support.max(1);
    let mut out = Vec::new();
    if max_len == 0 {
        return out;
    }
    // Projected database: (sequence index, start offset of the suffix).
    let projection: Vec<(usize, usize)> = (0..db.len()).map(|i| (i, 0)).collect();
    let mut prefix = Vec::new();
    grow(db, &projection, &mut prefix, min_support, max_len, &mut out);
    sort_patterns(&mut out);
    out
}

pub fn sort_patterns<T: Ord>(patterns: &mut [Pattern<T>]) {
    patterns.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.tokens.len().cmp(&a.tokens.len()))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

fn grow<T: Ord + Clone>(
    db: &[Vec<T>],
    projection: &[(usize, usize)],
    prefix: &mut Vec<T>,
    min_support: usize,
    max_len: usize,
    out: &mut Vec<Pattern<T>>,
) {
    // For each item, the projected suffixes that follow its first occurrence.
    let mut extensions: BTreeMap<&T, Vec<(usize, usize)>> = BTreeMap::new();
    for &(seq, start) in projection {
        let suffix = &db[seq][start..];
        let mut seen: Vec<&T> = Vec::new();
        for (off, item) in suffix.iter().enumerate() {
            if seen.contains(&item) {
                continue;
            }
            seen.push(item);
            extensions.entry(item).or_default().push((seq, start + off + 1));
        }
    }
    for (item, proj) in extensions {
        if proj.len() < min_support {
            continue;
        }
        prefix.push(item.clone());
        out.push(Pattern {
            tokens: prefix.clone(),
            support: proj.len(),
        });
        if prefix.len() < max_len {
            grow(db, &proj, prefix, min_support, max_len, out);
        }
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn is_subsequence<T: PartialEq>(pattern: &[T], seq: &[T]) -> bool {
        let mut it = seq.iter();
        pattern.iter().all(|p| it.any(|s| s == p))
    }

    /// Enumerate every subsequence of every sequence (by index subsets) and count support.
    fn brute_force(db: &[Vec<u8>], min_support: usize, max_len: usize) -> Vec<Pattern<u8>> {
        let mut candidates: BTreeMap<Vec<u8>, ()> = BTreeMap::new();
        for seq in db {
            let n = seq.len();
            for mask in 1u32..(1 << n) {
                if mask.count_ones() as usize > max_len {
                    continue;
                }
                let sub: Vec<u8> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| seq[i]).collect();
                candidates.insert(sub, ());
            }
        }
        let mut out: Vec<Pattern<u8>> = candidates
            .into_keys()
            .map(|c| {
                let support = db.iter().filter(|s| is_subsequence(&c, s)).count();
                Pattern { tokens: c, support }
            })
            .filter(|p| p.support >= min_support)
            .collect();
        sort_patterns(&mut out);
        out
    }

    #[test]
    fn small_example() {
        let (a, b, c) = ('a', 'b', 'c');
        let db = vec![vec![a, b], vec![a, b], vec![a, c]];
        let got = prefixspan(&db, 2, 4);
        let expect = vec![
            Pattern { tokens: vec![a], support: 3 },
            Pattern { tokens: vec![a, b], support: 2 },
            Pattern { tokens: vec![b], support: 2 },
        ];
        assert_eq!(got, expect);
    }

    #[test]
    fn support_above_database_size_is_empty() {
        let db = vec![vec![1, 2], vec![2, 3]];
        assert!(prefixspan(&db, 3, 4).is_empty());
    }

    #[test]
    fn single_sequence_all_short_subsequences() {
        let db = vec![vec![1u8, 2, 3]];
        let got = prefixspan(&db, 1, 2);
        assert_eq!(got, brute_force(&db, 1, 2));
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn repeated_items_count_once_per_sequence() {
        let db = vec![vec![1u8, 1, 1], vec![1]];
        let got = prefixspan(&db, 1, 3);
        assert_eq!(got, brute_force(&db, 1, 3));
        assert_eq!(got[0], Pattern { tokens: vec![1], support: 2 });
    }

    #[test]
    fn empty_database() {
        let db: Vec<Vec<u8>> = Vec::new();
        assert!(prefixspan(&db, 1, 3).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn database() -> impl Strategy<Value = Vec<Vec<u8>>> {
            prop::collection::vec(prop::collection::vec(0u8..5, 0..=6), 0..=8)
        }

        proptest! {
            #[test]
            fn equals_brute_force(db in database(), min_support in 1usize..=3, max_len in 1usize..=6) {
                prop_assert_eq!(prefixspan(&db, min_support, max_len), brute_force(&db, min_support, max_len));
            }

            #[test]
            fn support_is_antimonotone(db in database(), min_support in 1usize..=3) {
                let pats = prefixspan(&db, min_support, 6);
                let lookup: BTreeMap<Vec<u8>, usize> = pats.iter().map(|p| (p.tokens.clone(), p.support)).collect();
                for p in &pats {
                    for k in 1..p.tokens.len() {
                        let prefix_support = lookup[&p.tokens[..k].to_vec()];
                        prop_assert!(prefix_support >= p.support);
                    }
                }
            }
        }
    }
}
