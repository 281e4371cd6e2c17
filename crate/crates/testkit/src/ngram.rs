//! Brute-force next-symbol distribution by scanning the whole sequence.

use std::collections::BTreeMap;

/// Counts of symbols that follow occurrences of the longest suffix of `recent`
/// (at most `k` long) that occurs somewhere in `seq` followed by a symbol.
/// Returns the suffix length used and the follower counts.
pub fn follower_counts(seq: &[String], recent: &[String], k: usize) -> Option<(usize, BTreeMap<String, u64>)> {
    let longest = k.min(recent.len());
    for len in (0..=longest).rev() {
        let pattern = &recent[recent.len() - len..];
        let mut counts = BTreeMap::new();
        for end in len..seq.len() {
            if &seq[end - len..end] == pattern {
                *counts.entry(seq[end].clone()).or_insert(0u64) += 1;
            }
        }
        if !counts.is_empty() {
            return Some((len, counts));
        }
    }
    None
}

/// Distribution sorted by descending probability, ties by symbol.
pub fn distribution(seq: &[String], recent: &[String], k: usize) -> Vec<(String, f64)> {
    let Some((_, counts)) = follower_counts(seq, recent, k) else {
        return Vec::new();
    };
    let total: u64 = counts.values().sum();
    let mut out: Vec<(String, u64)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.into_iter().map(|(s, c)| (s, c as f64 / total as f64)).collect()
}
