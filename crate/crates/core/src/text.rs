//! Small text helpers shared by the embedder, the entity linker and the
//! dataset deduplicator.

use std::collections::BTreeSet;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_seeded(FNV_OFFSET, bytes)
}

/// FNV-1a continuing from an arbitrary starting state.
pub fn fnv1a64_seeded(state: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn alnum_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Character trigrams of `token` padded with `^` and `$`.
pub fn padded_trigrams(token: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('^')
        .chain(token.chars())
        .chain(std::iter::once('$'))
        .collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Lowercase, collapse internal whitespace, trim.
pub fn normalize_label(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Distinct padded trigrams of a normalized label.
pub fn trigram_set(text: &str) -> BTreeSet<String> {
    padded_trigrams(&normalize_label(text)).into_iter().collect()
}

/// Jaccard coefficient of two sets; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Character count, which is the unit every length limit in this crate uses.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by character offsets. Returns `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut offsets = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let begin = offsets.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        offsets.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn trigrams_are_padded() {
        assert_eq!(padded_trigrams("ab"), vec!["^ab", "ab$"]);
        assert_eq!(padded_trigrams("a"), vec!["^a$"]);
        assert!(padded_trigrams("").is_empty());
    }

    #[test]
    fn char_slice_handles_multibyte() {
        let s = "保険。abc";
        assert_eq!(char_slice(s, 0, 2), Some("保険"));
        assert_eq!(char_slice(s, 2, 3), Some("。"));
        assert_eq!(char_slice(s, 3, 6), Some("abc"));
        assert_eq!(char_slice(s, 6, 6), Some(""));
        assert_eq!(char_slice(s, 5, 7), None);
    }

    #[test]
    fn jaccard_basics() {
        let a: BTreeSet<_> = [1, 2, 3].into();
        let b: BTreeSet<_> = [2, 3, 4].into();
        assert!((jaccard(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(jaccard::<u8>(&BTreeSet::new(), &BTreeSet::new()), 1.0);
    }
}
