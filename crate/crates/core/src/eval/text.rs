use serde::{Deserialize, Serialize};

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Longest common subsequence length, O(|x|·|y|) time and O(|y|) space.
pub fn lcs_length<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    let mut prev = vec![0usize; y.len() + 1];
    let mut cur = vec![0usize; y.len() + 1];
    for a in x {
        for (j, b) in y.iter().enumerate() {
            cur[j + 1] = if a == b {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeLScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lcs_len: usize,
    pub cand_len: usize,
    pub ref_len: usize,
    /// Set when either side has no tokens; all ratios are then zero.
    pub degenerate: bool,
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeLScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return RougeLScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            lcs_len: 0,
            cand_len: cand.len(),
            ref_len: refr.len(),
            degenerate: true,
        };
    }
    let lcs = lcs_length(&cand, &refr);
    let precision = lcs as f64 / cand.len() as f64;
    let recall = lcs as f64 / refr.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeLScore {
        precision,
        recall,
        f1,
        lcs_len: lcs,
        cand_len: cand.len(),
        ref_len: refr.len(),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rule() {
        assert_eq!(tokenize("The cat, the CAT!"), ["the", "cat", "the", "cat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a-b c"), ["a", "b", "c"]);
        assert_eq!(tokenize("  --  "), Vec::<String>::new());
    }

    #[test]
    fn lcs_basics() {
        let x = ["a", "b", "c"];
        assert_eq!(lcs_length(&x, &x), 3);
        assert_eq!(lcs_length(&["a", "b"], &["c", "d"]), 0);
        assert_eq!(lcs_length::<&str>(&[], &["a"]), 0);
        assert_eq!(lcs_length(&["a", "b", "c", "b", "d", "a", "b"], &["b", "d", "c", "a", "b", "a"]), 4);
    }

    #[test]
    fn rouge_examples() {
        let s = rouge_l("one two three four five six seven", "one two three four five six seven");
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = rouge_l("a b c d", "a c");
        assert_eq!(s.lcs_len, 2);
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);

        let s = rouge_l("", "a");
        assert!(s.degenerate);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn f1_bounds(a in "[abc ]{0,20}", b in "[abc ]{0,20}") {
            let s = rouge_l(&a, &b);
            prop_assert!(s.lcs_len <= s.cand_len.min(s.ref_len));
            prop_assert!(s.f1 <= (2.0 * s.precision).min(2.0 * s.recall) + 1e-12);
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            if s.precision == s.recall {
                prop_assert!((s.f1 - s.precision).abs() < 1e-12);
            }
        }
    }
}
