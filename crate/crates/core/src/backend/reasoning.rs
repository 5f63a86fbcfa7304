//! Splitting `<think>...</think>` reasoning traces from final answers.

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningOutput {
    pub trace: String,
    pub final_answer: String,
    pub raw: String,
    pub completion_tokens: u64,
}

/// Splits model output on the first delimiter pair.
///
/// - `<think>T</think> A` gives trace `T` and answer `A` (leading whitespace
///   of `A` removed, `T` trimmed).
/// - No delimiters: the whole text is the answer.
/// - An opening tag without a close: everything after it is trace and the
///   answer is empty.
/// - A closing tag without an opening tag (templates that pre-fill `<think>`):
///   the text before it is trace.
///
/// Non-blank text before the opening tag is kept at the front of the trace.
pub fn split_reasoning(text: &str) -> ReasoningOutput {
    let open = text.find(THINK_OPEN);
    let close_after = |from: usize| text[from..].find(THINK_CLOSE).map(|i| i + from);
    let (trace, answer) = match open {
        Some(o) => {
            let inner_start = o + THINK_OPEN.len();
            let prefix = text[..o].trim();
            match close_after(inner_start) {
                Some(c) => (
                    join_trace(prefix, &text[inner_start..c]),
                    text[c + THINK_CLOSE.len()..].trim_start(),
                ),
                None => (join_trace(prefix, &text[inner_start..]), ""),
            }
        }
        None => match text.find(THINK_CLOSE) {
            Some(c) => (
                text[..c].trim().to_string(),
                text[c + THINK_CLOSE.len()..].trim_start(),
            ),
            None => (String::new(), text),
        },
    };
    ReasoningOutput {
        trace,
        final_answer: answer.to_string(),
        raw: text.to_string(),
        completion_tokens: 0,
    }
}

fn join_trace(prefix: &str, inner: &str) -> String {
    let inner = inner.trim();
    match (prefix.is_empty(), inner.is_empty()) {
        (true, _) => inner.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}\n{inner}"),
    }
}

/// Number of maximal whitespace-separated chunks.
pub fn count_tokens_proxy(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delimited() {
        let r = split_reasoning("<think>abc</think>\nX");
        assert_eq!((r.trace.as_str(), r.final_answer.as_str()), ("abc", "X"));
        assert_eq!(r.raw, "<think>abc</think>\nX");
    }

    #[test]
    fn plain() {
        let r = split_reasoning("plain answer");
        assert_eq!((r.trace.as_str(), r.final_answer.as_str()), ("", "plain answer"));
    }

    #[test]
    fn unbalanced_open() {
        let r = split_reasoning("<think>abc");
        assert_eq!((r.trace.as_str(), r.final_answer.as_str()), ("abc", ""));
    }

    #[test]
    fn orphan_close() {
        let r = split_reasoning("thinking...</think> [1]");
        assert_eq!((r.trace.as_str(), r.final_answer.as_str()), ("thinking...", "[1]"));
    }

    #[test]
    fn only_first_pair_is_trace() {
        let r = split_reasoning("<think>a</think>b<think>c</think>");
        assert_eq!(r.trace, "a");
        assert_eq!(r.final_answer, "b<think>c</think>");
    }

    #[test]
    fn proxy_counts() {
        assert_eq!(count_tokens_proxy(""), 0);
        assert_eq!(count_tokens_proxy("a  b\tc"), 3);
        let thousand = vec!["w"; 1000].join(" \n");
        assert_eq!(count_tokens_proxy(&thousand), 1000);
    }

    fn squash(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    proptest! {
        #[test]
        fn trace_and_answer_cover_raw(
            pre in "[a-z \n]{0,8}",
            inner in "[a-z <>/\n]{0,20}",
            post in "[a-z <>/\n]{0,20}",
            closed in any::<bool>(),
        ) {
            prop_assume!(!inner.contains(THINK_CLOSE) && !inner.contains(THINK_OPEN));
            prop_assume!(!pre.contains('<'));
            let raw = if closed {
                format!("{pre}{THINK_OPEN}{inner}{THINK_CLOSE}{post}")
            } else {
                format!("{pre}{THINK_OPEN}{inner}")
            };
            let out = split_reasoning(&raw);
            let without = if closed { format!("{pre}{inner}{post}") } else { format!("{pre}{inner}") };
            prop_assert_eq!(squash(&format!("{}{}", out.trace, out.final_answer)), squash(&without));
            if !closed {
                prop_assert!(out.final_answer.is_empty());
            }
        }
    }
}
