use std::collections::HashSet;

use super::{Instance, Payload};

/// Sentences longer than this many tokens are dropped from tagging/parsing data.
pub const DEFAULT_MAX_TOKENS: usize = 175;
/// Classification texts are cut to this many whitespace tokens.
pub const DEFAULT_MAX_TEXT_TOKENS: usize = 256;

/// Keeps the first occurrence of every `(language, payload)` pair.
pub fn dedup(instances: Vec<Instance>) -> Vec<Instance> {
    let mut seen = HashSet::new();
    let mut keep = vec![false; instances.len()];
    for (i, inst) in instances.iter().enumerate() {
        keep[i] = seen.insert((&inst.language, &inst.payload));
    }
    drop(seen);
    instances
        .into_iter()
        .zip(keep)
        .filter_map(|(inst, k)| k.then_some(inst))
        .collect()
}

/// Drops token-payload instances longer than `max_tokens`; truncates
/// classification text to `max_tokens` whitespace tokens instead.
pub fn length_filter(instances: Vec<Instance>, max_tokens: usize) -> Vec<Instance> {
    instances
        .into_iter()
        .filter_map(|mut inst| match &mut inst.payload {
            Payload::Classification(c) => {
                if c.text.split_whitespace().count() > max_tokens {
                    c.text = c.text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ");
                }
                Some(inst)
            }
            p => (p.token_count() <= max_tokens).then_some(inst),
        })
        .collect()
}
