//! Hashed sparse features shared by every language.
//!
//! All three task models read from one feature space, so a character n-gram
//! or POS conjunction seen in one language carries weight in every other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("hash dimension {0} must be a power of two and at least 1024")]
    Dimension(u32),
    #[error("n-gram range ({0}, {1}) must satisfy 1 <= min <= max <= 8")]
    NgramRange(usize, usize),
}

/// Reserved form and UPOS of the artificial root token.
pub const ROOT_TOKEN: &str = "<ROOT>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpace {
    pub hash_dimension: u32,
    pub ngram_min: usize,
    pub ngram_max: usize,
}

impl Default for FeatureSpace {
    fn default() -> Self {
        FeatureSpace {
            hash_dimension: 1 << 16,
            ngram_min: 2,
            ngram_max: 4,
        }
    }
}

/// Sorted, duplicate-free `(index, value)` pairs.
pub type SparseVec = Vec<(u32, f64)>;

pub fn dot(weights: &[f64], x: &[(u32, f64)]) -> f64 {
    x.iter().map(|&(i, v)| weights[i as usize] * v).sum()
}

/// FNV-1a, fixed so that feature indices are stable across builds and platforms.
#[derive(Clone, Copy)]
struct Fnv(u64);

impl Fnv {
    fn new(namespace: &str) -> Self {
        let mut h = Fnv(0xcbf2_9ce4_8422_2325);
        h.write(namespace.as_bytes());
        h.write(&[0xff]);
        h
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn part(mut self, s: &str) -> Self {
        self.write(s.as_bytes());
        self.write(&[0x1f]);
        self
    }
}

struct Builder {
    mask: u64,
    entries: Vec<(u32, f64)>,
}

impl Builder {
    fn new(space: &FeatureSpace) -> Self {
        Builder {
            mask: space.hash_dimension as u64 - 1,
            entries: Vec::new(),
        }
    }

    fn add(&mut self, h: Fnv, value: f64) {
        // Mix the high bits down before masking; FNV's low bits are weak.
        let x = h.0 ^ (h.0 >> 29) ^ (h.0 >> 47);
        self.entries.push(((x & self.mask) as u32, value));
    }

    fn finish(mut self, normalize: bool) -> SparseVec {
        self.entries.sort_unstable_by_key(|e| e.0);
        let mut out: SparseVec = Vec::with_capacity(self.entries.len());
        for (i, v) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        if normalize {
            let norm = out.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                for e in &mut out {
                    e.1 /= norm;
                }
            }
        }
        out
    }
}

impl FeatureSpace {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !self.hash_dimension.is_power_of_two() || self.hash_dimension < 1 << 10 {
            return Err(FeatureError::Dimension(self.hash_dimension));
        }
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max || self.ngram_max > 8 {
            return Err(FeatureError::NgramRange(self.ngram_min, self.ngram_max));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hash_dimension as usize
    }

    fn ngrams(&self, b: &mut Builder, namespace: &str, word: &str, value: f64) {
        let padded: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
        let ns = Fnv::new(namespace);
        for n in self.ngram_min..=self.ngram_max {
            if n > padded.len() {
                break;
            }
            for win in padded.windows(n) {
                let mut h = ns;
                let mut buf = [0u8; 4];
                for c in win {
                    h.write(c.encode_utf8(&mut buf).as_bytes());
                }
                b.add(h, value);
            }
        }
        b.add(ns.part("=").part(word), value);
    }

    /// Whole word plus its three-character prefix and suffix.
    fn affixes(&self, b: &mut Builder, namespace: &str, word: &str, value: f64) {
        let ns = Fnv::new(namespace);
        b.add(ns.part("=").part(word), value);
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > 3 {
            b.add(ns.part("<").part(&chars[..3].iter().collect::<String>()), value);
            b.add(ns.part(">").part(&chars[chars.len() - 3..].iter().collect::<String>()), value);
        }
    }

    /// Character n-grams of every whitespace token of the text, L2-normalised,
    /// plus a bias feature.
    pub fn text_features(&self, text: &str) -> SparseVec {
        let mut b = Builder::new(self);
        for word in text.split_whitespace() {
            self.ngrams(&mut b, "txt", &word.to_lowercase(), 1.0);
        }
        let mut v = b.finish(true);
        add_bias(self, &mut v);
        v
    }

    /// Features of token `i`: its own n-grams plus word and affix features of
    /// its two neighbours.
    pub fn token_features(&self, tokens: &[String], i: usize) -> SparseVec {
        let mut b = Builder::new(self);
        self.ngrams(&mut b, "cur", &tokens[i].to_lowercase(), 1.0);
        match i.checked_sub(1) {
            Some(j) => self.affixes(&mut b, "prev", &tokens[j].to_lowercase(), 0.5),
            None => b.add(Fnv::new("prev").part("<S>"), 0.5),
        }
        match tokens.get(i + 1) {
            Some(t) => self.affixes(&mut b, "next", &t.to_lowercase(), 0.5),
            None => b.add(Fnv::new("next").part("</S>"), 0.5),
        }
        if tokens[i].chars().next().is_some_and(char::is_uppercase) {
            b.add(Fnv::new("shape").part("cap"), 1.0);
        }
        let mut v = b.finish(true);
        add_bias(self, &mut v);
        v
    }

    /// Features of the arc `head → dep` (1-based token indices, head 0 = root).
    pub fn arc_features(&self, tokens: &[String], upos: &[String], head: usize, dep: usize) -> SparseVec {
        let form = |i: usize| if i == 0 { ROOT_TOKEN.to_string() } else { tokens[i - 1].to_lowercase() };
        let pos = |i: usize| if i == 0 { ROOT_TOKEN } else { upos[i - 1].as_str() };
        let (hf, df) = (form(head), form(dep));
        let (hp, dp) = (pos(head), pos(dep));
        let dir = if head == 0 {
            "root"
        } else if head < dep {
            "right"
        } else {
            "left"
        };
        let dist = distance_bucket(head.abs_diff(dep));

        let mut b = Builder::new(self);
        let f = |name: &str| Fnv::new(name);
        b.add(f("hf").part(&hf), 1.0);
        b.add(f("df").part(&df), 1.0);
        b.add(f("hp").part(hp), 1.0);
        b.add(f("dp").part(dp), 1.0);
        b.add(f("hp.dp").part(hp).part(dp), 1.0);
        b.add(f("hp.dp.dir").part(hp).part(dp).part(dir), 1.0);
        b.add(f("hp.dp.dir.dist").part(hp).part(dp).part(dir).part(dist), 1.0);
        b.add(f("dir.dist").part(dir).part(dist), 1.0);
        b.add(f("hp.dir.dist").part(hp).part(dir).part(dist), 1.0);
        b.add(f("dp.dir.dist").part(dp).part(dir).part(dist), 1.0);
        b.add(f("hf.dp").part(&hf).part(dp), 1.0);
        b.add(f("hp.df").part(hp).part(&df), 1.0);
        b.add(f("hf.df").part(&hf).part(&df), 1.0);
        b.add(f("bias"), 1.0);
        b.finish(false)
    }
}

fn add_bias(space: &FeatureSpace, v: &mut SparseVec) {
    let mut b = Builder::new(space);
    b.add(Fnv::new("bias"), 1.0);
    let (i, _) = b.entries[0];
    match v.binary_search_by_key(&i, |e| e.0) {
        Ok(pos) => v[pos].1 += 1.0,
        Err(pos) => v.insert(pos, (i, 1.0)),
    }
}

/// Distance buckets `1`, `2`, `3-5`, `6-10`, `>10`.
pub fn distance_bucket(d: usize) -> &'static str {
    match d {
        0 | 1 => "1",
        2 => "2",
        3..=5 => "3-5",
        6..=10 => "6-10",
        _ => ">10",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn deterministic_and_bounded() {
        let fs = FeatureSpace::default();
        let a = fs.text_features("the quick brown fox");
        let b = fs.text_features("the quick brown fox");
        assert_eq!(a, b);
        assert!(a.iter().all(|&(i, _)| i < 65536));
        assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn root_arc_has_root_feature() {
        let fs = FeatureSpace::default();
        let t = toks("dogs bark");
        let u = toks("NOUN VERB");
        let root_arc = fs.arc_features(&t, &u, 0, 2);
        let mut b = Builder::new(&fs);
        b.add(Fnv::new("hf").part(ROOT_TOKEN), 1.0);
        let root_idx = b.entries[0].0;
        assert!(root_arc.iter().any(|&(i, _)| i == root_idx));
        assert_ne!(root_arc, fs.arc_features(&t, &u, 1, 2));
    }

    #[test]
    fn validation() {
        assert!(FeatureSpace::default().validate().is_ok());
        let bad = FeatureSpace {
            hash_dimension: 1000,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(FeatureError::Dimension(1000)));
        let bad = FeatureSpace {
            ngram_min: 3,
            ngram_max: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn buckets() {
        let got: Vec<_> = [1, 2, 3, 5, 6, 10, 11].iter().map(|&d| distance_bucket(d)).collect();
        assert_eq!(got, ["1", "2", "3-5", "3-5", "6-10", "6-10", ">10"]);
    }

    #[test]
    fn token_window() {
        let fs = FeatureSpace::default();
        let t = toks("John works here");
        assert_ne!(fs.token_features(&t, 0), fs.token_features(&t, 1));
        assert_eq!(fs.token_features(&t, 2), fs.token_features(&toks("x works here"), 2));
    }
}
