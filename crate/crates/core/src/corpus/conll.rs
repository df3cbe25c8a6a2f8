//! CoNLL-2002/2003 style column files for sequence tagging.

use std::io::Write;
use std::path::Path;

use super::{read_file, CorpusError, Instance, InstanceId, LanguageTag, Payload, Result, TaggedSentence};
use crate::tasks::BioTag;

const DOCSTART: &str = "-DOCSTART-";

pub fn ingest_conll_ner(path: impl AsRef<Path>, language: &LanguageTag) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_conll_ner(&text, language, &path.display().to_string())
}

/// Parses whitespace-separated columns: token first, BIO tag last.
///
/// A file whose lines all have a single column is read as untagged.
pub fn parse_conll_ner(text: &str, language: &LanguageTag, source_name: &str) -> Result<Vec<Instance>> {
    let mut instances = Vec::new();
    let mut columns: Option<usize> = None;
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, columns: Option<usize>| {
        if tokens.is_empty() {
            return;
        }
        let tags = if columns.unwrap_or(1) > 1 {
            Some(std::mem::take(tags))
        } else {
            None
        };
        let payload = Payload::Tagged(TaggedSentence {
            tokens: std::mem::take(tokens),
            tags,
        });
        let id = InstanceId(instances.len() as u64);
        instances.push(Instance::new(id, language.clone(), payload));
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            flush(&mut tokens, &mut tags, columns);
            continue;
        }
        if fields[0] == DOCSTART {
            flush(&mut tokens, &mut tags, columns);
            continue;
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(CorpusError::Parse {
                    source_name: source_name.to_string(),
                    line: lineno,
                    message: format!("expected {c} columns, found {}", fields.len()),
                })
            }
            Some(_) => {}
        }
        tokens.push(fields[0].to_string());
        if fields.len() > 1 {
            let tag = fields[fields.len() - 1];
            if let Err(e) = tag.parse::<BioTag>() {
                return Err(CorpusError::Parse {
                    source_name: source_name.to_string(),
                    line: lineno,
                    message: e.to_string(),
                });
            }
            tags.push(tag.to_string());
        }
    }
    flush(&mut tokens, &mut tags, columns);
    Ok(instances)
}

/// Two-column output (`token tag`), or one column for untagged sentences.
pub fn write_conll_ner<W: Write>(instances: &[Instance], mut out: W) -> std::io::Result<()> {
    for inst in instances {
        let Payload::Tagged(s) = &inst.payload else {
            continue;
        };
        for (i, tok) in s.tokens.iter().enumerate() {
            match &s.tags {
                Some(tags) => writeln!(out, "{tok} {}", tags[i])?,
                None => writeln!(out, "{tok}")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
