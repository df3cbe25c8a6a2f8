//! Classification TSV: `label<TAB>language<TAB>text` with a mandatory header.

use std::io::Write;
use std::path::Path;

use super::{read_file, ClassificationText, CorpusError, Instance, InstanceId, LanguageTag, Payload, Result};

pub const TSV_HEADER: &str = "label\tlanguage\ttext";

pub fn ingest_tsv_classification(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_tsv_classification(&text, &path.display().to_string())
}

/// An empty label field or `_` marks an unlabeled row.
pub fn parse_tsv_classification(text: &str, source_name: &str) -> Result<Vec<Instance>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == TSV_HEADER => {}
        _ => {
            return Err(CorpusError::Format {
                source_name: source_name.to_string(),
                message: format!("missing header {TSV_HEADER:?}"),
            })
        }
    }
    let mut instances = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = idx + 1;
        let parse_err = |message: String| CorpusError::Parse {
            source_name: source_name.to_string(),
            line: row,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
        }
        let language = LanguageTag::new(cols[1]).map_err(|e| parse_err(e.to_string()))?;
        if cols[2].trim().is_empty() {
            return Err(parse_err("empty text".into()));
        }
        let label = match cols[0] {
            "" | "_" => None,
            l => Some(l.to_string()),
        };
        let payload = Payload::Classification(ClassificationText {
            text: cols[2].to_string(),
            label,
        });
        instances.push(Instance::new(InstanceId(instances.len() as u64), language, payload));
    }
    Ok(instances)
}

pub fn write_tsv_classification<W: Write>(instances: &[Instance], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TSV_HEADER}")?;
    for inst in instances {
        let Payload::Classification(c) = &inst.payload else {
            continue;
        };
        let text: String = c.text.chars().map(|ch| if ch == '\t' || ch == '\n' || ch == '\r' { ' ' } else { ch }).collect();
        writeln!(out, "{}\t{}\t{}", c.label.as_deref().unwrap_or("_"), inst.language, text)?;
    }
    Ok(())
}
