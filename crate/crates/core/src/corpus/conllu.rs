//! CoNLL-U (Universal Dependencies) reader and writer.

use std::io::Write;
use std::path::Path;

use super::{read_file, CorpusError, DepTree, Instance, InstanceId, LanguageTag, Payload, Result};

pub fn ingest_conllu(path: impl AsRef<Path>, language: &LanguageTag) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_conllu(&text, language, &path.display().to_string())
}

#[derive(Default)]
struct SentenceBuf {
    sent_id: Option<String>,
    first_line: usize,
    tokens: Vec<String>,
    upos: Vec<String>,
    heads: Vec<Option<usize>>,
    labels: Vec<Option<String>>,
    head_lines: Vec<usize>,
}

/// Parses 10-column CoNLL-U. Multiword-token ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped; heads come from column 7, labels from column 8.
pub fn parse_conllu(text: &str, language: &LanguageTag, source_name: &str) -> Result<Vec<Instance>> {
    let mut instances = Vec::new();
    let mut buf = SentenceBuf::default();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            finish(&mut buf, &mut instances, language, source_name)?;
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                buf.sent_id = Some(id.trim_start_matches([' ', '=']).trim().to_string());
            }
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            source_name: source_name.to_string(),
            line: lineno,
            message,
        };
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(format!("invalid token id {:?}", cols[0])))?;
        if id != buf.tokens.len() + 1 {
            return Err(parse_err(format!("token id {id} out of sequence")));
        }
        if buf.tokens.is_empty() {
            buf.first_line = lineno;
        }
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| parse_err(format!("invalid head {h:?}")))?),
        };
        buf.tokens.push(cols[1].to_string());
        buf.upos.push(cols[3].to_string());
        buf.heads.push(head);
        buf.labels.push((cols[7] != "_").then(|| cols[7].to_string()));
        buf.head_lines.push(lineno);
    }
    finish(&mut buf, &mut instances, language, source_name)?;
    Ok(instances)
}

fn finish(buf: &mut SentenceBuf, out: &mut Vec<Instance>, language: &LanguageTag, source_name: &str) -> Result<()> {
    let sent = std::mem::take(buf);
    if sent.tokens.is_empty() {
        return Ok(());
    }
    let n = sent.tokens.len();
    let sentence_name = sent
        .sent_id
        .clone()
        .unwrap_or_else(|| format!("#{} (line {})", out.len() + 1, sent.first_line));

    let heads = if sent.heads.iter().all(Option::is_some) {
        let heads: Vec<usize> = sent.heads.iter().map(|h| h.unwrap()).collect();
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(CorpusError::Parse {
                    source_name: source_name.to_string(),
                    line: sent.head_lines[i],
                    message: format!("head {h} out of range for a {n}-token sentence"),
                });
            }
        }
        Some(heads)
    } else {
        None
    };
    let labels = sent
        .labels
        .iter()
        .all(Option::is_some)
        .then(|| sent.labels.iter().map(|l| l.clone().unwrap()).collect());

    let tree = DepTree {
        tokens: sent.tokens,
        upos: sent.upos,
        heads,
        labels,
    };
    if let Some(heads) = &tree.heads {
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if roots != 1 {
            return Err(CorpusError::Validation {
                source_name: source_name.to_string(),
                sentence: sentence_name,
                message: format!("expected exactly one root, found {roots}"),
            });
        }
    }
    tree.check().map_err(|message| CorpusError::Validation {
        source_name: source_name.to_string(),
        sentence: sentence_name,
        message,
    })?;
    let id = InstanceId(out.len() as u64);
    out.push(Instance::new(id, language.clone(), Payload::Tree(tree)));
    Ok(())
}

pub fn write_conllu<W: Write>(instances: &[Instance], mut out: W) -> std::io::Result<()> {
    for inst in instances {
        let Payload::Tree(t) = &inst.payload else {
            continue;
        };
        writeln!(out, "# sent_id = {}", inst.id)?;
        for i in 0..t.tokens.len() {
            let head = t.heads.as_ref().map_or("_".to_string(), |h| h[i].to_string());
            let label = t.labels.as_ref().map_or("_", |l| l[i].as_str());
            writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                t.tokens[i],
                t.upos[i],
                head,
                label
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}
