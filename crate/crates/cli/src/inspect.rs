use std::io::{self, Write};

use unitab_core::record::meta_keys;
use unitab_core::serialize::{self, sentinel_index, SpecialTokenRegistry};
use unitab_core::Seq2SeqRecord;

const RESET: &str = "\x1b[0m";
const STRUCTURAL: &str = "\x1b[2;37m";
const CONTEXT: &str = "\x1b[36m";
const HEADER: &str = "\x1b[33m";
const CELL: &str = "\x1b[32m";
const SENTINEL: &str = "\x1b[1;35m";
const TASK: &str = "\x1b[1;31m";

#[derive(Clone, Copy)]
enum Part {
    Other,
    Context,
    Header,
    RowIndex,
    Cell,
}

fn paint(out: &mut impl Write, tok: &str, style: Option<&str>) -> io::Result<()> {
    match style {
        Some(s) => write!(out, "{s}{tok}{RESET}"),
        None => write!(out, "{tok}"),
    }
}

fn write_tokens(
    out: &mut impl Write,
    tokens: &[String],
    registry: &SpecialTokenRegistry,
    color: bool,
) -> io::Result<()> {
    let mut part = Part::Other;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            write!(out, " ")?;
        }
        let style = if sentinel_index(tok).is_some() {
            SENTINEL
        } else if registry.contains(tok) || tok == serialize::CELL_SEP_RENDERED || tok == serialize::TURN_SEP_FIRST {
            part = match tok.as_str() {
                serialize::CONTEXT | serialize::TEXT_NL | serialize::TEXT_SQL => Part::Context,
                serialize::HEADER => Part::Header,
                serialize::ROW => Part::RowIndex,
                serialize::MISSING_CONTEXT => Part::Other,
                _ => part,
            };
            if tok.ends_with("_generation>") || tok.ends_with("_completion>") || tok == serialize::DENOISING {
                TASK
            } else {
                STRUCTURAL
            }
        } else {
            match part {
                Part::Context => CONTEXT,
                Part::Header => HEADER,
                Part::RowIndex => {
                    part = Part::Cell;
                    STRUCTURAL
                }
                Part::Cell => CELL,
                Part::Other => "",
            }
        };
        paint(out, tok, (color && !style.is_empty()).then_some(style))?;
    }
    writeln!(out)
}

/// Print one record; pad tokens are summarized rather than listed.
pub fn render(out: &mut impl Write, record: &Seq2SeqRecord, color: bool) -> io::Result<()> {
    let registry = SpecialTokenRegistry::default();
    let real = record
        .meta_u64(meta_keys::ENCODER_LEN)
        .map_or(record.encoder_input.len(), |n| n as usize)
        .min(record.encoder_input.len());
    let branch = record.meta_str(meta_keys::BRANCH).unwrap_or("-");
    writeln!(out, "== {} [{}] branch={branch}", record.example_id, record.objective)?;
    write!(out, "encoder ({real} + {} pad): ", record.encoder_input.len() - real)?;
    write_tokens(out, &record.encoder_input[..real], &registry, color)?;
    write!(out, "decoder input: ")?;
    write_tokens(out, &record.decoder_input, &registry, color)?;
    write!(out, "decoder target: ")?;
    write_tokens(out, &record.decoder_target, &registry, color)?;
    writeln!(out)
}
