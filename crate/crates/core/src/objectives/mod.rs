//! Turning region-labeled sequences into seq2seq training records.
//!
//! Four record families are produced: span-corruption denoising (cell and
//! text MLM plus masked column prediction), generation (table in, full
//! context out), completion (table plus the first half of the context in,
//! second half out), and the per-example mixer that chooses between them.

mod span;

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::Value;
use thiserror::Error;

pub use span::{plan_mcp, plan_span_corruption, scaled_count, CorruptionPlan};

pub use crate::record::{meta_keys, Objective, Seq2SeqRecord};
use crate::rng::{stage, ExampleStreams};
use crate::serialize::{
    context_kind_token, context_string, render_decoder_prefix, sentinel_for, sentinel_index, LinearizeOptions,
    SerializeError, SerializeMode,
};
use crate::table::{Context, ContextKind, Example, ObjectiveConfig};
use crate::tokenize::{encode_regions, LabeledTokenSeq, Region, TokenizeError, TokenizerPort};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectiveError {
    #[error("region to mask is empty")]
    EmptyRegion,
    #[error("table has no maskable headers")]
    NoHeaders,
    #[error("example has no context to generate")]
    NoContext,
    #[error("context has fewer than two words")]
    TooShort,
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

/// An example that produced no record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("skipped {example_id}: {reason}")]
pub struct SkipRecord {
    pub example_id: String,
    pub reason: String,
}

fn decoder_input(prefix: Option<&str>, target: &[String]) -> Vec<String> {
    prefix.map(str::to_string).into_iter().chain(target.iter().cloned()).collect()
}

fn base_meta(example: &Example, mode: SerializeMode) -> BTreeMap<String, Value> {
    let mut meta = BTreeMap::new();
    meta.insert(meta_keys::SOURCE.to_string(), Value::from(example.source.as_str()));
    meta.insert(
        meta_keys::MODE.to_string(),
        Value::from(match mode {
            SerializeMode::Unified => "unified",
            SerializeMode::Rf => "rf",
        }),
    );
    meta
}

/// Replace each planned span with its numbered sentinel. Returns the
/// corrupted encoder sequence and the target `<s1> span1 <s2> span2 ...`.
pub fn corrupt(tokens: &[String], plan: &CorruptionPlan, mode: SerializeMode) -> (Vec<String>, Vec<String>) {
    let mut encoder = Vec::with_capacity(tokens.len());
    let mut target = Vec::with_capacity(plan.masked_tokens() + plan.len());
    let mut pos = 0;
    for (k, span) in plan.spans.iter().enumerate() {
        encoder.extend_from_slice(&tokens[pos..span.start]);
        let s = sentinel_for(mode, k + 1);
        encoder.push(s.clone());
        target.push(s);
        target.extend_from_slice(&tokens[span.clone()]);
        pos = span.end;
    }
    encoder.extend_from_slice(&tokens[pos..]);
    (encoder, target)
}

/// Splice target segments back in at their sentinels. Returns `None` if a
/// sentinel in the encoder has no segment in the target or vice versa.
pub fn reconstruct(encoder: &[String], target: &[String]) -> Option<Vec<String>> {
    let mut segments: BTreeMap<usize, &[String]> = BTreeMap::new();
    let mut i = 0;
    while i < target.len() {
        let k = sentinel_index(&target[i])?;
        let end = target[i + 1..].iter().position(|t| sentinel_index(t).is_some()).map_or(target.len(), |j| i + 1 + j);
        segments.insert(k, &target[i + 1..end]);
        i = end;
    }
    let mut out = Vec::with_capacity(encoder.len() + target.len());
    let mut used = 0;
    for tok in encoder {
        match sentinel_index(tok) {
            Some(k) => {
                out.extend_from_slice(segments.get(&k)?);
                used += 1;
            }
            None => out.push(tok.clone()),
        }
    }
    (used == segments.len()).then_some(out)
}

/// Greedily merge neighbouring spans, left to right, while the plan uses
/// more sentinels than `budget`. Only spans separated by non-structural
/// tokens can merge; if that is not enough the rightmost spans are dropped.
fn enforce_sentinel_budget(plan: &mut CorruptionPlan, seq: &LabeledTokenSeq, budget: usize) {
    let mut i = 0;
    while plan.spans.len() > budget && i + 1 < plan.spans.len() {
        let gap = plan.spans[i].end..plan.spans[i + 1].start;
        let same_region = seq.labels[plan.spans[i].start] == seq.labels[plan.spans[i + 1].start];
        if same_region && seq.labels[gap].iter().all(|l| *l != Region::Structural) {
            let next = plan.spans.remove(i + 1);
            plan.spans[i].end = next.end;
        } else {
            i += 1;
        }
    }
    plan.spans.truncate(budget);
}

/// Produces records for one serialization mode and tokenizer.
pub struct ObjectiveEngine<'t> {
    pub cfg: ObjectiveConfig,
    pub mode: SerializeMode,
    include_types: bool,
    tokenizer: &'t dyn TokenizerPort,
}

impl<'t> ObjectiveEngine<'t> {
    pub fn new(cfg: ObjectiveConfig, mode: SerializeMode, tokenizer: &'t dyn TokenizerPort) -> Self {
        Self { cfg, mode, include_types: false, tokenizer }
    }

    /// Render `header:type` when the table carries column types.
    pub fn with_column_types(mut self, include_types: bool) -> Self {
        self.include_types = include_types;
        self
    }

    fn opts(&self) -> LinearizeOptions<'static> {
        LinearizeOptions { include_types: self.include_types, ..LinearizeOptions::mode(self.mode) }
    }

    pub fn encode(&self, example: &Example) -> Result<LabeledTokenSeq, ObjectiveError> {
        Ok(encode_regions(example, self.opts(), self.tokenizer)?)
    }

    fn prefix(&self, objective: Objective) -> Result<Option<&'static str>, ObjectiveError> {
        match self.mode {
            SerializeMode::Unified => Ok(Some(render_decoder_prefix(objective, self.cfg.sql_generation_token)?)),
            SerializeMode::Rf => Ok(None),
        }
    }

    fn kind_token(&self, kind: ContextKind) -> Option<String> {
        match self.mode {
            SerializeMode::Unified => Some(context_kind_token(kind).to_string()),
            SerializeMode::Rf => None,
        }
    }

    /// Build the denoising plan for `seq`.
    ///
    /// Table-only inputs get MCP alone with probability
    /// `table_only_mcp_only_prob`, otherwise MCP plus cell MLM. Inputs with
    /// text get cell MLM, text MLM and MCP together. Every region draws from
    /// its own stream. An empty cell or text region simply contributes no
    /// spans; missing headers are an error.
    pub fn plan_denoise(
        &self,
        seq: &LabeledTokenSeq,
        table_only: bool,
        streams: ExampleStreams<'_>,
    ) -> Result<(CorruptionPlan, bool), ObjectiveError> {
        let cfg = &self.cfg;
        let mcp = plan_mcp(seq, cfg.header_mask_rate, &mut streams.stage(stage::HEADERS))?;
        let mcp_only =
            table_only && streams.stage(stage::TABLE_ONLY_BRANCH).random::<f64>() < cfg.table_only_mcp_only_prob;
        let mut plans = vec![mcp];
        if !mcp_only {
            let cells = seq.positions(Region::Cell);
            if !cells.is_empty() {
                plans.push(plan_span_corruption(
                    &cells,
                    cfg.cell_mask_rate,
                    cfg.mean_span_len,
                    &mut streams.stage(stage::CELLS),
                )?);
            }
        }
        if !table_only {
            let text = seq.positions(Region::Context);
            if !text.is_empty() {
                plans.push(plan_span_corruption(
                    &text,
                    cfg.text_mask_rate,
                    cfg.mean_span_len,
                    &mut streams.stage(stage::TEXT),
                )?);
            }
        }
        let mut plan = CorruptionPlan::union(plans);
        enforce_sentinel_budget(&mut plan, seq, cfg.max_sentinels);
        if plan.is_empty() {
            return Err(ObjectiveError::EmptyRegion);
        }
        Ok((plan, mcp_only))
    }

    pub fn apply_denoise(
        &self,
        example: &Example,
        seq: &LabeledTokenSeq,
        table_only: bool,
        streams: ExampleStreams<'_>,
    ) -> Result<Seq2SeqRecord, ObjectiveError> {
        let (plan, mcp_only) = self.plan_denoise(seq, table_only, streams)?;
        let (encoder_input, decoder_target) = corrupt(&seq.tokens, &plan, self.mode);

        let masked_in =
            |region: Region| plan.spans.iter().flat_map(|s| s.clone()).filter(|&p| seq.labels[p] == region).count();
        let headers: Vec<_> = seq.header_extents.iter().filter(|e| !e.is_empty()).collect();
        let headers_masked = headers.iter().filter(|e| plan.spans.iter().any(|s| s == **e)).count();

        let mut meta = base_meta(example, self.mode);
        meta.insert(meta_keys::TABLE_ONLY.into(), Value::from(table_only));
        meta.insert(meta_keys::MCP_ONLY.into(), Value::from(mcp_only));
        meta.insert(meta_keys::CELL_TOKENS.into(), Value::from(seq.count(Region::Cell)));
        meta.insert(meta_keys::CELL_MASKED.into(), Value::from(masked_in(Region::Cell)));
        meta.insert(meta_keys::CONTEXT_TOKENS.into(), Value::from(seq.count(Region::Context)));
        meta.insert(meta_keys::CONTEXT_MASKED.into(), Value::from(masked_in(Region::Context)));
        meta.insert(meta_keys::HEADERS.into(), Value::from(headers.len()));
        meta.insert(meta_keys::HEADERS_MASKED.into(), Value::from(headers_masked));
        meta.insert(meta_keys::SENTINELS.into(), Value::from(plan.len()));

        Ok(Seq2SeqRecord {
            example_id: example.example_id.clone(),
            objective: Objective::Denoise,
            decoder_input: decoder_input(self.prefix(Objective::Denoise)?, &decoder_target),
            encoder_input,
            decoder_target,
            meta,
            provenance: None,
        })
    }

    fn context_objective(kind: ContextKind, generation: bool) -> Result<Objective, ObjectiveError> {
        match (kind, generation) {
            (ContextKind::Nl, true) => Ok(Objective::NlGeneration),
            (ContextKind::Sql, true) => Ok(Objective::SqlGeneration),
            (ContextKind::Nl, false) => Ok(Objective::NlCompletion),
            (ContextKind::Sql, false) => Ok(Objective::SqlCompletion),
            (ContextKind::Missing, _) => Err(ObjectiveError::NoContext),
        }
    }

    fn text_record(
        &self,
        example: &Example,
        encoder_example: &Example,
        objective: Objective,
        target_text: &str,
    ) -> Result<Seq2SeqRecord, ObjectiveError> {
        let encoder_input = self.encode(encoder_example)?.tokens;
        let mut decoder_target: Vec<String> = self.kind_token(example.context.kind()).into_iter().collect();
        decoder_target.extend(self.tokenizer.tokenize(target_text));
        Ok(Seq2SeqRecord {
            example_id: example.example_id.clone(),
            objective,
            decoder_input: decoder_input(self.prefix(objective)?, &decoder_target),
            encoder_input,
            decoder_target,
            meta: base_meta(example, self.mode),
            provenance: None,
        })
    }

    /// Table alone in, the whole context out.
    pub fn make_generation(&self, example: &Example) -> Result<Seq2SeqRecord, ObjectiveError> {
        let objective = Self::context_objective(example.context.kind(), true)?;
        let table_only = Example { context: Context::missing(), ..example.clone() };
        self.text_record(example, &table_only, objective, &context_string(&example.context))
    }

    /// Table plus the first `floor(words / 2)` context words in, the rest out.
    pub fn make_completion(&self, example: &Example) -> Result<Seq2SeqRecord, ObjectiveError> {
        let objective = Self::context_objective(example.context.kind(), false)?;
        let text = context_string(&example.context);
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() < 2 {
            return Err(ObjectiveError::TooShort);
        }
        let split = words.len() / 2;
        let head = Context::new(example.context.kind(), words[..split].join(" "), Vec::new())
            .expect("first half is non-empty");
        let prefix_example = Example { context: head, ..example.clone() };
        self.text_record(example, &prefix_example, objective, &words[split..].join(" "))
    }

    /// Choose an objective for one example and build the padded record.
    ///
    /// Draw order on the mix stream is fixed: first the denoise coin, then
    /// the generation/completion coin.
    pub fn mix(&self, example: &Example) -> Result<Seq2SeqRecord, SkipRecord> {
        self.mix_tagged(example, None)
    }

    /// [`mix`](Self::mix), optionally tagging every encoder token with
    /// `tag` before padding. Pad positions carry no tag.
    pub fn mix_tagged(&self, example: &Example, tag: Option<u32>) -> Result<Seq2SeqRecord, SkipRecord> {
        let skip = |e: ObjectiveError| SkipRecord { example_id: example.example_id.clone(), reason: e.to_string() };
        let streams = ExampleStreams::new(self.cfg.global_seed, &example.example_id);
        let mut mix_rng = streams.stage(stage::MIX);
        let denoise_coin = mix_rng.random::<f64>() < self.cfg.denoise_prob;
        let generation_coin = mix_rng.random::<f64>() < self.cfg.generation_prob;
        let table_only = example.context.is_missing();

        let (record, branch) = if table_only || denoise_coin {
            let seq = self.encode(example).map_err(skip)?;
            match self.apply_denoise(example, &seq, table_only, streams) {
                Ok(r) => (r, if denoise_coin { "denoise" } else { "denoise_rerouted" }),
                Err(ObjectiveError::EmptyRegion | ObjectiveError::NoHeaders) if !table_only => {
                    (self.make_generation(example).map_err(skip)?, "generation_rerouted")
                }
                Err(e) => return Err(skip(e)),
            }
        } else if generation_coin {
            (self.make_generation(example).map_err(skip)?, "generation")
        } else {
            match self.make_completion(example) {
                Ok(r) => (r, "completion"),
                Err(ObjectiveError::TooShort) => (self.make_generation(example).map_err(skip)?, "completion_rerouted"),
                Err(e) => return Err(skip(e)),
            }
        };
        let mut record = record;
        record.meta.insert(meta_keys::BRANCH.into(), Value::from(branch));
        if tag.is_some() {
            record.provenance = Some(vec![tag; record.encoder_input.len()]);
        }
        Ok(pad_truncate(record, &self.cfg))
    }
}

/// Bring a record to the fixed encoder length.
///
/// The encoder is cut to `max_len` and right-padded to exactly `max_len`.
/// Decoder sequences are cut so the decoder input (task token plus target)
/// fits in `max_len`. For denoising records, target segments whose sentinel
/// was cut from the encoder are dropped.
pub fn pad_truncate(mut record: Seq2SeqRecord, cfg: &ObjectiveConfig) -> Seq2SeqRecord {
    let max_len = cfg.max_len;
    let real_len = record.encoder_input.len().min(max_len);
    let truncated = record.encoder_input.len() > max_len;
    record.encoder_input.truncate(max_len);

    let has_prefix = record.decoder_input.len() == record.decoder_target.len() + 1;
    if truncated && record.objective == Objective::Denoise {
        let kept = record.encoder_input.iter().filter(|t| sentinel_index(t).is_some()).count();
        let cut = record
            .decoder_target
            .iter()
            .position(|t| sentinel_index(t).is_some_and(|k| k > kept))
            .unwrap_or(record.decoder_target.len());
        record.decoder_target.truncate(cut);
        record.meta.insert(meta_keys::SENTINELS.into(), Value::from(kept));
    }
    let target_cap = if has_prefix { max_len - 1 } else { max_len };
    record.decoder_target.truncate(target_cap);
    let prefix = has_prefix.then(|| record.decoder_input[0].clone());
    record.decoder_input = decoder_input(prefix.as_deref(), &record.decoder_target);

    record.encoder_input.resize(max_len, cfg.pad_token.clone());
    if let Some(prov) = record.provenance.as_mut() {
        prov.truncate(real_len);
        prov.resize(max_len, None);
    }
    record.meta.insert(meta_keys::ENCODER_LEN.into(), Value::from(real_len));
    record.meta.insert(meta_keys::DECODER_LEN.into(), Value::from(record.decoder_input.len()));
    record.meta.insert(meta_keys::TRUNCATED.into(), Value::from(truncated));
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serialize::{linearize, sentinel};
    use crate::table::validate_table;
    use crate::tokenize::WhitespaceTokenizer;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn example(context: Context) -> Example {
        let table = validate_table(
            s(&["col name 1", "col name 2", "c3"]),
            vec![s(&["val 1", "val 2", "t6 t7"]), s(&["v a", "v b", "v c"])],
        )
        .unwrap();
        Example::new("ex:0", table, context, "src")
    }

    fn engine(cfg: ObjectiveConfig) -> ObjectiveEngine<'static> {
        ObjectiveEngine::new(cfg, SerializeMode::Unified, &WhitespaceTokenizer)
    }

    #[test]
    fn corrupt_and_reconstruct() {
        let tokens = s(&["t1", "t2", "t3", "t4", "t5", "t6"]);
        let plan = CorruptionPlan { spans: vec![1..2, 3..4, 4..5] };
        let (enc, target) = corrupt(&tokens, &plan, SerializeMode::Unified);
        assert_eq!(enc, s(&["t1", "<sentinel_1>", "t3", "<sentinel_2>", "<sentinel_3>", "t6"]));
        assert_eq!(target, s(&["<sentinel_1>", "t2", "<sentinel_2>", "t4", "<sentinel_3>", "t5"]));
        assert_eq!(reconstruct(&enc, &target).unwrap(), tokens);
        assert!(reconstruct(&enc, &target[..4]).is_none());
    }

    #[test]
    fn denoise_round_trip_and_prefix() {
        let ex = example(Context::nl("t1 t2 t3 t4 t5 t6").unwrap());
        let eng = engine(ObjectiveConfig::default());
        let seq = eng.encode(&ex).unwrap();
        let rec = eng.apply_denoise(&ex, &seq, false, ExampleStreams::new(3, "ex:0")).unwrap();
        assert_eq!(rec.decoder_input[0], "<denoising>");
        assert_eq!(&rec.decoder_input[1..], rec.decoder_target.as_slice());
        assert_eq!(reconstruct(&rec.encoder_input, &rec.decoder_target).unwrap(), seq.tokens);
        assert!(rec.meta_u64(meta_keys::CONTEXT_MASKED).unwrap() > 0);
        assert_eq!(rec.meta_u64(meta_keys::HEADERS_MASKED), Some(1));
    }

    #[test]
    fn mcp_only_branch_leaves_cells_alone() {
        let ex = example(Context::missing());
        let cfg = ObjectiveConfig { table_only_mcp_only_prob: 1.0, ..Default::default() };
        let eng = engine(cfg);
        let seq = eng.encode(&ex).unwrap();
        let rec = eng.apply_denoise(&ex, &seq, true, ExampleStreams::new(3, "ex:0")).unwrap();
        assert_eq!(rec.meta[meta_keys::MCP_ONLY], Value::from(true));
        assert_eq!(rec.meta_u64(meta_keys::CELL_MASKED), Some(0));
        let (plan, mcp_only) = eng.plan_denoise(&seq, true, ExampleStreams::new(3, "ex:0")).unwrap();
        assert!(mcp_only);
        assert!(plan.spans.iter().all(|s| seq.header_extents.contains(s)));
        let cells = seq.positions(Region::Cell);
        let first_row = rec.encoder_input.iter().position(|t| t == "<row>").unwrap();
        assert_eq!(rec.encoder_input[first_row..], seq.tokens[cells[0] - 2..]);
    }

    #[test]
    fn generation_records() {
        let eng = engine(ObjectiveConfig::default());
        let rec = eng.make_generation(&example(Context::nl("the text").unwrap())).unwrap();
        assert_eq!(rec.encoder_input[..3], s(&["<context>", "<missing_context>", "<header>"]));
        assert_eq!(rec.decoder_target, s(&["<text_NL>", "the", "text"]));
        assert_eq!(rec.decoder_input[0], "<NL_generation>");
        let rec = eng.make_generation(&example(Context::sql("select a").unwrap())).unwrap();
        assert_eq!(rec.decoder_target, s(&["<text_SQL>", "select", "a"]));
        assert_eq!(rec.decoder_input[0], "<SQL_generation>");
        assert_eq!(eng.make_generation(&example(Context::missing())).unwrap_err(), ObjectiveError::NoContext);
    }

    #[test]
    fn completion_records() {
        let eng = engine(ObjectiveConfig::default());
        let rec = eng.make_completion(&example(Context::nl("w1 w2 w3 w4").unwrap())).unwrap();
        assert_eq!(rec.encoder_input[..5], s(&["<context>", "<text_NL>", "w1", "w2", "<header>"]));
        assert_eq!(rec.decoder_target, s(&["<text_NL>", "w3", "w4"]));
        assert_eq!(rec.decoder_input[0], "<NL_completion>");

        let rec = eng.make_completion(&example(Context::sql("select a from t where b").unwrap())).unwrap();
        assert_eq!(rec.encoder_input[..6], s(&["<context>", "<text_SQL>", "select", "a", "from", "<header>"]));
        assert_eq!(rec.decoder_target, s(&["<text_SQL>", "t", "where", "b"]));
        assert_eq!(rec.decoder_input[0], "<SQL_completion>");

        assert_eq!(eng.make_completion(&example(Context::nl("one").unwrap())).unwrap_err(), ObjectiveError::TooShort);
    }

    #[test]
    fn table_only_always_denoises() {
        let eng = engine(ObjectiveConfig { denoise_prob: 0.0, ..Default::default() });
        for i in 0..50 {
            let ex = Example { example_id: format!("ex:{i}"), ..example(Context::missing()) };
            assert_eq!(eng.mix(&ex).unwrap().objective, Objective::Denoise);
        }
    }

    #[test]
    fn padding_and_truncation() {
        let cfg = ObjectiveConfig::default();
        let rec = |n: usize| Seq2SeqRecord {
            example_id: "x".into(),
            objective: Objective::NlGeneration,
            encoder_input: (0..n).map(|i| i.to_string()).collect(),
            decoder_input: s(&["<NL_generation>", "a"]),
            decoder_target: s(&["a"]),
            meta: BTreeMap::new(),
            provenance: None,
        };
        let out = pad_truncate(rec(900), &cfg);
        assert_eq!(out.encoder_input.len(), 1024);
        assert_eq!(out.encoder_input.iter().filter(|t| *t == "<pad>").count(), 124);
        assert_eq!(out.meta_u64(meta_keys::ENCODER_LEN), Some(900));
        let out = pad_truncate(rec(1500), &cfg);
        assert_eq!(out.encoder_input, rec(1500).encoder_input[..1024].to_vec());
    }

    #[test]
    fn truncation_drops_cut_sentinels() {
        let cfg = ObjectiveConfig { max_len: 6, ..Default::default() };
        let tokens = s(&["a", "b", "c", "d", "e", "f", "g", "h", "i"]);
        let plan = CorruptionPlan { spans: vec![1..2, 4..5, 7..8] };
        let (enc, target) = corrupt(&tokens, &plan, SerializeMode::Unified);
        let record = Seq2SeqRecord {
            example_id: "x".into(),
            objective: Objective::Denoise,
            decoder_input: decoder_input(Some("<denoising>"), &target),
            encoder_input: enc,
            decoder_target: target,
            meta: BTreeMap::new(),
            provenance: None,
        };
        let out = pad_truncate(record, &cfg);
        assert_eq!(out.encoder_input, s(&["a", "<sentinel_1>", "c", "d", "<sentinel_2>", "f"]));
        assert_eq!(out.decoder_target, s(&["<sentinel_1>", "b", "<sentinel_2>", "e"]));
        let rebuilt = reconstruct(&out.encoder_input, &out.decoder_target).unwrap();
        assert_eq!(rebuilt, tokens[..6]);
    }

    #[test]
    fn sentinel_budget_merges_then_drops() {
        let ex = example(Context::nl("a b c d e f g h").unwrap());
        let eng = engine(ObjectiveConfig::default());
        let seq = eng.encode(&ex).unwrap();
        let text = seq.positions(Region::Context);
        let mut plan = CorruptionPlan { spans: vec![text[0]..text[0] + 1, text[2]..text[2] + 1, text[4]..text[4] + 1] };
        enforce_sentinel_budget(&mut plan, &seq, 2);
        assert_eq!(plan.spans, vec![text[0]..text[2] + 1, text[4]..text[4] + 1]);
        let headers: Vec<_> = seq.header_extents.clone();
        let mut plan = CorruptionPlan { spans: headers.clone() };
        enforce_sentinel_budget(&mut plan, &seq, 1);
        assert_eq!(plan.spans, vec![headers[0].clone()]);
    }

    #[test]
    fn rf_mode_uses_no_registry_tokens() {
        let eng = ObjectiveEngine::new(ObjectiveConfig::default(), SerializeMode::Rf, &WhitespaceTokenizer);
        let reg = crate::serialize::SpecialTokenRegistry::default();
        let ex = example(Context::nl("w1 w2 w3 w4").unwrap());
        let seq = eng.encode(&ex).unwrap();
        let recs = [
            eng.apply_denoise(&ex, &seq, false, ExampleStreams::new(1, "ex:0")).unwrap(),
            eng.make_generation(&ex).unwrap(),
            eng.make_completion(&ex).unwrap(),
        ];
        for rec in recs {
            for tok in rec.encoder_input.iter().chain(&rec.decoder_input) {
                assert!(!reg.contains(tok), "{tok}");
            }
            assert_eq!(rec.decoder_input, rec.decoder_target);
        }
        assert_eq!(linearize(&ex, LinearizeOptions::mode(SerializeMode::Rf)).split(' ').count(), seq.len());
        assert_ne!(sentinel(1), sentinel_for(SerializeMode::Rf, 1));
    }
}
