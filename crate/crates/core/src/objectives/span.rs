//! Span-corruption and masked-column planning.

use std::collections::VecDeque;
use std::ops::Range;

use rand::seq::index;
use rand::Rng;

use super::ObjectiveError;
use crate::tokenize::LabeledTokenSeq;

/// Sorted, non-overlapping token ranges to replace with sentinels.
/// Sentinel `k` (1-based) replaces `spans[k - 1]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorruptionPlan {
    pub spans: Vec<Range<usize>>,
}

impl CorruptionPlan {
    pub fn masked_tokens(&self) -> usize {
        self.spans.iter().map(|s| s.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Merge several plans over disjoint regions into one sorted plan.
    pub fn union(plans: impl IntoIterator<Item = CorruptionPlan>) -> Self {
        let mut spans: Vec<Range<usize>> = plans.into_iter().flat_map(|p| p.spans).collect();
        spans.sort_by_key(|s| s.start);
        Self { spans }
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        let i = self.spans.partition_point(|s| s.end <= pos);
        self.spans.get(i).is_some_and(|s| s.contains(&pos))
    }
}

/// `max(1, round(fraction * count))`, rounding halves away from zero,
/// capped at `count`.
pub fn scaled_count(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64).round() as usize).max(1).min(count)
}

/// Split `region` (ascending positions) into maximal runs of consecutive
/// positions. Spans never cross a run boundary.
fn contiguous_runs(region: &[usize]) -> Vec<Range<usize>> {
    let mut runs: Vec<Range<usize>> = Vec::new();
    for &pos in region {
        match runs.last_mut() {
            Some(run) if run.end == pos => run.end += 1,
            _ => runs.push(pos..pos + 1),
        }
    }
    runs
}

/// Random composition of `total` into `parts` positive integers.
fn compose<R: Rng + ?Sized>(total: usize, parts: usize, rng: &mut R) -> Vec<usize> {
    let mut cuts: Vec<usize> = index::sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    cuts.push(total);
    let mut prev = 0;
    cuts.into_iter()
        .map(|c| {
            let len = c - prev;
            prev = c;
            len
        })
        .collect()
}

/// Pick a start uniformly among all positions where a span of `len` fits
/// inside one free interval.
fn place<R: Rng + ?Sized>(free: &[Range<usize>], len: usize, rng: &mut R) -> Option<(usize, usize)> {
    let fits = |iv: &Range<usize>| (iv.len() + 1).saturating_sub(len);
    let total: usize = free.iter().map(fits).sum();
    if total == 0 {
        return None;
    }
    let mut pick = rng.random_range(0..total);
    for (i, iv) in free.iter().enumerate() {
        let n = fits(iv);
        if pick < n {
            return Some((i, iv.start + pick));
        }
        pick -= n;
    }
    unreachable!("pick is below the total")
}

/// Plan T5-style span corruption over the token positions in `region`.
///
/// The masked count is `max(1, round(rate * len))`, split into
/// `max(1, round(count / mean_span))` spans whose lengths are a random
/// composition of the count. Spans stay inside runs of consecutive
/// positions and keep at least one unmasked token between them. When a
/// span does not fit anywhere it is shortened to the longest free interval
/// and the remainder is queued as another span.
pub fn plan_span_corruption<R: Rng + ?Sized>(
    region: &[usize],
    rate: f64,
    mean_span: usize,
    rng: &mut R,
) -> Result<CorruptionPlan, ObjectiveError> {
    if region.is_empty() {
        return Err(ObjectiveError::EmptyRegion);
    }
    if rate <= 0.0 {
        return Ok(CorruptionPlan::default());
    }
    let target = scaled_count(rate, region.len());
    let span_count = ((target as f64 / mean_span.max(1) as f64).round() as usize).clamp(1, target);
    let mut pending: VecDeque<usize> = compose(target, span_count, rng).into();

    let mut free = contiguous_runs(region);
    let mut spans = Vec::with_capacity(span_count);
    while let Some(len) = pending.pop_front() {
        let (len, slot) = match place(&free, len, rng) {
            Some(slot) => (len, slot),
            None => {
                let longest = free.iter().map(|iv| iv.len()).max().unwrap_or(0);
                if longest == 0 {
                    break;
                }
                pending.push_back(len - longest);
                (longest, place(&free, longest, rng).expect("longest interval fits"))
            }
        };
        let (i, start) = slot;
        let end = start + len;
        let iv = free.remove(i);
        // Keep one unmasked token on each side of the new span.
        if end + 1 < iv.end {
            free.insert(i, end + 1..iv.end);
        }
        if start > iv.start + 1 {
            free.insert(i, iv.start..start - 1);
        }
        spans.push(start..end);
    }
    spans.sort_by_key(|s| s.start);
    Ok(CorruptionPlan { spans })
}

/// Choose `max(1, round(rate * headers))` headers uniformly and mask each
/// one over its full extent.
pub fn plan_mcp<R: Rng + ?Sized>(
    seq: &LabeledTokenSeq,
    rate: f64,
    rng: &mut R,
) -> Result<CorruptionPlan, ObjectiveError> {
    let headers: Vec<&Range<usize>> = seq.header_extents.iter().filter(|e| !e.is_empty()).collect();
    if headers.is_empty() {
        return Err(ObjectiveError::NoHeaders);
    }
    if rate <= 0.0 {
        return Ok(CorruptionPlan::default());
    }
    let k = scaled_count(rate, headers.len());
    let mut chosen = index::sample(rng, headers.len(), k).into_vec();
    chosen.sort_unstable();
    Ok(CorruptionPlan { spans: chosen.into_iter().map(|i| headers[i].clone()).collect() })
}
