//! Fixed-budget context layouts.
//!
//! A layout is an ordered list of slots written as `f<n>k<m>` (n history
//! frames at spatial subsampling m) and one trailing `g<n>` generation slot.
//! Role groups are separated by `|`:
//!
//! ```text
//! f1k1 | f4k2 f1k1 | f16k4 f2k2 f1k1 | g20
//! anchor  spatial      temporal        generate
//! ```
//!
//! With fewer groups the roles are assigned from the right: the group before
//! the generation slot is temporal, the one before that spatial only when four
//! groups are given, and the first group is the anchor. Without separators
//! the first `f` token is the anchor and the rest are temporal.
//!
//! A slot's token count is `n * ceil(h/(m*p)) * ceil(w/(m*p))` for a latent of
//! `h x w` cells and patch size `p`, so the total depends only on the layout,
//! never on how much history exists.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::FrameId;

pub const DEFAULT_LAYOUT: &str = "f1k1 | f4k2 f1k1 | f16k4 f2k2 f1k1 | g20";
pub const DEFAULT_PATCH: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("at byte {pos}: malformed token {token:?}")]
    Malformed { pos: usize, token: String },
    #[error("at byte {pos}: n must be ≥ 1")]
    ZeroCount { pos: usize },
    #[error("at byte {pos}: kernel m must be a power of two, got {m}")]
    BadKernel { pos: usize, m: u32 },
    #[error("layout has no generate slot")]
    MissingGenerate,
    #[error("at byte {pos}: generate slot must be the last token")]
    GenerateNotLast { pos: usize },
    #[error("multiple anchors: the anchor group must hold exactly one single-frame slot")]
    MultipleAnchors,
    #[error("too many role groups ({0}); at most anchor | spatial | temporal | generate")]
    TooManyGroups(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackError {
    #[error("video frame count must be at least 1")]
    NoFrames,
    #[error("latent size must be at least 1x1 and patch at least 1")]
    BadLatentSize,
    #[error("{got} retrieved frames exceed spatial capacity {capacity}")]
    TooManyRetrieved { got: usize, capacity: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Anchor,
    Spatial,
    Temporal,
    Generate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub kind: SlotKind,
    /// Frames in the slot.
    pub n: u32,
    /// Spatial subsampling kernel; 1 for the generation slot.
    pub m: u32,
}

impl SlotSpec {
    pub fn tokens_per_frame(&self, h_lat: u32, w_lat: u32, patch: u32) -> u64 {
        let step = self.m * patch;
        h_lat.div_ceil(step) as u64 * w_lat.div_ceil(step) as u64
    }

    pub fn tokens(&self, h_lat: u32, w_lat: u32, patch: u32) -> u64 {
        self.n as u64 * self.tokens_per_frame(h_lat, w_lat, patch)
    }
}

impl fmt::Display for SlotSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SlotKind::Generate => write!(f, "g{}", self.n),
            _ => write!(f, "f{}k{}", self.n, self.m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLayout {
    slots: Vec<SlotSpec>,
}

impl Default for ContextLayout {
    fn default() -> Self {
        parse_layout(DEFAULT_LAYOUT).expect("default layout parses")
    }
}

impl ContextLayout {
    pub fn slots(&self) -> &[SlotSpec] {
        &self.slots
    }

    pub fn of_kind(&self, kind: SlotKind) -> impl Iterator<Item = (usize, &SlotSpec)> + '_ {
        self.slots.iter().enumerate().filter(move |(_, s)| s.kind == kind)
    }

    /// Total frames the slots of `kind` can hold.
    pub fn capacity(&self, kind: SlotKind) -> u32 {
        self.of_kind(kind).map(|(_, s)| s.n).sum()
    }

    pub fn has_anchor(&self) -> bool {
        self.capacity(SlotKind::Anchor) > 0
    }

    pub fn generate(&self) -> &SlotSpec {
        self.slots.last().expect("layout always ends with a generate slot")
    }
}

impl fmt::Display for ContextLayout {
    /// Canonical form: role groups joined by ` | `. An empty spatial group is
    /// omitted unless needed to keep the anchor group unambiguous.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let group = |kind| self.of_kind(kind).map(|(_, s)| s.to_string()).collect::<Vec<_>>().join(" ");
        let (anchor, spatial, temporal) = (group(SlotKind::Anchor), group(SlotKind::Spatial), group(SlotKind::Temporal));
        let mut groups = Vec::new();
        if !spatial.is_empty() {
            groups.extend([anchor, spatial, temporal]);
        } else if !anchor.is_empty() {
            groups.extend([anchor, temporal]);
        } else if !temporal.is_empty() {
            groups.push(temporal);
        }
        groups.push(self.generate().to_string());
        write!(f, "{}", groups.join(" | "))
    }
}

fn parse_token(token: &str, pos: usize) -> Result<SlotSpec, LayoutError> {
    let malformed = || LayoutError::Malformed { pos, token: token.to_string() };
    let number = |s: &str| -> Result<u32, LayoutError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        s.parse().map_err(|_| malformed())
    };
    let (n, m, kind) = if let Some(rest) = token.strip_prefix('g') {
        (number(rest)?, 1, SlotKind::Generate)
    } else if let Some(rest) = token.strip_prefix('f') {
        let (n, m) = rest.split_once('k').ok_or_else(malformed)?;
        // kind is assigned by group position later
        (number(n)?, number(m)?, SlotKind::Temporal)
    } else {
        return Err(malformed());
    };
    if n == 0 {
        return Err(LayoutError::ZeroCount { pos });
    }
    if !m.is_power_of_two() {
        return Err(LayoutError::BadKernel { pos, m });
    }
    Ok(SlotSpec { kind, n, m })
}

pub fn parse_layout(spec: &str) -> Result<ContextLayout, LayoutError> {
    // tokenize with byte offsets; '|' is its own token
    let mut groups: Vec<Vec<SlotSpec>> = vec![Vec::new()];
    let mut separators = 0;
    let mut generate: Option<SlotSpec> = None;
    let mut pos = 0;
    for piece in spec.split_inclusive(|c: char| c.is_whitespace() || c == '|') {
        let start = pos;
        pos += piece.len();
        let body = piece.trim_end_matches(|c: char| c.is_whitespace() || c == '|');
        let ends_with_bar = piece.ends_with('|');
        if !body.is_empty() {
            if generate.is_some() {
                return Err(LayoutError::GenerateNotLast { pos: start });
            }
            let slot = parse_token(body, start)?;
            if slot.kind == SlotKind::Generate {
                generate = Some(slot);
            } else {
                groups.last_mut().unwrap().push(slot);
            }
        }
        if ends_with_bar {
            if generate.is_some() {
                return Err(LayoutError::GenerateNotLast { pos: pos - 1 });
            }
            separators += 1;
            groups.push(Vec::new());
        }
    }
    let generate = generate.ok_or(LayoutError::MissingGenerate)?;
    // the last group holds only the generate token
    let history = &mut groups[..separators];
    let kinds: &[SlotKind] = match (separators, history.len()) {
        (0, _) => &[],
        (1, _) => &[SlotKind::Temporal],
        (2, _) => &[SlotKind::Anchor, SlotKind::Temporal],
        (3, _) => &[SlotKind::Anchor, SlotKind::Spatial, SlotKind::Temporal],
        (n, _) => return Err(LayoutError::TooManyGroups(n + 1)),
    };
    let mut slots = Vec::new();
    if separators == 0 {
        let tokens = std::mem::take(&mut groups[0]);
        for (i, mut s) in tokens.into_iter().enumerate() {
            s.kind = if i == 0 { SlotKind::Anchor } else { SlotKind::Temporal };
            slots.push(s);
        }
    } else {
        for (group, kind) in history.iter_mut().zip(kinds) {
            for s in group.iter_mut() {
                s.kind = *kind;
            }
            slots.extend(group.iter().copied());
        }
    }
    let anchors: Vec<_> = slots.iter().filter(|s| s.kind == SlotKind::Anchor).collect();
    if anchors.len() > 1 || anchors.first().is_some_and(|a| a.n != 1) {
        return Err(LayoutError::MultipleAnchors);
    }
    slots.push(generate);
    Ok(ContextLayout { slots })
}

/// Latent frames produced by a causal video VAE with 4x temporal compression
/// for `frames` input frames.
pub fn latent_frame_count(frames: u64) -> Result<u64, PackError> {
    if frames < 1 {
        return Err(PackError::NoFrames);
    }
    Ok((frames - 1) / 4 + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub per_slot: Vec<u64>,
    pub total: u64,
}

pub fn token_count(layout: &ContextLayout, h_lat: u32, w_lat: u32, patch: u32) -> Result<TokenCounts, PackError> {
    if h_lat == 0 || w_lat == 0 || patch == 0 {
        return Err(PackError::BadLatentSize);
    }
    let per_slot: Vec<u64> = layout.slots.iter().map(|s| s.tokens(h_lat, w_lat, patch)).collect();
    let total = per_slot.iter().sum();
    Ok(TokenCounts { per_slot, total })
}

/// Half-open latent index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentRange {
    pub start: u64,
    pub end: u64,
}

impl LatentRange {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Latent ranges for every temporal slot, in layout order.
///
/// `history_latent_len` counts all history latents including the anchor at
/// index 0. Temporal slots take the most recent non-anchor latents: the last
/// temporal slot gets the newest, earlier slots reach further back. When
/// history runs short the earliest slots are left partially or fully empty.
pub fn assign_temporal(history_latent_len: u64, layout: &ContextLayout) -> Vec<(usize, LatentRange)> {
    let first_available = u64::from(layout.has_anchor()).min(history_latent_len);
    let mut end = history_latent_len;
    let mut out: Vec<(usize, LatentRange)> = layout
        .of_kind(SlotKind::Temporal)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .map(|(i, s)| {
            let start = end.saturating_sub(s.n as u64).max(first_available);
            let range = LatentRange { start, end: end.max(start) };
            end = start;
            (i, range)
        })
        .collect();
    out.reverse();
    out
}

/// What occupies one frame position of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum Assignment {
    /// History latent index.
    Latent(u64),
    /// Cached frame id (spatial memory).
    Frame(FrameId),
    /// New latent to be generated.
    Generate(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSlot {
    pub spec: SlotSpec,
    /// One entry per frame position; `None` is an empty (padded or dropped) position.
    pub assignment: Vec<Option<Assignment>>,
    pub tokens_per_frame: u64,
    /// Tokens of occupied positions only.
    pub filled_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPlan {
    pub layout: String,
    pub slots: Vec<PlannedSlot>,
    /// Budget implied by the layout; independent of history length.
    pub total_tokens: u64,
    /// Tokens of positions that actually hold a frame.
    pub filled_tokens: u64,
}

/// Concrete context plan.
///
/// Retrieved frames fill spatial positions in order of increasing kernel, so
/// the first (highest-coverage) retrieval gets the full-resolution slot.
pub fn assemble_plan(
    history_latent_len: u64,
    retrieved: &[FrameId],
    layout: &ContextLayout,
    h_lat: u32,
    w_lat: u32,
    patch: u32,
) -> Result<ContextPlan, PackError> {
    let capacity = layout.capacity(SlotKind::Spatial) as usize;
    if retrieved.len() > capacity {
        return Err(PackError::TooManyRetrieved { got: retrieved.len(), capacity });
    }
    let counts = token_count(layout, h_lat, w_lat, patch)?;

    let mut slots: Vec<PlannedSlot> = layout
        .slots
        .iter()
        .map(|s| PlannedSlot {
            spec: *s,
            assignment: vec![None; s.n as usize],
            tokens_per_frame: s.tokens_per_frame(h_lat, w_lat, patch),
            filled_tokens: 0,
        })
        .collect();

    if history_latent_len > 0 {
        if let Some((i, _)) = layout.of_kind(SlotKind::Anchor).next() {
            slots[i].assignment[0] = Some(Assignment::Latent(0));
        }
    }

    for (i, range) in assign_temporal(history_latent_len, layout) {
        // newest latent sits in the last position of the slot
        let n = slots[i].assignment.len();
        for (k, latent) in (range.start..range.end).enumerate() {
            slots[i].assignment[n - range.len() as usize + k] = Some(Assignment::Latent(latent));
        }
    }

    let mut spatial_positions: Vec<(u32, usize, usize)> = layout
        .of_kind(SlotKind::Spatial)
        .flat_map(|(i, s)| (0..s.n as usize).map(move |p| (s.m, i, p)))
        .collect();
    spatial_positions.sort_by_key(|(m, i, p)| (*m, *i, *p));
    for (id, (_, i, p)) in retrieved.iter().zip(&spatial_positions) {
        slots[*i].assignment[*p] = Some(Assignment::Frame(*id));
    }

    if let Some(g) = slots.last_mut() {
        for (k, a) in g.assignment.iter_mut().enumerate() {
            *a = Some(Assignment::Generate(history_latent_len + k as u64));
        }
    }

    for s in &mut slots {
        s.filled_tokens = s.assignment.iter().flatten().count() as u64 * s.tokens_per_frame;
    }
    let filled_tokens = slots.iter().map(|s| s.filled_tokens).sum();
    Ok(ContextPlan { layout: layout.to_string(), slots, total_tokens: counts.total, filled_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot(kind: SlotKind, n: u32, m: u32) -> SlotSpec {
        SlotSpec { kind, n, m }
    }

    #[test]
    fn default_layout_structure() {
        let l = parse_layout(DEFAULT_LAYOUT).unwrap();
        use SlotKind::*;
        assert_eq!(
            l.slots(),
            &[
                slot(Anchor, 1, 1),
                slot(Spatial, 4, 2),
                slot(Spatial, 1, 1),
                slot(Temporal, 16, 4),
                slot(Temporal, 2, 2),
                slot(Temporal, 1, 1),
                slot(Generate, 20, 1),
            ]
        );
        assert_eq!(l.capacity(Spatial), 5);
        assert_eq!(l.to_string(), DEFAULT_LAYOUT);
    }

    #[test]
    fn framepack_layout_without_spatial() {
        let l = parse_layout("f1k1 | f16k4 f2k2 f1k1 | g20").unwrap();
        assert_eq!(l.capacity(SlotKind::Anchor), 1);
        assert_eq!(l.capacity(SlotKind::Temporal), 19);
        assert_eq!(l.capacity(SlotKind::Spatial), 0);
        let bare = parse_layout("f1k1 f16k4 f2k2 f1k1 g20").unwrap();
        assert_eq!(bare, l);
    }

    #[test]
    fn generate_only() {
        let l = parse_layout("g20").unwrap();
        assert_eq!(l.slots(), &[slot(SlotKind::Generate, 20, 1)]);
        assert_eq!(l.to_string(), "g20");
    }

    #[test]
    fn parse_errors() {
        let e = parse_layout("f0k1 g20").unwrap_err();
        assert_eq!(e, LayoutError::ZeroCount { pos: 0 });
        assert!(e.to_string().contains("n must be ≥ 1"));
        assert_eq!(parse_layout("f1k1 f2x2 g20").unwrap_err(), LayoutError::Malformed { pos: 5, token: "f2x2".into() });
        assert_eq!(parse_layout("f1k1 f2k2").unwrap_err(), LayoutError::MissingGenerate);
        assert_eq!(parse_layout("f1k3 g4").unwrap_err(), LayoutError::BadKernel { pos: 0, m: 3 });
        assert_eq!(parse_layout("g20 f1k1").unwrap_err(), LayoutError::GenerateNotLast { pos: 4 });
        assert_eq!(parse_layout("f1k1 f1k1 | f2k2 | g20").unwrap_err(), LayoutError::MultipleAnchors);
        assert_eq!(parse_layout("f2k1 | f1k1 | g20").unwrap_err(), LayoutError::MultipleAnchors);
        assert!(matches!(parse_layout("f1k1 | f1k1 | f1k1 | f1k1 | g1"), Err(LayoutError::TooManyGroups(5))));
        assert!(parse_layout("").is_err());
        assert!(parse_layout("g").is_err());
        assert!(parse_layout("fk1 g2").is_err());
    }

    #[test]
    fn latent_counts() {
        assert_eq!(latent_frame_count(81), Ok(21));
        assert_eq!(latent_frame_count(1), Ok(1));
        assert_eq!(latent_frame_count(80), Ok(20));
        assert_eq!(latent_frame_count(5), Ok(2));
        assert_eq!(latent_frame_count(0), Err(PackError::NoFrames));
    }

    #[test]
    fn token_examples() {
        let l = ContextLayout::default();
        let t = token_count(&l, 60, 104, 2).unwrap();
        assert_eq!(t.per_slot[0], 1560);
        assert_eq!(t.per_slot[3], 1664);
        let single = parse_layout("f1k1 | g1").unwrap();
        assert_eq!(single.slots()[0].tokens(4, 4, 1), 16);
        assert_eq!(token_count(&l, 0, 4, 1), Err(PackError::BadLatentSize));
    }

    #[test]
    fn temporal_assignment() {
        let l = ContextLayout::default();
        // anchor + 19 history latents fill everything exactly
        let full = assign_temporal(20, &l);
        let lens: Vec<u64> = full.iter().map(|(_, r)| r.len()).collect();
        assert_eq!(lens, vec![16, 2, 1]);
        assert_eq!(full[2].1, LatentRange { start: 19, end: 20 });
        assert_eq!(full[0].1, LatentRange { start: 1, end: 17 });
        // anchor + 2 latents: f1k1 and one frame of f2k2
        let short = assign_temporal(3, &l);
        assert_eq!(short.iter().map(|(_, r)| r.len()).collect::<Vec<_>>(), vec![0, 1, 1]);
        // anchor only
        assert!(assign_temporal(1, &l).iter().all(|(_, r)| r.is_empty()));
        // long history keeps only the most recent 19
        let long = assign_temporal(2001, &l);
        assert_eq!(long[0].1.start, 2001 - 19);
    }

    #[test]
    fn plan_spatial_assignment() {
        let l = ContextLayout::default();
        let plan = assemble_plan(30, &[7, 3, 9, 1, 4], &l, 60, 104, 2).unwrap();
        assert_eq!(plan.slots[2].assignment, vec![Some(Assignment::Frame(7))]);
        assert_eq!(
            plan.slots[1].assignment,
            vec![Some(Assignment::Frame(3)), Some(Assignment::Frame(9)), Some(Assignment::Frame(1)), Some(Assignment::Frame(4))]
        );
        assert_eq!(plan.slots[0].assignment, vec![Some(Assignment::Latent(0))]);
        assert_eq!(plan.slots[5].assignment, vec![Some(Assignment::Latent(29))]);
        assert_eq!(plan.slots[6].assignment[0], Some(Assignment::Generate(30)));
        assert_eq!(plan.filled_tokens, plan.total_tokens);

        let empty = assemble_plan(30, &[], &l, 60, 104, 2).unwrap();
        assert!(empty.slots[1].assignment.iter().all(Option::is_none));
        assert!(empty.slots[2].assignment.iter().all(Option::is_none));
        assert_eq!(empty.total_tokens, plan.total_tokens);
        assert!(empty.filled_tokens < plan.total_tokens);

        assert_eq!(
            assemble_plan(30, &[1, 2, 3, 4, 5, 6], &l, 60, 104, 2),
            Err(PackError::TooManyRetrieved { got: 6, capacity: 5 })
        );
    }

    #[test]
    fn budget_independent_of_history() {
        let l = ContextLayout::default();
        let a = assemble_plan(21, &[0, 1], &l, 60, 104, 2).unwrap();
        let b = assemble_plan(2001, &[0, 1], &l, 60, 104, 2).unwrap();
        assert_eq!(a.total_tokens, b.total_tokens);
        assert_eq!(a.filled_tokens, b.filled_tokens);
    }

    fn arb_layout() -> impl Strategy<Value = ContextLayout> {
        let f = (1u32..20, 0u32..4).prop_map(|(n, e)| (n, 1u32 << e));
        (any::<bool>(), prop::collection::vec(f.clone(), 0..3), prop::collection::vec(f, 0..4), 1u32..40).prop_map(
            |(anchor, spatial, temporal, g)| {
                let mut slots = Vec::new();
                if anchor {
                    slots.push(SlotSpec { kind: SlotKind::Anchor, n: 1, m: 1 });
                }
                slots.extend(spatial.iter().map(|(n, m)| SlotSpec { kind: SlotKind::Spatial, n: *n, m: *m }));
                slots.extend(temporal.iter().map(|(n, m)| SlotSpec { kind: SlotKind::Temporal, n: *n, m: *m }));
                slots.push(SlotSpec { kind: SlotKind::Generate, n: g, m: 1 });
                ContextLayout { slots }
            },
        )
    }

    proptest! {
        #[test]
        fn format_parse_identity(layout in arb_layout()) {
            let text = layout.to_string();
            let back = parse_layout(&text).unwrap();
            prop_assert_eq!(&back, &layout);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn fixed_budget(layout in arb_layout(), h in 1u32..80, w in 1u32..120, p in 1u32..4, hist in 1u64..5000) {
            let cap = layout.capacity(SlotKind::Spatial) as usize;
            let retrieved: Vec<u64> = (0..cap as u64).collect();
            let plan = assemble_plan(hist, &retrieved, &layout, h, w, p).unwrap();
            prop_assert_eq!(plan.total_tokens, token_count(&layout, h, w, p).unwrap().total);
            prop_assert!(plan.filled_tokens <= plan.total_tokens);
        }
    }
}
