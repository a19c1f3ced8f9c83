use super::{chunk_id, segment_sentences, Chunk, SpeakerTurn};

/// Default chunk budget, roughly 500 tokens of prose.
pub const DEFAULT_MAX_CHUNK_CHARS: usize = 2000;
pub const MIN_MAX_CHUNK_CHARS: usize = 32;

/// Cuts a turn into contiguous chunks of at most `max_chunk_chars` characters.
///
/// Whole sentences are packed greedily; the space separating two sentences
/// travels with the earlier one. A sentence longer than the budget is
/// hard-split at the last space inside the budget window (the space stays on
/// the left piece), or exactly at the budget when the window has no space.
///
/// # Panics
///
/// If `max_chunk_chars` is below [`MIN_MAX_CHUNK_CHARS`].
pub fn chunk_turn(turn: &SpeakerTurn, max_chunk_chars: usize) -> Vec<Chunk> {
    assert!(
        max_chunk_chars >= MIN_MAX_CHUNK_CHARS,
        "max_chunk_chars must be at least {MIN_MAX_CHUNK_CHARS}"
    );
    let chars: Vec<char> = turn.text.chars().collect();
    let pieces = split_pieces(&chars, max_chunk_chars);

    let mut bounds: Vec<(usize, usize)> = Vec::new();
    for (start, end) in pieces {
        match bounds.last_mut() {
            Some(last) if end - last.0 <= max_chunk_chars => last.1 = end,
            _ => bounds.push((start, end)),
        }
    }

    bounds
        .into_iter()
        .enumerate()
        .map(|(seq, (start, end))| {
            let seq = seq as u32;
            Chunk {
                chunk_id: chunk_id(&turn.turn_id, seq),
                turn_id: turn.turn_id.clone(),
                seq,
                text: chars[start..end].iter().collect(),
                char_start: start,
                char_end: end,
            }
        })
        .collect()
}

pub fn chunk_turns(turns: &[SpeakerTurn], max_chunk_chars: usize) -> Vec<Chunk> {
    turns
        .iter()
        .flat_map(|t| chunk_turn(t, max_chunk_chars))
        .collect()
}

/// Sentence units (each extended to the next sentence start) with oversized
/// units replaced by their hard-split pieces. The pieces tile `0..len`.
fn split_pieces(chars: &[char], budget: usize) -> Vec<(usize, usize)> {
    let text: String = chars.iter().collect();
    let spans = segment_sentences(&text);
    let mut pieces = Vec::with_capacity(spans.len());
    for (i, &(start, _)) in spans.iter().enumerate() {
        let end = spans.get(i + 1).map_or(chars.len(), |next| next.0);
        let mut pos = start;
        while end - pos > budget {
            let window_end = pos + budget;
            let cut = chars[pos + 1..window_end]
                .iter()
                .rposition(|&c| c == ' ')
                .map_or(window_end, |offset| pos + 1 + offset + 1);
            pieces.push((pos, cut));
            pos = cut;
        }
        pieces.push((pos, end));
    }
    pieces
}
