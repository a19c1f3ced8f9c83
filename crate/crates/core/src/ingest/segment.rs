/// Splits whitespace-normalized text into sentence spans.
///
/// A sentence ends after `.`, `!` or `?` when the terminator is followed by a
/// single space and an uppercase letter, or by the end of the text. The space
/// between two sentences belongs to neither span. Abbreviations are not
/// recognised, so "dhr. Peeters" stays one sentence only because the next
/// word is lowercase.
///
/// Spans are `(start, end)` character offsets, half-open.
pub fn segment_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < n {
        if matches!(chars[i], '.' | '!' | '?') {
            if i + 1 == n {
                spans.push((start, n));
                start = n;
            } else if chars[i + 1] == ' ' && i + 2 < n && chars[i + 2].is_uppercase() {
                spans.push((start, i + 1));
                start = i + 2;
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    if start < n {
        spans.push((start, n));
    }
    spans
}
