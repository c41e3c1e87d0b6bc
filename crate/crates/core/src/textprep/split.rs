use crate::error::{ElsaError, Result};
use crate::numcore::Prng;

/// Partition sizes by the largest-remainder method: each size is within one
/// of its exact share and the sizes sum to `n`. Ties go to the earlier part.
pub fn partition_sizes(n: usize, ratios: &[u32]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.contains(&0) {
        return Err(ElsaError::Config(format!("ratios must be positive: {ratios:?}")));
    }
    let total: u64 = ratios.iter().map(|&r| r as u64).sum();
    let mut sizes: Vec<usize> = Vec::with_capacity(ratios.len());
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(ratios.len());
    for (i, &r) in ratios.iter().enumerate() {
        let exact = n as u64 * r as u64;
        sizes.push((exact / total) as usize);
        remainders.push((exact % total, i));
    }
    let assigned: usize = sizes.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(n - assigned) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Shuffles with `seed` and cuts the result into contiguous parts sized by
/// `ratios` (e.g. `[7, 2, 1]` for train/validation/test).
pub fn split_dataset<X: Clone>(examples: &[X], ratios: &[u32], seed: u64) -> Result<Vec<Vec<X>>> {
    if examples.len() < ratios.len() {
        return Err(ElsaError::Size(format!(
            "{} examples cannot fill {} partitions",
            examples.len(),
            ratios.len()
        )));
    }
    let sizes = partition_sizes(examples.len(), ratios)?;
    let order = Prng::new(seed).permutation(examples.len());
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        parts.push(order[start..start + size].iter().map(|&i| examples[i].clone()).collect());
        start += size;
    }
    Ok(parts)
}

/// Convenience wrapper for the three-way split.
pub fn split_train_valid_test<X: Clone>(
    examples: &[X],
    ratios: [u32; 3],
    seed: u64,
) -> Result<(Vec<X>, Vec<X>, Vec<X>)> {
    let mut parts = split_dataset(examples, &ratios, seed)?.into_iter();
    let train = parts.next().unwrap_or_default();
    let valid = parts.next().unwrap_or_default();
    let test = parts.next().unwrap_or_default();
    Ok((train, valid, test))
}

fn is_sentence_final(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

/// Splits at sentence-final punctuation (ASCII or fullwidth) that is
/// followed by whitespace or the end of the text. Fullwidth marks also end a
/// sentence when directly followed by more text, since CJK text has no
/// inter-sentence spaces.
pub fn split_sentences(document: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = document.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !is_sentence_final(c) {
            continue;
        }
        let next = chars.get(k + 1).map(|&(_, n)| n);
        let boundary = match next {
            None => true,
            Some(n) if n.is_whitespace() => true,
            Some(n) => !c.is_ascii() && !is_sentence_final(n),
        };
        if boundary {
            let end = i + c.len_utf8();
            push_segment(&document[start..end], &mut out);
            start = end;
        }
    }
    push_segment(&document[start..], &mut out);
    out
}

fn push_segment(seg: &str, out: &mut Vec<String>) {
    let s = seg.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
