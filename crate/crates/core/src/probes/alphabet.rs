// SPDX-License-Identifier: Apache-2.0

//! The fixed 48-symbol character inventory shared by the BoC probe, the CTC
//! probe and the text erasure concepts.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// `a-z`, `0-9`, space, apostrophe, then `. , ? ! ; : - " ( )`.
pub const ALPHABET: [char; 48] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', ' ', '\'',
    '.', ',', '?', '!', ';', ':', '-', '"', '(', ')',
];

pub const ALPHABET_SIZE: usize = ALPHABET.len();
/// CTC blank sits after the 48 symbols.
pub const BLANK: usize = ALPHABET_SIZE;
pub const CTC_CLASSES: usize = ALPHABET_SIZE + 1;

pub fn symbol_index(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '0'..='9' => Some(26 + c as usize - '0' as usize),
        _ => ALPHABET[36..].iter().position(|&s| s == c).map(|i| 36 + i),
    }
}

fn fold(c: char) -> Option<char> {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{02BC}' | '`' => Some('\''),
        '\u{201C}' | '\u{201D}' => Some('"'),
        '\u{2010}'..='\u{2015}' => Some('-'),
        c if c.is_whitespace() => Some(' '),
        c => Some(c),
    }
}

/// Decompose, strip diacritics, lowercase, fold typographic quotes and
/// dashes, map any whitespace to a space, and drop everything outside the
/// alphabet.
pub fn normalize_text(s: &str) -> String {
    s.nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .filter(|c| !is_combining_mark(*c))
        .filter_map(fold)
        .filter(|c| symbol_index(*c).is_some())
        .collect()
}

/// Symbol indices of the normalised text.
pub fn encode(s: &str) -> Vec<usize> {
    normalize_text(s)
        .chars()
        .map(|c| symbol_index(c).expect("normalised text stays in the alphabet"))
        .collect()
}

pub fn decode(indices: &[usize]) -> String {
    indices.iter().filter_map(|&i| ALPHABET.get(i)).collect()
}

/// Normalised character frequencies; all zeros when nothing survives
/// normalisation.
pub fn boc_vector(text: &str) -> [f64; ALPHABET_SIZE] {
    let mut v = [0.0; ALPHABET_SIZE];
    let idx = encode(text);
    for &i in &idx {
        v[i] += 1.0;
    }
    if !idx.is_empty() {
        let n = idx.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
