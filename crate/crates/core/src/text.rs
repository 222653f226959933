//! Small text helpers shared by the embedder, the selector features and the
//! toy language model.

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Character trigrams of one token, padded with `#` on both sides so that
/// short tokens still produce at least one trigram.
pub fn token_trigrams(token: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('#')
        .chain(token.chars())
        .chain(std::iter::once('#'))
        .collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizes_on_non_alphanumerics() {
        assert_eq!(tokenize("Who leads Mexico?"), vec!["who", "leads", "mexico"]);
        assert!(tokenize("?!").is_empty());
    }

    #[test]
    fn trigrams_are_padded() {
        assert_eq!(token_trigrams("ab"), vec!["#ab", "ab#"]);
        assert_eq!(token_trigrams("a"), vec!["#a#"]);
    }
}

/// Byte offset of the first occurrence of `needle` in `haystack` that is not
/// glued to a neighbouring alphanumeric character.
pub fn find_word_bounded(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    haystack.match_indices(needle).map(|(i, _)| i).find(|&i| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}
