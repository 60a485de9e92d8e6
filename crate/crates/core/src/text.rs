//! Tokenization shared by the lexicon, the matcher and delexicalization.
//!
//! Tokens are case-folded runs of alphanumerics. A leading `#` stays attached
//! so attribute names such as `#bedroom` survive as one token, and `.`/`,`
//! between digits keep numbers like `2.5` or `3,000` whole.

/// Splits `text` into case-folded tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
        let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if (c == '.' || c == ',') && prev_digit && next_digit && !current.is_empty() {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if c == '#' && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
            current.push('#');
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Normalizes a phrase to its canonical lexicon form: tokens joined by one space.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Parses a numeric token, accepting thousands separators.
pub fn parse_number(token: &str) -> Option<f64> {
    if !token.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return None;
    }
    let cleaned: String = token.chars().filter(|&c| c != ',').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Formats a number without a trailing `.0` when it is integral.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
