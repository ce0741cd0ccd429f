use super::lexicon::Lexicon;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// Lowercased word with letter runs of three or more collapsed to one
    /// letter, or an emoticon verbatim.
    pub text: String,
    /// Same collapse, but to two letters ("cooool" → "cool").
    pub alt: Option<String>,
    pub elongated: bool,
    pub emoticon: bool,
    pub clause: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tokens {
    pub tokens: Vec<Token>,
    /// Per clause: whether it was terminated by an exclamation mark.
    pub exclaimed: Vec<bool>,
}

impl Tokens {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';')
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn collapse_runs(word: &str, keep: usize) -> (String, bool) {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len());
    let mut elongated = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let mut j = i;
        while j < chars.len() && chars[j] == c {
            j += 1;
        }
        let run = j - i;
        let take = if run >= 3 && c.is_alphabetic() {
            elongated = true;
            keep
        } else {
            run
        };
        out.extend(std::iter::repeat_n(c, take));
        i = j;
    }
    (out, elongated)
}

struct Builder {
    out: Tokens,
    clause_has_tokens: bool,
}

impl Builder {
    fn push(&mut self, text: String, alt: Option<String>, elongated: bool, emoticon: bool) {
        if self.out.exclaimed.is_empty() {
            self.out.exclaimed.push(false);
        }
        self.out.tokens.push(Token {
            text,
            alt,
            elongated,
            emoticon,
            clause: self.out.exclaimed.len() - 1,
        });
        self.clause_has_tokens = true;
    }

    fn push_word(&mut self, word: &str) {
        let word = word.trim_matches('\'');
        if word.is_empty() {
            return;
        }
        let lower = word.to_lowercase();
        let (one, elongated) = collapse_runs(&lower, 1);
        let alt = elongated.then(|| collapse_runs(&lower, 2).0);
        self.push(one, alt, elongated, false);
    }

    fn end_clause(&mut self, exclaim: bool) {
        if !self.clause_has_tokens {
            return;
        }
        if let Some(last) = self.out.exclaimed.last_mut() {
            *last |= exclaim;
        }
        self.out.exclaimed.push(false);
        self.clause_has_tokens = false;
    }
}

/// Splits text into lowercased word tokens grouped into clauses.
///
/// @-handles and URLs are dropped. Whitespace-delimited chunks found in the
/// lexicon's emoticon table are kept verbatim. Clauses end at `.`, `!`, `?`
/// and `;`; a clause ending in a run containing `!` is flagged.
pub fn tokenize(text: &str, lex: &Lexicon) -> Tokens {
    let mut b = Builder {
        out: Tokens::default(),
        clause_has_tokens: false,
    };
    for chunk in text.split_whitespace() {
        if chunk.starts_with('@') || is_url(chunk) {
            continue;
        }
        if lex.emoticons.contains_key(chunk) {
            b.push(chunk.to_string(), None, false, true);
            continue;
        }
        let bare = chunk.trim_end_matches(is_terminator);
        if bare.len() < chunk.len() && lex.emoticons.contains_key(bare) {
            b.push(bare.to_string(), None, false, true);
            b.end_clause(chunk[bare.len()..].contains('!'));
            continue;
        }
        let mut word = String::new();
        let mut chars = chunk.chars().peekable();
        while let Some(c) = chars.next() {
            if c.is_alphanumeric() || c == '\'' {
                word.push(c);
                continue;
            }
            b.push_word(&word);
            word.clear();
            if is_terminator(c) {
                let mut exclaim = c == '!';
                while let Some(&n) = chars.peek() {
                    if is_terminator(n) {
                        exclaim |= n == '!';
                        chars.next();
                    } else {
                        break;
                    }
                }
                b.end_clause(exclaim);
            }
        }
        b.push_word(&word);
    }
    let mut out = b.out;
    // drop a trailing empty clause slot
    if let Some(last_clause) = out.tokens.last().map(|t| t.clause) {
        out.exclaimed.truncate(last_clause + 1);
    } else {
        out.exclaimed.clear();
    }
    out
}
