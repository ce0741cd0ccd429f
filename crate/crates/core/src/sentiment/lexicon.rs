use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LexiconRole {
    Term,
    Booster,
    Negator,
    Emoticon,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    /// Lowercased sentiment word → signed strength, |s| in 2..=5.
    pub terms: HashMap<String, i8>,
    /// Intensity modifier applied to the following sentiment word, ±1.
    pub boosters: HashMap<String, i8>,
    pub negators: HashSet<String>,
    /// Verbatim emoticon token → signed strength, |s| in 2..=5.
    pub emoticons: HashMap<String, i8>,
}

impl Lexicon {
    /// Parses `term<TAB>role<TAB>value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |m: String| Error::parse("lexicon", lineno, m);
            if fields.len() < 2 || fields.len() > 3 {
                return Err(err("expected term<TAB>role<TAB>value".into()));
            }
            let role = match fields[1].trim() {
                "term" => LexiconRole::Term,
                "booster" => LexiconRole::Booster,
                "negator" => LexiconRole::Negator,
                "emoticon" => LexiconRole::Emoticon,
                other => return Err(err(format!("unknown role {other:?}"))),
            };
            let key = match role {
                LexiconRole::Emoticon => fields[0].trim().to_string(),
                _ => fields[0].trim().to_lowercase(),
            };
            if key.is_empty() {
                return Err(err("empty entry".into()));
            }
            if let Some(prev) = seen.insert(key.clone(), lineno) {
                return Err(err(format!("{key:?} already defined on line {prev}")));
            }
            let value = match (role, fields.get(2).map(|v| v.trim())) {
                (LexiconRole::Negator, None | Some("")) => 0,
                (LexiconRole::Negator, Some(v)) => {
                    return Err(err(format!("negator takes no value, got {v:?}")))
                }
                (_, None | Some("")) => return Err(err("missing value".into())),
                (_, Some(v)) => v
                    .parse::<i8>()
                    .map_err(|_| err(format!("value {v:?} is not an integer")))?,
            };
            match role {
                LexiconRole::Term | LexiconRole::Emoticon => {
                    if !(2..=5).contains(&value.unsigned_abs()) {
                        return Err(err(format!("strength {value} outside ±2..±5")));
                    }
                    let map = if role == LexiconRole::Term {
                        &mut lex.terms
                    } else {
                        &mut lex.emoticons
                    };
                    map.insert(key, value);
                }
                LexiconRole::Booster => {
                    if value.abs() != 1 {
                        return Err(err(format!("booster value {value} must be +1 or -1")));
                    }
                    lex.boosters.insert(key, value);
                }
                LexiconRole::Negator => {
                    lex.negators.insert(key);
                }
            }
        }
        Ok(lex)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.emoticons.is_empty()
    }

    /// Terms of the given sign, sorted, for building synthetic text.
    pub fn terms_with_sign(&self, positive: bool) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .terms
            .iter()
            .filter(|(_, &s)| (s > 0) == positive)
            .map(|(k, _)| k.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn role_of(&self, word: &str) -> Option<LexiconRole> {
        if self.terms.contains_key(word) {
            Some(LexiconRole::Term)
        } else if self.boosters.contains_key(word) {
            Some(LexiconRole::Booster)
        } else if self.negators.contains(word) {
            Some(LexiconRole::Negator)
        } else if self.emoticons.contains_key(word) {
            Some(LexiconRole::Emoticon)
        } else {
            None
        }
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_fixture() {
        let lex = Lexicon::parse("# sample\nlove\tterm\t+3\nhate\tterm\t-4\nvery\tbooster\t1\nnot\tnegator\n")
            .unwrap();
        assert_eq!(lex.terms.len(), 2);
        assert_eq!(lex.boosters.len(), 1);
        assert_eq!(lex.negators.len(), 1);
        assert_eq!(lex.terms["hate"], -4);
    }

    #[test]
    fn neutral_strength_rejected_with_line() {
        let err = Lexicon::parse("ok\tterm\t2\nmeh\tterm\t+1\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_across_roles_rejected() {
        assert!(Lexicon::parse("not\tnegator\nnot\tterm\t-2\n").is_err());
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        assert!(Lexicon::parse("").unwrap().is_empty());
    }

    #[test]
    fn shipped_lexicon_is_valid() {
        let lex = Lexicon::parse(crate::sentiment::DEFAULT_LEXICON).unwrap();
        assert!(lex.terms_with_sign(true).len() >= 10);
        assert!(lex.terms_with_sign(false).len() >= 10);
        assert!(lex.emoticons.contains_key(":("));
    }
}
