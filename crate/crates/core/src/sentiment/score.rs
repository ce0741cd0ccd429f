use super::lexicon::Lexicon;
use super::tokenize::{tokenize, Tokens};

/// Positive and negative strengths, each in 1..=5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SentimentScore {
    pub positive: u8,
    pub negative: u8,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore {
        positive: 1,
        negative: 1,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolarityLabels {
    pub is_positive: bool,
    pub is_negative: bool,
}

pub fn polarity_labels(s: SentimentScore) -> PolarityLabels {
    PolarityLabels {
        is_positive: s.positive >= 2,
        is_negative: s.negative >= 2,
    }
}

const NEGATION_WINDOW: usize = 2;
const MAX_STRENGTH: i8 = 5;

struct Hit {
    clause: usize,
    positive: bool,
    magnitude: i8,
}

fn base_strength(lex: &Lexicon, tokens: &Tokens, i: usize) -> Option<i8> {
    let t = &tokens.tokens[i];
    if t.emoticon {
        return lex.emoticons.get(&t.text).copied();
    }
    lex.terms
        .get(&t.text)
        .or_else(|| t.alt.as_ref().and_then(|a| lex.terms.get(a)))
        .copied()
}

fn scored_hits(tokens: &Tokens, lex: &Lexicon) -> Vec<Hit> {
    let toks = &tokens.tokens;
    let mut hits = Vec::new();
    for i in 0..toks.len() {
        let Some(base) = base_strength(lex, tokens, i) else {
            continue;
        };
        let clause = toks[i].clause;
        let preceding = || {
            (1..=NEGATION_WINDOW)
                .filter_map(move |back| i.checked_sub(back))
                .map(|j| &toks[j])
                .filter(move |t| t.clause == clause)
        };
        if preceding().any(|t| lex.negators.contains(&t.text)) {
            continue;
        }
        let mut magnitude = base.abs();
        if let Some(prev) = preceding().next() {
            if let Some(b) = lex.boosters.get(&prev.text) {
                magnitude += b;
            }
        }
        if toks[i].elongated {
            magnitude += 1;
        }
        hits.push(Hit {
            clause,
            positive: base > 0,
            magnitude: magnitude.clamp(1, MAX_STRENGTH),
        });
    }
    hits
}

/// Scores `text` against `lex`.
///
/// Each sentiment word's strength is raised by one for a preceding booster
/// (or lowered for a dampener) and by one for elongation; a negator within
/// the two preceding tokens of the same clause cancels it. In a clause ending
/// with `!`, the strongest word (first on ties) gains one more. Each polarity
/// reports the maximum strength found.
pub fn score_text(text: &str, lex: &Lexicon) -> SentimentScore {
    let tokens = tokenize(text, lex);
    let mut hits = scored_hits(&tokens, lex);
    for (clause, &exclaimed) in tokens.exclaimed.iter().enumerate() {
        if !exclaimed {
            continue;
        }
        let strongest = hits
            .iter_mut()
            .filter(|h| h.clause == clause)
            .reduce(|best, h| if h.magnitude > best.magnitude { h } else { best });
        if let Some(h) = strongest {
            h.magnitude = (h.magnitude + 1).min(MAX_STRENGTH);
        }
    }
    let max_of = |positive: bool| {
        hits.iter()
            .filter(|h| h.positive == positive)
            .map(|h| h.magnitude as u8)
            .max()
            .unwrap_or(1)
            .max(1)
    };
    SentimentScore {
        positive: max_of(true),
        negative: max_of(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::parse(
            "love\tterm\t3\nhate\tterm\t-4\ngood\tterm\t2\nawful\tterm\t-5\ncool\tterm\t2\n\
             very\tbooster\t1\nslightly\tbooster\t-1\nnot\tnegator\nnever\tnegator\n\
             :(\temoticon\t-2\n:D\temoticon\t4\n",
        )
        .unwrap()
    }

    fn s(p: u8, n: u8) -> SentimentScore {
        SentimentScore {
            positive: p,
            negative: n,
        }
    }

    #[test]
    fn empty_is_neutral() {
        assert_eq!(score_text("", &lex()), SentimentScore::NEUTRAL);
        assert_eq!(score_text("love", &Lexicon::default()), SentimentScore::NEUTRAL);
    }

    #[test]
    fn dual_polarity_max_rule() {
        assert_eq!(score_text("i love this but i hate that", &lex()), s(3, 4));
    }

    #[test]
    fn negation_neutralizes() {
        assert_eq!(score_text("not love", &lex()), s(1, 1));
        assert_eq!(score_text("not really love", &lex()), s(1, 1));
        // outside the two-token window
        assert_eq!(score_text("not really very love", &lex()), s(4, 1));
        // negators do not reach across clauses
        assert_eq!(score_text("not. love", &lex()), s(3, 1));
    }

    #[test]
    fn boosters_and_elongation() {
        assert_eq!(score_text("very love", &lex()), s(4, 1));
        assert_eq!(score_text("slightly love", &lex()), s(2, 1));
        assert_eq!(score_text("looooove", &lex()), s(4, 1));
        assert_eq!(score_text("very awful", &lex()), s(1, 5));
        assert_eq!(score_text("cooool", &lex()), s(3, 1));
    }

    #[test]
    fn exclamation_boosts_strongest_in_clause() {
        assert_eq!(score_text("I LOVE this!!", &lex()), s(4, 1));
        assert_eq!(score_text("love hate!", &lex()), s(3, 5));
        assert_eq!(score_text("love! hate", &lex()), s(4, 4));
    }

    #[test]
    fn emoticons_score() {
        assert_eq!(score_text("@bob http://x.y :(", &lex()), s(1, 2));
        assert_eq!(score_text("yes :D", &lex()), s(4, 1));
    }

    #[test]
    fn labels() {
        let l = polarity_labels(s(1, 1));
        assert!(!l.is_positive && !l.is_negative);
        let l = polarity_labels(s(3, 4));
        assert!(l.is_positive && l.is_negative);
        let l = polarity_labels(s(2, 1));
        assert!(l.is_positive && !l.is_negative);
    }

    const WORDS: [&str; 12] = [
        "love", "hate", "good", "awful", "very", "slightly", "not", "the", "day", "!", ".", ":(",
    ];

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(WORDS.to_vec()), 0..12)
            .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn always_in_bounds(text in any::<String>()) {
            let sc = score_text(&text, &lex());
            prop_assert!((1..=5).contains(&sc.positive));
            prop_assert!((1..=5).contains(&sc.negative));
        }

        #[test]
        fn deterministic(text in arb_text()) {
            prop_assert_eq!(score_text(&text, &lex()), score_text(&text, &lex()));
        }

        #[test]
        fn adding_positive_clause_is_monotone(text in arb_text(), term in proptest::sample::select(vec!["love", "good", "cool"])) {
            let before = score_text(&text, &lex());
            let after = score_text(&format!("{text}. {term}"), &lex());
            prop_assert!(after.positive >= before.positive);
            prop_assert_eq!(after.negative, before.negative);
        }

        #[test]
        fn concatenation_is_elementwise_max(a in arb_text(), b in arb_text()) {
            let sa = score_text(&a, &lex());
            let sb = score_text(&b, &lex());
            let sab = score_text(&format!("{a}. {b}"), &lex());
            prop_assert_eq!(sab.positive, sa.positive.max(sb.positive));
            prop_assert_eq!(sab.negative, sa.negative.max(sb.negative));
        }
    }
}
