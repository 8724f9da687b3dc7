//! Candidate entity mentions from a question.
//!
//! Two candidate sources are merged: maximal runs of capitalized tokens that
//! do not open a sentence, and every 1–4 token n-gram inside a run of
//! consecutive content words (stopwords and pronouns removed). Candidates are
//! scored by the summed inverse document frequency of their tokens, the top
//! few survive, and they are returned in question order.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::text::alnum_tokens;

pub const MAX_MENTION_TOKENS: usize = 4;
pub const DEFAULT_MAX_MENTIONS: usize = 5;

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by",
    "can", "could", "did", "do", "does", "doing", "done", "due", "during", "each", "either",
    "else", "ever", "every", "few", "for", "from", "get", "gets", "got", "had", "has", "have",
    "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "itself", "just", "know", "like", "many", "may", "me",
    "might", "mine", "more", "most", "much", "must", "my", "myself", "need", "no", "nor", "not",
    "of", "off", "on", "once", "one", "only", "or", "other", "our", "ours", "ourselves", "out",
    "over", "own", "please", "same", "shall", "she", "should", "so", "some", "such", "tell",
    "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "this", "those", "through", "to", "too", "under", "until", "up", "us", "very", "want",
    "was", "we", "were", "what", "whatever", "when", "where", "whether", "which", "while", "who",
    "whom", "whose", "why", "will", "with", "would", "yes", "you", "your", "yours", "yourself",
    "yourselves",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    /// Character offsets `[start, end)` into the question.
    pub span: (usize, usize),
}

#[derive(Debug, Clone)]
struct Token {
    lower: String,
    start: usize,
    end: usize,
    capitalized: bool,
    sentence_initial: bool,
    /// Only whitespace separates this token from the previous one.
    joined_to_prev: bool,
}

/// Mention extractor with corpus-derived IDF weights.
#[derive(Debug, Clone)]
pub struct MentionExtractor {
    idf: HashMap<String, f64>,
    unseen_idf: f64,
    max_mentions: usize,
    stopwords: HashSet<&'static str>,
}

impl Default for MentionExtractor {
    fn default() -> Self {
        Self {
            idf: HashMap::new(),
            unseen_idf: 1.0,
            max_mentions: DEFAULT_MAX_MENTIONS,
            stopwords: STOPWORDS.iter().copied().collect(),
        }
    }
}

impl MentionExtractor {
    /// IDF is `ln((N + 1) / (df + 1)) + 1`; unseen tokens get the maximum.
    pub fn from_corpus<'a>(documents: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for doc in documents {
            n += 1;
            let unique: HashSet<String> = alnum_tokens(doc).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let weight = |d: usize| ((n as f64 + 1.0) / (d as f64 + 1.0)).ln() + 1.0;
        Self {
            idf: df.into_iter().map(|(t, d)| (t, weight(d))).collect(),
            unseen_idf: weight(0),
            ..Self::default()
        }
    }

    pub fn with_max_mentions(mut self, max: usize) -> Self {
        self.max_mentions = max;
        self
    }

    fn is_stopword(&self, lower: &str) -> bool {
        self.stopwords.contains(lower)
    }

    fn idf(&self, lower: &str) -> f64 {
        self.idf.get(lower).copied().unwrap_or(self.unseen_idf)
    }

    pub fn extract(&self, question: &str) -> Vec<EntityMention> {
        let chars: Vec<char> = question.chars().collect();
        let tokens = tokenize(&chars);

        // (first token, last token inclusive)
        let mut candidates: Vec<(usize, usize)> = Vec::new();

        // Capitalized runs, skipping a sentence-initial token.
        let mut i = 0;
        while i < tokens.len() {
            if !tokens[i].capitalized || tokens[i].sentence_initial {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < tokens.len()
                && tokens[j + 1].capitalized
                && tokens[j + 1].joined_to_prev
                && j + 1 - i < MAX_MENTION_TOKENS
            {
                j += 1;
            }
            if (i..=j).any(|t| !self.is_stopword(&tokens[t].lower)) {
                candidates.push((i, j));
            }
            i = j + 1;
        }

        // Content n-grams.
        let mut run_start = None;
        for t in 0..=tokens.len() {
            let content = t < tokens.len() && !self.is_stopword(&tokens[t].lower);
            let continues = content && run_start.is_some() && tokens[t].joined_to_prev;
            if continues {
                continue;
            }
            if let Some(s) = run_start.take() {
                for a in s..t {
                    for b in a..t.min(a + MAX_MENTION_TOKENS) {
                        candidates.push((a, b));
                    }
                }
            }
            if content {
                run_start = Some(t);
            }
        }

        let score = |&(a, b): &(usize, usize)| -> f64 { (a..=b).map(|t| self.idf(&tokens[t].lower)).sum() };
        let mut scored: Vec<(f64, usize, usize)> = candidates.iter().map(|c| (score(c), c.0, c.1)).collect();
        scored.sort_by(|x, y| {
            y.0.total_cmp(&x.0)
                .then(x.1.cmp(&y.1))
                .then(y.2.cmp(&x.2))
        });

        let mut seen = HashSet::new();
        let mut picked: Vec<(usize, usize)> = Vec::new();
        for (_, a, b) in scored {
            if picked.len() == self.max_mentions {
                break;
            }
            let (start, end) = (tokens[a].start, tokens[b].end);
            let surface: String = chars[start..end].iter().collect();
            if seen.insert(surface.to_lowercase()) {
                picked.push((start, end));
            }
        }
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|(start, end)| EntityMention {
                surface: chars[start..end].iter().collect(),
                span: (start, end),
            })
            .collect()
    }
}

/// Extracts mentions with uniform token weights.
pub fn extract_mentions(question: &str) -> Vec<EntityMention> {
    MentionExtractor::default().extract(question)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn tokenize(chars: &[char]) -> Vec<Token> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    let mut sentence_start = true;
    let mut gap_is_space = false;
    while i < chars.len() {
        let c = chars[i];
        if !is_word_char(c) {
            if matches!(c, '.' | '?' | '!' | '。' | '？' | '！') {
                sentence_start = true;
            }
            if !c.is_whitespace() {
                gap_is_space = false;
            }
            i += 1;
            continue;
        }
        let start = i;
        // Hyphens and apostrophes stay inside a token when flanked by letters.
        while i < chars.len()
            && (is_word_char(chars[i])
                || (matches!(chars[i], '-' | '\'' | '’')
                    && i + 1 < chars.len()
                    && is_word_char(chars[i + 1])
                    && i > start))
        {
            i += 1;
        }
        let text: String = chars[start..i].iter().collect();
        tokens.push(Token {
            lower: text.to_lowercase(),
            start,
            end: i,
            capitalized: chars[start].is_uppercase(),
            sentence_initial: sentence_start,
            joined_to_prev: !tokens.is_empty() && gap_is_space,
        });
        sentence_start = false;
        gap_is_space = true;
    }
    tokens
}
