//! Synthetic inputs shared by the benchmarks.

use insureqa_core::ingest::SourceDocument;

const WORDS: &[&str] = &[
    "benefit", "hospitalization", "daily", "amount", "insured", "policy", "radiation", "treatment", "payment",
    "surgery", "cancer", "diagnosis", "premium", "waiver", "contract", "rider", "lifestyle", "disease",
];

/// Deterministic pseudo-text of about `chars` characters.
pub fn prose(seed: u64, chars: usize) -> String {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut out = String::with_capacity(chars + 16);
    let mut words_in_sentence = 0;
    while out.len() < chars {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        out.push_str(WORDS[(state >> 33) as usize % WORDS.len()]);
        words_in_sentence += 1;
        if words_in_sentence == 12 {
            out.push_str(". ");
            words_in_sentence = 0;
        } else {
            out.push(' ');
        }
    }
    out
}

pub fn document(id: usize, chars: usize) -> SourceDocument {
    SourceDocument {
        doc_id: format!("doc-{id}"),
        title: format!("Rulebook {id}"),
        body_text: prose(id as u64, chars),
        tables: Vec::new(),
    }
}
