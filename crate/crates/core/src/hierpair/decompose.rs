//! Rule-based document → paragraph → sentence → entity decomposition.

/// Lowercased abbreviations (without the final period) that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "gen", "gov", "sen", "rep", "hon", "rev", "col",
    "lt", "maj", "capt", "sgt", "adm", "pres", "vs", "etc", "e.g", "i.e", "cf", "no", "inc", "co", "corp", "ltd",
    "dept", "u.s", "u.k", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

/// Capitalized words that are never entities on their own.
const NOT_ENTITIES: &[&str] = &["I"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub entities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Paragraph {
    pub text: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Decomposition {
    pub paragraphs: Vec<Paragraph>,
}

impl Decomposition {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }
}

pub fn decompose(text: &str) -> Decomposition {
    let paragraphs = split_paragraphs(text)
        .into_iter()
        .map(|p| Paragraph {
            sentences: split_sentences(p)
                .into_iter()
                .map(|s| Sentence {
                    entities: entities(s),
                    text: s.to_string(),
                })
                .collect(),
            text: p.to_string(),
        })
        .collect();
    Decomposition { paragraphs }
}

/// Blocks of text separated by blank lines, trimmed, as slices of `text`.
pub fn split_paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                out.push(text[s..end].trim());
            }
        } else {
            start.get_or_insert(offset);
            end = offset + line.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(text[s..end].trim());
    }
    out.retain(|p| !p.is_empty());
    out
}

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let w = w.strip_suffix('.').unwrap_or(w);
    if w.chars().count() == 1 && w.chars().all(|c| c.is_uppercase()) {
        return true;
    }
    let lower = w.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits on `.`, `?` or `!` followed by whitespace and an uppercase letter,
/// unless the period closes a known abbreviation.
pub fn split_sentences(paragraph: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = paragraph.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = k + 1;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == k + 1 || j >= chars.len() || !chars[j].1.is_uppercase() {
            continue;
        }
        if c == '.' {
            let word_start = paragraph[start..i]
                .rfind(char::is_whitespace)
                .map_or(start, |w| start + w + 1);
            if is_abbreviation(&paragraph[word_start..=i]) {
                continue;
            }
        }
        let s = paragraph[start..=i].trim();
        if !s.is_empty() {
            out.push(s);
        }
        start = chars[j].0;
    }
    let tail = paragraph[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Runs of capitalized tokens that do not start the sentence, deduplicated
/// in first-occurrence order.
pub fn entities(sentence: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, out: &mut Vec<String>| {
        if !run.is_empty() {
            let e = run.join(" ");
            if !out.contains(&e) {
                out.push(e);
            }
            run.clear();
        }
    };
    for (i, token) in sentence.split_whitespace().enumerate() {
        let core = token.trim_start_matches(|c: char| !c.is_alphanumeric());
        let abbrev = is_abbreviation(core) && core.ends_with('.');
        let stripped = core.trim_end_matches(|c: char| !c.is_alphanumeric());
        let capitalized = stripped.chars().next().is_some_and(|c| c.is_uppercase());
        let leading_punct = core.len() != token.len();
        let head = stripped.split('\'').next().unwrap_or(stripped);
        if i == 0 || !capitalized || NOT_ENTITIES.contains(&head) {
            flush(&mut run, &mut out);
            continue;
        }
        if leading_punct {
            flush(&mut run, &mut out);
        }
        if abbrev {
            run.push(core);
            continue;
        }
        run.push(stripped);
        if stripped.len() != core.len() {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out
}
