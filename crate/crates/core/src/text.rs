//! Tweet tokenization, normalization and corpus loading.
//!
//! The tokenizer is a deterministic scanner. At every token start it tries, in
//! order: a web link, the longest emoticon from the bundled lexicon, a user
//! mention, a hashtag, a word (or number), and finally a run of punctuation.
//! Words, mentions and hashtags are lowercased; emoticons keep their case.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::label::Label;

const EMOTICON_LEXICON: &str = include_str!("../data/emoticons.txt");

/// A single tweet token: a word, emoticon, or punctuation unit.
///
/// Always non-empty and free of whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    /// Returns `None` for empty strings or strings containing whitespace.
    pub fn new(surface: impl Into<String>) -> Option<Token> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(surface))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<&str> for Token {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub id: String,
    pub label: Label,
    pub tokens: Vec<Token>,
}

/// A loaded corpus plus the number of lines dropped because the tweet was
/// empty after preprocessing.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub skipped_empty: usize,
}

/// Emoticon entries grouped by first character, longest first.
struct Lexicon {
    by_first: HashMap<char, Vec<&'static str>>,
}

impl Lexicon {
    fn get() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            let mut by_first: HashMap<char, Vec<&'static str>> = HashMap::new();
            for line in EMOTICON_LEXICON.lines() {
                let entry = line.trim();
                if entry.is_empty() || entry.starts_with('#') {
                    continue;
                }
                let first = entry.chars().next().expect("non-empty entry");
                by_first.entry(first).or_default().push(entry);
            }
            for entries in by_first.values_mut() {
                entries.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
                entries.dedup();
            }
            Lexicon { by_first }
        })
    }

    /// Byte length of the longest emoticon starting `rest`. An emoticon that
    /// ends in a letter or digit must not run into another word character
    /// (":p" does not match inside ":pizza").
    fn longest_match(&self, rest: &str) -> Option<usize> {
        let first = rest.chars().next()?;
        let entries = self.by_first.get(&first)?;
        entries.iter().find_map(|entry| {
            if !rest.starts_with(entry) {
                return None;
            }
            let last = entry.chars().next_back()?;
            let next = rest[entry.len()..].chars().next();
            match next {
                Some(n) if is_word_char(last) && is_word_char(n) => None,
                _ => Some(entry.len()),
            }
        })
    }
}

/// The emoticon lexicon shipped with the tokenizer.
pub fn emoticons() -> impl Iterator<Item = &'static str> {
    Lexicon::get().by_first.values().flatten().copied()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn starts_with_ignore_case(s: &str, prefix: &str) -> bool {
    s.len() >= prefix.len()
        && s.is_char_boundary(prefix.len())
        && s[..prefix.len()].eq_ignore_ascii_case(prefix)
}

fn is_link_start(rest: &str) -> bool {
    ["http://", "https://", "www."]
        .iter()
        .any(|p| starts_with_ignore_case(rest, p))
}

/// Byte length of the leading run of characters satisfying `pred`.
fn run_len(s: &str, pred: impl Fn(char) -> bool) -> usize {
    s.char_indices()
        .find(|&(_, c)| !pred(c))
        .map_or(s.len(), |(i, _)| i)
}

/// `@name` or `#tag` at the start of `rest`.
fn sigil_word_len(rest: &str, sigil: char) -> Option<usize> {
    let mut chars = rest.chars();
    if chars.next() != Some(sigil) {
        return None;
    }
    let body = &rest[sigil.len_utf8()..];
    match run_len(body, is_word_char) {
        0 => None,
        n => Some(sigil.len_utf8() + n),
    }
}

/// Word characters, joined across inner apostrophes ("don't") and, for
/// all-digit tokens, across numeric separators ("3.5", "12:30").
fn word_len(rest: &str) -> usize {
    let mut end = run_len(rest, is_word_char);
    loop {
        let tail = &rest[end..];
        let mut chars = tail.chars();
        let Some(sep) = chars.next() else { break };
        let Some(after) = chars.next() else { break };
        let joins = match sep {
            '\'' | '\u{2019}' => is_word_char(after),
            '.' | ',' | ':' | '/' => {
                after.is_ascii_digit() && rest[..end].chars().all(|c| c.is_ascii_digit())
            }
            _ => false,
        };
        if !joins {
            break;
        }
        let sep_len = sep.len_utf8();
        end += sep_len + run_len(&tail[sep_len..], is_word_char);
    }
    end
}

fn punctuation_len(rest: &str, lexicon: &Lexicon) -> usize {
    let mut end = 0;
    for (i, c) in rest.char_indices() {
        if c.is_whitespace() || is_word_char(c) {
            break;
        }
        if i > 0 {
            let tail = &rest[i..];
            if lexicon.longest_match(tail).is_some()
                || sigil_word_len(tail, '@').is_some()
                || sigil_word_len(tail, '#').is_some()
            {
                break;
            }
        }
        end = i + c.len_utf8();
    }
    end
}

/// Splits raw tweet text into tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let lexicon = Lexicon::get();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let c = rest.chars().next().expect("pos is on a char boundary");
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }

        let (len, lowercase) = if is_link_start(rest) {
            (run_len(rest, |c| !c.is_whitespace()), false)
        } else if let Some(n) = lexicon.longest_match(rest) {
            (n, false)
        } else if let Some(n) = sigil_word_len(rest, '@').or_else(|| sigil_word_len(rest, '#')) {
            (n, true)
        } else if is_word_char(c) {
            (word_len(rest), true)
        } else {
            (punctuation_len(rest, lexicon), false)
        };

        let surface = &rest[..len];
        let surface = if lowercase {
            surface.to_lowercase()
        } else {
            surface.to_string()
        };
        tokens.push(Token(surface));
        pos += len;
    }
    tokens
}

fn is_link(token: &str) -> bool {
    is_link_start(token)
}

fn is_mention(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next() == Some('@') && chars.next().is_some_and(is_word_char)
}

/// Replaces web links with `url` and user mentions with `uuser`.
pub fn normalize(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| {
            if is_link(t.as_str()) {
                Token("url".into())
            } else if is_mention(t.as_str()) {
                Token("uuser".into())
            } else {
                t.clone()
            }
        })
        .collect()
}

/// `tokenize` followed by `normalize`.
pub fn preprocess(text: &str) -> Vec<Token> {
    normalize(&tokenize(text))
}

fn lines_of(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let path = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, line)| (i + 1, line.map_err(|e| Error::io(&path, e)))))
}

fn is_skippable(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

/// Parses one `id<TAB>label<TAB>text` line.
fn parse_labeled_line(line: &str, number: usize) -> Result<(String, Label, &str)> {
    let fields: Vec<&str> = line.splitn(3, '\t').collect();
    if fields.len() != 3 {
        return Err(Error::MalformedLine {
            line: number,
            reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
        });
    }
    let label = fields[1]
        .parse::<Label>()
        .map_err(|label| Error::UnknownLabel {
            label,
            line: number,
        })?;
    Ok((fields[0].to_string(), label, fields[2]))
}

/// Parses labeled examples from any line source. Line numbers are 1-based
/// and count comment lines.
pub fn parse_dataset<I, S>(lines: I) -> Result<Dataset>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut dataset = Dataset::default();
    for (i, line) in lines.into_iter().enumerate() {
        push_line(&mut dataset, line.as_ref(), i + 1)?;
    }
    finish(dataset)
}

fn push_line(dataset: &mut Dataset, line: &str, number: usize) -> Result<()> {
    let line = line.trim_end_matches(['\r', '\n']);
    if is_skippable(line) {
        return Ok(());
    }
    let (id, label, text) = parse_labeled_line(line, number)?;
    let tokens = preprocess(text);
    if tokens.is_empty() {
        dataset.skipped_empty += 1;
    } else {
        dataset.examples.push(LabeledExample { id, label, tokens });
    }
    Ok(())
}

fn finish(dataset: Dataset) -> Result<Dataset> {
    if dataset.skipped_empty > 0 {
        log::warn!(
            "skipped {} example(s) that were empty after preprocessing",
            dataset.skipped_empty
        );
    }
    Ok(dataset)
}

/// Loads a tab-separated labeled corpus.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut dataset = Dataset::default();
    for (number, line) in lines_of(path.as_ref())? {
        push_line(&mut dataset, &line?, number)?;
    }
    finish(dataset)
}

/// A tweet to classify. Tokens may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledExample {
    pub id: String,
    pub tokens: Vec<Token>,
}

/// Loads prediction input: either `id<TAB>text` or the labeled
/// `id<TAB>label<TAB>text` form (the label is ignored). Tweets that are
/// empty after preprocessing are kept so every input id gets an output line.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<UnlabeledExample>> {
    let mut out = Vec::new();
    for (number, line) in lines_of(path.as_ref())? {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        let (id, text) = match fields.as_slice() {
            [id, label, text] if label.parse::<Label>().is_ok() => (*id, *text),
            [id, _, _] => (*id, line[id.len() + 1..].as_ref()),
            [id, text] => (*id, *text),
            _ => {
                return Err(Error::MalformedLine {
                    line: number,
                    reason: "expected at least 2 tab-separated fields".into(),
                })
            }
        };
        out.push(UnlabeledExample {
            id: id.to_string(),
            tokens: preprocess(text),
        });
    }
    Ok(out)
}

/// Reads `(id, label)` pairs from a labeled corpus without dropping empty
/// tweets.
pub fn load_gold_labels(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>> {
    let mut out = Vec::new();
    for (number, line) in lines_of(path.as_ref())? {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let (id, label, _) = parse_labeled_line(&line, number)?;
        out.push((id, label));
    }
    Ok(out)
}
