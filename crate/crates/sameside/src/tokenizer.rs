//! Lower-cased basic tokenization, greedy longest-match subword segmentation
//! over a corpus-built vocabulary, and BERT-convention pair encoding:
//! `[CLS] argument1 [SEP] argument2 [SEP]` with balanced tail truncation and
//! right padding.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::corpus::{ArgumentPairRecord, Corpus};
use crate::par;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const CONTINUATION_PREFIX: &str = "##";

/// Sequence-length cap inherited from the encoding convention.
pub const MAX_SEQ_LEN_CAP: usize = 512;
pub const MIN_SEQ_LEN: usize = 8;

const CACHE_MAGIC: &[u8; 4] = b"SSEC";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary cannot be built from an empty corpus")]
    EmptyCorpus,
    #[error("max_size {max_size} is too small: specials plus alphabet need {needed} entries")]
    VocabTooSmall { max_size: usize, needed: usize },
    #[error("vocabulary file line {line}: {message}")]
    BadVocabFile { line: usize, message: String },
    #[error("max_seq_len {0} out of range [{MIN_SEQ_LEN}, {MAX_SEQ_LEN_CAP}]")]
    BadMaxSeqLen(usize),
    #[error("pair `{pair_id}`: {which} is empty after tokenization")]
    EmptyArgument { pair_id: String, which: &'static str },
    #[error("encoded cache: {0}")]
    BadCache(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Subword vocabulary with fixed special-token ids and dense ids `0..|V|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    alphabet: HashSet<char>,
    pub max_size: usize,
    pub min_freq: usize,
}

impl Vocabulary {
    /// Build from an explicit token list; ids are list positions. The first
    /// four entries must be the special tokens.
    pub fn from_tokens(
        tokens: Vec<String>,
        max_size: usize,
        min_freq: usize,
    ) -> Result<Self, TokenizerError> {
        for (i, expected) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*expected) {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    message: format!("expected special token `{expected}`"),
                });
            }
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    message: "empty token".into(),
                });
            }
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(TokenizerError::BadVocabFile {
                    line: i + 1,
                    message: format!("duplicate token `{tok}`"),
                });
            }
        }
        let alphabet = tokens
            .iter()
            .filter(|t| t.chars().count() == 1 && !SPECIAL_TOKENS.contains(&t.as_str()))
            .filter_map(|t| t.chars().next())
            .collect();
        Ok(Vocabulary { tokens, token_to_id, alphabet, max_size, min_freq })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Chars known as single-character word-initial pieces.
    pub fn in_alphabet(&self, c: char) -> bool {
        self.alphabet.contains(&c)
    }

    /// One token per line, line number = id.
    pub fn save<W: Write>(&self, mut writer: W) -> Result<(), TokenizerError> {
        for tok in &self.tokens {
            writeln!(writer, "{tok}")?;
        }
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, TokenizerError> {
        let tokens: Vec<String> = BufReader::new(reader)
            .lines()
            .collect::<Result<_, _>>()?;
        let n = tokens.len();
        Vocabulary::from_tokens(tokens, n, 0)
    }
}

/// True for Unicode punctuation (general categories P*) plus the ASCII
/// symbol characters `$+<=>^`|~` that the lowercased web text contains.
pub fn is_punctuation(c: char) -> bool {
    matches!(c, '$' | '+' | '<' | '=' | '>' | '^' | '`' | '|' | '~')
        || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Unicode-lowercase, split on whitespace, and split punctuation characters
/// into standalone tokens.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lowered.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(ch) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Build a vocabulary from a corpus: specials, then every corpus character
/// as both an initial and a continuation piece, then whole words with
/// frequency >= `min_freq` by descending frequency (ties lexicographic)
/// until `max_size`.
pub fn build_vocab(
    corpus: &Corpus,
    max_size: usize,
    min_freq: usize,
) -> Result<Vocabulary, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    let mut alphabet: BTreeSet<char> = BTreeSet::new();
    for rec in &corpus.records {
        for text in [&rec.argument1, &rec.argument2] {
            for word in basic_tokenize(text) {
                alphabet.extend(word.chars());
                *word_counts.entry(word).or_insert(0) += 1;
            }
        }
    }
    let needed = SPECIAL_TOKENS.len() + 2 * alphabet.len();
    if needed > max_size {
        return Err(TokenizerError::VocabTooSmall { max_size, needed });
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));

    let mut words: Vec<(String, u64)> = word_counts
        .into_iter()
        .filter(|(_, n)| *n >= min_freq as u64)
        .collect();
    words.sort_by(|(wa, na), (wb, nb)| nb.cmp(na).then_with(|| wa.cmp(wb)));

    let present: HashSet<String> = tokens.iter().cloned().collect();
    for (word, _) in words {
        if tokens.len() >= max_size {
            break;
        }
        if !present.contains(&word) {
            tokens.push(word);
        }
    }
    Vocabulary::from_tokens(tokens, max_size, min_freq)
}

/// Greedy longest-match-first subword segmentation of a single lower-cased
/// token. Any out-of-alphabet character maps the whole token to `[UNK]`.
pub fn wordpiece(token: &str, vocab: &Vocabulary) -> Vec<u32> {
    if token.is_empty() {
        return Vec::new();
    }
    if token.chars().any(|c| !vocab.in_alphabet(c)) {
        return vec![UNK_ID];
    }
    // Whole-token fast path.
    if let Some(id) = vocab.id_of(token) {
        return vec![id];
    }
    let chars: Vec<char> = token.chars().collect();
    let mut ids = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut matched = None;
        let mut end = chars.len();
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id_of(&candidate) {
                matched = Some((id, end));
                break;
            }
            end -= 1;
        }
        match matched {
            Some((id, end)) => {
                ids.push(id);
                start = end;
            }
            // Reachable only with hand-built vocabularies missing a
            // continuation piece; the whole token degrades to UNK.
            None => return vec![UNK_ID],
        }
    }
    ids
}

/// Subword ids of a whole text: basic tokenization then wordpiece.
pub fn subword_ids(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    basic_tokenize(text)
        .iter()
        .flat_map(|tok| wordpiece(tok, vocab))
        .collect()
}

/// Encoded length of a pair before any truncation: 3 special tokens plus
/// both subword lengths.
pub fn encoded_pair_len(rec: &ArgumentPairRecord, vocab: &Vocabulary) -> usize {
    3 + subword_ids(&rec.argument1, vocab).len() + subword_ids(&rec.argument2, vocab).len()
}

/// Balanced tail truncation: while over budget, drop the last token of the
/// currently longer sequence; ties drop from `b`.
///
/// Implemented in closed form; `tests` pins it against the literal
/// removal loop.
pub fn truncate_pair(a: &[u32], b: &[u32], budget: usize) -> (Vec<u32>, Vec<u32>) {
    assert!(budget >= 2, "truncation budget must be at least 2");
    let (la, lb) = (a.len(), b.len());
    let (ka, kb) = truncated_lengths(la, lb, budget);
    (a[..ka].to_vec(), b[..kb].to_vec())
}

/// Final lengths produced by the balanced truncation rule.
pub fn truncated_lengths(la: usize, lb: usize, budget: usize) -> (usize, usize) {
    if la + lb <= budget {
        (la, lb)
    } else if 2 * la <= budget {
        // `a` is short enough that only `b` ever gets trimmed.
        (la, budget - la)
    } else if 2 * lb <= budget {
        (budget - lb, lb)
    } else {
        // Both get trimmed down to the balanced levels; the tie rule leaves
        // the extra token (odd budgets) on `a`.
        (budget - budget / 2, budget / 2)
    }
}

/// One encoded argument pair, padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    pub attention_mask: Vec<u32>,
    pub label: bool,
    pub pair_id: String,
}

impl EncodedPair {
    /// Number of unpadded positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn max_seq_len(&self) -> usize {
        self.token_ids.len()
    }
}

/// Encode one record as `[CLS] A' [SEP] B' [SEP]` padded to `max_seq_len`,
/// with `A'`/`B'` truncated to a budget of `max_seq_len - 3`.
pub fn encode_pair(
    rec: &ArgumentPairRecord,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<EncodedPair, TokenizerError> {
    if !(MIN_SEQ_LEN..=MAX_SEQ_LEN_CAP).contains(&max_seq_len) {
        return Err(TokenizerError::BadMaxSeqLen(max_seq_len));
    }
    let a_ids = subword_ids(&rec.argument1, vocab);
    let b_ids = subword_ids(&rec.argument2, vocab);
    if a_ids.is_empty() {
        return Err(TokenizerError::EmptyArgument {
            pair_id: rec.id.clone(),
            which: "argument1",
        });
    }
    if b_ids.is_empty() {
        return Err(TokenizerError::EmptyArgument {
            pair_id: rec.id.clone(),
            which: "argument2",
        });
    }
    let (a_ids, b_ids) = truncate_pair(&a_ids, &b_ids, max_seq_len - 3);

    let real_len = a_ids.len() + b_ids.len() + 3;
    let mut token_ids = Vec::with_capacity(max_seq_len);
    token_ids.push(CLS_ID);
    token_ids.extend_from_slice(&a_ids);
    token_ids.push(SEP_ID);
    token_ids.extend_from_slice(&b_ids);
    token_ids.push(SEP_ID);
    token_ids.resize(max_seq_len, PAD_ID);

    let mut segment_ids = vec![0u32; a_ids.len() + 2];
    segment_ids.resize(max_seq_len, 1);

    let mut attention_mask = vec![1u32; real_len];
    attention_mask.resize(max_seq_len, 0);

    Ok(EncodedPair {
        token_ids,
        segment_ids,
        attention_mask,
        label: rec.is_same_stance,
        pair_id: rec.id.clone(),
    })
}

/// Encode every record of a corpus (parallel over records, input order).
pub fn encode_corpus(
    corpus: &Corpus,
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<Vec<EncodedPair>, TokenizerError> {
    par::map_ordered(&corpus.records, |rec| encode_pair(rec, vocab, max_seq_len))
        .into_iter()
        .collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize encoded pairs: header (magic, version, max_seq_len, count),
/// then per pair one little-endian `u32` (id, segment, mask) triple per
/// position and a one-byte label. Pair ids are not stored; loading assigns
/// positional ids.
pub fn write_encoded<W: Write>(
    pairs: &[EncodedPair],
    max_seq_len: usize,
    mut writer: W,
) -> Result<(), TokenizerError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    put_u32(&mut buf, CACHE_VERSION);
    put_u32(&mut buf, max_seq_len as u32);
    put_u32(&mut buf, pairs.len() as u32);
    for pair in pairs {
        if pair.token_ids.len() != max_seq_len {
            return Err(TokenizerError::BadCache(format!(
                "pair `{}` has length {}, expected {max_seq_len}",
                pair.pair_id,
                pair.token_ids.len()
            )));
        }
        for t in 0..max_seq_len {
            put_u32(&mut buf, pair.token_ids[t]);
            put_u32(&mut buf, pair.segment_ids[t]);
            put_u32(&mut buf, pair.attention_mask[t]);
        }
        buf.push(pair.label as u8);
    }
    writer.write_all(&buf)?;
    Ok(())
}

pub fn read_encoded<R: Read>(mut reader: R) -> Result<(Vec<EncodedPair>, usize), TokenizerError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != CACHE_MAGIC {
        return Err(TokenizerError::BadCache("bad magic".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CACHE_VERSION {
        return Err(TokenizerError::BadCache(format!("unsupported version {version}")));
    }
    let max_seq_len = u32_at(8) as usize;
    let count = u32_at(12) as usize;
    let per_pair = 3 * 4 * max_seq_len + 1;
    if bytes.len() != 16 + count * per_pair {
        return Err(TokenizerError::BadCache(format!(
            "expected {} bytes for {count} pairs, found {}",
            16 + count * per_pair,
            bytes.len()
        )));
    }
    let mut pairs = Vec::with_capacity(count);
    let mut off = 16;
    for i in 0..count {
        let mut token_ids = Vec::with_capacity(max_seq_len);
        let mut segment_ids = Vec::with_capacity(max_seq_len);
        let mut attention_mask = Vec::with_capacity(max_seq_len);
        for _ in 0..max_seq_len {
            token_ids.push(u32_at(off));
            segment_ids.push(u32_at(off + 4));
            attention_mask.push(u32_at(off + 8));
            off += 12;
        }
        let label = match bytes[off] {
            0 => false,
            1 => true,
            other => {
                return Err(TokenizerError::BadCache(format!("bad label byte {other}")));
            }
        };
        off += 1;
        pairs.push(EncodedPair {
            token_ids,
            segment_ids,
            attention_mask,
            label,
            pair_id: i.to_string(),
        });
    }
    Ok((pairs, max_seq_len))
}
