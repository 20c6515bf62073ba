//! Vocabularies, sparse bag-of-words corpora and label files.
//!
//! The on-disk BoW format is UCI-style text: a header with the document
//! count `D`, vocabulary size `V` and entry count `NNZ`, followed by `NNZ`
//! lines `docID wordID count` with 1-based ids in ascending `(docID, wordID)`
//! order. In memory all ids are 0-based. The canonical form written by
//! [`BowCorpus::write_bow`] puts each header number on its own line; the
//! reader also accepts all three on one line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Fixed word list with contiguous 0-based ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list. Ids follow list order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Placeholder vocabulary `w0..w{v-1}` for corpora loaded without a word list.
    pub fn synthetic(v: usize) -> Result<Self> {
        Self::from_tokens((0..v).map(|i| format!("w{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, line number = id + 1.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for tok in &self.tokens {
            writeln!(out, "{tok}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let tok = line.trim();
            if tok.is_empty() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    msg: "empty token".into(),
                });
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens)
    }
}

/// Lowercase + whitespace split. Deliberately minimal; anything smarter
/// belongs upstream of this crate.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Builds a vocabulary of all tokens that occur in at least `min_doc_freq`
/// distinct documents. Ids are assigned in lexicographic token order so the
/// result does not depend on document order.
pub fn build_vocab<D, T>(raw_docs: &[D], min_doc_freq: usize) -> Result<Vocabulary>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    assert!(min_doc_freq >= 1, "min_doc_freq must be >= 1");
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    let mut seen: HashMap<&str, usize> = HashMap::new(); // token -> last doc index
    for (d, doc) in raw_docs.iter().enumerate() {
        for tok in doc.as_ref() {
            let tok = tok.as_ref();
            if seen.insert(tok, d) != Some(d) {
                *doc_freq.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut tokens: Vec<String> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df >= min_doc_freq)
        .map(|(tok, _)| tok.to_string())
        .collect();
    tokens.sort_unstable();
    if tokens.is_empty() {
        return Err(Error::InvalidInput(format!(
            "empty vocabulary: no token occurs in >= {min_doc_freq} documents"
        )));
    }
    Vocabulary::from_tokens(tokens)
}

/// Keeps the `k` most frequent tokens (by total count, ties broken
/// lexicographically). Used for reduced-vocabulary experiments.
pub fn build_vocab_top_k<D, T>(raw_docs: &[D], k: usize) -> Result<Vocabulary>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in raw_docs {
        for tok in doc.as_ref() {
            *counts.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() || k == 0 {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let mut by_count: Vec<(&str, u64)> = counts.into_iter().collect();
    by_count.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    by_count.truncate(k);
    let mut tokens: Vec<String> = by_count.into_iter().map(|(t, _)| t.to_string()).collect();
    tokens.sort_unstable();
    Vocabulary::from_tokens(tokens)
}

/// One document as sorted `(word_id, count)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowDocument {
    pub doc_id: String,
    entries: Vec<(u32, u32)>,
}

impl BowDocument {
    /// `entries` must be sorted by strictly increasing word id with counts >= 1.
    pub fn new(doc_id: impl Into<String>, entries: Vec<(u32, u32)>) -> Result<Self> {
        for (i, &(id, cnt)) in entries.iter().enumerate() {
            if cnt == 0 {
                return Err(Error::InvalidInput(format!("zero count for word {id}")));
            }
            if i > 0 && entries[i - 1].0 >= id {
                return Err(Error::InvalidInput(
                    "word ids must be strictly increasing".into(),
                ));
            }
        }
        Ok(BowDocument {
            doc_id: doc_id.into(),
            entries,
        })
    }

    pub fn empty(doc_id: impl Into<String>) -> Self {
        BowDocument {
            doc_id: doc_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total token count `N_d`.
    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn max_word_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }
}

/// Counts in-vocabulary tokens of `raw_doc`; out-of-vocabulary tokens are
/// dropped (the model has no OOV cell).
pub fn vectorize<T: AsRef<str>>(
    raw_doc: &[T],
    vocab: &Vocabulary,
    doc_id: impl Into<String>,
) -> BowDocument {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for tok in raw_doc {
        if let Some(id) = vocab.id(tok.as_ref()) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
    entries.sort_unstable();
    BowDocument {
        doc_id: doc_id.into(),
        entries,
    }
}

/// A vocabulary plus its documents.
#[derive(Debug, Clone)]
pub struct BowCorpus {
    pub vocab: Vocabulary,
    pub docs: Vec<BowDocument>,
}

impl BowCorpus {
    pub fn new(vocab: Vocabulary, docs: Vec<BowDocument>) -> Result<Self> {
        let v = vocab.len() as u32;
        for doc in &docs {
            if let Some(max) = doc.max_word_id() {
                if max >= v {
                    return Err(Error::InvalidInput(format!(
                        "document {} has word id {max} >= V={v}",
                        doc.doc_id
                    )));
                }
            }
        }
        Ok(BowCorpus { vocab, docs })
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn v(&self) -> usize {
        self.vocab.len()
    }

    pub fn nnz(&self) -> usize {
        self.docs.iter().map(|d| d.entries.len()).sum()
    }

    /// Total token count over all documents.
    pub fn total_count(&self) -> u64 {
        self.docs.iter().map(|d| d.total_count()).sum()
    }

    /// Per-word counts summed over documents.
    pub fn word_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.v()];
        for doc in &self.docs {
            for &(id, cnt) in doc.entries() {
                counts[id as usize] += cnt as u64;
            }
        }
        counts
    }

    /// Reads a BoW file, attaching placeholder token names. Document ids are
    /// the 1-based file positions as decimal strings.
    pub fn read_bow(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_bow_from(BufReader::new(f), path)
    }

    /// Reads a BoW file and attaches `vocab`; its size must match the header.
    pub fn read_bow_with_vocab(path: &Path, vocab: Vocabulary) -> Result<Self> {
        let corpus = Self::read_bow(path)?;
        if vocab.len() != corpus.v() {
            return Err(Error::Mismatch(format!(
                "vocabulary has {} tokens but BoW header says V={}",
                vocab.len(),
                corpus.v()
            )));
        }
        Ok(BowCorpus {
            vocab,
            docs: corpus.docs,
        })
    }

    fn read_bow_from<R: Read>(reader: BufReader<R>, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.into(),
            line,
            msg,
        };
        let mut lines = reader.lines().enumerate();

        // Header: three non-negative integers, one per line or all on the
        // first line.
        let mut header: Vec<u64> = Vec::with_capacity(3);
        let mut header_lines = 0usize;
        while header.len() < 3 {
            let (i, line) = match lines.next() {
                Some((i, line)) => (i, line.map_err(|e| Error::io(path, e))?),
                None => {
                    return Err(parse_err(
                        header_lines + 1,
                        "unexpected end of file in header (need D, V, NNZ)".into(),
                    ))
                }
            };
            header_lines = i + 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                return Err(parse_err(i + 1, "blank line in header".into()));
            }
            if header.len() + toks.len() > 3 {
                return Err(parse_err(i + 1, "too many values in header".into()));
            }
            for t in toks {
                let v = t
                    .parse::<u64>()
                    .map_err(|_| parse_err(i + 1, format!("bad header value {t:?}")))?;
                header.push(v);
            }
        }
        let (n_docs, v, nnz) = (header[0] as usize, header[1] as usize, header[2] as usize);

        let mut docs: Vec<BowDocument> = (0..n_docs)
            .map(|i| BowDocument::empty((i + 1).to_string()))
            .collect();
        let mut prev: Option<(u64, u64)> = None;
        let mut seen = 0usize;
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(
                    i + 1,
                    format!("expected `docID wordID count`, got {} fields", toks.len()),
                ));
            }
            let nums: Vec<u64> = toks
                .iter()
                .map(|t| {
                    t.parse::<u64>()
                        .map_err(|_| parse_err(i + 1, format!("bad integer {t:?}")))
                })
                .collect::<Result<_>>()?;
            let (doc_id, word_id, count) = (nums[0], nums[1], nums[2]);
            if doc_id < 1 || doc_id > n_docs as u64 {
                return Err(parse_err(
                    i + 1,
                    format!("docID {doc_id} out of range 1..={n_docs}"),
                ));
            }
            if word_id < 1 || word_id > v as u64 {
                return Err(parse_err(
                    i + 1,
                    format!("wordID {word_id} out of range 1..={v}"),
                ));
            }
            if count < 1 {
                return Err(parse_err(i + 1, format!("non-positive count {count}")));
            }
            if let Some((pd, pw)) = prev {
                if doc_id < pd || (doc_id == pd && word_id <= pw) {
                    return Err(parse_err(
                        i + 1,
                        format!("entries not in ascending (docID, wordID) order: ({doc_id}, {word_id}) after ({pd}, {pw})"),
                    ));
                }
            }
            prev = Some((doc_id, word_id));
            seen += 1;
            if seen > nnz {
                return Err(parse_err(
                    i + 1,
                    format!("more than NNZ={nnz} entry lines"),
                ));
            }
            docs[(doc_id - 1) as usize]
                .entries
                .push(((word_id - 1) as u32, count as u32));
        }
        if seen != nnz {
            return Err(parse_err(
                header_lines + seen,
                format!("header says NNZ={nnz} but file has {seen} entries"),
            ));
        }
        let vocab = Vocabulary::synthetic(v)?;
        BowCorpus::new(vocab, docs)
    }

    /// Writes the canonical form: `D`, `V`, `NNZ` on separate lines, then
    /// entries in ascending `(docID, wordID)` order with 1-based ids.
    pub fn write_bow(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_bow_to(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    fn write_bow_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", self.n_docs())?;
        writeln!(out, "{}", self.v())?;
        writeln!(out, "{}", self.nnz())?;
        for (d, doc) in self.docs.iter().enumerate() {
            for &(id, cnt) in doc.entries() {
                writeln!(out, "{} {} {}", d + 1, id + 1, cnt)?;
            }
        }
        Ok(())
    }

    /// Canonical file bytes, mainly for round-trip checks.
    pub fn to_bow_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_bow_to(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("BoW text is ASCII")
    }
}

/// Reads a labels file: one `docID<TAB>class_name` per line.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (doc_id, class) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: "expected `docID<TAB>class_name`".into(),
        })?;
        pairs.push((doc_id.trim().to_string(), class.trim().to_string()));
    }
    Ok(pairs)
}

pub fn write_labels(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (doc_id, class) in pairs {
        writeln!(out, "{doc_id}\t{class}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A corpus with one class id per document.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub corpus: BowCorpus,
    /// Class id in `0..class_names.len()` for each document, index-aligned.
    pub labels: Vec<u32>,
    /// Class names sorted lexicographically; position = class id.
    pub class_names: Vec<String>,
}

impl LabeledCorpus {
    pub fn new(corpus: BowCorpus, labels: Vec<u32>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != corpus.n_docs() {
            return Err(Error::Mismatch(format!(
                "{} labels for {} documents",
                labels.len(),
                corpus.n_docs()
            )));
        }
        let l = class_names.len() as u32;
        if let Some(bad) = labels.iter().find(|&&c| c >= l) {
            return Err(Error::Mismatch(format!("class id {bad} >= L={l}")));
        }
        Ok(LabeledCorpus {
            corpus,
            labels,
            class_names,
        })
    }

    /// Joins a corpus with `(doc_id, class_name)` pairs. Every document must
    /// be labeled; class ids follow lexicographic class-name order.
    pub fn from_pairs(corpus: BowCorpus, pairs: &[(String, String)]) -> Result<Self> {
        let (labels, class_names) = align_labels(
            corpus.docs.iter().map(|d| d.doc_id.as_str()),
            pairs,
        )?;
        LabeledCorpus::new(corpus, labels, class_names)
    }
}

/// Aligns `(doc_id, class_name)` pairs to an ordered document-id sequence.
/// Returns per-document class ids and the sorted class-name table.
pub fn align_labels<'a>(
    doc_ids: impl Iterator<Item = &'a str>,
    pairs: &[(String, String)],
) -> Result<(Vec<u32>, Vec<String>)> {
    let mut by_doc: HashMap<&str, &str> = HashMap::with_capacity(pairs.len());
    for (doc_id, class) in pairs {
        if by_doc.insert(doc_id.as_str(), class.as_str()).is_some() {
            return Err(Error::Mismatch(format!("duplicate label for doc {doc_id:?}")));
        }
    }
    let doc_ids: Vec<&str> = doc_ids.collect();
    let mut class_names: Vec<String> = Vec::new();
    for &doc_id in &doc_ids {
        match by_doc.get(doc_id) {
            Some(class) => {
                if !class_names.iter().any(|c| c == class) {
                    class_names.push(class.to_string());
                }
            }
            None => {
                return Err(Error::Mismatch(format!("no label for doc {doc_id:?}")));
            }
        }
    }
    class_names.sort_unstable();
    let index: HashMap<&str, u32> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let labels = doc_ids
        .iter()
        .map(|doc_id| index[by_doc[doc_id]])
        .collect();
    Ok((labels, class_names))
}
