//! Node features and the question vector.
//!
//! Vectors either come from an external encoder through the binary embedding
//! format, or from [`HashEncoder`], a deterministic signed feature hasher
//! that keeps lexical overlap visible in dot products.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use thiserror::Error;

use crate::amr::AmrAugmentedText;
use crate::rng::fnv1a;

/// Record id under which the question vector is stored.
pub const QUESTION_RECORD: &str = "__question__";
const MAGIC: &[u8; 8] = b"GRAGEMB1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("no AMR text for doc {0:?}")]
    MissingAmrText(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("file ends before all records were read")]
    TruncatedFile,
    #[error("duplicate doc id {0:?}")]
    DuplicateDocId(String),
    #[error("no question vector ({QUESTION_RECORD}) in file")]
    MissingQuestionVector,
    #[error("invalid record id: {0}")]
    BadId(String),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for EncoderError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            EncoderError::TruncatedFile
        } else {
            EncoderError::Io(e)
        }
    }
}

/// Text encoder producing fixed-width vectors.
pub trait Encoder {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing over lowercase whitespace tokens.
///
/// A token's slot is `h mod dim` and its sign is the top bit of `h`, where
/// `h = fnv1a64(token) ^ seed`. Counts are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "hash encoder needs dim >= 2");
        Self { dim, seed }
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        hash_encode(text, self.dim, self.seed)
    }
}

pub fn hash_encode(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0f64; dim];
    for token in text.to_lowercase().split_whitespace() {
        let h = fnv1a(token.as_bytes()) ^ seed;
        let slot = (h % dim as u64) as usize;
        v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Document text only.
    Baseline,
    /// Document text followed by its AMR path text.
    AmrAugmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Loaded,
    Hashed,
}

/// Per-question document vectors plus the question vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    doc_vectors: BTreeMap<String, Vec<f64>>,
    question_vector: Vec<f64>,
    pub provenance: Provenance,
}

impl EmbeddingSet {
    pub fn new(
        question_vector: Vec<f64>,
        doc_vectors: BTreeMap<String, Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self, EncoderError> {
        let dim = question_vector.len();
        if dim == 0 {
            return Err(EncoderError::DimMismatch {
                expected: 1,
                found: 0,
            });
        }
        for (id, v) in &doc_vectors {
            if id == QUESTION_RECORD {
                return Err(EncoderError::BadId(format!("{id:?} is reserved")));
            }
            if v.len() != dim {
                return Err(EncoderError::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            dim,
            doc_vectors,
            question_vector,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn question_vector(&self) -> &[f64] {
        &self.question_vector
    }

    pub fn doc_vector(&self, doc_id: &str) -> Option<&[f64]> {
        self.doc_vectors.get(doc_id).map(Vec::as_slice)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_vectors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.doc_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_vectors.is_empty()
    }
}

/// Encodes documents (optionally extended with their AMR path text) and the
/// plain question text.
pub fn build_node_features<E: Encoder>(
    question_text: &str,
    docs: &[(String, String)],
    amr_texts: &HashMap<String, AmrAugmentedText>,
    mode: FeatureMode,
    encoder: &E,
) -> Result<EmbeddingSet, EncoderError> {
    let mut vectors = BTreeMap::new();
    for (doc_id, text) in docs {
        let input = match mode {
            FeatureMode::Baseline => text.clone(),
            FeatureMode::AmrAugmented => {
                let extra = amr_texts
                    .get(doc_id)
                    .ok_or_else(|| EncoderError::MissingAmrText(doc_id.clone()))?;
                format!("{} {}", text, extra.rendered).trim().to_string()
            }
        };
        if vectors
            .insert(doc_id.clone(), encoder.encode(&input))
            .is_some()
        {
            return Err(EncoderError::DuplicateDocId(doc_id.clone()));
        }
    }
    EmbeddingSet::new(encoder.encode(question_text), vectors, Provenance::Hashed)
}

fn write_record<W: Write>(w: &mut W, id: &str, v: &[f64]) -> Result<(), EncoderError> {
    let len = u16::try_from(id.len())
        .map_err(|_| EncoderError::BadId(format!("id longer than {} bytes", u16::MAX)))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(id.as_bytes())?;
    for &x in v {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Writes the binary format. Values are stored as little-endian `f32`.
pub fn write_embeddings<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<(), EncoderError> {
    let count = u32::try_from(set.doc_vectors.len() + 1)
        .map_err(|_| EncoderError::BadId("too many records".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(set.dim as u32).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    write_record(&mut w, QUESTION_RECORD, &set.question_vector)?;
    for (id, v) in &set.doc_vectors {
        write_record(&mut w, id, v)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EncoderError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads the binary format. `expected_dim`, when given, must match the header.
pub fn read_embeddings<R: Read>(
    mut r: R,
    expected_dim: Option<usize>,
) -> Result<EmbeddingSet, EncoderError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EncoderError::BadMagic,
        _ => EncoderError::Io(e),
    })?;
    if &magic != MAGIC {
        return Err(EncoderError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(EncoderError::UnsupportedVersion(version));
    }
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 || expected_dim.is_some_and(|d| d != dim) {
        return Err(EncoderError::DimMismatch {
            expected: expected_dim.unwrap_or(1),
            found: dim,
        });
    }
    let count = read_u32(&mut r)?;
    let mut question = None;
    let mut docs = BTreeMap::new();
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|e| EncoderError::BadId(e.to_string()))?;
        r.read_exact(&mut buf)?;
        let v: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if id == QUESTION_RECORD {
            if question.replace(v).is_some() {
                return Err(EncoderError::DuplicateDocId(id));
            }
        } else if docs.insert(id.clone(), v).is_some() {
            return Err(EncoderError::DuplicateDocId(id));
        }
    }
    let question = question.ok_or(EncoderError::MissingQuestionVector)?;
    EmbeddingSet::new(question, docs, Provenance::Loaded)
}

pub fn save_embeddings(set: &EmbeddingSet, path: &std::path::Path) -> Result<(), EncoderError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_embeddings(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn load_embeddings(
    path: &std::path::Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingSet, EncoderError> {
    let bytes = std::fs::read(path)?;
    read_embeddings(&bytes[..], expected_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn empty_text_is_zero() {
        assert_eq!(hash_encode("", 16, 3), vec![0.0; 16]);
        assert_eq!(hash_encode("   \n", 16, 3), vec![0.0; 16]);
    }

    #[test]
    fn hashing_matches_definition() {
        // Single token: one slot holding ±1.
        let h = fnv1a(b"spain") ^ 9;
        let v = hash_encode("Spain", 10, 9);
        let slot = (h % 10) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        assert_eq!(v[slot], sign);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn deterministic_and_case_insensitive() {
        assert_eq!(hash_encode("A b c", 32, 1), hash_encode("A b c", 32, 1));
        assert_eq!(hash_encode("A B C", 32, 1), hash_encode("a b c", 32, 1));
        assert_ne!(hash_encode("a b c", 32, 1), hash_encode("a b c", 32, 2));
    }

    #[test]
    fn overlap_raises_similarity() {
        // Texts sharing 9 of 10 tokens vs. disjoint texts, 100 trials at d = 256.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let words: Vec<String> = (0..21).map(|_| format!("w{}", rng.gen::<u32>())).collect();
            let a = words[..10].join(" ");
            let mut b_words = words[..9].to_vec();
            b_words.push(words[10].clone());
            let b = b_words.join(" ");
            let c = words[11..21].join(" ");
            let ea = hash_encode(&a, 256, trial);
            assert!(
                dot(&ea, &hash_encode(&b, 256, trial)) > dot(&ea, &hash_encode(&c, 256, trial))
            );
        }
    }

    #[test]
    fn baseline_ignores_amr_text() {
        let enc = HashEncoder::new(32, 0);
        let docs = vec![("d1".to_string(), "some text".to_string())];
        let set =
            build_node_features("q?", &docs, &HashMap::new(), FeatureMode::Baseline, &enc).unwrap();
        assert_eq!(
            set.doc_vector("d1").unwrap(),
            hash_encode("some text", 32, 0)
        );
        assert_eq!(set.question_vector(), hash_encode("q?", 32, 0));
        assert_eq!(set.provenance, Provenance::Hashed);
    }

    #[test]
    fn empty_amr_text_matches_baseline() {
        let enc = HashEncoder::new(32, 0);
        let docs = vec![("d1".to_string(), "some text".to_string())];
        let amr = HashMap::from([("d1".to_string(), AmrAugmentedText::default())]);
        let aug = build_node_features("q", &docs, &amr, FeatureMode::AmrAugmented, &enc).unwrap();
        let base = build_node_features("q", &docs, &amr, FeatureMode::Baseline, &enc).unwrap();
        assert_eq!(aug, base);
    }

    #[test]
    fn missing_amr_text() {
        let enc = HashEncoder::new(8, 0);
        let docs = vec![("d1".to_string(), "t".to_string())];
        assert!(matches!(
            build_node_features("q", &docs, &HashMap::new(), FeatureMode::AmrAugmented, &enc),
            Err(EncoderError::MissingAmrText(d)) if d == "d1"
        ));
    }

    #[test]
    fn amr_path_text_pulls_toward_question() {
        let question = "which cross is a crucifix located in spain";
        let doc = "the cathedral has a famous relic that pilgrims visit each year";
        let a_i = AmrAugmentedText {
            tokens: vec![],
            rendered: "question cross world-region crucifix number be-located-at country Spain religion Catholicism belief worship".into(),
        };
        let docs = vec![("d".to_string(), doc.to_string())];
        let amr = HashMap::from([("d".to_string(), a_i)]);
        let (mut aug_sum, mut base_sum) = (0.0, 0.0);
        for seed in 0..50 {
            let enc = HashEncoder::new(64, seed);
            let aug = build_node_features(question, &docs, &amr, FeatureMode::AmrAugmented, &enc)
                .unwrap();
            let base =
                build_node_features(question, &docs, &amr, FeatureMode::Baseline, &enc).unwrap();
            aug_sum += dot(aug.question_vector(), aug.doc_vector("d").unwrap());
            base_sum += dot(base.question_vector(), base.doc_vector("d").unwrap());
        }
        assert!(aug_sum / 50.0 > base_sum / 50.0);
    }

    fn random_set(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> EmbeddingSet {
        let vec = |rng: &mut ChaCha8Rng| {
            (0..dim)
                .map(|_| rng.gen::<f32>() as f64 * 2.0 - 1.0)
                .collect()
        };
        let q = vec(rng);
        let docs = (0..rows).map(|k| (format!("doc-{k}"), vec(rng))).collect();
        EmbeddingSet::new(q, docs, Provenance::Loaded).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = random_set(&mut rng, 10, 32);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &set).unwrap();
        let back = read_embeddings(&buf[..], Some(32)).unwrap();
        for id in set.doc_ids() {
            let a: Vec<u64> = set
                .doc_vector(id)
                .unwrap()
                .iter()
                .map(|x| x.to_bits())
                .collect();
            let b: Vec<u64> = back
                .doc_vector(id)
                .unwrap()
                .iter()
                .map(|x| x.to_bits())
                .collect();
            assert_eq!(a, b);
        }
        assert_eq!(set, back);
        let mut again = Vec::new();
        write_embeddings(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn binary_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let set = random_set(&mut rng, 5, 4);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &set).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_embeddings(&bad[..], None),
            Err(EncoderError::BadMagic)
        ));

        // Header claims 6 records (question + 5); drop the last one.
        let record = 2 + "doc-4".len() + 4 * 4;
        let cut = &buf[..buf.len() - record];
        assert!(matches!(
            read_embeddings(cut, None),
            Err(EncoderError::TruncatedFile)
        ));

        assert!(matches!(
            read_embeddings(&buf[..], Some(8)),
            Err(EncoderError::DimMismatch {
                expected: 8,
                found: 4
            })
        ));

        // Duplicate record: bump the count and append a copy of the last record.
        let mut dup = buf.clone();
        dup[16..20].copy_from_slice(&7u32.to_le_bytes());
        dup.extend_from_slice(&buf[buf.len() - record..]);
        assert!(matches!(
            read_embeddings(&dup[..], None),
            Err(EncoderError::DuplicateDocId(_))
        ));
    }

    proptest! {
        #[test]
        fn hashed_vectors_are_unit_norm(words in proptest::collection::vec("[a-z]{1,6}", 1..30), dim in 2usize..300, seed in any::<u64>()) {
            let v = hash_encode(&words.join(" "), dim, seed);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }
}
