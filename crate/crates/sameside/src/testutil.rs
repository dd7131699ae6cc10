//! Shared helpers for unit tests: hand-rolled encoded pairs and small
//! synthetic corpora.

use crate::corpus::{ArgumentPairRecord, Corpus};
use crate::model::ModelConfig;
use crate::tokenizer::{EncodedPair, CLS_ID, SEP_ID};

/// Encoded pair `[CLS] ids [SEP] ids[0] [SEP]` padded to `max_len`.
pub(crate) fn synthetic_pair(ids: &[u32], max_len: usize, label: bool) -> EncodedPair {
    let mut token_ids = vec![CLS_ID];
    token_ids.extend_from_slice(ids);
    token_ids.push(SEP_ID);
    token_ids.push(ids[0]);
    token_ids.push(SEP_ID);
    let real = token_ids.len();
    assert!(real <= max_len);
    token_ids.resize(max_len, 0);
    let mut segment_ids = vec![0u32; ids.len() + 2];
    segment_ids.resize(max_len, 1);
    let mut attention_mask = vec![1u32; real];
    attention_mask.resize(max_len, 0);
    EncodedPair {
        token_ids,
        segment_ids,
        attention_mask,
        label,
        pair_id: format!("syn-{ids:?}"),
    }
}

pub(crate) fn small_config(
    num_layers: usize,
    hidden_size: usize,
    num_heads: usize,
    ff_size: usize,
    max_positions: usize,
    vocab_size: usize,
) -> ModelConfig {
    ModelConfig {
        num_layers,
        hidden_size,
        num_heads,
        ff_size,
        max_positions,
        vocab_size,
        preset_name: "test".into(),
    }
}

/// Separable toy corpus: same-side pairs carry the word "agree" in both
/// arguments, different-side pairs carry "diverge" in the second.
pub(crate) fn separable_corpus(n: usize) -> Corpus {
    let records = (0..n)
        .map(|i| {
            let same = i % 2 == 0;
            ArgumentPairRecord {
                id: format!("sep-{i}"),
                topic: "toy".into(),
                argument1: "we agree with this position entirely".into(),
                argument1_id: format!("a{i}"),
                argument2: if same {
                    "others agree with the stated claim".into()
                } else {
                    "others diverge from the stated claim".into()
                },
                argument2_id: format!("b{i}"),
                is_same_stance: same,
            }
        })
        .collect();
    Corpus::new(records, "separable")
}
