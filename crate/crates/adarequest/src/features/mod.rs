//! Case records, bucketization, sequence padding, and the dataset wire
//! format. A case is one decision point: the feature groups visible on the
//! edge, the request flag `z`, and the purchase-window label `y`.

mod dataset;
mod encode;

pub use dataset::{read_dataset, read_truth_sidecar, write_dataset, write_truth_sidecar, SCHEMA_VERSION};
pub use encode::{encode_record, EncodedCase, EncodedGroup, EncodedItems};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One recommended item as the edge sees it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    pub item_id: u64,
    pub category_id: u64,
    pub brand_id: u64,
    pub position_in_page: u32,
    pub page_number: u32,
    pub price_level: u32,
    /// CTR/CVR-style statistics, used as raw inputs.
    pub dense_stats: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Exposure,
    Click,
    ScrollStop,
    Delete,
}

impl EventKind {
    /// Embedding index; 0 is reserved for padding.
    pub fn index(self) -> usize {
        match self {
            EventKind::Exposure => 1,
            EventKind::Click => 2,
            EventKind::ScrollStop => 3,
            EventKind::Delete => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub kind: EventKind,
    /// Seconds spent on the item; non-negative.
    pub dwell: f64,
    pub position: i64,
}

/// Chronological pair of a behavior sequence and the items interacted with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceGroup {
    pub behavior: Vec<BehaviorEvent>,
    pub items: Vec<ItemFeatures>,
}

impl SequenceGroup {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.behavior.len() != self.items.len() {
            return Err(Error::Data(format!(
                "sequence group has {} events but {} items",
                self.behavior.len(),
                self.items.len()
            )));
        }
        if self.behavior.iter().any(|e| e.dwell < 0.0) {
            return Err(Error::Data("negative dwell".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    pub gender: u32,
    pub age_level: u32,
    pub purchase_level: u32,
    /// View depth, in-session clicks, in-session requests, exposures since
    /// the last request, time since the last request, pool size remaining.
    pub session_stats: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Click,
    ScrollCount,
    ScrollStop,
    Delete,
}

/// One decision point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: u64,
    pub user_id: u64,
    pub period_index: u32,
    pub trigger_kind: TriggerKind,
    pub exp: SequenceGroup,
    pub sclk: SequenceGroup,
    pub clk: SequenceGroup,
    /// Candidate items still queued for exposure, best-ranked first.
    pub cands: Vec<ItemFeatures>,
    pub context: ContextFeatures,
    /// 1 if an extra request was inserted at this point.
    pub z: u8,
    /// 1 if any purchase happened within the label window.
    pub y: u8,
    /// Ground-truth treatment effect; only the simulator can fill this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_cate: Option<f64>,
}

impl CaseRecord {
    pub fn validate(&self) -> Result<()> {
        if self.cands.is_empty() {
            return Err(Error::Data(format!("case {}: empty candidate list", self.case_id)));
        }
        if self.z > 1 || self.y > 1 {
            return Err(Error::Data(format!("case {}: z/y must be binary", self.case_id)));
        }
        self.exp.validate()?;
        self.sclk.validate()?;
        self.clk.validate()
    }
}

/// Sorted bucket boundaries; `bucketize` maps a real to the count of
/// boundaries at or below it, so outputs live in `[0, len]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucketizer {
    boundaries: Vec<f64>,
}

impl Bucketizer {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bucket boundaries must be strictly increasing".to_string()));
        }
        Ok(Bucketizer { boundaries })
    }

    pub fn bucket_count(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Index = number of boundaries `<= x`; everything past the range clamps to
/// the edge buckets by construction.
pub fn bucketize(x: f64, b: &Bucketizer) -> usize {
    b.boundaries.partition_point(|&bound| bound <= x)
}

/// Keeps the most recent `max_len` elements (front elements drop first) and
/// pads the front with `pad`; the mask marks real positions.
pub fn pad_truncate<T: Clone>(seq: &[T], max_len: usize, pad: T) -> (Vec<T>, Vec<bool>) {
    let keep = seq.len().min(max_len);
    let tail = &seq[seq.len() - keep..];
    let mut out = Vec::with_capacity(max_len);
    let mut mask = Vec::with_capacity(max_len);
    out.extend(std::iter::repeat(pad).take(max_len - keep));
    mask.extend(std::iter::repeat(false).take(max_len - keep));
    out.extend_from_slice(tail);
    mask.extend(std::iter::repeat(true).take(keep));
    (out, mask)
}

/// Schema configuration: dims, max lengths, vocabularies, bucket
/// boundaries. Embedding index 0 is reserved for padding everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub max_len_exp: usize,
    pub max_len_sclk: usize,
    pub max_len_clk: usize,
    pub max_cands: usize,
    pub id_dim: usize,
    pub cat_dim: usize,
    pub brand_dim: usize,
    pub bucket_dim: usize,
    pub kind_dim: usize,
    pub user_attr_dim: usize,
    pub dense_stats_len: usize,
    pub context_len: usize,
    pub item_vocab: usize,
    pub cat_vocab: usize,
    pub brand_vocab: usize,
    pub gender_vocab: usize,
    pub age_vocab: usize,
    pub purchase_vocab: usize,
    pub pos_bounds: Vec<f64>,
    pub page_bounds: Vec<f64>,
    pub price_bounds: Vec<f64>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            max_len_exp: 50,
            max_len_sclk: 20,
            max_len_clk: 50,
            max_cands: 30,
            id_dim: 8,
            cat_dim: 8,
            brand_dim: 8,
            bucket_dim: 4,
            kind_dim: 4,
            user_attr_dim: 4,
            dense_stats_len: 4,
            context_len: 6,
            item_vocab: 512,
            cat_vocab: 64,
            brand_vocab: 128,
            gender_vocab: 4,
            age_vocab: 8,
            purchase_vocab: 8,
            pos_bounds: vec![2.0, 5.0, 10.0, 20.0, 35.0],
            page_bounds: vec![1.0, 2.0, 3.0, 5.0],
            price_bounds: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        }
    }
}

impl SchemaConfig {
    /// A slimmer schema for quick experiments and CI-scale runs.
    pub fn compact() -> Self {
        SchemaConfig {
            max_len_exp: 12,
            max_len_sclk: 6,
            max_len_clk: 10,
            max_cands: 10,
            id_dim: 4,
            cat_dim: 4,
            brand_dim: 2,
            bucket_dim: 2,
            kind_dim: 3,
            user_attr_dim: 4,
            dense_stats_len: 3,
            item_vocab: 256,
            cat_vocab: 32,
            brand_vocab: 32,
            ..SchemaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_len_exp", self.max_len_exp),
            ("max_len_sclk", self.max_len_sclk),
            ("max_len_clk", self.max_len_clk),
            ("max_cands", self.max_cands),
            ("id_dim", self.id_dim),
            ("context_len", self.context_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("schema field {name} must be positive")));
            }
        }
        if self.item_vocab < 2 || self.cat_vocab < 2 || self.brand_vocab < 2 {
            return Err(Error::Config("vocabularies need at least 2 rows (padding + 1)".to_string()));
        }
        Ok(())
    }

    /// Per-position input width of an encoded item.
    pub fn item_input_dim(&self) -> usize {
        self.id_dim + self.cat_dim + self.brand_dim + 3 * self.bucket_dim + self.dense_stats_len
    }

    /// Per-position input width of an encoded behavior event.
    pub fn behavior_input_dim(&self) -> usize {
        self.kind_dim + 2
    }

    pub fn user_vec_dim(&self) -> usize {
        3 * self.user_attr_dim
    }

    pub fn pos_bucketizer(&self) -> Bucketizer {
        Bucketizer::new(self.pos_bounds.clone()).expect("validated boundaries")
    }

    pub fn page_bucketizer(&self) -> Bucketizer {
        Bucketizer::new(self.page_bounds.clone()).expect("validated boundaries")
    }

    pub fn price_bucketizer(&self) -> Bucketizer {
        Bucketizer::new(self.price_bounds.clone()).expect("validated boundaries")
    }

    /// Bucket vocabulary large enough for any boundary list used here.
    pub fn bucket_vocab(&self) -> usize {
        let widest = self
            .pos_bounds
            .len()
            .max(self.page_bounds.len())
            .max(self.price_bounds.len());
        widest + 2 // buckets 0..=len, shifted by one for padding
    }
}

/// Maps a raw categorical id into `[1, vocab)`; 0 stays reserved for
/// padding, and unseen ids are hashed instead of rejected.
pub fn id_to_index(raw: u64, vocab: usize) -> usize {
    debug_assert!(vocab >= 2);
    1 + (raw % (vocab as u64 - 1)) as usize
}
