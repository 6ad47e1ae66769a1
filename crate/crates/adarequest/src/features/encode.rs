//! Turns a [`CaseRecord`] into padded index/value arrays ready for the
//! model graph: categorical fields become embedding indices (0 = padding),
//! continuous fields pass through as raw values.

use super::{
    bucketize, id_to_index, pad_truncate, Bucketizer, CaseRecord, ItemFeatures, SchemaConfig,
};
use crate::Result;

/// Encoded behavior/item sequence pair for one feature group, padded at the
/// front to the schema's max length.
#[derive(Clone, Debug, Default)]
pub struct EncodedGroup {
    pub kind_ids: Vec<usize>,
    /// `[len, 2]` row-major: log dwell, normalized position.
    pub beh_dense: Vec<f64>,
    pub id_ids: Vec<usize>,
    pub cat_ids: Vec<usize>,
    pub brand_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub page_ids: Vec<usize>,
    pub price_ids: Vec<usize>,
    /// `[len, dense_stats_len]` row-major.
    pub item_dense: Vec<f64>,
    pub mask: Vec<bool>,
    pub real_len: usize,
}

/// Encoded candidate list; kept in ranked order, truncated at the tail
/// (the head is what will be exposed next).
#[derive(Clone, Debug, Default)]
pub struct EncodedItems {
    pub id_ids: Vec<usize>,
    pub cat_ids: Vec<usize>,
    pub brand_ids: Vec<usize>,
    pub pos_ids: Vec<usize>,
    pub page_ids: Vec<usize>,
    pub price_ids: Vec<usize>,
    pub item_dense: Vec<f64>,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct EncodedCase {
    pub case_id: u64,
    pub exp: EncodedGroup,
    pub sclk: EncodedGroup,
    pub clk: EncodedGroup,
    pub cands: EncodedItems,
    /// Gender, age level, purchase level as embedding indices.
    pub user_ids: [usize; 3],
    pub context: Vec<f64>,
    pub z: u8,
    pub y: u8,
}

struct ItemCoders {
    pos: Bucketizer,
    page: Bucketizer,
    price: Bucketizer,
}

fn encode_item_into(
    item: &ItemFeatures,
    cfg: &SchemaConfig,
    coders: &ItemCoders,
    out_ids: [&mut Vec<usize>; 6],
    dense: &mut Vec<f64>,
) {
    let [ids, cats, brands, poss, pages, prices] = out_ids;
    ids.push(id_to_index(item.item_id, cfg.item_vocab));
    cats.push(id_to_index(item.category_id, cfg.cat_vocab));
    brands.push(id_to_index(item.brand_id, cfg.brand_vocab));
    poss.push(1 + bucketize(item.position_in_page as f64, &coders.pos));
    pages.push(1 + bucketize(item.page_number as f64, &coders.page));
    prices.push(1 + bucketize(item.price_level as f64, &coders.price));
    for i in 0..cfg.dense_stats_len {
        dense.push(item.dense_stats.get(i).copied().unwrap_or(0.0));
    }
}

fn encode_group(
    group: &super::SequenceGroup,
    max_len: usize,
    cfg: &SchemaConfig,
    coders: &ItemCoders,
) -> EncodedGroup {
    let idx: Vec<usize> = (0..group.len()).collect();
    let (kept, mask) = pad_truncate(&idx, max_len, usize::MAX);
    let mut g = EncodedGroup {
        mask,
        real_len: group.len().min(max_len),
        ..EncodedGroup::default()
    };
    for (&slot, &real) in kept.iter().zip(g.mask.clone().iter()) {
        if !real {
            g.kind_ids.push(0);
            g.beh_dense.extend([0.0, 0.0]);
            g.id_ids.push(0);
            g.cat_ids.push(0);
            g.brand_ids.push(0);
            g.pos_ids.push(0);
            g.page_ids.push(0);
            g.price_ids.push(0);
            g.item_dense.extend(std::iter::repeat(0.0).take(cfg.dense_stats_len));
            continue;
        }
        let ev = &group.behavior[slot];
        g.kind_ids.push(ev.kind.index());
        g.beh_dense.push((1.0 + ev.dwell.max(0.0)).ln());
        g.beh_dense.push(ev.position as f64 / 50.0);
        let item = &group.items[slot];
        encode_item_into(
            item,
            cfg,
            coders,
            [
                &mut g.id_ids,
                &mut g.cat_ids,
                &mut g.brand_ids,
                &mut g.pos_ids,
                &mut g.page_ids,
                &mut g.price_ids,
            ],
            &mut g.item_dense,
        );
    }
    g
}

/// Encodes one record against a schema. Out-of-vocabulary ids are hashed
/// into the vocabulary instead of failing.
pub fn encode_record(record: &CaseRecord, cfg: &SchemaConfig) -> Result<EncodedCase> {
    record.validate()?;
    let coders = ItemCoders {
        pos: cfg.pos_bucketizer(),
        page: cfg.page_bucketizer(),
        price: cfg.price_bucketizer(),
    };

    let mut cands = EncodedItems {
        len: record.cands.len().min(cfg.max_cands),
        ..EncodedItems::default()
    };
    for item in record.cands.iter().take(cfg.max_cands) {
        encode_item_into(
            item,
            cfg,
            &coders,
            [
                &mut cands.id_ids,
                &mut cands.cat_ids,
                &mut cands.brand_ids,
                &mut cands.pos_ids,
                &mut cands.page_ids,
                &mut cands.price_ids,
            ],
            &mut cands.item_dense,
        );
    }

    let mut context: Vec<f64> = record
        .context
        .session_stats
        .iter()
        .take(cfg.context_len)
        .map(|&x| (1.0 + x.max(0.0)).ln())
        .collect();
    context.resize(cfg.context_len, 0.0);

    Ok(EncodedCase {
        case_id: record.case_id,
        exp: encode_group(&record.exp, cfg.max_len_exp, cfg, &coders),
        sclk: encode_group(&record.sclk, cfg.max_len_sclk, cfg, &coders),
        clk: encode_group(&record.clk, cfg.max_len_clk, cfg, &coders),
        cands,
        user_ids: [
            1 + (record.context.gender as usize % (cfg.gender_vocab - 1)),
            1 + (record.context.age_level as usize % (cfg.age_vocab - 1)),
            1 + (record.context.purchase_level as usize % (cfg.purchase_vocab - 1)),
        ],
        context,
        z: record.z,
        y: record.y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{BehaviorEvent, ContextFeatures, EventKind, SequenceGroup, TriggerKind};

    pub(crate) fn item(id: u64) -> ItemFeatures {
        ItemFeatures {
            item_id: id,
            category_id: id % 7,
            brand_id: id % 11,
            position_in_page: (id % 50) as u32,
            page_number: 1,
            price_level: (id % 6) as u32,
            dense_stats: vec![0.1, 0.2, 0.3],
        }
    }

    fn record_with(cands: usize, clicks: usize) -> CaseRecord {
        let group = |n: usize| SequenceGroup {
            behavior: (0..n)
                .map(|i| BehaviorEvent {
                    kind: EventKind::Click,
                    dwell: i as f64,
                    position: i as i64,
                })
                .collect(),
            items: (0..n).map(|i| item(i as u64)).collect(),
        };
        CaseRecord {
            case_id: 1,
            user_id: 2,
            period_index: 0,
            trigger_kind: TriggerKind::Click,
            exp: group(3),
            sclk: group(clicks),
            clk: group(4),
            cands: (0..cands).map(|i| item(100 + i as u64)).collect(),
            context: ContextFeatures {
                gender: 1,
                age_level: 3,
                purchase_level: 2,
                session_stats: vec![10.0, 2.0, 1.0, 4.0, 30.0, 40.0],
            },
            z: 0,
            y: 1,
            true_cate: None,
        }
    }

    #[test]
    fn empty_click_history_encodes_as_all_padding() {
        let cfg = SchemaConfig::compact();
        let enc = encode_record(&record_with(5, 0), &cfg).unwrap();
        assert_eq!(enc.sclk.real_len, 0);
        assert!(enc.sclk.mask.iter().all(|&m| !m));
        assert!(enc.sclk.id_ids.iter().all(|&i| i == 0));
        assert!(enc.sclk.item_dense.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_item_sequence_round_trips_count() {
        let cfg = SchemaConfig::compact();
        let enc = encode_record(&record_with(5, 1), &cfg).unwrap();
        assert_eq!(enc.sclk.real_len, 1);
        assert_eq!(enc.sclk.mask.iter().filter(|&&m| m).count(), 1);
        assert_eq!(enc.sclk.kind_ids.len(), cfg.max_len_sclk);
    }

    #[test]
    fn candidate_tensor_shape_follows_config() {
        let mut cfg = SchemaConfig::default();
        cfg.max_cands = 30;
        let enc = encode_record(&record_with(30, 2), &cfg).unwrap();
        assert_eq!(enc.cands.len, 30);
        assert_eq!(enc.cands.id_ids.len(), 30);
        assert_eq!(enc.cands.item_dense.len(), 30 * cfg.dense_stats_len);
    }

    #[test]
    fn oversized_candidate_list_is_truncated_to_head() {
        let cfg = SchemaConfig::compact();
        let enc = encode_record(&record_with(25, 2), &cfg).unwrap();
        assert_eq!(enc.cands.len, cfg.max_cands);
        // head of the ranked list is kept
        assert_eq!(enc.cands.id_ids[0], id_to_index(100, cfg.item_vocab));
    }

    #[test]
    fn empty_candidates_is_a_data_error() {
        let cfg = SchemaConfig::compact();
        assert!(encode_record(&record_with(0, 1), &cfg).is_err());
    }
}
