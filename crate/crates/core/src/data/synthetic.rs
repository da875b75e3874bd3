//! Block-structured synthetic datasets with planted ground truth.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Doc, IdMap, Interaction, InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_guardians: usize,
    pub n_urls: usize,
    pub n_blocks: usize,
    pub in_block_rate: f64,
    pub cross_block_rate: f64,
    pub seed: u64,
    pub social_in_rate: f64,
    pub social_cross_rate: f64,
    /// Tokens per generated document.
    pub doc_len: usize,
    /// Fraction of document tokens drawn from the block's own vocabulary.
    pub topical_share: f64,
    pub block_vocab: usize,
    pub shared_vocab: usize,
    pub max_retries: usize,
}

impl SyntheticConfig {
    pub fn new(
        n_guardians: usize,
        n_urls: usize,
        n_blocks: usize,
        in_block_rate: f64,
        cross_block_rate: f64,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            n_guardians,
            n_urls,
            n_blocks,
            in_block_rate,
            cross_block_rate,
            seed,
            social_in_rate: 0.10,
            social_cross_rate: 0.005,
            doc_len: 40,
            topical_share: 0.6,
            block_vocab: 30,
            shared_vocab: 60,
            max_retries: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.n_guardians == 0 || self.n_urls == 0 || self.n_blocks == 0 {
            return Err(Error::InvalidArgument("synthetic sizes must be positive".into()));
        }
        if !rate_ok(self.in_block_rate)
            || !rate_ok(self.cross_block_rate)
            || !rate_ok(self.social_in_rate)
            || !rate_ok(self.social_cross_rate)
            || !rate_ok(self.topical_share)
        {
            return Err(Error::InvalidArgument("synthetic rates must lie in [0, 1]".into()));
        }
        if self.in_block_rate <= self.cross_block_rate {
            return Err(Error::InvalidArgument(
                "in_block_rate must exceed cross_block_rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBundle {
    pub config: SyntheticConfig,
    pub dataset: Dataset,
    pub social: SocialGraph,
    pub guardian_docs: Vec<Doc>,
    pub url_docs: Vec<Doc>,
    pub guardian_blocks: Vec<usize>,
    pub url_blocks: Vec<usize>,
}

impl SyntheticBundle {
    pub fn interactions(&self) -> &InteractionMatrix {
        &self.dataset.matrix
    }

    /// Share of interactions whose guardian and URL carry the same planted block.
    pub fn within_block_fraction(&self) -> f64 {
        let m = self.interactions();
        let within = m
            .iter()
            .filter(|&(g, u)| self.guardian_blocks[g] == self.url_blocks[u])
            .count();
        within as f64 / m.nnz().max(1) as f64
    }

    /// Expected within-block share implied by the configured rates.
    pub fn planted_fraction(&self) -> f64 {
        let c = &self.config;
        let (mut within, mut cross) = (0.0, 0.0);
        for &gb in &self.guardian_blocks {
            for &ub in &self.url_blocks {
                if gb == ub {
                    within += c.in_block_rate;
                } else {
                    cross += c.cross_block_rate;
                }
            }
        }
        within / (within + cross)
    }
}

/// Guardians and URLs go to blocks round-robin; interactions, follow edges and
/// documents are all drawn from one seeded stream in that order.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticBundle> {
    config.validate()?;
    let c = config;
    let mut rng = seed::rng(c.seed);
    let guardian_blocks: Vec<usize> = (0..c.n_guardians).map(|i| i % c.n_blocks).collect();
    let url_blocks: Vec<usize> = (0..c.n_urls).map(|j| j % c.n_blocks).collect();

    let mut rows = Vec::with_capacity(c.n_guardians);
    for (g, &gb) in guardian_blocks.iter().enumerate() {
        let mut attempts = 0;
        let row = loop {
            let row: Vec<usize> = url_blocks
                .iter()
                .enumerate()
                .filter_map(|(u, &ub)| {
                    let p = if ub == gb { c.in_block_rate } else { c.cross_block_rate };
                    rng.random_bool(p).then_some(u)
                })
                .collect();
            if !row.is_empty() {
                break row;
            }
            attempts += 1;
            if attempts > c.max_retries {
                return Err(Error::SyntheticRetriesExhausted(g, c.max_retries));
            }
        };
        rows.push(row);
    }

    let mut edges = Vec::new();
    for a in 0..c.n_guardians {
        for b in a + 1..c.n_guardians {
            let p = if guardian_blocks[a] == guardian_blocks[b] {
                c.social_in_rate
            } else {
                c.social_cross_rate
            };
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let social = SocialGraph::from_edges(c.n_guardians, edges);

    let guardians = IdMap::from_ids((0..c.n_guardians).map(|i| format!("g{i:05}")));
    let urls = IdMap::from_ids((0..c.n_urls).map(|j| format!("https://factcheck.example/claim/{j:05}")));
    let guardian_docs = guardian_blocks
        .iter()
        .enumerate()
        .map(|(i, &b)| Doc {
            id: guardians.id(i).to_owned(),
            text: topical_text(c, b, &mut rng),
        })
        .collect();
    let url_docs = url_blocks
        .iter()
        .enumerate()
        .map(|(j, &b)| Doc {
            id: urls.id(j).to_owned(),
            text: topical_text(c, b, &mut rng),
        })
        .collect();

    let events = rows
        .iter()
        .enumerate()
        .flat_map(|(g, row)| {
            row.iter().map(move |&u| Interaction {
                guardian: g,
                url: u,
                ts: None,
            })
        })
        .collect();
    let dataset = Dataset::from_events(guardians, urls, events)?;

    Ok(SyntheticBundle {
        config: c.clone(),
        dataset,
        social,
        guardian_docs,
        url_docs,
        guardian_blocks,
        url_blocks,
    })
}

fn topical_text(c: &SyntheticConfig, block: usize, rng: &mut seed::Rng) -> String {
    let mut words = Vec::with_capacity(c.doc_len);
    for _ in 0..c.doc_len {
        let word = if rng.random_bool(c.topical_share) {
            pseudo_word(1 + block, rng.random_range(0..c.block_vocab.max(1)))
        } else {
            pseudo_word(0, rng.random_range(0..c.shared_vocab.max(1)))
        };
        words.push(word);
    }
    words.join(" ")
}

/// Distinct pronounceable token for each `(pool, k)`.
fn pseudo_word(pool: usize, k: usize) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = pool * 10_000 + k;
    let mut word = String::new();
    for _ in 0..4 {
        let syllable = n % base;
        word.push(CONSONANTS[syllable / VOWELS.len()] as char);
        word.push(VOWELS[syllable % VOWELS.len()] as char);
        n /= base;
    }
    word
}
