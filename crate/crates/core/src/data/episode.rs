//! N-way K-shot episode sampling and pseudo support/query splits.

use rand::seq::index::sample;
use rand::seq::SliceRandom;

use crate::data::FeatureBank;
use crate::error::{DaraError, Result};
use crate::numerics::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    pub pseudo_query_shots: usize,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            ways: 5,
            shots: 5,
            queries_per_class: 15,
            pseudo_query_shots: 1,
            seed: 0,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 {
            return Err(DaraError::InvalidSpec(format!("ways must be >= 2, got {}", self.ways)));
        }
        if self.shots < 1 {
            return Err(DaraError::InvalidSpec("shots must be >= 1".into()));
        }
        if self.shots == 1 {
            if self.pseudo_query_shots != 1 {
                return Err(DaraError::InvalidSpec(
                    "1-shot episodes use pseudo_query_shots = 1 (self-reconstruction)".into(),
                ));
            }
        } else if self.pseudo_query_shots == 0 || self.pseudo_query_shots >= self.shots {
            return Err(DaraError::InvalidSpec(format!(
                "pseudo_query_shots must be in 1..{}, got {}",
                self.shots, self.pseudo_query_shots
            )));
        }
        Ok(())
    }

    /// Shots left for the pseudo-support side.
    pub fn pseudo_support_shots(&self) -> usize {
        if self.shots == 1 {
            1
        } else {
            self.shots - self.pseudo_query_shots
        }
    }
}

/// One sampled task. Classes are relabelled `0..ways` in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Original bank labels of the drawn classes.
    pub classes: Vec<u32>,
    /// `support[n]` holds the K maps of class `n`.
    pub support: Vec<Vec<Matrix>>,
    /// Query maps with episode-local labels.
    pub query: Vec<(Matrix, usize)>,
    /// Bank indices of support items, parallel to `support`.
    pub support_index: Vec<Vec<usize>>,
    /// Bank indices of query items, parallel to `query`.
    pub query_index: Vec<usize>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.support.len()
    }

    pub fn shots(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|(_, l)| *l).collect()
    }
}

/// Per-class partition of support positions `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoSplit {
    pub support: Vec<Vec<usize>>,
    pub query: Vec<Vec<usize>>,
}

impl PseudoSplit {
    pub fn is_self_reconstruction(&self) -> bool {
        self.support == self.query
    }
}

pub fn sample_episode(bank: &FeatureBank, spec: &EpisodeSpec, rng: &mut Rng) -> Result<Episode> {
    spec.validate()?;
    let needed = spec.shots + spec.queries_per_class;
    let by_class = bank.indices_by_class();
    if by_class.len() < spec.ways {
        return Err(DaraError::InvalidSpec(format!(
            "bank has {} classes, episode needs {}",
            by_class.len(),
            spec.ways
        )));
    }
    let eligible: Vec<usize> = (0..by_class.len())
        .filter(|&c| by_class[c].len() >= needed)
        .collect();
    if eligible.len() < spec.ways {
        let class = (0..by_class.len())
            .find(|&c| by_class[c].len() < needed)
            .unwrap_or(0);
        return Err(DaraError::InsufficientItems {
            class: class as u32,
            available: by_class[class].len(),
            needed,
        });
    }

    let picked = sample(rng, eligible.len(), spec.ways);
    let mut episode = Episode {
        classes: Vec::with_capacity(spec.ways),
        support: Vec::with_capacity(spec.ways),
        query: Vec::with_capacity(spec.ways * spec.queries_per_class),
        support_index: Vec::with_capacity(spec.ways),
        query_index: Vec::with_capacity(spec.ways * spec.queries_per_class),
    };
    for (local, pos) in picked.iter().enumerate() {
        let class = eligible[pos];
        let pool = &by_class[class];
        let chosen: Vec<usize> = sample(rng, pool.len(), needed).iter().map(|i| pool[i]).collect();
        let (sup, qry) = chosen.split_at(spec.shots);
        episode.classes.push(class as u32);
        episode
            .support
            .push(sup.iter().map(|&i| bank.items()[i].clone()).collect());
        episode.support_index.push(sup.to_vec());
        for &i in qry {
            episode.query.push((bank.items()[i].clone(), local));
            episode.query_index.push(i);
        }
    }
    Ok(episode)
}

/// Draws a pseudo support/query partition of every class's K support items.
/// With K = 1 the single item lands on both sides.
pub fn pseudo_split(ways: usize, spec: &EpisodeSpec, rng: &mut Rng) -> Result<PseudoSplit> {
    spec.validate()?;
    let mut split = PseudoSplit {
        support: Vec::with_capacity(ways),
        query: Vec::with_capacity(ways),
    };
    for _ in 0..ways {
        if spec.shots == 1 {
            split.support.push(vec![0]);
            split.query.push(vec![0]);
            continue;
        }
        let mut order: Vec<usize> = (0..spec.shots).collect();
        order.shuffle(rng);
        let (q, s) = order.split_at(spec.pseudo_query_shots);
        let mut q = q.to_vec();
        let mut s = s.to_vec();
        q.sort_unstable();
        s.sort_unstable();
        split.query.push(q);
        split.support.push(s);
    }
    Ok(split)
}
