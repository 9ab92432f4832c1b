//! N-way K-shot episode sampling.
//!
//! An episode is a pure function of (dataset, config, episode index). Draw
//! order for `sample_episode`: a xoshiro256** stream seeded with
//! `derive_episode_seed(master_seed, index)` first picks `way` classes from
//! `0..class_count`, then for each picked class (in pick order) draws
//! `shot + query_per_class` original images from that class's items sorted by
//! item id. The first `shot` picks are support, the rest are queries.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::PooledEmbeddings;
use crate::error::{Error, Result};
use crate::rng::{derive_episode_seed, sample_without_replacement, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub way: usize,
    pub shot: usize,
    pub query_per_class: usize,
    pub include_variants: bool,
    pub master_seed: u64,
    pub episode_count: usize,
}

impl SamplerConfig {
    pub fn new(way: usize, shot: usize, master_seed: u64) -> Self {
        Self {
            way,
            shot,
            query_per_class: 15,
            include_variants: false,
            master_seed,
            episode_count: 600,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.way < 2 {
            return Err(Error::invalid("way must be at least 2"));
        }
        if self.shot == 0 {
            return Err(Error::invalid("shot must be at least 1"));
        }
        if self.query_per_class == 0 {
            return Err(Error::invalid("query_per_class must be at least 1"));
        }
        Ok(())
    }
}

/// One support or query row of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeRow {
    /// Row in the pooled embedding matrix.
    pub row: usize,
    /// Episode-local class, `0..way`.
    pub label: u32,
    pub item_id: u64,
    pub variant_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub index: u64,
    pub seed: u64,
    pub way: usize,
    pub shot: usize,
    /// `None` when the query budget is spread unevenly over classes.
    pub query_per_class: Option<usize>,
    pub support: Vec<EpisodeRow>,
    pub query: Vec<EpisodeRow>,
    /// Episode-local label -> dataset class id.
    pub class_map: Vec<u32>,
}

impl Episode {
    /// Checks disjointness, coverage and per-class counts.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("episode {}: {m}", self.index)));
        if self.class_map.len() != self.way {
            return bad("class_map size differs from way".into());
        }
        let support_ids: HashSet<u64> = self.support.iter().map(|r| r.item_id).collect();
        if let Some(q) = self.query.iter().find(|r| support_ids.contains(&r.item_id)) {
            return bad(format!("item {} in both support and query", q.item_id));
        }
        if self.query.iter().any(|r| r.variant_id != 0) {
            return bad("query holds an augmented variant".into());
        }
        for c in 0..self.way as u32 {
            let originals = self
                .support
                .iter()
                .filter(|r| r.label == c && r.variant_id == 0)
                .count();
            if originals != self.shot {
                return bad(format!(
                    "class {c} has {originals} support images, expected {}",
                    self.shot
                ));
            }
            let queries = self.query.iter().filter(|r| r.label == c).count();
            if let Some(q) = self.query_per_class {
                if queries != q {
                    return bad(format!("class {c} has {queries} queries, expected {q}"));
                }
            }
        }
        if self.query.iter().any(|r| r.label as usize >= self.way) {
            return bad("query label outside the support classes".into());
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn draw_class_rows(
    set: &PooledEmbeddings,
    dataset_class: u32,
    local: u32,
    picks: &[usize],
    shot: usize,
    include_variants: bool,
    support: &mut Vec<EpisodeRow>,
    query: &mut Vec<EpisodeRow>,
) {
    let items = &set.class_items(dataset_class).items;
    let row_of = |row: usize| EpisodeRow {
        row,
        label: local,
        item_id: set.item_ids[row],
        variant_id: set.variant_ids[row],
    };
    for (i, &p) in picks.iter().enumerate() {
        let item = &items[p];
        if i < shot {
            support.push(row_of(item.original));
            if include_variants {
                support.extend(item.variants.iter().map(|&r| row_of(r)));
            }
        } else {
            query.push(row_of(item.original));
        }
    }
}

pub fn sample_episode(set: &PooledEmbeddings, config: &SamplerConfig, episode_index: u64) -> Result<Episode> {
    config.validate()?;
    if set.class_count < config.way {
        return Err(Error::InsufficientData(format!(
            "{}-way episodes need {} classes, dataset has {}",
            config.way, config.way, set.class_count
        )));
    }
    let seed = derive_episode_seed(config.master_seed, episode_index);
    let mut rng = stream(seed);
    let all: Vec<u32> = (0..set.class_count as u32).collect();
    let class_map = sample_without_replacement(&mut rng, &all, config.way);
    let need = config.shot + config.query_per_class;
    let mut support = Vec::new();
    let mut query = Vec::new();
    for (local, &class) in class_map.iter().enumerate() {
        let available = set.class_items(class).items.len();
        if available < need {
            return Err(Error::InsufficientData(format!(
                "class {class} has {available} images, episode needs {need}"
            )));
        }
        let positions: Vec<usize> = (0..available).collect();
        let picks = sample_without_replacement(&mut rng, &positions, need);
        draw_class_rows(
            set,
            class,
            local as u32,
            &picks,
            config.shot,
            config.include_variants,
            &mut support,
            &mut query,
        );
    }
    Ok(Episode {
        index: episode_index,
        seed,
        way: config.way,
        shot: config.shot,
        query_per_class: Some(config.query_per_class),
        support,
        query,
        class_map,
    })
}

/// How many queries a characterization split draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryBudget {
    /// Spread as evenly as possible over classes; the remainder goes to randomly chosen classes.
    Total(usize),
    PerClass(usize),
}

/// Many-way split over all classes (or a random subsample of them).
///
/// Draw order: optional class subsample, then (for a `Total` budget) the
/// classes receiving one extra query, then per class in ascending dataset id
/// the support and query images together.
pub fn sample_characterization_split(
    set: &PooledEmbeddings,
    support_per_class: usize,
    queries: QueryBudget,
    class_subsample: Option<usize>,
    include_variants: bool,
    seed: u64,
) -> Result<Episode> {
    if support_per_class == 0 {
        return Err(Error::invalid("support_per_class must be at least 1"));
    }
    let mut rng = stream(seed);
    let all: Vec<u32> = (0..set.class_count as u32).collect();
    let mut classes = match class_subsample {
        Some(n) if n < 2 || n > all.len() => {
            return Err(Error::InsufficientData(format!(
                "class subsample {n} with {} classes available",
                all.len()
            )))
        }
        Some(n) => sample_without_replacement(&mut rng, &all, n),
        None => all,
    };
    classes.sort_unstable();
    let way = classes.len();
    let counts: Vec<usize> = match queries {
        QueryBudget::PerClass(q) => vec![q; way],
        QueryBudget::Total(total) => {
            let mut counts = vec![total / way; way];
            let positions: Vec<usize> = (0..way).collect();
            for p in sample_without_replacement(&mut rng, &positions, total % way) {
                counts[p] += 1;
            }
            counts
        }
    };
    let mut support = Vec::new();
    let mut query = Vec::new();
    for (local, (&class, &q)) in classes.iter().zip(&counts).enumerate() {
        let available = set.class_items(class).items.len();
        let need = support_per_class + q;
        if available < need {
            return Err(Error::InsufficientData(format!(
                "class {class} has {available} images, split needs {need}"
            )));
        }
        let positions: Vec<usize> = (0..available).collect();
        let picks = sample_without_replacement(&mut rng, &positions, need);
        draw_class_rows(
            set,
            class,
            local as u32,
            &picks,
            support_per_class,
            include_variants,
            &mut support,
            &mut query,
        );
    }
    let query_per_class = match queries {
        QueryBudget::PerClass(q) => Some(q),
        QueryBudget::Total(t) if t % way == 0 => Some(t / way),
        QueryBudget::Total(_) => None,
    };
    Ok(Episode {
        index: 0,
        seed,
        way,
        shot: support_per_class,
        query_per_class,
        support,
        query,
        class_map: classes,
    })
}

/// Plain-text episode listing for cross-implementation comparison.
///
/// ```text
/// episode 3 seed 1311768467463790320
/// way 5 shot 1 query_per_class 15
/// class 0 41
/// support 0 1007 1007:1 1007:2
/// query 0 1012 1044
/// ```
///
/// Support entries carry `:variant` for augmented rows. Each episode ends with a blank line.
pub fn dump_episode(episode: &Episode) -> String {
    let mut out = String::new();
    writeln!(out, "episode {} seed {}", episode.index, episode.seed).unwrap();
    let q = episode
        .query_per_class
        .map_or_else(|| "varied".to_string(), |q| q.to_string());
    writeln!(out, "way {} shot {} query_per_class {q}", episode.way, episode.shot).unwrap();
    for (local, class) in episode.class_map.iter().enumerate() {
        writeln!(out, "class {local} {class}").unwrap();
    }
    for (name, rows) in [("support", &episode.support), ("query", &episode.query)] {
        for local in 0..episode.way as u32 {
            out.push_str(name);
            write!(out, " {local}").unwrap();
            for r in rows.iter().filter(|r| r.label == local) {
                if r.variant_id == 0 {
                    write!(out, " {}", r.item_id).unwrap();
                } else {
                    write!(out, " {}:{}", r.item_id, r.variant_id).unwrap();
                }
            }
            out.push('\n');
        }
    }
    out.push('\n');
    out
}

pub fn dump_episodes<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> String {
    episodes.into_iter().map(dump_episode).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingFileHeader, EmbeddingRecord, EmbeddingSet};

    /// `classes` classes of `per_class` images, each with `variants` augmented copies.
    pub(crate) fn toy_set(classes: u32, per_class: u64, variants: u16) -> PooledEmbeddings {
        let mut records = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                for v in 0..=variants {
                    records.push(EmbeddingRecord {
                        item_id: c as u64 * 1000 + i,
                        class_label: c,
                        variant_id: v,
                        tokens: vec![c as f32, i as f32, v as f32],
                    });
                }
            }
        }
        let header = EmbeddingFileHeader::new(3, records.len() as u64, classes, 1, 1, variants > 0);
        EmbeddingSet::new(header, records).unwrap().pooled()
    }

    #[test]
    fn one_shot_counts() {
        let set = toy_set(10, 30, 0);
        let cfg = SamplerConfig::new(5, 1, 3);
        let ep = sample_episode(&set, &cfg, 0).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 75);
        ep.check_invariants().unwrap();
    }

    #[test]
    fn variants_join_support_only() {
        let set = toy_set(8, 25, 4);
        let cfg = SamplerConfig {
            include_variants: true,
            ..SamplerConfig::new(5, 5, 1)
        };
        let ep = sample_episode(&set, &cfg, 4).unwrap();
        assert_eq!(ep.support.len(), 125);
        assert_eq!(ep.query.len(), 75);
        assert!(ep.query.iter().all(|r| r.variant_id == 0));
        ep.check_invariants().unwrap();
    }

    #[test]
    fn deterministic_per_index() {
        let set = toy_set(10, 30, 0);
        let cfg = SamplerConfig::new(5, 5, 77);
        assert_eq!(
            sample_episode(&set, &cfg, 9).unwrap(),
            sample_episode(&set, &cfg, 9).unwrap()
        );
        assert_ne!(
            sample_episode(&set, &cfg, 9).unwrap(),
            sample_episode(&set, &cfg, 10).unwrap()
        );
    }

    #[test]
    fn insufficient_data_errors() {
        let set = toy_set(4, 30, 0);
        assert!(matches!(
            sample_episode(&set, &SamplerConfig::new(5, 1, 0), 0),
            Err(Error::InsufficientData(_))
        ));
        let small = toy_set(6, 10, 0);
        assert!(matches!(
            sample_episode(&small, &SamplerConfig::new(5, 1, 0), 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn characterization_split_budget() {
        let set = toy_set(64, 80, 0);
        let ep = sample_characterization_split(&set, 64, QueryBudget::Total(300), None, false, 5).unwrap();
        assert_eq!(ep.way, 64);
        assert_eq!(ep.support.len(), 64 * 64);
        assert_eq!(ep.query.len(), 300);
        ep.check_invariants().unwrap();
        for c in 0..64u32 {
            let n = ep.query.iter().filter(|r| r.label == c).count();
            assert!(n == 4 || n == 5);
        }
    }

    #[test]
    fn characterization_subsample() {
        let set = toy_set(120, 20, 0);
        let ep = sample_characterization_split(&set, 10, QueryBudget::Total(300), Some(100), false, 1).unwrap();
        assert_eq!(ep.way, 100);
        assert_eq!(ep.class_map.len(), 100);
        let ids: HashSet<u32> = ep.class_map.iter().copied().collect();
        assert_eq!(ids.len(), 100);
        ep.check_invariants().unwrap();
    }

    #[test]
    fn dump_format() {
        let set = toy_set(3, 4, 1);
        let cfg = SamplerConfig {
            include_variants: true,
            query_per_class: 1,
            ..SamplerConfig::new(2, 1, 0)
        };
        let ep = sample_episode(&set, &cfg, 0).unwrap();
        let text = dump_episode(&ep);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("episode 0 seed "));
        assert_eq!(lines[1], "way 2 shot 1 query_per_class 1");
        assert!(lines[2].starts_with("class 0 "));
        assert!(lines[4].starts_with("support 0 "));
        assert!(lines[4].contains(":1"));
        assert!(lines[6].starts_with("query 0 "));
        assert_eq!(text, dump_episode(&sample_episode(&set, &cfg, 0).unwrap()));
    }
}
