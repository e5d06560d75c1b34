//! Item-item co-occurrence neighborhood index for the local correction
//! loss: per item, the strongest co-occurring second-order neighbors
//! (similar set) and the weakest survivors of the threshold filter
//! (marginal set).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{DgrError, Result};
use crate::graph::InteractionGraph;

/// Default bound on candidate encounters per item during the build.
pub const DEFAULT_CANDIDATE_CAP: usize = 200_000;

const BINARY_MAGIC: &str = "DGRIDX1";

/// Build parameters for [`LecIndex`].
#[derive(Debug, Clone)]
pub struct LecIndexBuilder {
    k1: usize,
    k2: usize,
    theta: usize,
    candidate_cap: Option<usize>,
}

impl LecIndexBuilder {
    pub fn new(k1: usize, k2: usize, theta: usize) -> Self {
        Self {
            k1,
            k2,
            theta,
            candidate_cap: Some(DEFAULT_CANDIDATE_CAP),
        }
    }

    /// Remove the per-item candidate cap (used by oracle tests).
    pub fn exact(mut self) -> Self {
        self.candidate_cap = None;
        self
    }

    pub fn candidate_cap(mut self, cap: usize) -> Self {
        self.candidate_cap = Some(cap);
        self
    }

    /// Enumerate second-order neighbors of every item, apply the
    /// threshold filter, and select the similar/marginal sets.
    pub fn build(&self, train: &InteractionGraph) -> LecIndex {
        let num_items = train.num_items();
        let per_item: Vec<(Vec<(u32, u32)>, Vec<(u32, u32)>, bool)> = (0..num_items)
            .into_par_iter()
            .map_init(
                || (vec![0u32; num_items], Vec::<u32>::new()),
                |(counts, touched), i| {
                    let mut encounters = 0usize;
                    let mut capped = false;
                    'outer: for &u in train.item_users(i) {
                        for &j in train.user_items(u as usize) {
                            if j as usize == i {
                                continue;
                            }
                            if counts[j as usize] == 0 {
                                touched.push(j);
                            }
                            counts[j as usize] += 1;
                            encounters += 1;
                            if let Some(cap) = self.candidate_cap {
                                if encounters >= cap {
                                    capped = true;
                                    break 'outer;
                                }
                            }
                        }
                    }
                    // Survivors of the threshold filter: count > theta.
                    let mut survivors: Vec<(u32, u32)> = touched
                        .iter()
                        .filter(|&&j| counts[j as usize] as usize > self.theta)
                        .map(|&j| (j, counts[j as usize]))
                        .collect();
                    for &j in touched.iter() {
                        counts[j as usize] = 0;
                    }
                    touched.clear();
                    // Count descending, item index ascending on ties.
                    survivors.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

                    let s_len = survivors.len().min(self.k1);
                    let similar = survivors[..s_len].to_vec();
                    let rest = &survivors[s_len..];
                    let m_start = rest.len().saturating_sub(self.k2);
                    let marginal = rest[m_start..].to_vec();
                    (similar, marginal, capped)
                },
            )
            .collect();

        let capped_items = per_item.iter().filter(|(_, _, c)| *c).count();
        if capped_items > 0 {
            log::warn!(
                "co-occurrence index: {capped_items} item(s) hit the candidate cap of {:?}; \
                 their counts are truncated",
                self.candidate_cap
            );
        }
        LecIndex {
            k1: self.k1,
            k2: self.k2,
            theta: self.theta,
            similar: per_item.iter().map(|(s, _, _)| s.clone()).collect(),
            marginal: per_item.into_iter().map(|(_, m, _)| m).collect(),
            capped_items,
        }
    }
}

/// Per-item similar and marginal neighbor sets with co-occurrence counts.
///
/// Immutable once built. Both lists are ordered by count descending with
/// item-index tie-breaks; the marginal list holds the lowest-count
/// survivors remaining after the similar set was removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LecIndex {
    k1: usize,
    k2: usize,
    theta: usize,
    similar: Vec<Vec<(u32, u32)>>,
    marginal: Vec<Vec<(u32, u32)>>,
    capped_items: usize,
}

impl LecIndex {
    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn num_items(&self) -> usize {
        self.similar.len()
    }

    pub fn capped_items(&self) -> usize {
        self.capped_items
    }

    /// `(item, co-occurrence count)` pairs of the similar set of item `i`.
    pub fn similar(&self, i: usize) -> &[(u32, u32)] {
        &self.similar[i]
    }

    /// `(item, co-occurrence count)` pairs of the marginal set of item `i`.
    pub fn marginal(&self, i: usize) -> &[(u32, u32)] {
        &self.marginal[i]
    }

    /// Items whose similar and marginal sets are both nonempty.
    pub fn active_items(&self) -> usize {
        (0..self.num_items())
            .filter(|&i| !self.similar[i].is_empty() && !self.marginal[i].is_empty())
            .count()
    }

    pub fn save_text<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "k1={}", self.k1)?;
        writeln!(out, "k2={}", self.k2)?;
        writeln!(out, "theta={}", self.theta)?;
        writeln!(out, "num_items={}", self.num_items())?;
        writeln!(out)?;
        let fmt_list = |list: &[(u32, u32)]| {
            list.iter()
                .map(|(j, c)| format!("{j}:{c}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for i in 0..self.num_items() {
            writeln!(
                out,
                "{i} | {} | {}",
                fmt_list(&self.similar[i]),
                fmt_list(&self.marginal[i])
            )?;
        }
        Ok(())
    }

    pub fn load_text<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut header = std::collections::HashMap::new();
        let parse_err = |line: usize, msg: String| DgrError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        loop {
            let Some((idx, line)) = lines.next() else {
                return Err(DgrError::Truncated("index header never ends".into()));
            };
            let line = line?;
            if line.trim().is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(idx + 1, "expected key=value".into()))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<usize> {
            header
                .get(k)
                .ok_or_else(|| DgrError::Truncated(format!("index header missing {k}")))?
                .parse()
                .map_err(|_| DgrError::Config(format!("bad index header value for {k}")))
        };
        let (k1, k2, theta, num_items) = (get("k1")?, get("k2")?, get("theta")?, get("num_items")?);

        let parse_list = |seg: &str, line: usize| -> Result<Vec<(u32, u32)>> {
            seg.split_whitespace()
                .map(|tok| {
                    let (j, c) = tok
                        .split_once(':')
                        .ok_or_else(|| parse_err(line, format!("bad pair {tok:?}")))?;
                    Ok((
                        j.parse()
                            .map_err(|_| parse_err(line, format!("bad item {j:?}")))?,
                        c.parse()
                            .map_err(|_| parse_err(line, format!("bad count {c:?}")))?,
                    ))
                })
                .collect()
        };
        let mut similar = vec![Vec::new(); num_items];
        let mut marginal = vec![Vec::new(); num_items];
        let mut seen = 0usize;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.splitn(3, '|').collect();
            if parts.len() != 3 {
                return Err(parse_err(idx + 1, "expected `i | s-list | m-list`".into()));
            }
            let i: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad item id {:?}", parts[0].trim())))?;
            if i >= num_items {
                return Err(parse_err(idx + 1, format!("item {i} out of range")));
            }
            similar[i] = parse_list(parts[1], idx + 1)?;
            marginal[i] = parse_list(parts[2], idx + 1)?;
            seen += 1;
        }
        if seen != num_items {
            return Err(DgrError::Truncated(format!(
                "index lists {seen} items, header says {num_items}"
            )));
        }
        Ok(Self {
            k1,
            k2,
            theta,
            similar,
            marginal,
            capped_items: 0,
        })
    }

    pub fn save_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{BINARY_MAGIC}")?;
        writeln!(out, "k1={}", self.k1)?;
        writeln!(out, "k2={}", self.k2)?;
        writeln!(out, "theta={}", self.theta)?;
        writeln!(out, "num_items={}", self.num_items())?;
        writeln!(out)?;
        for i in 0..self.num_items() {
            out.write_all(&(self.similar[i].len() as u32).to_le_bytes())?;
            out.write_all(&(self.marginal[i].len() as u32).to_le_bytes())?;
            for list in [&self.similar[i], &self.marginal[i]] {
                for &(j, c) in list {
                    out.write_all(&j.to_le_bytes())?;
                    out.write_all(&c.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load_binary<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
        let mut magic = String::new();
        reader.read_line(&mut magic)?;
        if magic.trim_end() != BINARY_MAGIC {
            return Err(DgrError::BadMagic {
                expected: BINARY_MAGIC.into(),
                found: magic.trim_end().into(),
            });
        }
        let mut header = std::collections::HashMap::new();
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(DgrError::Truncated("index header never ends".into()));
            }
            if line.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| -> Result<usize> {
            header
                .get(k)
                .ok_or_else(|| DgrError::Truncated(format!("index header missing {k}")))?
                .parse()
                .map_err(|_| DgrError::Config(format!("bad index header value for {k}")))
        };
        let (k1, k2, theta, num_items) = (get("k1")?, get("k2")?, get("theta")?, get("num_items")?);

        let mut read_u32 = |what: &str| -> Result<u32> {
            let mut buf = [0u8; 4];
            reader
                .read_exact(&mut buf)
                .map_err(|_| DgrError::Truncated(format!("index payload ended inside {what}")))?;
            Ok(u32::from_le_bytes(buf))
        };
        let mut similar = Vec::with_capacity(num_items);
        let mut marginal = Vec::with_capacity(num_items);
        for _ in 0..num_items {
            let s_len = read_u32("list length")? as usize;
            let m_len = read_u32("list length")? as usize;
            let mut read_list = |len: usize| -> Result<Vec<(u32, u32)>> {
                (0..len)
                    .map(|_| Ok((read_u32("pair")?, read_u32("pair")?)))
                    .collect()
            };
            similar.push(read_list(s_len)?);
            marginal.push(read_list(m_len)?);
        }
        Ok(Self {
            k1,
            k2,
            theta,
            similar,
            marginal,
            capped_items: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star_graph() -> InteractionGraph {
        // Items 0 and 1 both linked to users {0, 1, 2}.
        InteractionGraph::from_edges(3, 2, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)])
            .unwrap()
    }

    #[test]
    fn star_graph_above_threshold() {
        let index = LecIndexBuilder::new(1, 1, 2).exact().build(&star_graph());
        // count(0,1) = 3 > 2, single candidate goes to the similar set.
        assert_eq!(index.similar(0), &[(1, 3)]);
        assert!(index.marginal(0).is_empty());
    }

    #[test]
    fn threshold_equality_is_discarded() {
        let index = LecIndexBuilder::new(1, 1, 3).exact().build(&star_graph());
        assert!(index.similar(0).is_empty());
        assert!(index.marginal(0).is_empty());
    }

    /// Brute-force oracle: intersect full neighbor sets for every item pair.
    pub(crate) fn brute_force_index(
        train: &InteractionGraph,
        k1: usize,
        k2: usize,
        theta: usize,
    ) -> Vec<(Vec<(u32, u32)>, Vec<(u32, u32)>)> {
        let num_items = train.num_items();
        (0..num_items)
            .map(|i| {
                let mut survivors = Vec::new();
                for j in 0..num_items {
                    if i == j {
                        continue;
                    }
                    let a = train.item_users(i);
                    let b = train.item_users(j);
                    let count = a.iter().filter(|u| b.binary_search(u).is_ok()).count();
                    if count > theta && count > 0 {
                        survivors.push((j as u32, count as u32));
                    }
                }
                survivors.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                let s_len = survivors.len().min(k1);
                let similar = survivors[..s_len].to_vec();
                let rest = &survivors[s_len..];
                let marginal = rest[rest.len().saturating_sub(k2)..].to_vec();
                (similar, marginal)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut edges = Vec::new();
        for u in 0..12u32 {
            for i in 0..15u32 {
                if rng.gen_bool(0.35) {
                    edges.push((u, i));
                }
            }
        }
        let g = InteractionGraph::from_edges(12, 15, &edges).unwrap();
        let index = LecIndexBuilder::new(2, 2, 1).exact().build(&g);
        let oracle = brute_force_index(&g, 2, 2, 1);
        for i in 0..15 {
            assert_eq!(index.similar(i), oracle[i].0.as_slice(), "similar({i})");
            assert_eq!(index.marginal(i), oracle[i].1.as_slice(), "marginal({i})");
        }
    }

    #[test]
    fn build_is_deterministic() {
        let g = star_graph();
        let a = LecIndexBuilder::new(3, 4, 0).exact().build(&g);
        let b = LecIndexBuilder::new(3, 4, 0).exact().build(&g);
        assert_eq!(a, b);
    }

    #[test]
    fn candidate_cap_truncates_and_flags() {
        let g = star_graph();
        let index = LecIndexBuilder::new(2, 2, 0).candidate_cap(1).build(&g);
        assert_eq!(index.capped_items(), 2);
        // One encounter still counts item 1 once; count 1 > theta 0.
        assert_eq!(index.similar(0), &[(1, 1)]);
    }

    #[test]
    fn text_round_trip() {
        let g = star_graph();
        let index = LecIndexBuilder::new(2, 2, 0).exact().build(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.txt");
        index.save_text(&path).unwrap();
        let loaded = LecIndex::load_text(&path).unwrap();
        assert_eq!(index, loaded);
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let g = star_graph();
        let index = LecIndexBuilder::new(2, 2, 0).exact().build(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        index.save_binary(&path).unwrap();
        assert_eq!(LecIndex::load_binary(&path).unwrap(), index);

        // Wrong magic.
        std::fs::write(dir.path().join("bad.bin"), b"NOTMAGIC\n").unwrap();
        assert!(matches!(
            LecIndex::load_binary(dir.path().join("bad.bin")),
            Err(DgrError::BadMagic { .. })
        ));

        // Truncated payload.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(dir.path().join("trunc.bin"), &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            LecIndex::load_binary(dir.path().join("trunc.bin")),
            Err(DgrError::Truncated(_))
        ));
    }
}
