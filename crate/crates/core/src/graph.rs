//! Bipartite user-item interaction graph: loading, re-indexing, and the
//! train/test split.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DgrError, Result};

/// Input file layout for [`load_interactions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One line per user: `user item item ...`
    AdjacencyList,
    /// One `user item` pair per line.
    PairList,
}

impl DatasetFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adjacency-list" => Ok(Self::AdjacencyList),
            "pair-list" => Ok(Self::PairList),
            other => Err(DgrError::Config(format!(
                "unknown dataset format {other:?} (expected adjacency-list or pair-list)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AdjacencyList => "adjacency-list",
            Self::PairList => "pair-list",
        }
    }
}

/// Implicit-feedback interaction graph over `num_users + num_items` nodes.
///
/// Users occupy global node indices `[0, num_users)`, items
/// `[num_users, num_users + num_items)`. Adjacency lists are strictly
/// ascending and the user and item sides always encode the same edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    num_edges: usize,
    user_items: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
}

impl InteractionGraph {
    /// Build from already-contiguous indices. Duplicate pairs are collapsed.
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut user_items: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        for &(u, i) in edges {
            if u as usize >= num_users || i as usize >= num_items {
                return Err(DgrError::InvalidArgument(format!(
                    "edge ({u}, {i}) out of range for {num_users} users x {num_items} items"
                )));
            }
            user_items[u as usize].push(i);
        }
        for items in &mut user_items {
            items.sort_unstable();
            items.dedup();
        }
        Ok(Self::from_user_lists(num_users, num_items, user_items))
    }

    fn from_user_lists(num_users: usize, num_items: usize, user_items: Vec<Vec<u32>>) -> Self {
        let mut item_users: Vec<Vec<u32>> = vec![Vec::new(); num_items];
        for (u, items) in user_items.iter().enumerate() {
            for &i in items {
                item_users[i as usize].push(u as u32);
            }
        }
        // Pushed in ascending user order, so item lists are already sorted.
        let num_edges = user_items.iter().map(Vec::len).sum();
        Self {
            num_users,
            num_items,
            num_edges,
            user_items,
            item_users,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Items interacted with by `u`, strictly ascending.
    pub fn user_items(&self, u: usize) -> &[u32] {
        &self.user_items[u]
    }

    /// Users that interacted with `i`, strictly ascending.
    pub fn item_users(&self, i: usize) -> &[u32] {
        &self.item_users[i]
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_items[u].len()
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_users[i].len()
    }

    /// Degree of a global node index (users first, then items).
    pub fn node_degree(&self, node: usize) -> usize {
        if node < self.num_users {
            self.user_degree(node)
        } else {
            self.item_degree(node - self.num_users)
        }
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.user_items[u].binary_search(&(i as u32)).is_ok()
    }

    /// All edges as `(user, item)` pairs in (user, item) order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
    }

    /// Number of connected components of the bipartite graph; isolated
    /// nodes count as their own component.
    pub fn component_count(&self) -> usize {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (u, i) in self.edges() {
            let a = find(&mut parent, u as usize);
            let b = find(&mut parent, self.num_users + i as usize);
            if a != b {
                parent[a] = b;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    /// Consistency check used by tests: symmetry, sortedness, degree sums.
    pub fn check_invariants(&self) -> Result<()> {
        let user_sum: usize = (0..self.num_users).map(|u| self.user_degree(u)).sum();
        let item_sum: usize = (0..self.num_items).map(|i| self.item_degree(i)).sum();
        if user_sum != self.num_edges || item_sum != self.num_edges {
            return Err(DgrError::InvalidArgument(format!(
                "degree sums {user_sum}/{item_sum} != num_edges {}",
                self.num_edges
            )));
        }
        for (u, items) in self.user_items.iter().enumerate() {
            if !items.windows(2).all(|w| w[0] < w[1]) {
                return Err(DgrError::InvalidArgument(format!(
                    "user {u} adjacency not strictly ascending"
                )));
            }
            for &i in items {
                if self.item_users[i as usize].binary_search(&(u as u32)).is_err() {
                    return Err(DgrError::InvalidArgument(format!(
                        "edge ({u}, {i}) missing from item side"
                    )));
                }
            }
        }
        for (i, users) in self.item_users.iter().enumerate() {
            if !users.windows(2).all(|w| w[0] < w[1]) {
                return Err(DgrError::InvalidArgument(format!(
                    "item {i} adjacency not strictly ascending"
                )));
            }
        }
        Ok(())
    }
}

/// Load summary written by the `prepare` command.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub num_users: usize,
    pub num_items: usize,
    pub num_edges: usize,
    pub duplicates_dropped: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
    pub zero_degree_nodes: usize,
}

impl LoadReport {
    fn from_graph(graph: &InteractionGraph, duplicates_dropped: usize) -> Self {
        let degrees = (0..graph.num_nodes()).map(|a| graph.node_degree(a));
        let mut min = usize::MAX;
        let mut max = 0;
        let mut zero = 0;
        let mut sum = 0usize;
        for d in degrees {
            min = min.min(d);
            max = max.max(d);
            sum += d;
            if d == 0 {
                zero += 1;
            }
        }
        LoadReport {
            num_users: graph.num_users(),
            num_items: graph.num_items(),
            num_edges: graph.num_edges(),
            duplicates_dropped,
            min_degree: min,
            max_degree: max,
            mean_degree: sum as f64 / graph.num_nodes() as f64,
            zero_degree_nodes: zero,
        }
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users: {}", self.num_users)?;
        writeln!(f, "items: {}", self.num_items)?;
        writeln!(f, "edges: {}", self.num_edges)?;
        writeln!(f, "duplicates_dropped: {}", self.duplicates_dropped)?;
        writeln!(f, "min_degree: {}", self.min_degree)?;
        writeln!(f, "max_degree: {}", self.max_degree)?;
        writeln!(f, "mean_degree: {:.4}", self.mean_degree)?;
        writeln!(f, "zero_degree_nodes: {}", self.zero_degree_nodes)
    }
}

/// Incremental re-indexer: raw ids to contiguous 0-based indices in order
/// of first appearance.
#[derive(Debug, Default)]
struct IdIndex {
    map: HashMap<u64, u32>,
}

impl IdIndex {
    fn get_or_insert(&mut self, raw: u64) -> u32 {
        let next = self.map.len() as u32;
        *self.map.entry(raw).or_insert(next)
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

/// Parse one interaction file, calling `record` with each re-indexed user
/// and, when present, item. A user line with no items still produces one
/// `record(u, None)` call so degree-0 users are retained.
fn parse_records<P: AsRef<Path>>(
    path: P,
    format: DatasetFormat,
    users: &mut IdIndex,
    items: &mut IdIndex,
    mut record: impl FnMut(u32, Option<u32>),
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        DgrError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let reader = BufReader::new(file);

    let parse_id = |tok: &str, line_no: usize, what: &str| -> Result<u64> {
        tok.parse::<u64>().map_err(|_| DgrError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("invalid {what} id {tok:?} (expected nonnegative integer)"),
        })
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue; // blank line
        };
        let u = users.get_or_insert(parse_id(first, line_no, "user")?);

        match format {
            DatasetFormat::PairList => {
                let Some(second) = tokens.next() else {
                    return Err(DgrError::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: "expected `user item` pair".into(),
                    });
                };
                if tokens.next().is_some() {
                    return Err(DgrError::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: "trailing tokens after `user item` pair".into(),
                    });
                }
                let i = items.get_or_insert(parse_id(second, line_no, "item")?);
                record(u, Some(i));
            }
            DatasetFormat::AdjacencyList => {
                let mut any = false;
                for tok in tokens {
                    let i = items.get_or_insert(parse_id(tok, line_no, "item")?);
                    record(u, Some(i));
                    any = true;
                }
                if !any {
                    record(u, None);
                }
            }
        }
    }
    Ok(())
}

fn lists_to_graph(
    num_users: usize,
    num_items: usize,
    mut user_items: Vec<Vec<u32>>,
) -> (InteractionGraph, usize) {
    let before_dedup: usize = user_items.iter().map(Vec::len).sum();
    for items in &mut user_items {
        items.sort_unstable();
        items.dedup();
    }
    let graph = InteractionGraph::from_user_lists(num_users, num_items, user_items);
    let duplicates = before_dedup - graph.num_edges();
    (graph, duplicates)
}

/// Parse an interaction file into a graph.
///
/// Raw ids may be sparse; they are re-indexed to contiguous 0-based indices
/// in order of first appearance. Duplicate pairs collapse to a single
/// implicit-feedback edge.
pub fn load_interactions<P: AsRef<Path>>(
    path: P,
    format: DatasetFormat,
) -> Result<(InteractionGraph, LoadReport)> {
    let path = path.as_ref();
    let mut users = IdIndex::default();
    let mut items = IdIndex::default();
    let mut user_items: Vec<Vec<u32>> = Vec::new();
    parse_records(path, format, &mut users, &mut items, |u, i| {
        if u as usize == user_items.len() {
            user_items.push(Vec::new());
        }
        if let Some(i) = i {
            user_items[u as usize].push(i);
        }
    })?;
    let (graph, duplicates) = lists_to_graph(users.len(), items.len(), user_items);
    if graph.num_edges() == 0 {
        return Err(DgrError::EmptyDataset(format!(
            "{} contains no interactions",
            path.display()
        )));
    }
    let report = LoadReport::from_graph(&graph, duplicates);
    if report.zero_degree_nodes > 0 {
        log::warn!(
            "{}: {} node(s) with zero interactions retained",
            path.display(),
            report.zero_degree_nodes
        );
    }
    Ok((graph, report))
}

/// Load a pre-split train/test pair into one shared node space.
///
/// Both files go through a single first-appearance re-indexing (train
/// first), so a node means the same row in both graphs. Nodes appearing
/// only in the test file get training degree 0.
pub fn load_split_pair<P: AsRef<Path>>(
    train_path: P,
    test_path: P,
    format: DatasetFormat,
) -> Result<(InteractionGraph, InteractionGraph)> {
    let mut users = IdIndex::default();
    let mut items = IdIndex::default();
    let mut train_pairs: Vec<(u32, u32)> = Vec::new();
    let mut test_pairs: Vec<(u32, u32)> = Vec::new();
    parse_records(&train_path, format, &mut users, &mut items, |u, i| {
        if let Some(i) = i {
            train_pairs.push((u, i));
        }
    })?;
    if train_pairs.is_empty() {
        return Err(DgrError::EmptyDataset(format!(
            "{} contains no interactions",
            train_path.as_ref().display()
        )));
    }
    parse_records(&test_path, format, &mut users, &mut items, |u, i| {
        if let Some(i) = i {
            test_pairs.push((u, i));
        }
    })?;
    let train = InteractionGraph::from_edges(users.len(), items.len(), &train_pairs)?;
    let test = InteractionGraph::from_edges(users.len(), items.len(), &test_pairs)?;
    Ok((train, test))
}

/// Write a graph in pair-list format (one `user item` line per edge).
pub fn write_pair_list<P: AsRef<Path>>(graph: &InteractionGraph, path: P) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (u, i) in graph.edges() {
        writeln!(out, "{u} {i}")?;
    }
    Ok(())
}

/// Partition each user's interactions into train and test at `ratio`.
///
/// The per-user train count is `round(ratio * degree)` clamped to keep at
/// least one training interaction for every user with nonzero degree. Both
/// halves share the full node index space, so test-only cold nodes simply
/// have degree zero on the training side.
pub fn split_train_test(
    graph: &InteractionGraph,
    ratio: f64,
    seed: u64,
) -> Result<(InteractionGraph, InteractionGraph)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DgrError::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_lists: Vec<Vec<u32>> = Vec::with_capacity(graph.num_users());
    let mut test_lists: Vec<Vec<u32>> = Vec::with_capacity(graph.num_users());
    for u in 0..graph.num_users() {
        let mut items = graph.user_items(u).to_vec();
        items.shuffle(&mut rng);
        let d = items.len();
        let n_train = if d == 0 {
            0
        } else {
            ((ratio * d as f64).round() as usize).clamp(1, d)
        };
        let mut train: Vec<u32> = items[..n_train].to_vec();
        let mut test: Vec<u32> = items[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        train_lists.push(train);
        test_lists.push(test);
    }
    let train = InteractionGraph::from_user_lists(graph.num_users(), graph.num_items(), train_lists);
    let test = InteractionGraph::from_user_lists(graph.num_users(), graph.num_items(), test_lists);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn pair_list_counts() {
        let f = write_temp("0 0\n0 1\n1 1\n");
        let (g, report) = load_interactions(f.path(), DatasetFormat::PairList).unwrap();
        assert_eq!(g.num_users(), 2);
        assert_eq!(g.num_items(), 2);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.user_degree(0), 2);
        assert_eq!(g.user_degree(1), 1);
        assert_eq!(report.zero_degree_nodes, 0);
        g.check_invariants().unwrap();
    }

    #[test]
    fn adjacency_list_reindexes_sparse_ids() {
        let f = write_temp("0 5 7\n1 5\n");
        let (g, _) = load_interactions(f.path(), DatasetFormat::AdjacencyList).unwrap();
        assert_eq!(g.num_users(), 2);
        assert_eq!(g.num_items(), 2);
        assert_eq!(g.num_edges(), 3);
        // 5 -> 0 and 7 -> 1 by first appearance.
        assert_eq!(g.user_items(0), &[0, 1]);
        assert_eq!(g.user_items(1), &[0]);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_temp("0 x\n");
        let err = load_interactions(f.path(), DatasetFormat::PairList).unwrap_err();
        match err {
            DgrError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pair_list_rejects_extra_tokens() {
        let f = write_temp("0 1 2\n");
        assert!(matches!(
            load_interactions(f.path(), DatasetFormat::PairList),
            Err(DgrError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let f = write_temp("\n\n");
        assert!(matches!(
            load_interactions(f.path(), DatasetFormat::PairList),
            Err(DgrError::EmptyDataset(_))
        ));
    }

    #[test]
    fn duplicates_collapse_to_one_edge() {
        let f = write_temp("0 3\n0 3\n0 4\n");
        let (g, report) = load_interactions(f.path(), DatasetFormat::PairList).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(report.duplicates_dropped, 1);
    }

    #[test]
    fn zero_degree_user_is_retained_and_flagged() {
        let f = write_temp("0 1 2\n7\n");
        let (g, report) = load_interactions(f.path(), DatasetFormat::AdjacencyList).unwrap();
        assert_eq!(g.num_users(), 2);
        assert_eq!(g.user_degree(1), 0);
        assert_eq!(report.zero_degree_nodes, 1);
        assert_eq!(report.min_degree, 0);
    }

    #[test]
    fn split_exact_ratio() {
        let g = InteractionGraph::from_edges(1, 5, &[(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)])
            .unwrap();
        let (train, test) = split_train_test(&g, 0.8, 7).unwrap();
        assert_eq!(train.user_degree(0), 4);
        assert_eq!(test.user_degree(0), 1);
    }

    #[test]
    fn split_keeps_single_interaction_in_train() {
        let g = InteractionGraph::from_edges(1, 2, &[(0, 1)]).unwrap();
        let (train, test) = split_train_test(&g, 0.5, 0).unwrap();
        assert_eq!(train.user_degree(0), 1);
        assert_eq!(test.user_degree(0), 0);
    }

    #[test]
    fn split_is_deterministic_and_partitions_edges() {
        let mut edges = Vec::new();
        for u in 0..8u32 {
            for i in 0..10u32 {
                if (u * 31 + i * 7) % 3 != 0 {
                    edges.push((u, i));
                }
            }
        }
        let g = InteractionGraph::from_edges(8, 10, &edges).unwrap();
        let (tr1, te1) = split_train_test(&g, 0.8, 42).unwrap();
        let (tr2, te2) = split_train_test(&g, 0.8, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);

        // Union and disjointness per user.
        for u in 0..g.num_users() {
            let mut all: Vec<u32> = tr1.user_items(u).to_vec();
            all.extend_from_slice(te1.user_items(u));
            all.sort_unstable();
            assert_eq!(all, g.user_items(u));
            for i in te1.user_items(u) {
                assert!(!tr1.has_edge(u, *i as usize));
            }
            assert!(g.user_degree(u) == 0 || tr1.user_degree(u) >= 1);
        }

        let (tr3, _) = split_train_test(&g, 0.8, 43).unwrap();
        assert_ne!(tr1, tr3, "different seeds should give different splits");
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let g = InteractionGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        assert!(split_train_test(&g, 1.0, 0).is_err());
        assert!(split_train_test(&g, 0.0, 0).is_err());
    }

    #[test]
    fn split_pair_shares_one_node_space() {
        let train = write_temp("10 100\n20 200\n20 100\n");
        let test = write_temp("20 300\n10 200\n");
        let (tr, te) =
            load_split_pair(train.path(), test.path(), DatasetFormat::PairList).unwrap();
        // Users 10 -> 0, 20 -> 1; items 100 -> 0, 200 -> 1, 300 -> 2.
        assert_eq!(tr.num_users(), 2);
        assert_eq!(tr.num_items(), 3);
        assert_eq!(te.num_users(), 2);
        assert_eq!(te.num_items(), 3);
        assert!(tr.has_edge(1, 0) && tr.has_edge(0, 0) && tr.has_edge(1, 1));
        assert!(te.has_edge(1, 2) && te.has_edge(0, 1));
        // Item 300 exists only in test: train degree 0.
        assert_eq!(tr.item_degree(2), 0);
    }

    #[test]
    fn component_count_counts_isolated_nodes() {
        let g = InteractionGraph::from_edges(2, 3, &[(0, 0), (1, 0)]).unwrap();
        // users {0,1} + item 0 form one component; items 1 and 2 are isolated.
        assert_eq!(g.component_count(), 3);
    }
}
