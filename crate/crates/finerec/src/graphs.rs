//! Per-attribute user-opinion-item graphs and the global interaction graph.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde_json::json;

use crate::corpus::Corpus;
use crate::encoder::TextEncoder;
use crate::error::{FineRecError, Result};
use crate::extraction::PairStore;
use crate::linalg::{add_assign, normalize, scale};
use crate::{count, Scalar};

/// Bipartite graph for one attribute; edges carry the encoded opinion vector
/// and are stored from both endpoints. Nodes without edges do not appear.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGraph<F> {
    pub attribute: usize,
    user_adj: BTreeMap<usize, Vec<(usize, Vec<F>)>>,
    item_adj: BTreeMap<usize, Vec<(usize, Vec<F>)>>,
}

impl<F: Scalar> AttributeGraph<F> {
    pub fn new(attribute: usize) -> Self {
        AttributeGraph {
            attribute,
            user_adj: BTreeMap::new(),
            item_adj: BTreeMap::new(),
        }
    }

    pub fn insert_edge(&mut self, user: usize, item: usize, opinion: Vec<F>) {
        self.user_adj
            .entry(user)
            .or_default()
            .push((item, opinion.clone()));
        self.item_adj.entry(item).or_default().push((user, opinion));
    }

    fn sort_adjacency(&mut self) {
        for adj in self.user_adj.values_mut() {
            adj.sort_by_key(|(n, _)| *n);
        }
        for adj in self.item_adj.values_mut() {
            adj.sort_by_key(|(n, _)| *n);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.user_adj.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.user_adj.values().map(Vec::len).sum()
    }

    /// Users with at least one edge, ascending.
    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.user_adj.keys().copied()
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.item_adj.keys().copied()
    }

    pub fn user_neighbors(&self, user: usize) -> Option<&[(usize, Vec<F>)]> {
        self.user_adj.get(&user).map(Vec::as_slice)
    }

    pub fn item_neighbors(&self, item: usize) -> Option<&[(usize, Vec<F>)]> {
        self.item_adj.get(&item).map(Vec::as_slice)
    }
}

/// Build the N attribute graphs from extracted pairs. Multiple opinions on
/// the same (user, item, attribute) collapse into one edge carrying the
/// re-normalized mean of their vectors. Pairs whose interaction is not in
/// `corpus` (held-out positions) are skipped; ids absent from the corpus are
/// an error.
pub fn build_attribute_graphs<F: Scalar>(
    pairs: &PairStore,
    corpus: &Corpus,
    num_attributes: usize,
    encoder: &dyn TextEncoder<F>,
) -> Result<Vec<AttributeGraph<F>>> {
    let mut graphs: Vec<AttributeGraph<F>> =
        (0..num_attributes).map(AttributeGraph::new).collect();
    for ((user, item, attribute), opinions) in pairs.iter_grouped() {
        if *attribute >= num_attributes {
            return Err(FineRecError::Config(format!(
                "pair <{user}, {item}> references attribute index {attribute}, but only {num_attributes} attributes are configured"
            )));
        }
        let user_idx = corpus.user_idx(user).ok_or_else(|| {
            FineRecError::Config(format!(
                "pair <{user}, {item}> references unknown user `{user}`"
            ))
        })?;
        let item_idx = corpus.item_idx(item).ok_or_else(|| {
            FineRecError::Config(format!(
                "pair <{user}, {item}> references unknown item `{item}`"
            ))
        })?;
        if !corpus.has_interaction(user, item) {
            continue;
        }
        let mut edge = vec![F::zero(); encoder.dim()];
        for opinion in opinions {
            add_assign(&mut edge, &encoder.encode(opinion));
        }
        scale(&mut edge, F::one() / count(opinions.len()));
        normalize(&mut edge);
        graphs[*attribute].insert_edge(user_idx, item_idx, edge);
    }
    for graph in &mut graphs {
        graph.sort_adjacency();
    }
    Ok(graphs)
}

/// Single coarse graph whose edges carry whole-review vectors, one edge per
/// interaction in the corpus.
pub fn build_coarse_graph<F: Scalar>(
    corpus: &Corpus,
    encoder: &dyn TextEncoder<F>,
) -> AttributeGraph<F> {
    let mut graph = AttributeGraph::new(0);
    for (u, _) in corpus.users().iter().enumerate() {
        for interaction in corpus.sequence(u) {
            let item_idx = corpus
                .item_idx(&interaction.item)
                .expect("sequence item in catalog");
            graph.insert_edge(u, item_idx, encoder.encode(&interaction.review));
        }
    }
    graph.sort_adjacency();
    graph
}

/// One-hop and capped two-hop neighborhoods of the interaction graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInteractionGraph {
    pub items_of_user: Vec<Vec<usize>>,
    pub cousers_of_user: Vec<Vec<usize>>,
    pub users_of_item: Vec<Vec<usize>>,
    pub coitems_of_item: Vec<Vec<usize>>,
}

/// Rank two-hop candidates by shared one-hop neighbor count (descending, ties
/// by index ascending) and keep the first `cap`.
fn two_hop(one_hop: &[Vec<usize>], inverse: &[Vec<usize>], cap: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(one_hop.len());
    for (node, neighbors) in one_hop.iter().enumerate() {
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for &mid in neighbors {
            for &other in &inverse[mid] {
                if other != node {
                    *shared.entry(other).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(usize, usize)> = shared.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(cap);
        out.push(ranked.into_iter().map(|(idx, _)| idx).collect());
    }
    out
}

/// Build neighbor sets from the training corpus. `cap` bounds the two-hop
/// lists; pass `usize::MAX` for the exact full sets.
pub fn build_global_graph(corpus: &Corpus, cap: usize) -> GlobalInteractionGraph {
    assert!(cap >= 1, "two-hop cap must be at least 1");
    let mut items_of_user = vec![Vec::new(); corpus.num_users()];
    let mut users_of_item = vec![Vec::new(); corpus.num_items()];
    for (u, _) in corpus.users().iter().enumerate() {
        let mut items: Vec<usize> = corpus
            .sequence(u)
            .iter()
            .map(|i| corpus.item_idx(&i.item).expect("sequence item in catalog"))
            .collect();
        items.sort_unstable();
        items.dedup();
        for &x in &items {
            users_of_item[x].push(u);
        }
        items_of_user[u] = items;
    }
    // users_of_item entries arrive in ascending user order already.
    let cousers_of_user = two_hop(&items_of_user, &users_of_item, cap);
    let coitems_of_item = two_hop(&users_of_item, &items_of_user, cap);
    GlobalInteractionGraph {
        items_of_user,
        cousers_of_user,
        users_of_item,
        coitems_of_item,
    }
}

/// Write one `graph-<n>.jsonl` edge dump for inspection.
pub fn dump_graph<F: Scalar>(
    graph: &AttributeGraph<F>,
    corpus: &Corpus,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    for (user, neighbors) in &graph.user_adj {
        for (item, vector) in neighbors {
            let vector: Vec<f64> = vector
                .iter()
                .map(|x| x.to_f64().expect("scalar fits f64"))
                .collect();
            let line = json!({
                "user": corpus.user_id(*user),
                "item": corpus.item_id(*item),
                "vector": vector,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| FineRecError::io(path.display().to_string(), e))
}
