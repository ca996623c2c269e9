//! Directed communication graphs: robustness and rootedness predicates,
//! composition, and certified construction of `r`-robust graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, purpose};

/// Node-count ceiling for the exhaustive robustness check (the enumeration
/// visits every pair of disjoint nonempty subsets, `O(3^N)` pairs).
pub const EXHAUSTIVE_LIMIT: usize = 14;

/// A directed graph over agent ids `0..n`. Edge `(src, dst)` means `dst`
/// receives from `src`. Self-loops are never stored; round-loop consumers
/// add the implicit self contribution themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    in_nbrs: Vec<BTreeSet<usize>>,
    out_nbrs: Vec<BTreeSet<usize>>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Digraph {
            n,
            in_nbrs: vec![BTreeSet::new(); n],
            out_nbrs: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Digraph::new(n);
        for (src, dst) in edges {
            g.add_edge(src, dst)?;
        }
        Ok(g)
    }

    /// Bidirectional clique on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let mut g = Digraph::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.add_edge(i, j).unwrap();
                }
            }
        }
        g
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_ring(n: usize) -> Self {
        let mut g = Digraph::new(n);
        for i in 0..n {
            g.add_edge(i, (i + 1) % n).unwrap();
        }
        g
    }

    /// Inserts an edge; self-loops are ignored.
    pub fn add_edge(&mut self, src: usize, dst: usize) -> Result<()> {
        if src >= self.n || dst >= self.n {
            return Err(Error::config(format!(
                "edge ({src}, {dst}) outside node range 0..{}",
                self.n
            )));
        }
        if src != dst {
            self.out_nbrs[src].insert(dst);
            self.in_nbrs[dst].insert(src);
        }
        Ok(())
    }

    pub fn add_bidirectional(&mut self, a: usize, b: usize) -> Result<()> {
        self.add_edge(a, b)?;
        self.add_edge(b, a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out_nbrs.iter().map(|s| s.len()).sum()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        src < self.n && self.out_nbrs[src].contains(&dst)
    }

    pub fn in_neighbors(&self, node: usize) -> &BTreeSet<usize> {
        &self.in_nbrs[node]
    }

    pub fn out_neighbors(&self, node: usize) -> &BTreeSet<usize> {
        &self.out_nbrs[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_nbrs
            .iter()
            .enumerate()
            .flat_map(|(src, dsts)| dsts.iter().map(move |&dst| (src, dst)))
    }

    /// Copy of the graph with the given incoming edges removed
    /// (`removals[node]` is the set of sources to drop at `node`).
    pub fn remove_in_edges(&self, removals: &BTreeMap<usize, BTreeSet<usize>>) -> Digraph {
        let mut g = self.clone();
        for (&node, sources) in removals {
            if node >= g.n {
                continue;
            }
            for src in sources {
                g.in_nbrs[node].remove(src);
                if let Some(out) = g.out_nbrs.get_mut(*src) {
                    out.remove(&node);
                }
            }
        }
        g
    }
}

/// True iff some member of `subset` has at least `r` in-neighbors outside it.
pub fn is_r_reachable(g: &Digraph, subset: &BTreeSet<usize>, r: usize) -> Result<bool> {
    if subset.is_empty() {
        return Err(Error::EmptyInput("subset"));
    }
    if r == 0 {
        return Err(Error::config("reachability parameter r must be positive"));
    }
    if let Some(&max) = subset.iter().next_back() {
        if max >= g.n() {
            return Err(Error::config(format!(
                "subset member {max} outside node range 0..{}",
                g.n()
            )));
        }
    }
    Ok(subset
        .iter()
        .any(|&i| g.in_neighbors(i).iter().filter(|j| !subset.contains(j)).count() >= r))
}

/// Exhaustive `r`-robustness check: every pair of disjoint nonempty subsets
/// must have at least one `r`-reachable member set. Limited to
/// [`EXHAUSTIVE_LIMIT`] nodes.
pub fn is_r_robust(g: &Digraph, r: usize) -> Result<bool> {
    if r == 0 {
        return Err(Error::config("robustness parameter r must be positive"));
    }
    let n = g.n();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::SizeLimit {
            nodes: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    if n == 0 {
        return Ok(true);
    }

    let in_masks: Vec<u32> = (0..n)
        .map(|i| {
            g.in_neighbors(i)
                .iter()
                .fold(0u32, |mask, &j| mask | (1 << j))
        })
        .collect();

    let reachable = |subset: u32| -> bool {
        let mut rest = subset;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if (in_masks[i] & !subset).count_ones() as usize >= r {
                return true;
            }
        }
        false
    };

    let full: u32 = if n == 32 { u32::MAX } else { (1 << n) - 1 };
    for s1 in 1..=full {
        // Unordered pairs: keep the globally lowest node inside s1.
        let comp = full & !s1;
        if comp == 0 {
            continue;
        }
        if comp.trailing_zeros() < s1.trailing_zeros() {
            continue;
        }
        let r1 = reachable(s1);
        let mut s2 = comp;
        loop {
            if !r1 && !reachable(s2) {
                return Ok(false);
            }
            if s2 == 0 {
                break;
            }
            s2 = (s2 - 1) & comp;
            if s2 == 0 {
                break;
            }
        }
    }
    Ok(true)
}

/// True iff some node has a directed path to every other node.
pub fn is_rooted(g: &Digraph) -> bool {
    let n = g.n();
    if n <= 1 {
        return true;
    }
    let mut visited = vec![false; n];
    'roots: for root in 0..n {
        for v in visited.iter_mut() {
            *v = false;
        }
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in g.out_neighbors(u) {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        if count == n {
            return true;
        }
        // A node unreachable from `root` can never be reached from anything
        // that reaches `root` either, but the search per root is already
        // cheap at these sizes.
        continue 'roots;
    }
    false
}

/// Composition `g2 o g1`: edge `(i, j)` iff some `k` has `(i, k)` in `g1`
/// and `(k, j)` in `g2`, with both operands augmented by implicit self-loops
/// (consensus rows always carry self weight). The stored result drops
/// self-loops again.
pub fn compose(g1: &Digraph, g2: &Digraph) -> Result<Digraph> {
    if g1.n() != g2.n() {
        return Err(Error::Dimension {
            expected: g1.n(),
            actual: g2.n(),
        });
    }
    let n = g1.n();
    let mut out = Digraph::new(n);
    for i in 0..n {
        let mut mids: BTreeSet<usize> = g1.out_neighbors(i).clone();
        mids.insert(i);
        for &k in &mids {
            out.add_edge(i, k)?; // k's self-loop in g2
            for &j in g2.out_neighbors(k) {
                out.add_edge(i, j)?;
            }
        }
    }
    Ok(out)
}

/// Folds [`compose`] over the sequence (`g_k o ... o g_1`) and checks
/// rootedness of the result.
pub fn is_jointly_rooted(seq: &[Digraph]) -> Result<bool> {
    let first = seq.first().ok_or(Error::EmptyInput("graph sequence"))?;
    let mut acc = first.clone();
    for g in &seq[1..] {
        acc = compose(&acc, g)?;
    }
    Ok(is_rooted(&acc))
}

/// Removes a seeded random selection of at most `r - 1` incoming edges at
/// every node and reports whether the remainder is rooted. On an `r`-robust
/// graph this must always hold.
pub fn removal_resilience_trial(g: &Digraph, r: usize, trial_seed: u64) -> bool {
    let mut removals: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for node in 0..g.n() {
        let mut rng = seed::stream(trial_seed, &[purpose::REMOVAL, node as u64]);
        let indeg = g.in_neighbors(node).len();
        let budget = (r.saturating_sub(1)).min(indeg);
        if budget == 0 {
            continue;
        }
        let count = rng.random_range(0..=budget);
        if count == 0 {
            continue;
        }
        let sources: Vec<usize> = g.in_neighbors(node).iter().copied().collect();
        let chosen: BTreeSet<usize> = sources
            .choose_multiple(&mut rng, count)
            .copied()
            .collect();
        removals.insert(node, chosen);
    }
    is_rooted(&g.remove_in_edges(&removals))
}

/// Construction log certifying `r`-robustness of a generated graph: an
/// `r`-robust bidirectional base clique plus one-at-a-time additions, each
/// attached to at least `r` existing nodes (which preserves `r`-robustness).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobustnessCertificate {
    pub r: usize,
    pub base_size: usize,
    /// `(added node, attachment set)` in insertion order.
    pub attachments: Vec<(usize, BTreeSet<usize>)>,
}

impl RobustnessCertificate {
    /// Structural validity: base large enough, attachments large enough and
    /// referring only to previously present nodes.
    pub fn is_well_formed(&self) -> bool {
        if self.base_size < 2 * self.r - 1 {
            return false;
        }
        let mut present = self.base_size;
        for (node, attach) in &self.attachments {
            if *node != present || attach.len() < self.r {
                return false;
            }
            if attach.iter().any(|&a| a >= present) {
                return false;
            }
            present += 1;
        }
        true
    }
}

/// Generates an `r`-robust graph on `n` nodes: bidirectional clique on
/// `2r - 1` nodes, then seeded random bidirectional attachments of exactly
/// `r` existing nodes per added node.
pub fn generate_robust(n: usize, r: usize, gen_seed: u64) -> Result<(Digraph, RobustnessCertificate)> {
    if r == 0 {
        return Err(Error::config("robustness parameter r must be positive"));
    }
    if n < 2 * r - 1 {
        return Err(Error::config(format!(
            "need at least {} nodes for an {r}-robust construction, got {n}",
            2 * r - 1
        )));
    }
    let base = 2 * r - 1;
    let mut g = Digraph::new(n);
    for i in 0..base {
        for j in (i + 1)..base {
            g.add_bidirectional(i, j)?;
        }
    }
    let mut attachments = Vec::with_capacity(n - base);
    for node in base..n {
        let mut rng = seed::stream(gen_seed, &[purpose::GRAPH, node as u64]);
        let existing: Vec<usize> = (0..node).collect();
        let attach: BTreeSet<usize> = existing
            .choose_multiple(&mut rng, r)
            .copied()
            .collect();
        for &a in &attach {
            g.add_bidirectional(node, a)?;
        }
        attachments.push((node, attach));
    }
    let cert = RobustnessCertificate {
        r,
        base_size: base,
        attachments,
    };
    debug_assert!(cert.is_well_formed());
    Ok((g, cert))
}

/// Checks that `g` is exactly the graph described by `cert`.
pub fn verify_certificate(g: &Digraph, cert: &RobustnessCertificate) -> bool {
    if !cert.is_well_formed() {
        return false;
    }
    if g.n() != cert.base_size + cert.attachments.len() {
        return false;
    }
    let mut expected = Digraph::new(g.n());
    for i in 0..cert.base_size {
        for j in (i + 1)..cert.base_size {
            expected.add_bidirectional(i, j).unwrap();
        }
    }
    for (node, attach) in &cert.attachments {
        for &a in attach {
            expected.add_bidirectional(*node, a).unwrap();
        }
    }
    expected == *g
}

/// Edge-list text format: first line the node count, then one `src dst` pair
/// per line.
pub fn write_graph(g: &Digraph) -> String {
    let mut out = String::new();
    writeln!(out, "{}", g.n()).unwrap();
    for (src, dst) in g.edges() {
        writeln!(out, "{src} {dst}").unwrap();
    }
    out
}

/// Parses the [`write_graph`] format; errors carry the 1-based line number.
pub fn parse_graph(text: &str) -> Result<Digraph> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty document, expected node count"))?;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::parse(1, format!("invalid node count '{}'", first.trim())))?;
    let mut g = Digraph::new(n);
    for (idx, line) in lines {
        let ln = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let src: usize = parts
            .next()
            .ok_or_else(|| Error::parse(ln, "missing source"))?
            .parse()
            .map_err(|_| Error::parse(ln, format!("invalid edge '{line}'")))?;
        let dst: usize = parts
            .next()
            .ok_or_else(|| Error::parse(ln, format!("invalid edge '{line}'")))?
            .parse()
            .map_err(|_| Error::parse(ln, format!("invalid edge '{line}'")))?;
        if parts.next().is_some() {
            return Err(Error::parse(ln, format!("trailing tokens in '{line}'")));
        }
        g.add_edge(src, dst)
            .map_err(|e| Error::parse(ln, e.to_string()))?;
    }
    Ok(g)
}

/// Sidecar certificate document for generated graphs.
pub fn write_certificate(cert: &RobustnessCertificate) -> String {
    let mut out = String::new();
    writeln!(out, "redgraf-certificate v1").unwrap();
    writeln!(out, "r {}", cert.r).unwrap();
    writeln!(out, "base {}", cert.base_size).unwrap();
    for (node, attach) in &cert.attachments {
        write!(out, "attach {node}").unwrap();
        for a in attach {
            write!(out, " {a}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses the [`write_certificate`] format.
pub fn parse_certificate(text: &str) -> Result<RobustnessCertificate> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty certificate"))?;
    if header != "redgraf-certificate v1" {
        return Err(Error::parse(ln, "expected header 'redgraf-certificate v1'"));
    }
    let (ln, r_line) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing r line"))?;
    let r: usize = r_line
        .strip_prefix("r ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(ln, "expected 'r <value>'"))?;
    let (ln, base_line) = lines
        .next()
        .ok_or_else(|| Error::parse(3, "missing base line"))?;
    let base_size: usize = base_line
        .strip_prefix("base ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(ln, "expected 'base <value>'"))?;
    let mut attachments = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("attach ")
            .ok_or_else(|| Error::parse(ln, format!("expected 'attach <node> <ids>' in '{line}'")))?;
        let mut nums = rest.split_whitespace().map(str::parse::<usize>);
        let node = nums
            .next()
            .ok_or_else(|| Error::parse(ln, "missing node id"))?
            .map_err(|_| Error::parse(ln, "invalid node id"))?;
        let attach: std::result::Result<BTreeSet<usize>, _> = nums.collect();
        let attach = attach.map_err(|_| Error::parse(ln, "invalid attachment id"))?;
        attachments.push((node, attach));
    }
    Ok(RobustnessCertificate {
        r,
        base_size,
        attachments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    /// Two directed triangles, optionally bridged `2 -> 3`, `5 -> 0`.
    pub(crate) fn two_triangles(bridged: bool) -> Digraph {
        let mut edges = vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)];
        if bridged {
            edges.push((2, 3));
            edges.push((5, 0));
        }
        Digraph::from_edges(6, edges).unwrap()
    }

    #[test]
    fn r_reachable_in_clique() {
        let k4 = Digraph::complete(4);
        assert!(is_r_reachable(&k4, &set(&[0]), 3).unwrap());
        assert!(!is_r_reachable(&k4, &set(&[0, 1]), 3).unwrap());
        assert!(!is_r_reachable(&k4, &set(&[0, 1, 2, 3]), 1).unwrap());
        assert!(matches!(
            is_r_reachable(&k4, &BTreeSet::new(), 1),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn clique_robustness_threshold() {
        let k5 = Digraph::complete(5);
        assert!(is_r_robust(&k5, 3).unwrap());
        assert!(!is_r_robust(&k5, 4).unwrap());
    }

    #[test]
    fn disjoint_triangles_are_not_robust() {
        assert!(!is_r_robust(&two_triangles(false), 1).unwrap());
    }

    #[test]
    fn directed_ring_is_1_robust() {
        assert!(is_r_robust(&Digraph::directed_ring(4), 1).unwrap());
        assert!(!is_r_robust(&Digraph::directed_ring(4), 2).unwrap());
    }

    #[test]
    fn size_limit_is_enforced() {
        let g = Digraph::complete(EXHAUSTIVE_LIMIT + 1);
        assert!(matches!(is_r_robust(&g, 1), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn rootedness_cases() {
        let path = Digraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(is_rooted(&path));
        let isolated = Digraph::new(2);
        assert!(!is_rooted(&isolated));
        assert!(is_rooted(&Digraph::directed_ring(5)));
    }

    #[test]
    fn compose_definition_instance() {
        let g1 = Digraph::from_edges(3, [(0, 1)]).unwrap();
        let g2 = Digraph::from_edges(3, [(1, 2)]).unwrap();
        let c = compose(&g1, &g2).unwrap();
        assert!(c.has_edge(0, 2));
    }

    #[test]
    fn compose_with_empty_is_identity() {
        let g = Digraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let empty = Digraph::new(3);
        assert_eq!(compose(&g, &empty).unwrap(), g);
        assert_eq!(compose(&empty, &g).unwrap(), g);
    }

    #[test]
    fn compose_repeated_edge_via_self_loops() {
        let g = Digraph::from_edges(2, [(0, 1)]).unwrap();
        let c = compose(&g, &g).unwrap();
        assert!(c.has_edge(0, 1));
    }

    #[test]
    fn compose_rejects_mismatched_sizes() {
        let a = Digraph::new(2);
        let b = Digraph::new(3);
        assert!(matches!(compose(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn jointly_rooted_cases() {
        let rooted = Digraph::from_edges(2, [(0, 1)]).unwrap();
        assert!(is_jointly_rooted(std::slice::from_ref(&rooted)).unwrap());

        let ab = Digraph::from_edges(2, [(0, 1)]).unwrap();
        let ba = Digraph::from_edges(2, [(1, 0)]).unwrap();
        assert!(is_jointly_rooted(&[ab, ba]).unwrap());

        let edgeless = Digraph::new(2);
        assert!(!is_jointly_rooted(&[edgeless.clone(), edgeless]).unwrap());

        assert!(matches!(
            is_jointly_rooted(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn removal_trial_with_r1_removes_nothing() {
        let g = Digraph::directed_ring(5);
        for s in 0..10 {
            assert!(removal_resilience_trial(&g, 1, s));
        }
    }

    #[test]
    fn removal_trials_on_clique() {
        let k5 = Digraph::complete(5);
        for s in 0..100 {
            assert!(removal_resilience_trial(&k5, 3, s));
        }
    }

    #[test]
    fn hand_built_disconnecting_removal() {
        let g = two_triangles(true);
        assert!(is_rooted(&g));
        // r = 2 permits dropping one incoming edge per node; dropping the two
        // bridges splits the graph.
        let mut removals = BTreeMap::new();
        removals.insert(3, set(&[2]));
        removals.insert(0, set(&[5]));
        assert!(!is_rooted(&g.remove_in_edges(&removals)));
    }

    #[test]
    fn generate_base_case_is_clique() {
        let (g, cert) = generate_robust(5, 3, 0).unwrap();
        assert_eq!(g, Digraph::complete(5));
        assert_eq!(cert.base_size, 5);
        assert!(cert.attachments.is_empty());
        assert!(verify_certificate(&g, &cert));
    }

    #[test]
    fn generated_graphs_pass_exhaustive_check() {
        for seed in 0..5 {
            let (g, cert) = generate_robust(7, 3, seed).unwrap();
            assert!(is_r_robust(&g, 3).unwrap(), "seed {seed}");
            assert!(verify_certificate(&g, &cert));
        }
    }

    #[test]
    fn generate_rejects_small_n() {
        assert!(matches!(generate_robust(4, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn large_generation_is_certified() {
        let (g, cert) = generate_robust(40, 11, 7).unwrap();
        assert_eq!(cert.base_size, 21);
        assert_eq!(cert.attachments.len(), 19);
        assert!(cert.attachments.iter().all(|(_, a)| a.len() >= 11));
        assert!(verify_certificate(&g, &cert));
        assert!(matches!(is_r_robust(&g, 11), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn graph_text_round_trip() {
        let (g, cert) = generate_robust(9, 3, 1).unwrap();
        let text = write_graph(&g);
        let parsed = parse_graph(&text).unwrap();
        assert_eq!(g, parsed);
        let cert_text = write_certificate(&cert);
        assert_eq!(parse_certificate(&cert_text).unwrap(), cert);
    }

    #[test]
    fn parse_graph_reports_line_numbers() {
        let err = parse_graph("3\n0 1\nbad line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
