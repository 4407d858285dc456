//! Teacher-curriculum planners.
//!
//! Given a directed adaptation-cost graph over `{student} ∪ pool` and a
//! quality score `Q` per teacher, a planner emits an ordered teacher sequence
//! of length ≤ k. The primary planner is backward greedy selection: fix the
//! best-performing teacher last, then repeatedly prepend the cheapest-to-adapt
//! remaining teacher, as long as adapting from it is strictly cheaper than
//! adapting from the student directly. Four baselines (greedy forward
//! construction, shortest path under sum or max edge composition, and plain
//! top-k by quality) plus exhaustive order enumeration complete the set.
//!
//! All tie-breaks are lexicographic on model id, so plans are deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costgraph::CostGraph;
use crate::error::{Error, Result};

/// Quality score per teacher (any real-valued "higher is better" metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    /// Identifier for provenance tracking in emitted plans.
    pub id: String,
    scores: BTreeMap<String, f64>,
}

impl PerformanceTable {
    pub fn new(id: &str, pairs: &[(String, f64)]) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (teacher, q) in pairs {
            if !q.is_finite() {
                return Err(Error::Argument(format!("non-finite score for '{teacher}'")));
            }
            if scores.insert(teacher.clone(), *q).is_some() {
                return Err(Error::Argument(format!("duplicate score for '{teacher}'")));
            }
        }
        Ok(PerformanceTable { id: id.into(), scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Teacher ids in lexicographic order.
    pub fn ids(&self) -> Vec<String> {
        self.scores.keys().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.scores.contains_key(id)
    }

    pub fn score(&self, id: &str) -> Result<f64> {
        self.scores
            .get(id)
            .copied()
            .ok_or_else(|| Error::Argument(format!("no quality score for '{id}'")))
    }

    /// Highest-scoring teacher; ties break to the lexicographically smallest
    /// id (BTreeMap iteration order makes the first maximum the smallest id).
    pub fn argmax(&self) -> Result<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (id, &q) in &self.scores {
            match best {
                Some((_, bq)) if q <= bq => {}
                _ => best = Some((id, q)),
            }
        }
        best.map(|(id, _)| id)
            .ok_or_else(|| Error::Argument("performance table is empty".into()))
    }

    /// Parse `id,q` CSV (header line `id,q`, one teacher per row).
    pub fn from_csv(table_id: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("id,q") => {}
            other => {
                return Err(Error::Format(format!(
                    "expected 'id,q' header, got {other:?}"
                )))
            }
        }
        let mut pairs = Vec::new();
        for line in lines {
            let (id, q) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad score row '{line}'")))?;
            let q: f64 = q
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad score value in '{line}'")))?;
            pairs.push((id.trim().to_string(), q));
        }
        PerformanceTable::new(table_id, &pairs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,q\n");
        for (id, q) in &self.scores {
            out.push_str(&format!("{id},{q}\n"));
        }
        out
    }
}

/// Which planner produced a curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bgs,
    Forward,
    SpSum,
    SpMax,
    Topk,
}

impl Algorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Bgs => "bgs",
            Algorithm::Forward => "forward",
            Algorithm::SpSum => "sp-sum",
            Algorithm::SpMax => "sp-max",
            Algorithm::Topk => "topk",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        Ok(match tag {
            "bgs" => Algorithm::Bgs,
            "forward" => Algorithm::Forward,
            "sp-sum" => Algorithm::SpSum,
            "sp-max" => Algorithm::SpMax,
            "topk" => Algorithm::Topk,
            other => {
                return Err(Error::Argument(format!(
                    "unknown planner '{other}' (expected bgs | forward | sp-sum | sp-max | topk)"
                )))
            }
        })
    }
}

/// Where a curriculum's inputs came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub cost_graph: String,
    pub q_table: String,
}

/// A planned teacher order, first-used to last-used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub algorithm: Algorithm,
    /// The length bound the planner was called with.
    pub k: usize,
    pub order: Vec<String>,
    pub provenance: Provenance,
}

/// Identify the student: the unique graph node without a quality score.
pub fn student_id(graph: &CostGraph, q: &PerformanceTable) -> Result<String> {
    let mut without: Vec<&String> = graph.ids().iter().filter(|id| !q.contains(id)).collect();
    for teacher in q.ids() {
        if graph.index_of(&teacher).is_none() {
            return Err(Error::Argument(format!(
                "scored teacher '{teacher}' is missing from the cost graph"
            )));
        }
    }
    match without.len() {
        1 => Ok(without.remove(0).clone()),
        0 => Err(Error::Argument(
            "cost graph has no unscored node to act as the student".into(),
        )),
        _ => Err(Error::Argument(format!(
            "cost graph has {} unscored nodes ({}); exactly one student expected",
            without.len(),
            without
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be ≥ 1".into()));
    }
    Ok(())
}

fn provenance(graph: &CostGraph, q: &PerformanceTable) -> Provenance {
    Provenance { cost_graph: graph.metadata.dataset_id.clone(), q_table: q.id.clone() }
}

/// Among `candidates`, the one minimizing `cost(·)`; ties break to the
/// lexicographically smallest id. Candidates must iterate in lex order.
fn argmin_by_cost<'a>(
    candidates: impl Iterator<Item = &'a String>,
    mut cost: impl FnMut(&str) -> Result<f64>,
) -> Result<Option<(String, f64)>> {
    let mut best: Option<(String, f64)> = None;
    for id in candidates {
        let c = cost(id)?;
        match &best {
            Some((_, bc)) if c >= *bc => {}
            _ => best = Some((id.clone(), c)),
        }
    }
    Ok(best)
}

/// Backward greedy selection.
///
/// The final slot takes the highest-Q teacher. Walking backwards, each
/// earlier slot takes the remaining teacher cheapest to adapt *to* the
/// current first element — but only among teachers strictly cheaper than
/// adapting from the student directly. Stops early when no teacher
/// qualifies or k slots are filled.
pub fn bgs(graph: &CostGraph, q: &PerformanceTable, k: usize) -> Result<Curriculum> {
    check_k(k)?;
    let student = student_id(graph, q)?;
    let best = q.argmax()?.to_string();
    let mut order = vec![best.clone()];
    let mut remaining: Vec<String> = q.ids().into_iter().filter(|id| *id != best).collect();

    while order.len() < k {
        let successor = order[0].clone();
        let direct = graph.cost(&student, &successor)?;
        let eligible = argmin_by_cost(remaining.iter(), |id| graph.cost(id, &successor))?;
        match eligible {
            Some((id, c)) if c < direct => {
                remaining.retain(|r| *r != id);
                order.insert(0, id);
            }
            _ => break,
        }
    }
    Ok(Curriculum { algorithm: Algorithm::Bgs, k, order, provenance: provenance(graph, q) })
}

/// Greedy forward construction: start from the student and repeatedly hop to
/// the nearest unused teacher, for exactly `min(k, N)` hops.
pub fn forward_construction(graph: &CostGraph, q: &PerformanceTable, k: usize) -> Result<Curriculum> {
    check_k(k)?;
    let student = student_id(graph, q)?;
    let mut remaining = q.ids();
    let mut order = Vec::new();
    let mut current = student;
    while order.len() < k.min(q.len()) {
        let (next, _) = argmin_by_cost(remaining.iter(), |id| graph.cost(&current, id))?
            .expect("remaining pool is non-empty");
        remaining.retain(|r| *r != next);
        order.push(next.clone());
        current = next;
    }
    Ok(Curriculum { algorithm: Algorithm::Forward, k, order, provenance: provenance(graph, q) })
}

/// Edge-cost composition for [`shortest_path`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Minimize the sum of edge costs.
    Sum,
    /// Minimize the maximum edge cost (bottleneck).
    Max,
}

fn compose(mode: PathMode, a: f64, b: f64) -> f64 {
    match mode {
        PathMode::Sum => a + b,
        PathMode::Max => a.max(b),
    }
}

/// Optimal path using exactly `k` distinct teachers, starting implicitly at
/// the student and ending at the highest-Q teacher, minimizing the sum or
/// max of edge costs. Ties break to the lexicographically smallest sequence.
pub fn shortest_path(
    graph: &CostGraph,
    q: &PerformanceTable,
    k: usize,
    mode: PathMode,
) -> Result<Curriculum> {
    check_k(k)?;
    let n = q.len();
    if k > n {
        return Err(Error::Argument(format!("k = {k} exceeds pool size {n}")));
    }
    if n > 24 {
        return Err(Error::Argument(format!(
            "pool of {n} teachers is too large for exact path planning"
        )));
    }
    let student = student_id(graph, q)?;
    let ids = q.ids(); // lexicographic
    let final_idx = ids
        .iter()
        .position(|id| id == q.argmax().expect("non-empty"))
        .expect("argmax in pool");

    // Suffix DP over (visited mask, last teacher). Costs are ≥ 0, so 0
    // serves as the identity for both compositions.
    struct Completion<'a> {
        full_count: usize,
        final_idx: usize,
        ids: &'a [String],
        graph: &'a CostGraph,
        mode: PathMode,
    }
    impl Completion<'_> {
        /// Best composed cost of completing a path that has already visited
        /// `mask` (with `last` most recent) into a full exactly-k path
        /// ending at the argmax-Q teacher. Infeasible = +inf.
        fn best(&self, mask: usize, last: usize, memo: &mut Vec<Vec<f64>>) -> Result<f64> {
            if mask.count_ones() as usize == self.full_count {
                return Ok(if last == self.final_idx { 0.0 } else { f64::INFINITY });
            }
            if !memo[mask][last].is_nan() {
                return Ok(memo[mask][last]);
            }
            let mut best = f64::INFINITY;
            for t in 0..self.ids.len() {
                if mask & (1 << t) != 0 {
                    continue;
                }
                let edge = self.graph.cost(&self.ids[last], &self.ids[t])?;
                let rest = self.best(mask | (1 << t), t, memo)?;
                if rest.is_finite() {
                    best = best.min(compose(self.mode, edge, rest));
                }
            }
            memo[mask][last] = best;
            Ok(best)
        }
    }
    let mut memo: Vec<Vec<f64>> = vec![vec![f64::NAN; n]; 1 << n];
    let dp = Completion { full_count: k, final_idx, ids: &ids, graph, mode };

    // Greedy front-to-back reconstruction: at each slot take the smallest id
    // whose full total — edges already fixed, the candidate edge, and the
    // optimal completion — reproduces the optimum. The prefix must be part of
    // the comparison: under max composition a locally larger continuation can
    // tie once the prefix already dominates, and the tie must break to it.
    let mut order: Vec<usize> = Vec::with_capacity(k);
    let mut mask = 0usize;
    let mut prefix: Option<f64> = None;
    for _slot in 0..k {
        let mut best = f64::INFINITY;
        let mut pick = None;
        for t in 0..n {
            if mask & (1 << t) != 0 {
                continue;
            }
            let edge = if order.is_empty() {
                graph.cost(&student, &ids[t])?
            } else {
                graph.cost(&ids[*order.last().unwrap()], &ids[t])?
            };
            let rest = dp.best(mask | (1 << t), t, &mut memo)?;
            if !rest.is_finite() {
                continue;
            }
            let through = match prefix {
                Some(p) => compose(mode, p, edge),
                None => edge,
            };
            let total = compose(mode, through, rest);
            if total < best {
                best = total;
                pick = Some((t, through));
            }
        }
        let (t, through) = pick.ok_or_else(|| {
            Error::Argument(format!(
                "no feasible path of exactly {k} teachers ending at '{}'",
                ids[final_idx]
            ))
        })?;
        mask |= 1 << t;
        order.push(t);
        prefix = Some(through);
    }

    let order = order.into_iter().map(|t| ids[t].clone()).collect();
    let algorithm = match mode {
        PathMode::Sum => Algorithm::SpSum,
        PathMode::Max => Algorithm::SpMax,
    };
    Ok(Curriculum { algorithm, k, order, provenance: provenance(graph, q) })
}

/// The `k` highest-Q teachers, used in ascending-Q order. Selection ties
/// prefer the smaller id; equal-Q teachers order by id ascending.
pub fn top_k_performance(q: &PerformanceTable, k: usize) -> Result<Curriculum> {
    check_k(k)?;
    if k > q.len() {
        return Err(Error::Argument(format!("k = {k} exceeds pool size {}", q.len())));
    }
    // ids() is lex-sorted; a stable sort by descending Q keeps smaller ids
    // first among equals, so truncation keeps the tie-broken best.
    let mut by_quality = q.ids();
    by_quality.sort_by(|a, b| {
        q.score(b)
            .expect("scored")
            .partial_cmp(&q.score(a).expect("scored"))
            .expect("finite scores")
    });
    by_quality.truncate(k);
    by_quality.reverse();
    // Equal-Q neighbors end up larger-id-first after the reverse; restore
    // ascending id order within equal scores.
    by_quality.sort_by(|a, b| {
        q.score(a)
            .expect("scored")
            .partial_cmp(&q.score(b).expect("scored"))
            .expect("finite")
            .then_with(|| a.cmp(b))
    });
    Ok(Curriculum {
        algorithm: Algorithm::Topk,
        k,
        order: by_quality,
        provenance: Provenance { cost_graph: String::new(), q_table: q.id.clone() },
    })
}

/// Every repetition-free teacher sequence of length 1..=k, in lexicographic
/// (depth-first pre-order) emission order.
pub fn enumerate_orders(pool_ids: &[String], k: usize) -> Result<Vec<Vec<String>>> {
    check_k(k)?;
    let mut ids = pool_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != pool_ids.len() {
        return Err(Error::Argument("duplicate ids in pool".into()));
    }
    let mut out = Vec::new();
    let mut current: Vec<String> = Vec::new();
    fn walk(ids: &[String], k: usize, current: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        for id in ids {
            if current.contains(id) {
                continue;
            }
            current.push(id.clone());
            out.push(current.clone());
            if current.len() < k {
                walk(ids, k, current, out);
            }
            current.pop();
        }
    }
    walk(&ids, k.min(ids.len()), &mut current, &mut out);
    Ok(out)
}

/// Dispatch to the planner selected by `algorithm`.
pub fn plan_curriculum(
    algorithm: Algorithm,
    graph: &CostGraph,
    q: &PerformanceTable,
    k: usize,
) -> Result<Curriculum> {
    match algorithm {
        Algorithm::Bgs => bgs(graph, q, k),
        Algorithm::Forward => forward_construction(graph, q, k),
        Algorithm::SpSum => shortest_path(graph, q, k, PathMode::Sum),
        Algorithm::SpMax => shortest_path(graph, q, k, PathMode::Max),
        Algorithm::Topk => top_k_performance(q, k),
    }
}

/// Number of sequences [`enumerate_orders`] would emit for a pool of `n`:
/// Σ_{l=1..min(k,n)} n·(n−1)·…·(n−l+1), without building them.
pub fn enumeration_count(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut partial: u128 = 1;
    for l in 1..=k.min(n) {
        partial = partial.saturating_mul((n - (l - 1)) as u128);
        total = total.saturating_add(partial);
    }
    total
}

/// Composed path cost of running `order` starting from the student.
pub fn order_cost(
    graph: &CostGraph,
    student: &str,
    order: &[String],
    mode: PathMode,
) -> Result<f64> {
    if order.is_empty() {
        return Err(Error::Argument("cannot cost an empty order".into()));
    }
    let mut total = graph.cost(student, &order[0])?;
    for pair in order.windows(2) {
        total = compose(mode, total, graph.cost(&pair[0], &pair[1])?);
    }
    Ok(total)
}

/// The structured plan object emitted for external consumption: stable field
/// order, every edge cost the sequence uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub student: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub order: Vec<String>,
    pub final_teacher: String,
    pub edge_costs_used: Vec<f64>,
}

/// Assemble the exportable plan for a curriculum: the student's id, the
/// order, and the chain of adaptation costs S→o₁→…→oₗ.
pub fn export_plan(graph: &CostGraph, student: &str, curriculum: &Curriculum) -> Result<PlanExport> {
    let order = &curriculum.order;
    if order.is_empty() {
        return Err(Error::Argument("cannot export an empty curriculum".into()));
    }
    let mut edges = Vec::with_capacity(order.len());
    edges.push(graph.cost(student, &order[0])?);
    for pair in order.windows(2) {
        edges.push(graph.cost(&pair[0], &pair[1])?);
    }
    Ok(PlanExport {
        student: student.to_string(),
        algorithm: curriculum.algorithm,
        k: curriculum.k,
        order: order.clone(),
        final_teacher: order.last().expect("non-empty").clone(),
        edge_costs_used: edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costgraph::CostConfig;
    use crate::rng::RngStream;

    /// The reference five-node fixture used throughout the planner tests.
    pub fn fixture_graph() -> CostGraph {
        let ids = ["S", "I", "II", "III", "IV"];
        let mut g = CostGraph::empty(
            ids.iter().map(|s| s.to_string()).collect(),
            CostConfig { dataset_id: "fixture".into(), ..CostConfig::default() },
        )
        .unwrap();
        let entries = [
            ("S", "I", 0.939), ("S", "II", 0.060), ("S", "III", 1.568), ("S", "IV", 1.254),
            ("I", "S", 0.183), ("I", "II", 0.070), ("I", "III", 0.934), ("I", "IV", 0.963),
            ("II", "S", 0.339), ("II", "I", 1.181), ("II", "III", 1.940), ("II", "IV", 1.401),
            ("III", "S", 0.191), ("III", "I", 0.484), ("III", "II", 0.082), ("III", "IV", 0.890),
            ("IV", "S", 0.232), ("IV", "I", 0.767), ("IV", "II", 0.077), ("IV", "III", 1.248),
        ];
        for (from, to, c) in entries {
            g.set_cost(from, to, c).unwrap();
        }
        g
    }

    pub fn fixture_q() -> PerformanceTable {
        PerformanceTable::new(
            "fixture",
            &[
                ("I".into(), 38.2),
                ("II".into(), 38.7),
                ("III".into(), 42.3),
                ("IV".into(), 49.1),
            ],
        )
        .unwrap()
    }

    fn order_of(c: &Curriculum) -> Vec<&str> {
        c.order.iter().map(String::as_str).collect()
    }

    #[test]
    fn bgs_fixture_all_depths() {
        let (g, q) = (fixture_graph(), fixture_q());
        assert_eq!(order_of(&bgs(&g, &q, 1).unwrap()), ["IV"]);
        assert_eq!(order_of(&bgs(&g, &q, 2).unwrap()), ["III", "IV"]);
        assert_eq!(order_of(&bgs(&g, &q, 3).unwrap()), ["I", "III", "IV"]);
        // Early stop at k=4: the one remaining teacher is costlier to adapt
        // from than the student itself.
        assert_eq!(order_of(&bgs(&g, &q, 4).unwrap()), ["I", "III", "IV"]);
    }

    #[test]
    fn bgs_is_suffix_stable() {
        let (g, q) = (fixture_graph(), fixture_q());
        let mut prev: Vec<String> = Vec::new();
        for k in 1..=4 {
            let cur = bgs(&g, &q, k).unwrap().order;
            assert!(
                cur.ends_with(&prev),
                "k={k} order {cur:?} does not extend {prev:?}"
            );
            prev = cur;
        }
    }

    #[test]
    fn forward_fixture_all_depths() {
        let (g, q) = (fixture_graph(), fixture_q());
        assert_eq!(order_of(&forward_construction(&g, &q, 1).unwrap()), ["II"]);
        assert_eq!(order_of(&forward_construction(&g, &q, 2).unwrap()), ["II", "I"]);
        assert_eq!(order_of(&forward_construction(&g, &q, 3).unwrap()), ["II", "I", "III"]);
        assert_eq!(
            order_of(&forward_construction(&g, &q, 4).unwrap()),
            ["II", "I", "III", "IV"]
        );
        // k beyond the pool still yields exactly N teachers.
        assert_eq!(forward_construction(&g, &q, 9).unwrap().order.len(), 4);
    }

    #[test]
    fn shortest_path_sum_fixture() {
        let (g, q) = (fixture_graph(), fixture_q());
        assert_eq!(order_of(&shortest_path(&g, &q, 1, PathMode::Sum).unwrap()), ["IV"]);
        assert_eq!(order_of(&shortest_path(&g, &q, 2, PathMode::Sum).unwrap()), ["II", "IV"]);
        assert_eq!(
            order_of(&shortest_path(&g, &q, 3, PathMode::Sum).unwrap()),
            ["II", "I", "IV"]
        );
        assert_eq!(
            order_of(&shortest_path(&g, &q, 4, PathMode::Sum).unwrap()),
            ["II", "I", "III", "IV"]
        );
    }

    #[test]
    fn shortest_path_max_fixture() {
        let (g, q) = (fixture_graph(), fixture_q());
        assert_eq!(order_of(&shortest_path(&g, &q, 1, PathMode::Max).unwrap()), ["IV"]);
        assert_eq!(order_of(&shortest_path(&g, &q, 2, PathMode::Max).unwrap()), ["I", "IV"]);
        assert_eq!(
            order_of(&shortest_path(&g, &q, 3, PathMode::Max).unwrap()),
            ["I", "III", "IV"]
        );
        assert_eq!(
            order_of(&shortest_path(&g, &q, 4, PathMode::Max).unwrap()),
            ["II", "I", "III", "IV"]
        );
    }

    #[test]
    fn top_k_fixture() {
        let q = fixture_q();
        assert_eq!(order_of(&top_k_performance(&q, 1).unwrap()), ["IV"]);
        assert_eq!(order_of(&top_k_performance(&q, 2).unwrap()), ["III", "IV"]);
        assert_eq!(order_of(&top_k_performance(&q, 3).unwrap()), ["II", "III", "IV"]);
        assert_eq!(order_of(&top_k_performance(&q, 4).unwrap()), ["I", "II", "III", "IV"]);
        assert!(top_k_performance(&q, 5).is_err());
    }

    #[test]
    fn planners_fixing_the_last_slot_pick_argmax_q() {
        let (g, q) = (fixture_graph(), fixture_q());
        for k in 1..=4 {
            assert_eq!(bgs(&g, &q, k).unwrap().order.last().unwrap(), "IV");
            for mode in [PathMode::Sum, PathMode::Max] {
                assert_eq!(shortest_path(&g, &q, k, mode).unwrap().order.last().unwrap(), "IV");
            }
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        let ids: Vec<String> = ["I", "II", "III", "IV"].iter().map(|s| s.to_string()).collect();
        assert_eq!(enumerate_orders(&ids, 1).unwrap().len(), 4);
        assert_eq!(enumerate_orders(&ids, 2).unwrap().len(), 16);
        assert_eq!(enumerate_orders(&ids, 3).unwrap().len(), 40);
        assert_eq!(enumerate_orders(&ids, 4).unwrap().len(), 64);
        assert_eq!(enumerate_orders(&ids[..1], 1).unwrap().len(), 1);
        // The closed-form count agrees with the actual enumeration, and
        // saturates past the pool size.
        for (n, k) in [(4, 1), (4, 2), (4, 3), (4, 4), (4, 9), (1, 1), (3, 2)] {
            assert_eq!(
                enumeration_count(n, k),
                enumerate_orders(&ids[..n], k).unwrap().len() as u128,
                "n={n} k={k}"
            );
        }

        // Pre-order: each prefix precedes its extensions; overall order is
        // lexicographic on the sequences.
        let all = enumerate_orders(&ids, 2).unwrap();
        assert_eq!(all[0], vec!["I".to_string()]);
        assert_eq!(all[1], vec!["I".to_string(), "II".to_string()]);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        // No repeats within a sequence.
        for seq in &all {
            let mut dedup = seq.clone();
            dedup.dedup();
            assert_eq!(&dedup, seq);
        }
    }

    /// Brute-force cross-check on random graphs: the DP result equals the
    /// best enumerated exactly-k path ending at the argmax-Q teacher, and is
    /// the lexicographically smallest optimal one.
    #[test]
    fn shortest_path_matches_brute_force() {
        for seed in 0..30u64 {
            let mut rng = RngStream::new(seed);
            let ids: Vec<String> =
                ["S", "A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
            let mut g = CostGraph::empty(ids.clone(), CostConfig::default()).unwrap();
            for from in &ids {
                for to in &ids {
                    if from != to {
                        // Coarse grid so cost ties actually occur.
                        let c = (rng.below(8) as f64) * 0.25;
                        g.set_cost(from, to, c).unwrap();
                    }
                }
            }
            let q = PerformanceTable::new(
                "t",
                &[
                    ("A".into(), 1.0),
                    ("B".into(), 2.0),
                    ("C".into(), 3.0),
                    ("D".into(), 4.0),
                ],
            )
            .unwrap();
            for k in 1..=4usize {
                for mode in [PathMode::Sum, PathMode::Max] {
                    let got = shortest_path(&g, &q, k, mode).unwrap();
                    let mut best = f64::INFINITY;
                    let mut best_orders: Vec<Vec<String>> = Vec::new();
                    for order in enumerate_orders(&q.ids(), k).unwrap() {
                        if order.len() != k || order.last().map(String::as_str) != Some("D") {
                            continue;
                        }
                        let c = order_cost(&g, "S", &order, mode).unwrap();
                        if c < best {
                            best = c;
                            best_orders = vec![order];
                        } else if c == best {
                            best_orders.push(order);
                        }
                    }
                    best_orders.sort();
                    let got_cost = order_cost(&g, "S", &got.order, mode).unwrap();
                    assert_eq!(got_cost, best, "seed {seed} k {k} {mode:?}");
                    assert_eq!(got.order, best_orders[0], "seed {seed} k {k} {mode:?}");
                }
            }
        }
    }

    #[test]
    fn cost_scaling_leaves_plans_unchanged() {
        let (g, q) = (fixture_graph(), fixture_q());
        let mut scaled = CostGraph::empty(
            g.ids().to_vec(),
            CostConfig { dataset_id: "fixture".into(), ..CostConfig::default() },
        )
        .unwrap();
        for from in g.ids().to_vec() {
            for to in g.ids().to_vec() {
                if from != to {
                    scaled.set_cost(&from, &to, 7.25 * g.cost(&from, &to).unwrap()).unwrap();
                }
            }
        }
        for k in 1..=4 {
            assert_eq!(bgs(&g, &q, k).unwrap().order, bgs(&scaled, &q, k).unwrap().order);
            assert_eq!(
                forward_construction(&g, &q, k).unwrap().order,
                forward_construction(&scaled, &q, k).unwrap().order
            );
            for mode in [PathMode::Sum, PathMode::Max] {
                assert_eq!(
                    shortest_path(&g, &q, k, mode).unwrap().order,
                    shortest_path(&scaled, &q, k, mode).unwrap().order
                );
            }
        }
    }

    #[test]
    fn quality_ties_break_to_smallest_id() {
        let q = PerformanceTable::new(
            "t",
            &[("B".into(), 5.0), ("A".into(), 5.0), ("C".into(), 1.0)],
        )
        .unwrap();
        assert_eq!(q.argmax().unwrap(), "A");
        // Top-2 of {A:5, B:5, C:1} is {A, B}; ascending with equal scores
        // keeps id order.
        assert_eq!(order_of(&top_k_performance(&q, 2).unwrap()), ["A", "B"]);
    }

    #[test]
    fn student_resolution_requires_exactly_one_unscored_node() {
        let g = fixture_graph();
        let q = fixture_q();
        assert_eq!(student_id(&g, &q).unwrap(), "S");
        // All nodes scored → no student.
        let all = PerformanceTable::new(
            "fixture",
            &[
                ("S".into(), 1.0),
                ("I".into(), 38.2),
                ("II".into(), 38.7),
                ("III".into(), 42.3),
                ("IV".into(), 49.1),
            ],
        )
        .unwrap();
        assert!(student_id(&g, &all).is_err());
        // Scored teacher missing from the graph.
        let extra = PerformanceTable::new("t", &[("Z".into(), 9.0)]).unwrap();
        assert!(student_id(&g, &extra).is_err());
    }

    #[test]
    fn zero_k_is_rejected_everywhere() {
        let (g, q) = (fixture_graph(), fixture_q());
        assert!(bgs(&g, &q, 0).is_err());
        assert!(forward_construction(&g, &q, 0).is_err());
        assert!(shortest_path(&g, &q, 0, PathMode::Sum).is_err());
        assert!(top_k_performance(&q, 0).is_err());
        assert!(enumerate_orders(&q.ids(), 0).is_err());
    }

    #[test]
    fn plan_export_carries_edge_costs() {
        let (g, q) = (fixture_graph(), fixture_q());
        let c = bgs(&g, &q, 3).unwrap();
        let plan = export_plan(&g, "S", &c).unwrap();
        assert_eq!(plan.student, "S");
        assert_eq!(plan.final_teacher, "IV");
        assert_eq!(plan.order, vec!["I", "III", "IV"]);
        assert_eq!(plan.edge_costs_used, vec![0.939, 0.934, 0.890]);
        // Stable key order in the JSON form.
        let json = serde_json::to_string(&plan).unwrap();
        let student_pos = json.find("\"student\"").unwrap();
        let algo_pos = json.find("\"algorithm\"").unwrap();
        let final_pos = json.find("\"final_teacher\"").unwrap();
        assert!(student_pos < algo_pos && algo_pos < final_pos);
    }

    #[test]
    fn q_table_csv_round_trip() {
        let q = fixture_q();
        let csv = q.to_csv();
        let back = PerformanceTable::from_csv("fixture", &csv).unwrap();
        assert_eq!(q, back);
        assert!(PerformanceTable::from_csv("x", "bad").is_err());
    }
}
