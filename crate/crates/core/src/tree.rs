//! Labels of the scale-irregular trees, their equivalence classes, the exact
//! tree metric, and explicit enumeration of the finite trees `T_{m,n}`.
//!
//! A label is a finitely supported digit sequence `s`. The lowest index `lo`
//! of the tree carries a binary digit, every index `k > lo` a digit in
//! `[0, b(k))`. Two labels are identified when they differ only at the
//! *free index* `l`: the index just above the lowest nonzero digit, provided
//! that digit equals 1. Canonical labels have a zero at their free index.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use thiserror::Error;

use crate::params::BranchingFunction;

/// Largest supported span `top - lo` of a label; distances fit in `u64`.
pub const MAX_SPAN: i32 = 62;

/// Default vertex cap for [`enumerate_finite_tree`].
pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("digit {value} at index {index} is outside [0, {bound})")]
    InvalidLabel { index: i32, value: u32, bound: u32 },
    #[error("index {index} lies outside the tree window")]
    WindowMismatch { index: i32 },
    #[error("window [{m}, {n}] is empty")]
    BadWindow { m: i32, n: i32 },
    #[error("{count} labels exceed the enumeration cap {cap}")]
    TooLarge { count: u128, cap: usize },
}

/// Finitely supported digit sequence, stored as sorted nonzero `(index, digit)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    digits: SmallVec<[(i32, u8); 6]>,
}

impl Label {
    pub fn root() -> Self {
        Label::default()
    }

    pub fn new(pairs: impl IntoIterator<Item = (i32, u32)>) -> Result<Self, TreeError> {
        let mut label = Label::root();
        for (index, value) in pairs {
            let digit = u8::try_from(value).map_err(|_| TreeError::InvalidLabel { index, value, bound: 256 })?;
            label.set(index, digit);
        }
        Ok(label)
    }

    pub fn get(&self, k: i32) -> u8 {
        match self.digits.binary_search_by_key(&k, |&(i, _)| i) {
            Ok(pos) => self.digits[pos].1,
            Err(_) => 0,
        }
    }

    pub fn set(&mut self, k: i32, value: u8) {
        match self.digits.binary_search_by_key(&k, |&(i, _)| i) {
            Ok(pos) if value == 0 => {
                self.digits.remove(pos);
            }
            Ok(pos) => self.digits[pos].1 = value,
            Err(_) if value == 0 => {}
            Err(pos) => self.digits.insert(pos, (k, value)),
        }
    }

    /// Nonzero digits in increasing index order.
    pub fn digits(&self) -> &[(i32, u8)] {
        &self.digits
    }

    pub fn is_root(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn top(&self) -> Option<i32> {
        self.digits.last().map(|&(k, _)| k)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.digits.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}:{v}")?;
        }
        Ok(())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.digits.iter().map(|(k, v)| (k.to_string(), *v)))
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<i32, u32>::deserialize(deserializer)?;
        Label::new(map).map_err(serde::de::Error::custom)
    }
}

/// A tree point: a label in canonical form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TreeVertex(Label);

impl TreeVertex {
    pub fn root() -> Self {
        TreeVertex(Label::root())
    }

    pub fn label(&self) -> &Label {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_root()
    }
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Exact tree distance `units · 2^exponent`; `exponent` is the lowest tree index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Dyadic {
    pub units: u64,
    pub exponent: i32,
}

impl Dyadic {
    pub fn to_f64(self) -> f64 {
        self.units as f64 * crate::profiles::dyadic(self.exponent)
    }
}

/// The tree `T_{lo,hi}` (or `T_{lo,∞}` when `hi` is `None`) built from `b`.
#[derive(Debug, Clone)]
pub struct TreeShape {
    b: BranchingFunction,
    lo: i32,
    hi: Option<i32>,
}

impl TreeShape {
    /// The graph-mode tree: lowest index 0, unbounded above.
    pub fn graph(b: BranchingFunction) -> Self {
        TreeShape { b, lo: 0, hi: None }
    }

    pub fn finite(b: BranchingFunction, m: i32, n: i32) -> Result<Self, TreeError> {
        if m > n || n - m > MAX_SPAN {
            return Err(TreeError::BadWindow { m, n });
        }
        Ok(TreeShape { b, lo: m, hi: Some(n) })
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> Option<i32> {
        self.hi
    }

    pub fn branching(&self) -> &BranchingFunction {
        &self.b
    }

    fn top_index(&self) -> i32 {
        self.hi.unwrap_or(self.lo + MAX_SPAN)
    }

    /// Number of admissible digits at index `k`.
    pub fn digit_bound(&self, k: i32) -> u32 {
        if k == self.lo {
            2
        } else {
            self.b.at(k)
        }
    }

    fn check_label(&self, s: &Label) -> Result<(), TreeError> {
        for &(index, value) in s.digits() {
            if index < self.lo || index > self.top_index() {
                return Err(TreeError::WindowMismatch { index });
            }
            let bound = self.digit_bound(index);
            if u32::from(value) >= bound {
                return Err(TreeError::InvalidLabel { index, value: value.into(), bound });
            }
        }
        Ok(())
    }

    /// Index whose digit is free within the equivalence class of `s`.
    pub fn free_index(&self, s: &Label) -> Option<i32> {
        let &(j0, v) = s.digits().first()?;
        let l = j0 + 1;
        (v == 1 && l <= self.top_index()).then_some(l)
    }

    pub fn canonicalize(&self, s: &Label) -> Result<TreeVertex, TreeError> {
        self.check_label(s)?;
        Ok(self.canonical_unchecked(s.clone()))
    }

    pub(crate) fn canonical_unchecked(&self, mut s: Label) -> TreeVertex {
        if let Some(l) = self.free_index(&s) {
            s.set(l, 0);
        }
        TreeVertex(s)
    }

    /// All labels in the class of `v`: one, or `b(l)` for a free index `l`.
    pub fn representatives(&self, v: &TreeVertex) -> Vec<Label> {
        match self.free_index(&v.0) {
            None => vec![v.0.clone()],
            Some(l) => (0..self.b.at(l))
                .map(|j| {
                    let mut s = v.0.clone();
                    s.set(l, j as u8);
                    s
                })
                .collect(),
        }
    }

    pub fn tree_degree(&self, v: &TreeVertex) -> usize {
        self.free_index(&v.0).map_or(1, |l| self.b.at(l) as usize)
    }

    /// Flip the lowest digit of every representative; sorted, deduplicated.
    pub fn tree_neighbors(&self, v: &TreeVertex) -> Vec<TreeVertex> {
        let mut out: Vec<TreeVertex> = self
            .representatives(v)
            .into_iter()
            .map(|mut s| {
                let flipped = 1 - s.get(self.lo);
                s.set(self.lo, flipped);
                self.canonical_unchecked(s)
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Distances from `s` to the root and to the far point `{k ↦ 1}` of the
    /// subtree `T_{lo,k}` containing it, in edges.
    fn root_and_far(&self, s: &Label, k: i32) -> (u64, u64) {
        let mut digits = s.digits().iter().peekable();
        let mut next_digit = |i: i32| match digits.peek() {
            Some(&&(j, v)) if j == i => {
                digits.next();
                v
            }
            _ => 0,
        };
        let v = u64::from(next_digit(self.lo));
        let (mut root, mut far) = (v, 1 - v);
        for i in self.lo + 1..=k {
            let half = 1u64 << (i - 1 - self.lo);
            let v = next_digit(i);
            let new_root = if v == 0 { root } else { half + far };
            let new_far = if v == 1 { root } else { far + half };
            root = new_root;
            far = new_far;
        }
        (root, far)
    }

    /// Graph distance to the root, in edges.
    pub fn distance_to_root(&self, v: &TreeVertex) -> u64 {
        let top = v.0.top().unwrap_or(self.lo).max(self.lo);
        self.root_and_far(&v.0, top).0
    }

    pub fn tree_distance(&self, u: &TreeVertex, v: &TreeVertex) -> Result<Dyadic, TreeError> {
        self.check_label(&u.0)?;
        self.check_label(&v.0)?;
        Ok(Dyadic { units: self.edge_distance(u, v), exponent: self.lo })
    }

    /// Tree distance in edges; labels are assumed to fit the window.
    pub fn edge_distance(&self, u: &TreeVertex, v: &TreeVertex) -> u64 {
        let top = match top_difference(&u.0, &v.0) {
            None => return 0,
            Some(n) => n,
        };
        if top == self.lo {
            return 1;
        }
        self.root_and_far(&u.0, top - 1).1 + self.root_and_far(&v.0, top - 1).1
    }

    /// Level `n` of the wormhole containing `v`: the lowest nonzero digit is a
    /// 1 at index `n`. Such points lie at root distance `odd · 2^(n - lo)`;
    /// when `b ≡ 2` these are all non-root points.
    pub fn wormhole_level(&self, v: &TreeVertex) -> Option<i32> {
        match v.0.digits().first() {
            Some(&(n, 1)) => Some(n),
            _ => None,
        }
    }
}

fn top_difference(u: &Label, v: &Label) -> Option<i32> {
    let (mut a, mut b) = (u.digits().iter().rev().peekable(), v.digits().iter().rev().peekable());
    loop {
        match (a.peek(), b.peek()) {
            (None, None) => return None,
            (Some(&&(i, _)), None) | (None, Some(&&(i, _))) => return Some(i),
            (Some(&&(i, x)), Some(&&(j, y))) => {
                if i != j {
                    return Some(i.max(j));
                }
                if x != y {
                    return Some(i);
                }
                a.next();
                b.next();
            }
        }
    }
}

/// Explicit finite tree `T_{m,n}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteTree {
    pub m: i32,
    pub n: i32,
    pub vertices: Vec<TreeVertex>,
    pub edges: Vec<(usize, usize)>,
}

impl FiniteTree {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u_id", "v_id"])?;
        for &(a, b) in &self.edges {
            w.serialize((a, b))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_vertices_csv<W: Write>(&self, shape: &TreeShape, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "label", "root_distance", "wormhole_level"])?;
        for (id, v) in self.vertices.iter().enumerate() {
            let level = shape.wormhole_level(v).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([id.to_string(), v.to_string(), shape.distance_to_root(v).to_string(), level])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Enumerate every label of `T_{m,n}`, close under the identification rule
/// with a union-find, and collect the edges between classes.
pub fn enumerate_finite_tree(m: i32, n: i32, b: &BranchingFunction, cap: usize) -> Result<FiniteTree, TreeError> {
    let shape = TreeShape::finite(b.clone(), m, n)?;
    let radix: Vec<usize> = (m..=n).rev().map(|k| shape.digit_bound(k) as usize).collect();
    let count = radix.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r as u128)).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(TreeError::TooLarge { count, cap });
    }
    let count = count as usize;
    // mixed radix with the top index most significant, so that numeric order
    // is lexicographic from the top
    let mut weight = vec![1usize; radix.len()];
    for i in (0..radix.len().saturating_sub(1)).rev() {
        weight[i] = weight[i + 1] * radix[i + 1];
    }
    let pos = |k: i32| (n - k) as usize;
    let digit = |code: usize, k: i32| (code / weight[pos(k)]) % radix[pos(k)];

    let mut parent: Vec<usize> = (0..count).collect();
    for code in 0..count {
        let Some(j0) = (m..=n).find(|&k| digit(code, k) != 0) else { continue };
        if digit(code, j0) == 1 && j0 < n {
            let l = j0 + 1;
            let base = code - digit(code, l) * weight[pos(l)];
            let (a, b) = (find(&mut parent, code), find(&mut parent, base));
            parent[a.max(b)] = a.min(b);
        }
    }

    // class id in order of each class's smallest member
    let mut class_of = vec![usize::MAX; count];
    let mut vertices = Vec::new();
    for code in 0..count {
        let r = find(&mut parent, code);
        if class_of[r] == usize::MAX {
            class_of[r] = vertices.len();
            let label = Label::new((m..=n).map(|k| (k, digit(code, k) as u32))).expect("digits below 256");
            vertices.push(TreeVertex(label));
        }
        class_of[code] = class_of[r];
    }

    let mut edges = HashSet::new();
    for code in 0..count {
        if digit(code, m) == 0 {
            let (a, b) = (class_of[code], class_of[code + weight[pos(m)]]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_unstable();
    Ok(FiniteTree { m, n, vertices, edges })
}

/// Breadth-first distances from `source` over an adjacency list.
pub fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<u64> {
    let mut dist = vec![u64::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if dist[y] == u64::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b_const(v: u32) -> BranchingFunction {
        BranchingFunction::constant(v, true)
    }

    fn lab(pairs: &[(i32, u32)]) -> Label {
        Label::new(pairs.iter().copied()).unwrap()
    }

    fn mixed_window() -> BranchingFunction {
        BranchingFunction::new(-1, vec![6, 3, 4], false)
    }

    #[test]
    fn canonicalize_examples() {
        let mut b = b_const(2);
        b.0.values = vec![3];
        let t = TreeShape::graph(b);
        assert_eq!(t.canonicalize(&Label::root()).unwrap(), TreeVertex::root());
        assert_eq!(t.canonicalize(&lab(&[(0, 1), (1, 2)])).unwrap().label(), &lab(&[(0, 1)]));
        assert_eq!(t.canonicalize(&lab(&[(1, 1)])).unwrap().label(), &lab(&[(1, 1)]));
        assert!(matches!(t.canonicalize(&lab(&[(0, 2)])), Err(TreeError::InvalidLabel { .. })));
        assert!(matches!(t.canonicalize(&lab(&[(-1, 1)])), Err(TreeError::WindowMismatch { .. })));
    }

    #[test]
    fn representatives_examples() {
        let t = TreeShape::graph(BranchingFunction::new(1, vec![3, 4], true));
        assert_eq!(t.representatives(&TreeVertex::root()).len(), 1);
        let v = t.canonicalize(&lab(&[(0, 1)])).unwrap();
        let reps = t.representatives(&v);
        assert_eq!(reps, (0..3).map(|j| lab(&[(0, 1), (1, j)])).collect::<Vec<_>>());
        let v = t.canonicalize(&lab(&[(1, 1)])).unwrap();
        assert_eq!(t.representatives(&v).len(), 4);
    }

    #[test]
    fn neighbor_examples() {
        let t = TreeShape::graph(BranchingFunction::new(1, vec![3], true));
        assert_eq!(t.tree_neighbors(&TreeVertex::root()), vec![t.canonicalize(&lab(&[(0, 1)])).unwrap()]);
        let hub = t.canonicalize(&lab(&[(0, 1)])).unwrap();
        let expected: Vec<_> =
            [lab(&[]), lab(&[(1, 1)]), lab(&[(1, 2)])].iter().map(|s| t.canonicalize(s).unwrap()).collect();
        assert_eq!(t.tree_neighbors(&hub), expected);
        let half = TreeShape::graph(b_const(2));
        assert_eq!(half.tree_neighbors(&half.canonicalize(&lab(&[(1, 1)])).unwrap()).len(), 2);
    }

    #[test]
    fn distance_examples() {
        let t = TreeShape::graph(b_const(2));
        let root = TreeVertex::root();
        let one = t.canonicalize(&lab(&[(0, 1)])).unwrap();
        assert_eq!(t.tree_distance(&root, &root).unwrap().units, 0);
        assert_eq!(t.tree_distance(&root, &one).unwrap().units, 1);
        for n in 0..10 {
            let v = t.canonicalize(&lab(&[(n, 1)])).unwrap();
            assert_eq!(t.distance_to_root(&v), 1 << n);
        }
        let six = t.canonicalize(&lab(&[(1, 1), (3, 1)])).unwrap();
        assert_eq!(t.distance_to_root(&six), 6);
        assert_eq!(t.wormhole_level(&six), Some(1));
        let five = t.canonicalize(&lab(&[(0, 1), (2, 1), (3, 1)])).unwrap();
        assert_eq!(t.distance_to_root(&five), 5);
        assert_eq!(t.wormhole_level(&five), Some(0));
        assert_eq!(t.wormhole_level(&root), None);
    }

    #[test]
    fn enumeration_examples() {
        let t00 = enumerate_finite_tree(0, 0, &b_const(2), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((t00.vertices.len(), t00.edges.len()), (2, 1));
        let t01 = enumerate_finite_tree(0, 1, &BranchingFunction::new(1, vec![3], true), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(t01.vertices.len(), 4);
        let fig = enumerate_finite_tree(-2, 1, &mixed_window(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(diameter(&fig), 8);
        assert!(matches!(
            enumerate_finite_tree(0, 20, &b_const(4), DEFAULT_ENUMERATION_CAP),
            Err(TreeError::TooLarge { .. })
        ));
    }

    #[test]
    fn distances_on_mixed_window_are_dyadic() {
        let b = mixed_window();
        let shape = TreeShape::finite(b.clone(), -2, 1).unwrap();
        let tree = enumerate_finite_tree(-2, 1, &b, DEFAULT_ENUMERATION_CAP).unwrap();
        let far = shape.canonicalize(&lab(&[(1, 1)])).unwrap();
        let d = shape.tree_distance(&TreeVertex::root(), &far).unwrap();
        assert_eq!(d.to_f64(), 2.0);
        check_against_bfs(&shape, &tree, usize::MAX);
    }

    #[test]
    fn csv_export() {
        let b = BranchingFunction::new(1, vec![3], true);
        let tree = enumerate_finite_tree(0, 1, &b, DEFAULT_ENUMERATION_CAP).unwrap();
        let shape = TreeShape::finite(b, 0, 1).unwrap();
        let mut edges = Vec::new();
        tree.write_edges_csv(&mut edges).unwrap();
        assert_eq!(String::from_utf8(edges).unwrap().lines().count(), 4);
        let mut verts = Vec::new();
        tree.write_vertices_csv(&shape, &mut verts).unwrap();
        let text = String::from_utf8(verts).unwrap();
        assert!(text.starts_with("id,label,root_distance,wormhole_level\n0,,0,\n"));
    }

    #[test]
    fn sparse_map_json() {
        let s = lab(&[(1, 2), (4, 1)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"1":2,"4":1}"#);
        let back: Label = serde_json::from_str(r#"{"4":1,"1":2,"2":0}"#).unwrap();
        assert_eq!(back, s);
    }

    fn diameter(tree: &FiniteTree) -> u64 {
        let adj = tree.adjacency();
        let d0 = bfs_distances(&adj, 0);
        let far = (0..adj.len()).max_by_key(|&i| d0[i]).unwrap();
        *bfs_distances(&adj, far).iter().max().unwrap()
    }

    /// Compare every implicit operation against the enumeration.
    fn check_against_bfs(shape: &TreeShape, tree: &FiniteTree, max_sources: usize) {
        let adj = tree.adjacency();
        let index: std::collections::HashMap<_, _> = tree.vertices.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        for (i, v) in tree.vertices.iter().enumerate() {
            assert_eq!(&shape.canonicalize(v.label()).unwrap(), v);
            for rep in shape.representatives(v) {
                assert_eq!(&shape.canonicalize(&rep).unwrap(), v);
            }
            let mut expected: Vec<_> = adj[i].iter().map(|&j| tree.vertices[j].clone()).collect();
            expected.sort_unstable();
            assert_eq!(shape.tree_neighbors(v), expected);
            assert_eq!(shape.tree_degree(v), expected.len());
        }
        for (i, u) in tree.vertices.iter().enumerate().take(max_sources) {
            let dist = bfs_distances(&adj, i);
            for (j, v) in tree.vertices.iter().enumerate() {
                assert_eq!(shape.edge_distance(u, v), dist[j]);
            }
        }
        let root = index[&TreeVertex::root()];
        let from_root = bfs_distances(&adj, root);
        for (i, v) in tree.vertices.iter().enumerate() {
            assert_eq!(shape.distance_to_root(v), from_root[i]);
        }
    }

    #[test]
    fn wormhole_separation_and_density() {
        for (values, n) in [(vec![2], 5), (vec![3, 2, 4], 4), (vec![2, 5, 3], 3)] {
            let b = BranchingFunction::new(1, values.clone(), true);
            let shape = TreeShape::finite(b.clone(), 0, n).unwrap();
            let tree = enumerate_finite_tree(0, n, &b, DEFAULT_ENUMERATION_CAP).unwrap();
            let adj = tree.adjacency();
            let levels: Vec<_> = tree.vertices.iter().map(|v| shape.wormhole_level(v)).collect();
            let all: Vec<_> = (0..adj.len()).map(|i| bfs_distances(&adj, i)).collect();
            if values.iter().all(|&v| v == 2) {
                for (v, l) in tree.vertices.iter().zip(&levels) {
                    let d = shape.distance_to_root(v);
                    assert_eq!(*l, (d != 0).then(|| d.trailing_zeros() as i32));
                }
            }
            for i in 0..adj.len() {
                for j in 0..adj.len() {
                    if let (Some(a), Some(c)) = (levels[i], levels[j]) {
                        if i != j {
                            assert!(all[i][j] >= 1 << a.min(c));
                        }
                    }
                }
                for level in 0..=n {
                    let nearest = (0..adj.len()).filter(|&j| levels[j] == Some(level)).map(|j| all[i][j]).min();
                    assert!(nearest.unwrap() <= 1 << level);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn implicit_tree_matches_enumeration(values in proptest::collection::vec(2u32..=5, 1..5), m in -2i32..=0) {
            let n = values.len() as i32;
            let b = BranchingFunction::new(1, values, false);
            let tree = enumerate_finite_tree(m, n, &b, 20_000).unwrap();
            let shape = TreeShape::finite(b, m, n).unwrap();
            prop_assert_eq!(tree.edges.len() + 1, tree.vertices.len());
            prop_assert_eq!(diameter(&tree), 1u64 << (n - m));
            check_against_bfs(&shape, &tree, 40);
        }

        #[test]
        fn neighbors_symmetric_and_bipartite(digits in proptest::collection::vec(0u32..6, 1..12)) {
            let b = BranchingFunction::new(1, vec![6, 3, 2, 5, 4, 6, 2, 3, 6, 2, 4], true);
            let shape = TreeShape::graph(b);
            let raw = Label::new(digits.iter().enumerate().map(|(k, &d)| {
                let k = k as i32;
                (k, d % shape.digit_bound(k))
            })).unwrap();
            let v = shape.canonicalize(&raw).unwrap();
            prop_assert_eq!(&shape.canonicalize(v.label()).unwrap(), &v);
            let dv = shape.distance_to_root(&v);
            if let Some(n) = shape.wormhole_level(&v) {
                prop_assert_eq!(dv.trailing_zeros() as i32, n);
            }
            for w in shape.tree_neighbors(&v) {
                prop_assert!(shape.tree_neighbors(&w).contains(&v));
                prop_assert_eq!(shape.distance_to_root(&w).abs_diff(dv), 1);
                prop_assert_eq!(shape.edge_distance(&v, &w), 1);
            }
        }
    }
}
