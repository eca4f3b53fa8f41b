//! Sets of alternative histories and their class operators.
//!
//! A [`HistorySet`] is a tree: each node carries the (Heisenberg-picture)
//! projector set used at its time, with one child per alternative. Children
//! may differ between alternatives, so later questions can depend on earlier
//! answers. Branch-independent sets share a single child node per level.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{
    check_dim, max_abs_diff, CMatrix, HermitianOperator, ProjectorSet, Propagator,
    StateVector, PROJECTOR_TOL,
};

/// Branch states with norm at or below this are pruned; their histories get
/// probability exactly zero.
pub const PRUNE_TOL: f64 = 1e-12;

/// Alternative indices `(α_1, …, α_n)`, earliest time first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct History(pub Vec<usize>);

impl History {
    pub fn alternatives(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// One node of a history tree.
#[derive(Debug, Clone)]
pub struct BranchNode {
    set: Arc<ProjectorSet>,
    children: Vec<Arc<BranchNode>>,
}

impl BranchNode {
    /// Node at the final time.
    pub fn leaf(set: ProjectorSet) -> Self {
        Self {
            set: Arc::new(set),
            children: Vec::new(),
        }
    }

    /// Node with one child per alternative of `set`.
    pub fn new(set: ProjectorSet, children: Vec<BranchNode>) -> Result<Self> {
        Self::with_shared(Arc::new(set), children.into_iter().map(Arc::new).collect())
    }

    fn with_shared(set: Arc<ProjectorSet>, children: Vec<Arc<BranchNode>>) -> Result<Self> {
        if !children.is_empty() && children.len() != set.len() {
            return Err(Error::InvalidArgument(format!(
                "{} children for {} alternatives",
                children.len(),
                set.len()
            )));
        }
        Ok(Self { set, children })
    }

    pub fn set(&self) -> &ProjectorSet {
        &self.set
    }

    pub fn children(&self) -> &[Arc<BranchNode>] {
        &self.children
    }

    fn depth(&self) -> Result<usize> {
        if self.children.is_empty() {
            return Ok(1);
        }
        let first = self.children[0].depth()?;
        for child in &self.children[1..] {
            if child.depth()? != first {
                return Err(Error::InvalidArgument(
                    "history tree has leaf paths of unequal length".into(),
                ));
            }
        }
        Ok(first + 1)
    }

    fn check_dims(&self, dim: usize) -> Result<()> {
        check_dim(dim, self.set.dim())?;
        self.children.iter().try_for_each(|c| c.check_dims(dim))
    }

    fn same_structure(&self, other: &BranchNode) -> bool {
        if Arc::ptr_eq(&self.set, &other.set) && self.children.len() == other.children.len() {
            return self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| Arc::ptr_eq(a, b) || a.same_structure(b));
        }
        self.set.approx_eq(&other.set, PROJECTOR_TOL)
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_structure(b))
    }
}

/// Exhaustive set of alternative histories at strictly increasing times.
#[derive(Debug, Clone)]
pub struct HistorySet {
    times: Vec<f64>,
    root: Arc<BranchNode>,
    dim: usize,
    leaf_names: Option<HashMap<History, String>>,
}

/// Time-ordered product `P^n_{α_n} ⋯ P^1_{α_1}` for one history.
#[derive(Debug, Clone)]
pub struct ClassOperator {
    pub history: History,
    pub label: String,
    pub matrix: CMatrix,
}

/// Branch states `C_α|ψ>` (columns: one per ensemble member for mixed states).
#[derive(Debug, Clone)]
pub struct Branches {
    pub histories: Vec<History>,
    pub labels: Vec<String>,
    pub states: Vec<CMatrix>,
    /// Number of histories dropped because their branch state vanished.
    pub pruned: usize,
}

impl HistorySet {
    pub fn new(times: Vec<f64>, root: BranchNode) -> Result<Self> {
        Self::from_root(times, Arc::new(root))
    }

    fn from_root(times: Vec<f64>, root: Arc<BranchNode>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("history set needs at least one time".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "times must be finite and strictly increasing: {times:?}"
            )));
        }
        let depth = root.depth()?;
        if depth != times.len() {
            return Err(Error::InvalidArgument(format!(
                "tree depth {depth} does not match {} times",
                times.len()
            )));
        }
        let dim = root.set.dim();
        root.check_dims(dim)?;
        Ok(Self {
            times,
            root,
            dim,
            leaf_names: None,
        })
    }

    /// The same projector set (already in the Heisenberg picture) at each time
    /// regardless of earlier alternatives.
    pub fn branch_independent(times: Vec<f64>, sets: Vec<ProjectorSet>) -> Result<Self> {
        if sets.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "{} projector sets for {} times",
                sets.len(),
                times.len()
            )));
        }
        let mut node: Option<Arc<BranchNode>> = None;
        for set in sets.into_iter().rev() {
            let set = Arc::new(set);
            let children = match &node {
                Some(child) => vec![Arc::clone(child); set.len()],
                None => Vec::new(),
            };
            node = Some(Arc::new(BranchNode::with_shared(set, children)?));
        }
        Self::from_root(times, node.expect("at least one set"))
    }

    /// Replaces the default leaf names (joined projector labels).
    pub fn with_leaf_names(mut self, names: HashMap<History, String>) -> Self {
        self.leaf_names = Some(names);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &BranchNode {
        &self.root
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Whether all nodes at each depth share one projector set.
    pub fn is_branch_independent(&self) -> bool {
        let mut node: &BranchNode = &self.root;
        while let Some(first) = node.children.first() {
            if !node.children.iter().all(|c| Arc::ptr_eq(c, first) || c.same_structure(first)) {
                return false;
            }
            node = first;
        }
        true
    }

    /// Projector sets along the path `prefix` (one per time reached).
    pub fn sets_along(&self, path: &[usize]) -> Result<Vec<&ProjectorSet>> {
        let mut node: &BranchNode = &self.root;
        let mut sets = vec![node.set()];
        for (k, &a) in path.iter().enumerate() {
            if a >= node.set.len() {
                return Err(Error::UnknownHistory(format!("alternative {a} at time {k}")));
            }
            if k + 1 == path.len() {
                break;
            }
            node = node.children.get(a).ok_or_else(|| {
                Error::UnknownHistory(format!("path {path:?} is longer than the tree"))
            })?;
            sets.push(node.set());
        }
        Ok(sets)
    }

    /// All leaf paths in lexicographic order.
    pub fn histories(&self) -> Vec<History> {
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.times.len());
        collect_paths(&self.root, &mut prefix, &mut out);
        out
    }

    pub fn n_histories(&self) -> usize {
        fn count(node: &BranchNode) -> usize {
            if node.children.is_empty() {
                node.set.len()
            } else {
                node.children.iter().map(|c| count(c)).sum()
            }
        }
        count(&self.root)
    }

    fn check_history(&self, history: &History) -> Result<()> {
        if history.len() != self.times.len() {
            return Err(Error::UnknownHistory(format!(
                "{history} has {} alternatives, set has {} times",
                history.len(),
                self.times.len()
            )));
        }
        self.sets_along(&history.0).map(|_| ())
    }

    /// Display name of a history: an explicit leaf name, or the projector
    /// labels along the path joined with commas.
    pub fn name(&self, history: &History) -> String {
        if let Some(name) = self.leaf_names.as_ref().and_then(|m| m.get(history)) {
            return name.clone();
        }
        match self.sets_along(&history.0) {
            Ok(sets) => sets
                .iter()
                .zip(&history.0)
                .map(|(s, &a)| s.label(a).to_string())
                .collect::<Vec<_>>()
                .join(","),
            Err(_) => history.to_string(),
        }
    }

    pub fn class_operator(&self, history: &History) -> Result<ClassOperator> {
        self.check_history(history)?;
        let sets = self.sets_along(&history.0)?;
        let mut matrix = sets[0].member(history.0[0]).matrix().clone();
        for (set, &a) in sets.iter().zip(&history.0).skip(1) {
            matrix = set.member(a).matrix() * matrix;
        }
        Ok(ClassOperator {
            history: history.clone(),
            label: self.name(history),
            matrix,
        })
    }

    /// Every class operator, built from shared prefix products.
    pub fn class_operators(&self) -> Vec<ClassOperator> {
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(self.times.len());
        self.class_walk(&self.root, None, &mut prefix, &mut out);
        out
    }

    fn class_walk(
        &self,
        node: &BranchNode,
        acc: Option<&CMatrix>,
        prefix: &mut Vec<usize>,
        out: &mut Vec<ClassOperator>,
    ) {
        for (a, p) in node.set.members().iter().enumerate() {
            let product = match acc {
                Some(m) => p.matrix() * m,
                None => p.matrix().clone(),
            };
            prefix.push(a);
            if node.children.is_empty() {
                let history = History(prefix.clone());
                out.push(ClassOperator {
                    label: self.name(&history),
                    history,
                    matrix: product,
                });
            } else {
                self.class_walk(&node.children[a], Some(&product), prefix, out);
            }
            prefix.pop();
        }
    }

    /// `C_α|ψ>` for one history.
    pub fn branch_state(&self, history: &History, psi: &StateVector) -> Result<CMatrix> {
        check_dim(self.dim, psi.dim())?;
        self.check_history(history)?;
        let sets = self.sets_along(&history.0)?;
        let mut v = CMatrix::from_column_slice(self.dim, 1, psi.amplitudes().as_slice());
        for (set, &a) in sets.iter().zip(&history.0) {
            v = set.member(a).matrix() * v;
        }
        Ok(v)
    }

    /// Branch states of all histories for the ensemble columns of `vectors`,
    /// dropping subtrees whose branch states fall to `prune_tol` in norm.
    /// Projections never increase the norm, so a pruned prefix prunes every
    /// history below it.
    pub fn branch_states(&self, vectors: &CMatrix, prune_tol: f64) -> Result<Branches> {
        check_dim(self.dim, vectors.nrows())?;
        let mut branches = Branches {
            histories: Vec::new(),
            labels: Vec::new(),
            states: Vec::new(),
            pruned: 0,
        };
        let mut prefix = Vec::with_capacity(self.times.len());
        self.branch_walk(&self.root, vectors, prune_tol, &mut prefix, &mut branches);
        Ok(branches)
    }

    fn branch_walk(
        &self,
        node: &BranchNode,
        state: &CMatrix,
        prune_tol: f64,
        prefix: &mut Vec<usize>,
        out: &mut Branches,
    ) {
        for (a, p) in node.set.members().iter().enumerate() {
            let projected = p.matrix() * state;
            prefix.push(a);
            if projected.norm() <= prune_tol {
                out.pruned += count_below(node, a);
            } else if node.children.is_empty() {
                let history = History(prefix.clone());
                out.labels.push(self.name(&history));
                out.histories.push(history);
                out.states.push(projected);
            } else {
                self.branch_walk(&node.children[a], &projected, prune_tol, prefix, out);
            }
            prefix.pop();
        }
    }
}

fn count_below(node: &BranchNode, alternative: usize) -> usize {
    fn count(node: &BranchNode) -> usize {
        if node.children.is_empty() {
            node.set.len()
        } else {
            node.children.iter().map(|c| count(c)).sum()
        }
    }
    if node.children.is_empty() {
        1
    } else {
        count(&node.children[alternative])
    }
}

fn collect_paths(node: &BranchNode, prefix: &mut Vec<usize>, out: &mut Vec<History>) {
    for a in 0..node.set.len() {
        prefix.push(a);
        if node.children.is_empty() {
            out.push(History(prefix.clone()));
        } else {
            collect_paths(&node.children[a], prefix, out);
        }
        prefix.pop();
    }
}

/// Partition of a set's histories into named coarse classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrainingMap {
    class_names: Vec<String>,
    assignment: BTreeMap<History, usize>,
}

impl CoarseGrainingMap {
    /// `classes[c]` lists the fine histories of class `c`.
    pub fn new(class_names: Vec<String>, classes: Vec<Vec<History>>) -> Result<Self> {
        if class_names.len() != classes.len() {
            return Err(Error::InvalidPartition(format!(
                "{} names for {} classes",
                class_names.len(),
                classes.len()
            )));
        }
        let unique: BTreeSet<&String> = class_names.iter().collect();
        if unique.len() != class_names.len() {
            return Err(Error::InvalidPartition("class names must be unique".into()));
        }
        let mut assignment = BTreeMap::new();
        for (c, members) in classes.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidPartition(format!("class {} is empty", class_names[c])));
            }
            for h in members {
                if assignment.insert(h.clone(), c).is_some() {
                    return Err(Error::InvalidPartition(format!("{h} appears in two classes")));
                }
            }
        }
        Ok(Self {
            class_names,
            assignment,
        })
    }

    /// Classes assigned by `class_of(history)` over every history of `set`;
    /// classes are named by their index.
    pub fn from_fn(set: &HistorySet, class_of: impl Fn(&History) -> usize) -> Result<Self> {
        let mut classes: BTreeMap<usize, Vec<History>> = BTreeMap::new();
        for h in set.histories() {
            classes.entry(class_of(&h)).or_default().push(h);
        }
        let names = classes.keys().map(|c| c.to_string()).collect();
        Self::new(names, classes.into_values().collect())
    }

    /// Every history in its own class, named as in `set`.
    pub fn identity(set: &HistorySet) -> Self {
        let histories = set.histories();
        let names = histories.iter().map(|h| set.name(h)).collect();
        let classes = histories.into_iter().map(|h| vec![h]).collect();
        Self::new(names, classes).expect("distinct histories")
    }

    /// A single class holding everything.
    pub fn total(set: &HistorySet, name: &str) -> Self {
        Self::new(vec![name.to_string()], vec![set.histories()]).expect("one class")
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_of(&self, history: &History) -> Option<usize> {
        self.assignment.get(history).copied()
    }

    pub fn members(&self, class: usize) -> Vec<&History> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(h, _)| h)
            .collect()
    }

    /// Checks the map partitions exactly the histories of `set`.
    pub fn validate(&self, set: &HistorySet) -> Result<()> {
        let histories = set.histories();
        if histories.len() != self.assignment.len() {
            return Err(Error::InvalidPartition(format!(
                "map covers {} histories, set has {}",
                self.assignment.len(),
                histories.len()
            )));
        }
        for h in &histories {
            if !self.assignment.contains_key(h) {
                return Err(Error::InvalidPartition(format!("{h} is not assigned to a class")));
            }
        }
        Ok(())
    }
}

/// `C̄_ᾱ = Σ_{α∈ᾱ} C_α` for every class, in class order. Always available,
/// whether or not the classes are realizable as projector chains.
pub fn coarse_class_operators(set: &HistorySet, map: &CoarseGrainingMap) -> Result<Vec<ClassOperator>> {
    map.validate(set)?;
    let dim = set.dim();
    let mut sums: Vec<CMatrix> = vec![CMatrix::zeros(dim, dim); map.n_classes()];
    for op in set.class_operators() {
        let c = map.class_of(&op.history).expect("validated");
        sums[c] += op.matrix;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(c, matrix)| ClassOperator {
            history: History(vec![c]),
            label: map.class_names[c].clone(),
            matrix,
        })
        .collect())
}

/// Coarse-grained history set whose leaves are the classes of `map`, named
/// after them. Fails with [`Error::UnsupportedGraining`] when some class is not
/// a single chain of summed projectors; [`coarse_class_operators`] still
/// applies then.
pub fn coarse_grain(set: &HistorySet, map: &CoarseGrainingMap) -> Result<HistorySet> {
    map.validate(set)?;
    let group = vec![(Vec::new(), Arc::clone(&set.root))];
    let mut names = HashMap::new();
    let mut path = Vec::new();
    let root = realize(&group, set.n_times(), set.dim(), map, &mut path, &mut names)?;
    Ok(HistorySet::from_root(set.times.clone(), Arc::new(root))?.with_leaf_names(names))
}

type Group = Vec<(Vec<usize>, Arc<BranchNode>)>;

/// Classes of all leaves below `node`, keyed by the suffix path.
fn suffix_classes(
    prefix: &[usize],
    node: &BranchNode,
    map: &CoarseGrainingMap,
) -> BTreeMap<Vec<usize>, usize> {
    let mut out = BTreeMap::new();
    let mut suffix = Vec::new();
    fn walk(
        prefix: &[usize],
        node: &BranchNode,
        map: &CoarseGrainingMap,
        suffix: &mut Vec<usize>,
        out: &mut BTreeMap<Vec<usize>, usize>,
    ) {
        for a in 0..node.set.len() {
            suffix.push(a);
            if node.children.is_empty() {
                let mut full = prefix.to_vec();
                full.extend_from_slice(suffix);
                let c = map.class_of(&History(full)).expect("validated map");
                out.insert(suffix.clone(), c);
            } else {
                walk(prefix, &node.children[a], map, suffix, out);
            }
            suffix.pop();
        }
    }
    walk(prefix, node, map, &mut suffix, &mut out);
    out
}

fn identity_chain(levels: usize, dim: usize) -> BranchNode {
    let mut node = BranchNode::leaf(ProjectorSet::trivial(dim));
    for _ in 1..levels {
        node = BranchNode::new(ProjectorSet::trivial(dim), vec![node]).expect("single child");
    }
    node
}

/// Builds the coarse node for a group of fine nodes whose prefixes have been
/// merged into one coarse alternative chain.
fn realize(
    group: &Group,
    levels: usize,
    dim: usize,
    map: &CoarseGrainingMap,
    coarse_path: &mut Vec<usize>,
    names: &mut HashMap<History, String>,
) -> Result<BranchNode> {
    let (rep_prefix, rep) = &group[0];
    let rep_classes = suffix_classes(rep_prefix, rep, map);
    let mut all: BTreeSet<usize> = rep_classes.values().copied().collect();
    let mut consistent = true;
    for (prefix, node) in &group[1..] {
        let classes = suffix_classes(prefix, node, map);
        all.extend(classes.values().copied());
        if classes != rep_classes || !node.same_structure(rep) {
            consistent = false;
        }
    }

    if all.len() == 1 {
        let class = *all.iter().next().expect("one class");
        let chain = identity_chain(levels, dim);
        let mut leaf = coarse_path.clone();
        leaf.extend(std::iter::repeat_n(0, levels));
        names.insert(History(leaf), map.class_names[class].clone());
        return Ok(chain);
    }
    if !consistent {
        return Err(Error::UnsupportedGraining(format!(
            "merged branches {:?} continue into different classes",
            group.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>()
        )));
    }

    // alternatives sharing any class must be merged
    let k = rep.set.len();
    let per_alt: Vec<BTreeSet<usize>> = (0..k)
        .map(|a| {
            rep_classes
                .iter()
                .filter(|(s, _)| s[0] == a)
                .map(|(_, &c)| c)
                .collect()
        })
        .collect();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    for a in 0..k {
        for b in (a + 1)..k {
            if !per_alt[a].is_disjoint(&per_alt[b]) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..k {
        let r = find(&mut parent, a);
        components.entry(r).or_default().push(a);
    }
    let groups: Vec<Vec<usize>> = components.into_values().collect();
    let labels = groups
        .iter()
        .map(|g| g.iter().map(|&a| rep.set.label(a)).collect::<Vec<_>>().join("+"))
        .collect();
    let merged = rep.set.merged(&groups, labels)?;

    if levels == 1 {
        for (i, g) in groups.iter().enumerate() {
            let class = rep_classes[&vec![g[0]]];
            let mut leaf = coarse_path.clone();
            leaf.push(i);
            names.insert(History(leaf), map.class_names[class].clone());
        }
        return Ok(BranchNode::leaf(merged));
    }

    let mut children = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let mut next: Group = Vec::new();
        for (prefix, node) in group {
            for &a in g {
                let mut p = prefix.clone();
                p.push(a);
                next.push((p, Arc::clone(&node.children[a])));
            }
        }
        coarse_path.push(i);
        children.push(realize(&next, levels - 1, dim, map, coarse_path, names)?);
        coarse_path.pop();
    }
    BranchNode::new(merged, children)
}

/// Completely fine-grained set: rank-one projectors onto the columns of one
/// orthonormal basis per time.
pub fn fine_grained_set(bases: &[CMatrix], times: Vec<f64>) -> Result<HistorySet> {
    let sets = bases
        .iter()
        .map(ProjectorSet::from_basis)
        .collect::<Result<Vec<_>>>()?;
    HistorySet::branch_independent(times, sets)
}

/// Narrative set: the same Schrödinger-picture alternatives asked at every
/// time, `P^k_α = e^{iHt_k} P̂_α e^{-iHt_k}`.
pub fn narrative_set(
    schroedinger: &ProjectorSet,
    hamiltonian: &HermitianOperator,
    times: Vec<f64>,
) -> Result<HistorySet> {
    check_dim(hamiltonian.dim(), schroedinger.dim())?;
    let propagator = Propagator::new(hamiltonian, 1.0)?;
    let sets = times
        .iter()
        .map(|&t| schroedinger.evolved(&propagator, t))
        .collect::<Result<Vec<_>>>()?;
    HistorySet::branch_independent(times, sets)
}

/// Max deviation of `Σ_α C_α` from the identity.
pub fn exhaustiveness_defect(ops: &[ClassOperator]) -> f64 {
    let Some(first) = ops.first() else {
        return f64::INFINITY;
    };
    let dim = first.matrix.nrows();
    let mut sum = CMatrix::zeros(dim, dim);
    for op in ops {
        sum += &op.matrix;
    }
    max_abs_diff(&sum, &CMatrix::identity(dim, dim))
}

/// A one-time history set.
pub fn single_time_set(set: ProjectorSet, time: f64) -> Result<HistorySet> {
    HistorySet::branch_independent(vec![time], vec![set])
}

/// Rank-one projector onto `v` and its complement; convenience for yes/no
/// questions about a state.
pub fn state_question(v: &StateVector) -> ProjectorSet {
    ProjectorSet::yes_no(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{computational_basis, fourier_basis, max_abs, pauli};
    use crate::random::{haar_state, haar_unitary, master_rng};
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn op_norm(m: &CMatrix) -> f64 {
        m.singular_values().max()
    }

    #[test]
    fn single_time_class_operator_is_projector() {
        let set = fine_grained_set(&[fourier_basis(3)], vec![0.0]).unwrap();
        for (h, op) in set.histories().iter().zip(set.class_operators()) {
            let p = ProjectorSet::from_basis(&fourier_basis(3)).unwrap();
            assert!(max_abs_diff(&op.matrix, p.member(h.0[0]).matrix()) < 1e-15);
        }
    }

    #[test]
    fn repeated_projections_leave_only_constant_histories() {
        let q = ProjectorSet::from_basis(&fourier_basis(3)).unwrap();
        let set = HistorySet::branch_independent(vec![0.0, 1.0, 2.0], vec![q.clone(), q.clone(), q.clone()])
            .unwrap();
        for op in set.class_operators() {
            let a = &op.history.0;
            if a.iter().all(|&x| x == a[0]) {
                assert!(max_abs_diff(&op.matrix, q.member(a[0]).matrix()) < 1e-14);
            } else {
                assert!(max_abs(&op.matrix) < 1e-14);
            }
        }
    }

    #[test]
    fn two_time_z_then_x_norms() {
        let set = fine_grained_set(&[computational_basis(2), fourier_basis(2)], vec![0.0, 1.0]).unwrap();
        for op in set.class_operators() {
            assert!((op_norm(&op.matrix) - FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn class_operator_matches_walk_and_rejects_unknown() {
        let mut rng = master_rng(3);
        let bases: Vec<_> = (0..3).map(|_| haar_unitary(3, &mut rng)).collect();
        let set = fine_grained_set(&bases, vec![0.0, 0.5, 1.0]).unwrap();
        for op in set.class_operators() {
            let direct = set.class_operator(&op.history).unwrap();
            assert!(max_abs_diff(&direct.matrix, &op.matrix) < 1e-14);
        }
        assert!(exhaustiveness_defect(&set.class_operators()) < 1e-12);
        assert!(matches!(
            set.class_operator(&History(vec![0, 3, 0])),
            Err(Error::UnknownHistory(_))
        ));
        assert!(matches!(set.class_operator(&History(vec![0, 1])), Err(Error::UnknownHistory(_))));
    }

    #[test]
    fn branch_states_examples() {
        let mut rng = master_rng(11);
        let psi = haar_state(4, &mut rng);
        let set = fine_grained_set(&[computational_basis(4)], vec![0.0]).unwrap();
        for h in set.histories() {
            let b = set.branch_state(&h, &psi).unwrap();
            let i = h.0[0];
            for j in 0..4 {
                let expected = if i == j { psi.amplitudes()[i] } else { Complex64::new(0.0, 0.0) };
                assert!((b[(j, 0)] - expected).norm() < 1e-15);
            }
        }

        // first projector orthogonal to psi
        let psi0 = StateVector::basis(2, 0);
        let set = fine_grained_set(&[computational_basis(2), fourier_basis(2)], vec![0.0, 1.0]).unwrap();
        assert!(set.branch_state(&History(vec![1, 0]), &psi0).unwrap().norm() == 0.0);

        // branch states sum to psi
        let v = CMatrix::from_column_slice(2, 1, psi0.amplitudes().as_slice());
        let all = set.branch_states(&v, 0.0).unwrap();
        let mut sum = CMatrix::zeros(2, 1);
        for s in &all.states {
            sum += s;
        }
        assert!(max_abs_diff(&sum, &v) < 1e-14);
    }

    #[test]
    fn state_question_branches() {
        let mut rng = master_rng(5);
        let psi = haar_state(3, &mut rng);
        let final_basis = haar_unitary(3, &mut rng);
        let q = ProjectorSet::yes_no(&psi);
        let set = HistorySet::branch_independent(
            vec![0.0, 1.0, 2.0],
            vec![q.clone(), q, ProjectorSet::from_basis(&final_basis).unwrap()],
        )
        .unwrap();
        let v = CMatrix::from_column_slice(3, 1, psi.amplitudes().as_slice());
        let branches = set.branch_states(&v, PRUNE_TOL).unwrap();
        assert_eq!(branches.histories.len(), 3);
        for (h, s) in branches.histories.iter().zip(&branches.states) {
            assert_eq!(&h.0[..2], &[0, 0]);
            let i = h.0[2];
            let col = final_basis.column(i);
            let expected = col * col.dotc(psi.amplitudes());
            assert!((s.column(0) - expected).norm() < 1e-12);
        }
        assert_eq!(branches.pruned, 12 - 3);
    }

    #[test]
    fn coarse_grain_trivial_and_total() {
        let mut rng = master_rng(17);
        let bases: Vec<_> = (0..2).map(|_| haar_unitary(3, &mut rng)).collect();
        let set = fine_grained_set(&bases, vec![0.0, 1.0]).unwrap();

        let same = coarse_grain(&set, &CoarseGrainingMap::identity(&set)).unwrap();
        let fine_ops = set.class_operators();
        let coarse_ops = same.class_operators();
        assert_eq!(fine_ops.len(), coarse_ops.len());
        for (a, b) in fine_ops.iter().zip(&coarse_ops) {
            assert_eq!(a.label, b.label);
            assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-14);
        }

        let total = coarse_grain(&set, &CoarseGrainingMap::total(&set, "all")).unwrap();
        let ops = total.class_operators();
        assert_eq!(ops.len(), 1);
        assert_eq!(ops[0].label, "all");
        assert!(max_abs_diff(&ops[0].matrix, &CMatrix::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn merging_adjacent_cells() {
        let set = fine_grained_set(&[computational_basis(4)], vec![0.0]).unwrap();
        let map = CoarseGrainingMap::from_fn(&set, |h| h.0[0] / 2).unwrap();
        let coarse = coarse_grain(&set, &map).unwrap();
        let ops = coarse.class_operators();
        assert_eq!(ops.len(), 2);
        let expected = CMatrix::from_diagonal(&crate::hilbert::CVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]));
        assert!(max_abs_diff(&ops[0].matrix, &expected) < 1e-15);
        assert!(max_abs_diff(&(&ops[0].matrix * &ops[0].matrix), &ops[0].matrix) < 1e-15);
        assert_eq!(coarse.root().set().member(0).rank(), 2);
    }

    #[test]
    fn coarse_grain_by_later_time_only() {
        let mut rng = master_rng(23);
        let bases: Vec<_> = (0..3).map(|_| haar_unitary(2, &mut rng)).collect();
        let set = fine_grained_set(&bases, vec![0.0, 1.0, 2.0]).unwrap();
        // classes depend only on the final alternative: earlier times merge to I
        let map = CoarseGrainingMap::from_fn(&set, |h| h.0[2]).unwrap();
        let coarse = coarse_grain(&set, &map).unwrap();
        let sums = coarse_class_operators(&set, &map).unwrap();
        let ops = coarse.class_operators();
        assert_eq!(ops.len(), 2);
        for op in &ops {
            let c: usize = op.label.parse().unwrap();
            assert!(max_abs_diff(&op.matrix, &sums[c].matrix) < 1e-12);
        }
    }

    #[test]
    fn non_chain_partition_is_rejected() {
        let set = fine_grained_set(&[computational_basis(2), fourier_basis(2)], vec![0.0, 1.0]).unwrap();
        // {(0,0),(1,1)} and {(0,1),(1,0)} are not chains
        let map = CoarseGrainingMap::from_fn(&set, |h| (h.0[0] + h.0[1]) % 2).unwrap();
        assert!(matches!(coarse_grain(&set, &map), Err(Error::UnsupportedGraining(_))));
        let sums = coarse_class_operators(&set, &map).unwrap();
        assert!(exhaustiveness_defect(&sums) < 1e-14);
    }

    #[test]
    fn partition_validation() {
        let set = fine_grained_set(&[computational_basis(2)], vec![0.0]).unwrap();
        let partial = CoarseGrainingMap::new(vec!["a".into()], vec![vec![History(vec![0])]]).unwrap();
        assert!(matches!(coarse_grain(&set, &partial), Err(Error::InvalidPartition(_))));
        assert!(CoarseGrainingMap::new(
            vec!["a".into(), "b".into()],
            vec![vec![History(vec![0])], vec![History(vec![0])]]
        )
        .is_err());
    }

    #[test]
    fn fine_grained_rejects_non_orthonormal() {
        let mut basis = computational_basis(2);
        basis[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(
            fine_grained_set(&[basis], vec![0.0]),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn narrative_examples() {
        let z = ProjectorSet::from_basis(&computational_basis(2)).unwrap();
        let set = narrative_set(&z, &HermitianOperator::zeros(2), vec![0.0, 1.0, 2.0]).unwrap();
        for op in set.class_operators() {
            let a = &op.history.0;
            if !a.iter().all(|&x| x == a[0]) {
                assert!(max_abs(&op.matrix) < 1e-14);
            }
        }

        let commuting = narrative_set(&z, &pauli::sigma_z(), vec![0.0, 1.0, 2.0]).unwrap();
        for (a, b) in set.class_operators().iter().zip(commuting.class_operators()) {
            assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-13);
        }

        let omega = 1.3;
        let h = pauli::sigma_x().scaled(omega / 2.0);
        let flip = narrative_set(&z, &h, vec![0.0, PI / omega]).unwrap();
        let second = flip.root().children()[0].set();
        assert!(max_abs_diff(second.member(0).matrix(), z.member(1).matrix()) < 1e-12);
        assert!(max_abs_diff(second.member(1).matrix(), z.member(0).matrix()) < 1e-12);
    }

    #[test]
    fn branch_dependent_tree() {
        let z = ProjectorSet::from_basis(&computational_basis(2)).unwrap();
        let x = ProjectorSet::from_basis(&fourier_basis(2)).unwrap();
        let root = BranchNode::new(
            z.clone(),
            vec![BranchNode::leaf(x), BranchNode::leaf(ProjectorSet::trivial(2))],
        )
        .unwrap();
        let set = HistorySet::new(vec![0.0, 1.0], root).unwrap();
        assert_eq!(set.n_histories(), 3);
        assert!(!set.is_branch_independent());
        assert!(exhaustiveness_defect(&set.class_operators()) < 1e-14);
        let names: Vec<String> = set.histories().iter().map(|h| set.name(h)).collect();
        assert_eq!(names, vec!["0,0", "0,1", "1,I"]);

        let unequal = BranchNode::new(
            z.clone(),
            vec![BranchNode::leaf(z.clone()), BranchNode::new(z.clone(), vec![BranchNode::leaf(z.clone()), BranchNode::leaf(z.clone())]).unwrap()],
        )
        .unwrap();
        assert!(HistorySet::new(vec![0.0, 1.0, 2.0], unequal).is_err());
        assert!(HistorySet::branch_independent(vec![1.0, 0.0], vec![z.clone(), z]).is_err());
    }
}
