//! Discrete Bayesian network model.
//!
//! Variables are addressed by dense 0-based ids and states by 0-based
//! indices. Names only matter at I/O boundaries.
//!
//! CPT rows are laid out mixed-radix over the parents in their declared
//! order with the **last parent varying fastest**. For parents `(A, B)` with
//! cardinalities `(2, 3)` the row order is `(a0,b0) (a0,b1) (a0,b2) (a1,b0) ...`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use crate::error::{Error, Result};

/// Tolerance for CPT row sums at construction time.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    id: usize,
    name: String,
    states: Vec<String>,
}

impl Variable {
    pub fn new(id: usize, name: impl Into<String>, states: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Structure(format!("variable {id} has an empty name")));
        }
        if states.len() < 2 {
            return Err(Error::Structure(format!(
                "variable `{name}` needs at least two states, got {}",
                states.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &states {
            if s.is_empty() {
                return Err(Error::Structure(format!("variable `{name}` has an empty state name")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Structure(format!("variable `{name}` repeats state `{s}`")));
            }
        }
        Ok(Variable { id, name, states })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Conditional probability table `P(child | parents)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    child: usize,
    parents: Vec<usize>,
    /// Row-major: `table[row * child_card + state]`.
    table: Vec<f64>,
}

impl Cpt {
    /// Rows are given in canonical order (last parent fastest). Shape is
    /// checked when the network is assembled.
    pub fn new(child: usize, parents: Vec<usize>, rows: Vec<Vec<f64>>) -> Self {
        Cpt {
            child,
            parents,
            table: rows.into_iter().flatten().collect(),
        }
    }

    pub fn child(&self) -> usize {
        self.child
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn values(&self) -> &[f64] {
        &self.table
    }
}

/// An immutable, validated discrete Bayesian network.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    name: String,
    variables: Vec<Variable>,
    /// Indexed by child id.
    cpts: Vec<Cpt>,
    children: Vec<Vec<usize>>,
    edges: BTreeSet<(usize, usize)>,
    order: Vec<usize>,
}

impl BayesianNetwork {
    pub fn new(name: impl Into<String>, variables: Vec<Variable>, cpts: Vec<Cpt>) -> Result<Self> {
        let n = variables.len();
        if n == 0 {
            return Err(Error::Structure("network has no variables".into()));
        }
        let mut names = HashSet::new();
        for (i, v) in variables.iter().enumerate() {
            if v.id != i {
                return Err(Error::Structure(format!(
                    "variable `{}` has id {} but sits at position {i}",
                    v.name, v.id
                )));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::Structure(format!("duplicate variable `{}`", v.name)));
            }
        }

        let mut slots: Vec<Option<Cpt>> = vec![None; n];
        for cpt in cpts {
            let child = cpt.child;
            if child >= n {
                return Err(Error::Structure(format!("CPT for unknown variable id {child}")));
            }
            if slots[child].is_some() {
                return Err(Error::Structure(format!(
                    "variable `{}` has more than one CPT",
                    variables[child].name
                )));
            }
            slots[child] = Some(cpt);
        }
        let mut cpts = Vec::with_capacity(n);
        for (i, slot) in slots.into_iter().enumerate() {
            let cpt = slot.ok_or_else(|| Error::Structure(format!("variable `{}` has no CPT", variables[i].name)))?;
            check_cpt(&variables, &cpt)?;
            cpts.push(cpt);
        }

        let mut children = vec![Vec::new(); n];
        let mut edges = BTreeSet::new();
        for cpt in &cpts {
            for &p in &cpt.parents {
                edges.insert((p, cpt.child));
                children[p].push(cpt.child);
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let order = topological_sort(n, &edges).map_err(|(from, to)| Error::Cycle {
            from: variables[from].name.clone(),
            to: variables[to].name.clone(),
        })?;

        Ok(BayesianNetwork {
            name: name.into(),
            variables,
            cpts,
            children,
            edges,
            order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: usize) -> &Variable {
        &self.variables[id]
    }

    pub fn cardinality(&self, id: usize) -> usize {
        self.variables[id].states.len()
    }

    pub fn cpt(&self, id: usize) -> &Cpt {
        &self.cpts[id]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn parents(&self, id: usize) -> &[usize] {
        &self.cpts[id].parents
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn variable_id(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Looks up a variable by name, failing with an argument error.
    pub fn require_variable(&self, name: &str) -> Result<usize> {
        self.variable_id(name)
            .ok_or_else(|| Error::Argument(format!("unknown variable `{name}` in network `{}`", self.name)))
    }

    pub fn require_state(&self, var: usize, state: &str) -> Result<usize> {
        self.variables[var].state_index(state).ok_or_else(|| {
            Error::Argument(format!(
                "variable `{}` has no state `{state}`",
                self.variables[var].name
            ))
        })
    }

    fn check_id(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "variable id {v} out of range (network has {} variables)",
                self.len()
            )))
        }
    }

    /// Parents before children; ties broken by ascending id.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn children(&self, v: usize) -> Result<&[usize]> {
        self.check_id(v)?;
        Ok(&self.children[v])
    }

    /// True iff a directed path of length ≥ 0 leads from `from` to `to`.
    pub fn has_directed_path(&self, from: usize, to: usize) -> Result<bool> {
        self.check_id(from)?;
        self.check_id(to)?;
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            if v == to {
                return Ok(true);
            }
            for &c in &self.children[v] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        Ok(false)
    }

    /// Marks every variable in `roots` and all of their ancestors.
    pub fn ancestral_closure(&self, roots: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut keep = vec![false; self.len()];
        let mut stack: Vec<usize> = roots.into_iter().collect();
        for &r in &stack {
            keep[r] = true;
        }
        while let Some(v) = stack.pop() {
            for &p in &self.cpts[v].parents {
                if !keep[p] {
                    keep[p] = true;
                    stack.push(p);
                }
            }
        }
        keep
    }

    /// Parents, children and the children's other parents of `v`.
    pub fn markov_blanket(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check_id(v)?;
        let mut blanket: BTreeSet<usize> = self.parents(v).iter().copied().collect();
        for &c in &self.children[v] {
            blanket.insert(c);
            blanket.extend(self.parents(c).iter().copied());
        }
        blanket.remove(&v);
        Ok(blanket)
    }

    /// Variables without children, in id order.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.children[v].is_empty()).collect()
    }

    /// Row of `P(child | parents)` selected by the parent states in `full`.
    pub fn cpt_row(&self, child: usize, state_of: impl Fn(usize) -> usize) -> &[f64] {
        let cpt = &self.cpts[child];
        let mut row = 0;
        for &p in &cpt.parents {
            row = row * self.cardinality(p) + state_of(p);
        }
        let card = self.cardinality(child);
        &cpt.table[row * card..(row + 1) * card]
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<()> {
        if a.len() != self.len() {
            return Err(Error::Argument(format!(
                "assignment covers {} variables, network has {}",
                a.len(),
                self.len()
            )));
        }
        for (v, s) in a.iter() {
            if s >= self.cardinality(v) {
                return Err(Error::Argument(format!(
                    "state index {s} invalid for variable `{}`",
                    self.variables[v].name
                )));
            }
        }
        Ok(())
    }
}

fn check_cpt(variables: &[Variable], cpt: &Cpt) -> Result<()> {
    let n = variables.len();
    let child = &variables[cpt.child];
    let mut seen = HashSet::new();
    for &p in &cpt.parents {
        if p >= n {
            return Err(Error::Structure(format!(
                "CPT of `{}` references unknown parent id {p}",
                child.name
            )));
        }
        if p == cpt.child {
            return Err(Error::Cycle {
                from: child.name.clone(),
                to: child.name.clone(),
            });
        }
        if !seen.insert(p) {
            return Err(Error::Structure(format!(
                "CPT of `{}` lists parent `{}` twice",
                child.name, variables[p].name
            )));
        }
    }
    let rows: usize = cpt.parents.iter().map(|&p| variables[p].states.len()).product();
    let card = child.states.len();
    if cpt.table.len() != rows * card {
        return Err(Error::Structure(format!(
            "CPT of `{}` has {} entries, expected {rows} rows of {card}",
            child.name,
            cpt.table.len()
        )));
    }
    for (r, row) in cpt.table.chunks(card).enumerate() {
        if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Structure(format!(
                "CPT of `{}` row {r} has entry {x} outside [0, 1]",
                child.name
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Structure(format!(
                "CPT of `{}` row {r} sums to {sum}",
                child.name
            )));
        }
    }
    Ok(())
}

/// Kahn's algorithm with a min-heap so ties resolve by ascending id.
/// On failure returns one edge lying on a cycle.
pub fn topological_sort(n: usize, edges: &BTreeSet<(usize, usize)>) -> std::result::Result<Vec<usize>, (usize, usize)> {
    let mut indegree = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(a, b) in edges {
        indegree[b] += 1;
        out[a].push(b);
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &c in &out[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every leftover node has a leftover parent, so walking parents must
    // eventually revisit a node.
    let leftover: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let mut parent_of = vec![usize::MAX; n];
    for &(a, b) in edges {
        if leftover[a] && leftover[b] && parent_of[b] == usize::MAX {
            parent_of[b] = a;
        }
    }
    let start = (0..n).find(|&v| leftover[v]).expect("leftover node");
    let mut visited = vec![false; n];
    let mut v = start;
    while !visited[v] {
        visited[v] = true;
        v = parent_of[v];
    }
    Err((parent_of[v], v))
}

/// Possibly partial map from variable id to state index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    values: Vec<Option<usize>>,
}

impl Assignment {
    pub fn empty(n: usize) -> Self {
        Assignment { values: vec![None; n] }
    }

    pub fn from_values(values: Vec<Option<usize>>) -> Self {
        Assignment { values }
    }

    pub fn full(states: Vec<usize>) -> Self {
        Assignment {
            values: states.into_iter().map(Some).collect(),
        }
    }

    pub fn with(mut self, var: usize, state: usize) -> Self {
        self.values[var] = Some(state);
        self
    }

    pub fn set(&mut self, var: usize, state: Option<usize>) {
        self.values[var] = state;
    }

    pub fn get(&self, var: usize) -> Option<usize> {
        self.values[var]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }

    pub fn is_full(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    /// Assigned `(variable, state)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.values.iter().enumerate().filter_map(|(v, s)| s.map(|s| (v, s)))
    }
}
