//! Graph- and subspace-level structure: linkage classes, weak reversibility,
//! stoichiometric/kinetic subspaces, deficiency. All rank computations are
//! exact (rational elimination), so deficiency never depends on tolerances.

use serde::Serialize;

use crate::exact::{format_rat, orthogonal_complement, span_basis, span_contains, Rat};
use crate::kinetics::aggregates;
use crate::net::{Complex, DelayedNetwork};

/// Directed graph on the distinct complexes of a network.
#[derive(Debug, Clone)]
pub struct ComplexGraph {
    pub nodes: Vec<Complex>,
    /// Deduplicated (reactant, product) index pairs.
    pub edges: Vec<(usize, usize)>,
}

/// Builds the complex graph: one node per distinct complex, one edge per
/// distinct (reactant, product) pair.
pub fn complex_graph(net: &DelayedNetwork) -> ComplexGraph {
    let nodes = net.complexes();
    let index = |c: &Complex| nodes.iter().position(|x| x == c).unwrap();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for rx in net.reactions() {
        let e = (index(&rx.reactant), index(&rx.product));
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    ComplexGraph { nodes, edges }
}

/// Connected components of the undirected skeleton (the linkage classes).
pub fn linkage_classes(graph: &ComplexGraph) -> Vec<Vec<usize>> {
    let p = graph.nodes.len();
    let mut comp = vec![usize::MAX; p];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for start in 0..p {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        comp[start] = id;
        while let Some(u) = stack.pop() {
            members.push(u);
            for &(a, b) in &graph.edges {
                let next = if a == u { b } else if b == u { a } else { continue };
                if comp[next] == usize::MAX {
                    comp[next] = id;
                    stack.push(next);
                }
            }
        }
        members.sort_unstable();
        classes.push(members);
    }
    classes
}

/// Tarjan's strongly connected components.
fn strongly_connected_components(graph: &ComplexGraph) -> Vec<usize> {
    let p = graph.nodes.len();
    let mut adj = vec![Vec::new(); p];
    for &(a, b) in &graph.edges {
        adj[a].push(b);
    }
    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        comp: Vec<usize>,
        ncomp: usize,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for i in 0..self.adj[v].len() {
                let w = self.adj[v][i];
                if self.index[w].is_none() {
                    self.visit(w);
                    self.low[v] = self.low[v].min(self.low[w]);
                } else if self.on_stack[w] {
                    self.low[v] = self.low[v].min(self.index[w].unwrap());
                }
            }
            if self.low[v] == self.index[v].unwrap() {
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    self.comp[w] = self.ncomp;
                    if w == v {
                        break;
                    }
                }
                self.ncomp += 1;
            }
        }
    }
    let mut t = Tarjan {
        adj: &adj,
        index: vec![None; p],
        low: vec![0; p],
        on_stack: vec![false; p],
        stack: Vec::new(),
        next: 0,
        comp: vec![0; p],
        ncomp: 0,
    };
    for v in 0..p {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.comp
}

/// True iff every edge lies inside one strongly connected component,
/// equivalently each linkage class is strongly connected.
pub fn is_weakly_reversible(graph: &ComplexGraph) -> bool {
    let scc = strongly_connected_components(graph);
    graph.edges.iter().all(|&(a, b)| scc[a] == scc[b])
}

/// Basis of the stoichiometric subspace (span of reaction vectors).
pub fn stoich_subspace(net: &DelayedNetwork) -> Vec<Vec<Rat>> {
    let n = net.n();
    let vectors: Vec<Vec<Rat>> = net.reactions().iter().map(|rx| rx.vector(n)).collect();
    span_basis(&vectors)
}

/// Basis of the orthogonal complement of the stoichiometric subspace.
pub fn orth_complement(net: &DelayedNetwork) -> Vec<Vec<Rat>> {
    orthogonal_complement(&stoich_subspace(net), net.n())
}

/// Basis of the kinetic subspace: the span of the non-delayed RHS image.
/// Monomials over distinct reactant complexes are linearly independent
/// functions, so the image is spanned by the per-reactant aggregates Z^(y).
pub fn kinetic_subspace(net: &DelayedNetwork) -> Vec<Vec<Rat>> {
    let table = aggregates(net);
    let vectors: Vec<Vec<Rat>> = table.per_reactant.values().cloned().collect();
    span_basis(&vectors)
}

/// Deficiency p - l - s.
pub fn deficiency(net: &DelayedNetwork) -> i64 {
    let graph = complex_graph(net);
    let p = graph.nodes.len() as i64;
    let l = linkage_classes(&graph).len() as i64;
    let s = stoich_subspace(net).len() as i64;
    p - l - s
}

/// Full structural summary of a network.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub complexes: Vec<Complex>,
    pub linkage_class_count: usize,
    pub weakly_reversible: bool,
    pub stoich_basis: Vec<Vec<Rat>>,
    pub orth_basis: Vec<Vec<Rat>>,
    pub kinetic_basis: Vec<Vec<Rat>>,
    pub deficiency: i64,
}

pub fn structure_report(net: &DelayedNetwork) -> StructureReport {
    let graph = complex_graph(net);
    let stoich_basis = stoich_subspace(net);
    let orth_basis = orthogonal_complement(&stoich_basis, net.n());
    let kinetic_basis = kinetic_subspace(net);
    let l = linkage_classes(&graph).len();
    let deficiency = graph.nodes.len() as i64 - l as i64 - stoich_basis.len() as i64;
    StructureReport {
        complexes: graph.nodes.clone(),
        linkage_class_count: l,
        weakly_reversible: is_weakly_reversible(&graph),
        stoich_basis,
        orth_basis,
        kinetic_basis,
        deficiency,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReportJson {
    pub p: usize,
    pub l: usize,
    pub s: usize,
    pub deficiency: i64,
    pub weakly_reversible: bool,
    pub complexes: Vec<String>,
    pub stoich_basis: Vec<Vec<String>>,
    pub orth_basis: Vec<Vec<String>>,
    pub kinetic_basis: Vec<Vec<String>>,
}

impl StructureReport {
    /// Kinetic subspace containment check: every kinetic basis vector lies in
    /// the span of the stoichiometric basis (exact).
    pub fn kinetic_inside_stoich(&self) -> bool {
        self.kinetic_basis.iter().all(|v| span_contains(&self.stoich_basis, v))
    }

    pub fn to_json(&self, species: &[String]) -> StructureReportJson {
        let fmt_basis = |basis: &Vec<Vec<Rat>>| {
            basis.iter().map(|v| v.iter().map(format_rat).collect()).collect()
        };
        StructureReportJson {
            p: self.complexes.len(),
            l: self.linkage_class_count,
            s: self.stoich_basis.len(),
            deficiency: self.deficiency,
            weakly_reversible: self.weakly_reversible,
            complexes: self.complexes.iter().map(|c| c.format_with(species)).collect(),
            stoich_basis: fmt_basis(&self.stoich_basis),
            orth_basis: fmt_basis(&self.orth_basis),
            kinetic_basis: fmt_basis(&self.kinetic_basis),
        }
    }
}
