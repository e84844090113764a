//! Ordered ternary trees with chronicles.
//!
//! A generation-J tree records how a ternary expansion was built: start from
//! one root with three ordered children, then J-1 times turn a terminal node
//! into a parental node with three ordered children. The chronicle is the
//! sequence of chosen terminals; the node turned parental at step j is the
//! generation-j root `r^(j)` (the original root is `r^(1)`). Counting the
//! 2g+1 choices at each step gives `(2J-1)!!` trees of generation J.
//!
//! Child slot 2 is the conjugated slot: a leaf enters the multilinear term
//! conjugated iff the number of slot-2 edges on its path to the root is odd.
//! That parity also flips the sign with which a generation's modulation
//! enters the cumulative sums, so it is precomputed per node here.
//!
//! Serialization grammar (used by the CLI and golden tests):
//!
//! ```text
//! tree := node
//! node := '.'                            terminal
//!       | '(' node ' ' node ' ' node ')@' g   parental, expanded at step g
//! ```
//!
//! Tags must be exactly {1, ..., J} with the root tagged 1 and every parental
//! node tagged later than its parental ancestors.

use std::collections::BTreeMap;
use std::fmt;

/// Hard cap on tree generation; enumeration above this is rejected.
pub const MAX_GENERATION: usize = 6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TreeError {
    #[error("generation {0} out of supported range 1..={MAX_GENERATION}")]
    GenerationOutOfRange(usize),
    #[error("node {0} does not exist")]
    InvalidNode(usize),
    #[error("node {0} is not terminal")]
    NotTerminal(usize),
    #[error("generation index {j} outside 1..={max}")]
    GenerationIndex { j: usize, max: usize },
    #[error("no frequency supplied for terminal node {0}")]
    MissingLeaf(usize),
    #[error("root frequency {given} inconsistent with propagated value {computed}")]
    RootMismatch { given: f64, computed: f64 },
    #[error("parse error at byte {0}: {1}")]
    Parse(usize, String),
}

/// One node of an ordered tree. Ids are creation-ordered vector indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Parent id; `None` only for the root.
    pub parent: Option<usize>,
    /// Child slot under the parent, 1..=3; 0 for the root.
    pub slot: u8,
    /// Children ids in slot order; `None` for terminal nodes.
    pub children: Option<[usize; 3]>,
    /// Growth step at which this node was created (root: step 1).
    pub gen_created: usize,
    /// True when the path to the root crosses an odd number of slot-2 edges.
    pub conj_parity: bool,
}

/// An ordered ternary tree of generation `J >= 1` with its chronicle.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedTree {
    generation: usize,
    nodes: Vec<TreeNode>,
    /// Terminals turned parental at steps 2..=J; `r^(j) = chronicle[j-2]`.
    chronicle: Vec<usize>,
}

impl OrderedTree {
    /// The unique generation-1 tree: a root with three terminal children.
    pub fn generation_one() -> Self {
        let root = TreeNode {
            parent: None,
            slot: 0,
            children: Some([1, 2, 3]),
            gen_created: 1,
            conj_parity: false,
        };
        let mut nodes = vec![root];
        for slot in 1..=3u8 {
            nodes.push(TreeNode {
                parent: Some(0),
                slot,
                children: None,
                gen_created: 1,
                conj_parity: slot == 2,
            });
        }
        Self { generation: 1, nodes, chronicle: Vec::new() }
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn chronicle(&self) -> &[usize] {
        &self.chronicle
    }

    /// Id of the generation-j root `r^(j)`, `1 <= j <= J`.
    pub fn root_of_generation(&self, j: usize) -> Result<usize, TreeError> {
        match j {
            1 => Ok(0),
            _ if (2..=self.generation).contains(&j) => Ok(self.chronicle[j - 2]),
            _ => Err(TreeError::GenerationIndex { j, max: self.generation }),
        }
    }

    /// Growth step at which node `id` became parental, if it did.
    pub fn expansion_step(&self, id: usize) -> Option<usize> {
        if id == 0 {
            return Some(1);
        }
        self.chronicle.iter().position(|&p| p == id).map(|i| i + 2)
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.nodes[id].children.is_none()
    }

    /// Terminal node ids in depth-first, slot-ascending order. This is the
    /// canonical order in which per-leaf inputs are supplied to the iterated
    /// maps and term evaluators.
    pub fn terminals_dfs(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.generation + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id].children {
                None => out.push(id),
                Some(ch) => {
                    // Reverse push so slot 1 is visited first.
                    stack.push(ch[2]);
                    stack.push(ch[1]);
                    stack.push(ch[0]);
                }
            }
        }
        out
    }

    /// Node ids in breadth-first order, children visited in slot order.
    /// Enumeration sorts growth choices by position in this sequence.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            out.push(id);
            if let Some(ch) = self.nodes[id].children {
                queue.extend(ch);
            }
        }
        out
    }

    /// Grows the tree by one generation at the given terminal node.
    pub fn grow(&self, terminal: usize) -> Result<OrderedTree, TreeError> {
        if terminal >= self.nodes.len() {
            return Err(TreeError::InvalidNode(terminal));
        }
        if !self.is_terminal(terminal) {
            return Err(TreeError::NotTerminal(terminal));
        }
        if self.generation + 1 > MAX_GENERATION {
            return Err(TreeError::GenerationOutOfRange(self.generation + 1));
        }
        let mut nodes = self.nodes.clone();
        let base = nodes.len();
        let step = self.generation + 1;
        let parent_parity = nodes[terminal].conj_parity;
        nodes[terminal].children = Some([base, base + 1, base + 2]);
        for slot in 1..=3u8 {
            nodes.push(TreeNode {
                parent: Some(terminal),
                slot,
                children: None,
                gen_created: step,
                conj_parity: parent_parity ^ (slot == 2),
            });
        }
        let mut chronicle = self.chronicle.clone();
        chronicle.push(terminal);
        Ok(OrderedTree { generation: step, nodes, chronicle })
    }

    /// The four-node projection added at step j: `(r^(j), its three children)`.
    pub fn projection(&self, j: usize) -> Result<[usize; 4], TreeError> {
        let r = self.root_of_generation(j)?;
        let ch = self.nodes[r].children.expect("generation roots are parental");
        Ok([r, ch[0], ch[1], ch[2]])
    }

    /// Essential terminal set of generation j: the children of `r^(j)` that
    /// are terminal in the final tree. These sets partition the terminals.
    pub fn essential_terminals(&self, j: usize) -> Result<Vec<usize>, TreeError> {
        let [_, a, b, c] = self.projection(j)?;
        Ok([a, b, c].into_iter().filter(|&id| self.is_terminal(id)).collect())
    }

    /// Shortest root path from `r^(1)` to `r^(j)`: each hop goes to the
    /// generation root whose expansion created the current node, so the
    /// generations along the path are strictly increasing.
    pub fn shortest_root_path(&self, j: usize) -> Result<Vec<usize>, TreeError> {
        let mut id = self.root_of_generation(j)?;
        let mut rev = vec![id];
        while id != 0 {
            let g = self.nodes[id].gen_created;
            id = self.root_of_generation(g).expect("gen_created is in range");
            rev.push(id);
        }
        rev.reverse();
        Ok(rev)
    }

    /// Propagates leaf frequencies up the node constraint
    /// `ξ_a = ξ_{a1} - ξ_{a2} + ξ_{a3}` and derives the modulation data.
    /// `root_frequency`, when given, is checked against the propagated root
    /// value to 1e-9 relative.
    pub fn assign_indices(
        &self,
        leaf_frequencies: &BTreeMap<usize, f64>,
        root_frequency: Option<f64>,
    ) -> Result<IndexAssignment, TreeError> {
        let mut xi = vec![f64::NAN; self.nodes.len()];
        // Children always carry larger ids than the node they were attached
        // to, so one descending-id pass sees children before parents.
        for id in (0..self.nodes.len()).rev() {
            match self.nodes[id].children {
                None => {
                    xi[id] = *leaf_frequencies.get(&id).ok_or(TreeError::MissingLeaf(id))?;
                }
                Some([a, b, c]) => {
                    xi[id] = xi[a] - xi[b] + xi[c];
                }
            }
        }
        if let Some(given) = root_frequency {
            let computed = xi[0];
            if (given - computed).abs() > 1e-9 * given.abs().max(1.0) {
                return Err(TreeError::RootMismatch { given, computed });
            }
        }
        let mut raw_phi = Vec::with_capacity(self.generation);
        let mut sigma = Vec::with_capacity(self.generation);
        let mut mu = Vec::with_capacity(self.generation);
        let mut mu_tilde = Vec::with_capacity(self.generation);
        let mut acc = 0.0;
        for j in 1..=self.generation {
            let r = self.root_of_generation(j).expect("j in range");
            let [a, b, c] = self.nodes[r].children.expect("root is parental");
            let phi = 2.0 * (xi[b] - xi[a]) * (xi[b] - xi[c]);
            let s = if self.nodes[r].conj_parity { -1.0 } else { 1.0 };
            raw_phi.push(phi);
            sigma.push(s);
            mu.push(s * phi);
            acc += s * phi;
            mu_tilde.push(acc);
        }
        Ok(IndexAssignment { xi, raw_phi, sigma, mu, mu_tilde })
    }

    fn fmt_node(&self, id: usize, out: &mut String) {
        match self.nodes[id].children {
            None => out.push('.'),
            Some([a, b, c]) => {
                out.push('(');
                self.fmt_node(a, out);
                out.push(' ');
                self.fmt_node(b, out);
                out.push(' ');
                self.fmt_node(c, out);
                out.push_str(")@");
                out.push_str(&self.expansion_step(id).expect("parental").to_string());
            }
        }
    }

    /// Parses the grammar in the module docs back into a tree, rebuilding
    /// the chronicle from the `@g` tags.
    pub fn parse(text: &str) -> Result<OrderedTree, TreeError> {
        let bytes = text.trim().as_bytes();
        let mut pos = 0usize;
        let parsed = parse_node(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(TreeError::Parse(pos, "trailing input".into()));
        }
        // Collect (tag, slot path) for every parental node.
        let mut tagged: Vec<(usize, Vec<u8>)> = Vec::new();
        collect_tags(&parsed, &mut Vec::new(), &mut tagged);
        tagged.sort();
        let gens: Vec<usize> = tagged.iter().map(|(g, _)| *g).collect();
        if gens.is_empty() || gens[0] != 1 || gens != (1..=gens.len()).collect::<Vec<_>>() {
            return Err(TreeError::Parse(0, format!("expansion tags must be 1..=J, got {gens:?}")));
        }
        if !tagged[0].1.is_empty() {
            return Err(TreeError::Parse(0, "tag 1 must be on the root".into()));
        }
        let mut tree = OrderedTree::generation_one();
        for (g, path) in tagged.iter().skip(1) {
            let id = tree.node_at_path(path).ok_or_else(|| {
                TreeError::Parse(0, format!("tag {g} is not reachable at its step"))
            })?;
            tree = tree.grow(id).map_err(|_| {
                TreeError::Parse(0, format!("tag {g} does not sit on a terminal of step {}", g - 1))
            })?;
        }
        Ok(tree)
    }

    fn node_at_path(&self, path: &[u8]) -> Option<usize> {
        let mut id = 0usize;
        for &slot in path {
            id = self.nodes[id].children?[(slot - 1) as usize];
        }
        Some(id)
    }
}

impl fmt::Display for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.fmt_node(0, &mut s);
        f.write_str(&s)
    }
}

enum ParsedNode {
    Terminal,
    Parental { children: [Box<ParsedNode>; 3], gen: usize },
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<ParsedNode, TreeError> {
    match bytes.get(*pos) {
        Some(b'.') => {
            *pos += 1;
            Ok(ParsedNode::Terminal)
        }
        Some(b'(') => {
            *pos += 1;
            let a = parse_node(bytes, pos)?;
            expect(bytes, pos, b' ')?;
            let b = parse_node(bytes, pos)?;
            expect(bytes, pos, b' ')?;
            let c = parse_node(bytes, pos)?;
            expect(bytes, pos, b')')?;
            expect(bytes, pos, b'@')?;
            let start = *pos;
            while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
                *pos += 1;
            }
            if *pos == start {
                return Err(TreeError::Parse(*pos, "expected generation tag".into()));
            }
            let gen: usize = std::str::from_utf8(&bytes[start..*pos])
                .expect("digits are utf8")
                .parse()
                .map_err(|e| TreeError::Parse(start, format!("bad tag: {e}")))?;
            Ok(ParsedNode::Parental { children: [Box::new(a), Box::new(b), Box::new(c)], gen })
        }
        other => Err(TreeError::Parse(*pos, format!("expected '.' or '(', got {other:?}"))),
    }
}

fn expect(bytes: &[u8], pos: &mut usize, want: u8) -> Result<(), TreeError> {
    if bytes.get(*pos) == Some(&want) {
        *pos += 1;
        Ok(())
    } else {
        Err(TreeError::Parse(*pos, format!("expected {:?}", want as char)))
    }
}

fn collect_tags(node: &ParsedNode, path: &mut Vec<u8>, out: &mut Vec<(usize, Vec<u8>)>) {
    if let ParsedNode::Parental { children, gen } = node {
        out.push((*gen, path.clone()));
        for (i, ch) in children.iter().enumerate() {
            path.push(i as u8 + 1);
            collect_tags(ch, path, out);
            path.pop();
        }
    }
}

/// All generation-J trees in canonical order: at each growth step the
/// candidate terminals are taken in breadth-first position order, so the
/// resulting list is lexicographic in the sequence of choices.
pub fn enumerate_trees(j: usize) -> Result<Vec<OrderedTree>, TreeError> {
    if j == 0 || j > MAX_GENERATION {
        return Err(TreeError::GenerationOutOfRange(j));
    }
    let mut current = vec![OrderedTree::generation_one()];
    for _ in 1..j {
        let mut next = Vec::with_capacity(current.len() * (2 * current.len() + 1));
        for tree in &current {
            for id in tree.bfs_order() {
                if tree.is_terminal(id) {
                    next.push(tree.grow(id).expect("growing at a terminal"));
                }
            }
        }
        current = next;
    }
    Ok(current)
}

/// Frequencies and modulations attached to one tree.
///
/// `mu(j)` is the signed generation-j modulation: the conjugation parity of
/// `r^(j)` flips the sign with which its oscillation enters the total phase,
/// so `mu = sigma * raw_phi` and the cumulative `mu_tilde` sums the signed
/// values. `raw_phi` is the plain factored value `2(ξ2-ξ1)(ξ2-ξ3)` at the
/// generation's node tuple.
#[derive(Debug, Clone)]
pub struct IndexAssignment {
    xi: Vec<f64>,
    raw_phi: Vec<f64>,
    sigma: Vec<f64>,
    mu: Vec<f64>,
    mu_tilde: Vec<f64>,
}

impl IndexAssignment {
    /// Frequency at node `id`.
    pub fn xi(&self, id: usize) -> f64 {
        self.xi[id]
    }

    pub fn xis(&self) -> &[f64] {
        &self.xi
    }

    /// Unsigned modulation `Φ` of generation j (1-indexed).
    pub fn raw_phi(&self, j: usize) -> f64 {
        self.raw_phi[j - 1]
    }

    /// Conjugation sign `σ_j = ±1` of generation j.
    pub fn sigma(&self, j: usize) -> f64 {
        self.sigma[j - 1]
    }

    /// Signed modulation `μ_j = σ_j Φ_j`.
    pub fn mu(&self, j: usize) -> f64 {
        self.mu[j - 1]
    }

    /// Cumulative signed modulation `μ̃_j = Σ_{k<=j} μ_k`.
    pub fn mu_tilde(&self, j: usize) -> f64 {
        self.mu_tilde[j - 1]
    }

    pub fn generations(&self) -> usize {
        self.mu.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(tree: &OrderedTree, values: &[f64]) -> BTreeMap<usize, f64> {
        tree.terminals_dfs().into_iter().zip(values.iter().copied()).collect()
    }

    #[test]
    fn counts_follow_the_double_factorial() {
        let want = [1usize, 3, 15, 105, 945];
        for (i, &w) in want.iter().enumerate() {
            assert_eq!(enumerate_trees(i + 1).unwrap().len(), w, "generation {}", i + 1);
        }
        // Independent recurrence: c_J = (2J-1) c_{J-1}.
        let mut c = 1usize;
        for j in 2..=5 {
            c *= 2 * j - 1;
            assert_eq!(enumerate_trees(j).unwrap().len(), c);
        }
    }

    #[test]
    fn enumeration_rejects_out_of_range_generations() {
        assert_eq!(enumerate_trees(0).unwrap_err(), TreeError::GenerationOutOfRange(0));
        assert_eq!(
            enumerate_trees(MAX_GENERATION + 1).unwrap_err(),
            TreeError::GenerationOutOfRange(MAX_GENERATION + 1)
        );
    }

    #[test]
    fn node_counts_match_the_generation() {
        for j in 1..=4 {
            for tree in enumerate_trees(j).unwrap() {
                let parental = tree.nodes().iter().filter(|n| n.children.is_some()).count();
                let terminal = tree.nodes().iter().filter(|n| n.children.is_none()).count();
                assert_eq!(tree.nodes().len(), 3 * j + 1);
                assert_eq!(parental, j);
                assert_eq!(terminal, 2 * j + 1);
                assert_eq!(tree.chronicle().len(), j - 1);
            }
        }
    }

    #[test]
    fn growing_the_single_tree_gives_the_three_second_generation_trees() {
        let t1 = OrderedTree::generation_one();
        let grown: Vec<OrderedTree> = (1..=3).map(|id| t1.grow(id).unwrap()).collect();
        let listed = enumerate_trees(2).unwrap();
        assert_eq!(grown, listed);
        for g in &grown {
            assert_eq!(g.generation(), 2);
            assert_eq!(g.chronicle().len(), 1);
            assert_eq!(g.terminals_dfs().len(), 5);
        }
    }

    #[test]
    fn grow_rejects_bad_targets() {
        let t1 = OrderedTree::generation_one();
        assert_eq!(t1.grow(0).unwrap_err(), TreeError::NotTerminal(0));
        assert_eq!(t1.grow(9).unwrap_err(), TreeError::InvalidNode(9));
    }

    #[test]
    fn essential_terminal_sets_partition_the_terminals() {
        for tree in enumerate_trees(3).unwrap() {
            let mut seen: Vec<usize> = Vec::new();
            for j in 1..=3 {
                let part = tree.essential_terminals(j).unwrap();
                for id in part {
                    assert!(!seen.contains(&id), "terminal {id} appears twice");
                    seen.push(id);
                }
            }
            let mut terminals = tree.terminals_dfs();
            terminals.sort_unstable();
            seen.sort_unstable();
            assert_eq!(seen, terminals);
        }
    }

    #[test]
    fn projection_requires_a_valid_generation() {
        let t = OrderedTree::generation_one();
        assert!(matches!(t.projection(2), Err(TreeError::GenerationIndex { .. })));
        assert_eq!(t.projection(1).unwrap()[0], 0);
    }

    #[test]
    fn shortest_path_on_a_linear_tree_visits_every_root() {
        // Grow at a child of the newest root each time.
        let t1 = OrderedTree::generation_one();
        let t2 = t1.grow(1).unwrap();
        let r2 = t2.root_of_generation(2).unwrap();
        let t3 = t2.grow(t2.node(r2).children.unwrap()[0]).unwrap();
        let path = t3.shortest_root_path(3).unwrap();
        assert_eq!(
            path,
            vec![
                t3.root_of_generation(1).unwrap(),
                t3.root_of_generation(2).unwrap(),
                t3.root_of_generation(3).unwrap()
            ]
        );
    }

    #[test]
    fn shortest_path_skips_generations_grown_elsewhere() {
        // Both growths at children of the original root: r^(3) was created at
        // step 1, so the path is r^(1) -> r^(3) directly.
        let t1 = OrderedTree::generation_one();
        let t2 = t1.grow(1).unwrap();
        let t3 = t2.grow(2).unwrap();
        assert_eq!(t3.shortest_root_path(3).unwrap(), vec![0, 2]);
    }

    #[test]
    fn shortest_path_always_ends_at_the_requested_root() {
        for tree in enumerate_trees(3).unwrap() {
            for j in 1..=3 {
                let path = tree.shortest_root_path(j).unwrap();
                assert_eq!(*path.last().unwrap(), tree.root_of_generation(j).unwrap());
                assert_eq!(path[0], 0);
                // Every hop lands on a strictly later generation root.
                for w in path.windows(2) {
                    assert!(tree.expansion_step(w[1]).unwrap() > tree.expansion_step(w[0]).unwrap());
                }
            }
        }
    }

    #[test]
    fn first_generation_assignment_matches_hand_arithmetic() {
        let t = OrderedTree::generation_one();
        let a = t.assign_indices(&leaves(&t, &[1.0, 0.0, 2.0]), None).unwrap();
        assert_eq!(a.xi(0), 3.0);
        assert_eq!(a.mu(1), 4.0);
        assert_eq!(a.raw_phi(1), 4.0);
        // All three formulas at the same tuple.
        let (xi, x1, x2, x3) = (3.0f64, 1.0, 0.0, 2.0);
        assert_eq!(xi * xi - x1 * x1 + x2 * x2 - x3 * x3, 4.0);
        assert_eq!(2.0 * (xi - x1) * (xi - x3), 4.0);
        assert_eq!(2.0 * (x2 - x1) * (x2 - x3), 4.0);
    }

    #[test]
    fn equal_leaves_sit_on_the_resonant_diagonal() {
        for tree in enumerate_trees(3).unwrap() {
            let vals = vec![0.7; 7];
            let a = tree.assign_indices(&leaves(&tree, &vals), None).unwrap();
            for j in 1..=3 {
                assert_eq!(a.mu(j), 0.0);
                assert_eq!(a.mu_tilde(j), 0.0);
            }
        }
    }

    #[test]
    fn the_three_modulation_formulas_agree_on_random_assignments() {
        // Low-state xorshift is enough here; the acceptance suite runs the
        // large seeded version of this check.
        let mut state = 0x243f6a8885a308d3u64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 40.0 - 20.0
        };
        for tree in enumerate_trees(3).unwrap() {
            let vals: Vec<f64> = (0..7).map(|_| rnd()).collect();
            let a = tree.assign_indices(&leaves(&tree, &vals), None).unwrap();
            for j in 1..=3 {
                let r = tree.root_of_generation(j).unwrap();
                let [c1, c2, c3] = tree.node(r).children.unwrap();
                let (xi, x1, x2, x3) = (a.xi(r), a.xi(c1), a.xi(c2), a.xi(c3));
                let f1 = xi * xi - x1 * x1 + x2 * x2 - x3 * x3;
                let f2 = 2.0 * (xi - x1) * (xi - x3);
                let f3 = 2.0 * (x2 - x1) * (x2 - x3);
                let tol = 1e-10 * f3.abs().max(1e-2);
                assert!((f1 - f3).abs() <= tol, "direct vs factored: {f1} vs {f3}");
                assert!((f2 - f3).abs() <= tol, "factored forms: {f2} vs {f3}");
                assert!((a.raw_phi(j) - f3).abs() <= tol);
            }
            // Cumulative sums telescope.
            let mut acc = 0.0;
            for j in 1..=3 {
                acc += a.mu(j);
                assert!((a.mu_tilde(j) - acc).abs() < 1e-12 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn assignment_checks_the_root_frequency_when_given() {
        let t = OrderedTree::generation_one();
        let lf = leaves(&t, &[1.0, 0.0, 2.0]);
        assert!(t.assign_indices(&lf, Some(3.0)).is_ok());
        assert!(matches!(
            t.assign_indices(&lf, Some(3.1)),
            Err(TreeError::RootMismatch { .. })
        ));
    }

    #[test]
    fn assignment_requires_every_leaf() {
        let t = OrderedTree::generation_one();
        let mut lf = leaves(&t, &[1.0, 0.0, 2.0]);
        lf.remove(&2);
        assert_eq!(t.assign_indices(&lf, None).unwrap_err(), TreeError::MissingLeaf(2));
    }

    #[test]
    fn conjugation_parity_flips_across_slot_two() {
        let t1 = OrderedTree::generation_one();
        assert!(!t1.node(1).conj_parity);
        assert!(t1.node(2).conj_parity);
        assert!(!t1.node(3).conj_parity);
        // Growing under the conjugated slot flips every new slot except 2.
        let t2 = t1.grow(2).unwrap();
        let ch = t2.node(2).children.unwrap();
        assert!(t2.node(ch[0]).conj_parity);
        assert!(!t2.node(ch[1]).conj_parity);
        assert!(t2.node(ch[2]).conj_parity);
    }

    #[test]
    fn serialization_roundtrips_every_third_generation_tree() {
        let trees = enumerate_trees(3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for tree in &trees {
            let text = tree.to_string();
            assert!(seen.insert(text.clone()), "duplicate serialization {text}");
            let back = OrderedTree::parse(&text).unwrap();
            assert_eq!(&back, tree);
        }
    }

    #[test]
    fn serialization_of_the_first_trees_is_stable() {
        assert_eq!(OrderedTree::generation_one().to_string(), "(. . .)@1");
        let listed: Vec<String> =
            enumerate_trees(2).unwrap().iter().map(|t| t.to_string()).collect();
        assert_eq!(listed, vec!["((. . .)@2 . .)@1", "(. (. . .)@2 .)@1", "(. . (. . .)@2)@1"]);
    }

    #[test]
    fn parser_rejects_malformed_trees() {
        assert!(OrderedTree::parse("(. .)@1").is_err());
        assert!(OrderedTree::parse("(. . .)@2").is_err());
        assert!(OrderedTree::parse("((. . .)@3 . .)@1").is_err());
        assert!(OrderedTree::parse("(. . .)@1 junk").is_err());
        // Child expanded before its parent existed.
        assert!(OrderedTree::parse("(((. . .)@2 . .)@3 . .)@1").is_err());
    }

    #[test]
    fn bfs_order_drives_the_enumeration_order() {
        // After growing at node 1, the BFS-first terminal is the depth-1
        // node 2, so the first J=3 tree grows there next.
        let t3 = enumerate_trees(3).unwrap();
        let want = OrderedTree::generation_one().grow(1).unwrap().grow(2).unwrap();
        assert_eq!(t3[0], want);
        let bfs = OrderedTree::generation_one().grow(1).unwrap().bfs_order();
        assert_eq!(bfs, vec![0, 1, 2, 3, 4, 5, 6]);
    }
}
