use crate::data::Registry;
use crate::error::{Error, Result};

const MIN_PROBABILITY: f64 = 1e-12;

/// Rooted tree with a probability `p(n)` per node (`p(root) = 1`, never
/// increasing from a node to its children).
#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Registry,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    prob: Vec<f64>,
    root: usize,
}

impl Taxonomy {
    /// Builds a taxonomy from `(child, parent)` edges.
    ///
    /// Without explicit probabilities, `p(n)` is the fraction of leaves below
    /// `n`.
    pub fn new(edges: &[(String, String)], probabilities: Option<&[(String, f64)]>) -> Result<Self> {
        let mut nodes = Registry::default();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let intern = |nodes: &mut Registry, parent: &mut Vec<Option<usize>>, name: &str| {
            match nodes.index_of(name) {
                Some(i) => Ok(i),
                None => {
                    parent.push(None);
                    nodes.push(name)
                }
            }
        };
        for (child, par) in edges {
            let c = intern(&mut nodes, &mut parent, child)?;
            let p = intern(&mut nodes, &mut parent, par)?;
            if c == p {
                return Err(Error::Taxonomy(format!("`{child}` is its own parent")));
            }
            if let Some(old) = parent[c] {
                if old != p {
                    return Err(Error::Taxonomy(format!("`{child}` has more than one parent")));
                }
            }
            parent[c] = Some(p);
        }
        if let Some(probs) = probabilities {
            for (n, _) in probs {
                intern(&mut nodes, &mut parent, n)?;
            }
        }
        if nodes.is_empty() {
            return Err(Error::Taxonomy("no nodes".into()));
        }

        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            let names: Vec<&str> = roots.iter().map(|&r| nodes.name(r)).collect();
            return Err(Error::Taxonomy(format!(
                "expected exactly one root, found {}: {}",
                roots.len(),
                names.join(", ")
            )));
        }
        let root = roots[0];

        let n = nodes.len();
        let mut depth = vec![0usize; n];
        for (i, d) in depth.iter_mut().enumerate() {
            let mut cur = i;
            while let Some(p) = parent[cur] {
                *d += 1;
                if *d > n {
                    return Err(Error::Taxonomy(format!("cycle through `{}`", nodes.name(i))));
                }
                cur = p;
            }
        }
        let mut children = vec![Vec::new(); n];
        for (c, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(c);
            }
        }

        let mut tax = Taxonomy { nodes, parent, children, depth, prob: vec![1.0; n], root };
        match probabilities {
            Some(probs) => tax.set_probabilities(probs)?,
            None => tax.prob = tax.leaf_fractions(),
        }
        Ok(tax)
    }

    fn set_probabilities(&mut self, probs: &[(String, f64)]) -> Result<()> {
        let mut prob = vec![f64::NAN; self.len()];
        for (name, p) in probs {
            let i = self.nodes.require(name)?;
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Taxonomy(format!("p(`{name}`) = {p} outside (0, 1]")));
            }
            prob[i] = *p;
        }
        if let Some(i) = prob.iter().position(|p| p.is_nan()) {
            return Err(Error::Taxonomy(format!("no probability for `{}`", self.nodes.name(i))));
        }
        if prob[self.root] != 1.0 {
            return Err(Error::Taxonomy(format!(
                "root probability is {}, expected 1",
                prob[self.root]
            )));
        }
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                if prob[c] > prob[p] {
                    return Err(Error::Taxonomy(format!(
                        "p(`{}`) = {} exceeds parent p(`{}`) = {}",
                        self.nodes.name(c),
                        prob[c],
                        self.nodes.name(p),
                        prob[p]
                    )));
                }
            }
        }
        self.prob = prob;
        Ok(())
    }

    fn leaf_fractions(&self) -> Vec<f64> {
        let mut leaves = vec![0usize; self.len()];
        for i in (0..self.len()).filter(|&i| self.is_leaf(i)) {
            let mut cur = Some(i);
            while let Some(c) = cur {
                leaves[c] += 1;
                cur = self.parent[c];
            }
        }
        let total = leaves[self.root] as f64;
        leaves.iter().map(|&l| l as f64 / total).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &Registry {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn probability(&self, node: usize) -> f64 {
        self.prob[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    /// Lowest common subsumer.
    pub fn lcs(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has parent");
        }
        while a != b {
            a = self.parent[a].expect("non-root has parent");
            b = self.parent[b].expect("non-root has parent");
        }
        a
    }

    /// Number of edges on the path between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let l = self.lcs(a, b);
        self.depth[a] + self.depth[b] - 2 * self.depth[l]
    }

    /// `true` if `node` lies in the subtree rooted at `ancestor`.
    pub fn is_descendant(&self, node: usize, ancestor: usize) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            if self.depth[c] <= self.depth[ancestor] {
                return false;
            }
            cur = self.parent[c];
        }
        false
    }
}

/// Lin's information-content similarity
/// `2 ln p(lcs) / (ln p(n1) + ln p(n2))`.
///
/// Defined as 0 when the lowest common subsumer is the root; probabilities
/// are clamped to at least 1e-12 before taking logs.
pub fn lin_relatedness(tax: &Taxonomy, n1: &str, n2: &str) -> Result<f64> {
    let a = tax.nodes.require(n1)?;
    let b = tax.nodes.require(n2)?;
    let l = tax.lcs(a, b);
    if l == tax.root {
        return Ok(0.0);
    }
    let ln = |i: usize| tax.prob[i].max(MIN_PROBABILITY).ln();
    let num = 2.0 * ln(l);
    let den = ln(a) + ln(b);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}
