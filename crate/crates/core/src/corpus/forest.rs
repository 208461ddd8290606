use super::Debate;

/// Reply trees of one debate. Nodes are positions in `Debate::turns`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplyForest {
    pub debate_id: String,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl ReplyForest {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn tree_count(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Edges from a node up to its root.
    pub fn depth(&self, mut node: usize) -> usize {
        let mut depth = 0;
        while let Some(p) = self.parent[node] {
            node = p;
            depth += 1;
        }
        depth
    }

    /// Members of each tree in pre-order, one vector per root.
    pub fn trees(&self) -> Vec<Vec<usize>> {
        self.roots
            .iter()
            .map(|&root| {
                let mut out = Vec::new();
                let mut stack = vec![root];
                while let Some(n) = stack.pop() {
                    out.push(n);
                    stack.extend(self.children[n].iter().rev());
                }
                out
            })
            .collect()
    }
}

/// Links every reply to its parent. Expects a debate that passed parsing, so
/// each parent precedes its replies.
pub fn build_reply_forest(debate: &Debate) -> ReplyForest {
    let n = debate.turns.len();
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (i, turn) in debate.turns.iter().enumerate() {
        match turn.reply_to.as_deref() {
            Some(pid) => {
                let p = debate.turns[..i]
                    .iter()
                    .rposition(|t| t.turn_id == pid)
                    .expect("parent precedes reply in a validated debate");
                parent[i] = Some(p);
                children[p].push(i);
            }
            None => roots.push(i),
        }
    }
    ReplyForest {
        debate_id: debate.debate_id.clone(),
        parent,
        children,
        roots,
    }
}
