use crate::types::NodeId;

/// Round arithmetic over an attack path.
///
/// The path lists border routers from the attacker end to the victim end. In
/// round `k` (1-based) the requester is the k-th router from the victim end
/// and the target is the k-th router from the attacker end. A round exists
/// while the target sits strictly before the requester; when both positions
/// coincide the requester plays both roles.
#[derive(Debug, Clone, Copy)]
pub struct AttackPathView<'a> {
    path: &'a [NodeId],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counterpart {
    /// Send the request on to this attacker-side router.
    Remote(NodeId),
    /// The requester is also the attacker-side router for this round.
    Local,
    /// The requester is past the midpoint; no round pairs it with anyone.
    None,
}

impl<'a> AttackPathView<'a> {
    pub fn new(path: &'a [NodeId]) -> Self {
        AttackPathView { path }
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        // a looped route could list a router twice; the victim-most copy is the one that counts
        self.path.iter().rposition(|n| *n == node)
    }

    /// Round in which `node` acts as the victim-side requester.
    pub fn round_of(&self, node: NodeId) -> Option<usize> {
        self.position(node).map(|i| self.path.len() - i)
    }

    /// k-th router from the victim end (k >= 1).
    pub fn victim_side(&self, k: usize) -> Option<NodeId> {
        (k >= 1 && k <= self.path.len()).then(|| self.path[self.path.len() - k])
    }

    /// k-th router from the attacker end (k >= 1).
    pub fn attacker_side(&self, k: usize) -> Option<NodeId> {
        (k >= 1 && k <= self.path.len()).then(|| self.path[k - 1])
    }

    fn round_exists(&self, k: usize) -> bool {
        k >= 1 && k <= self.path.len() && k - 1 <= self.path.len() - k
    }

    pub fn counterpart(&self, requester: NodeId) -> Counterpart {
        let Some(k) = self.round_of(requester) else {
            return Counterpart::None;
        };
        let (target, me) = (k - 1, self.path.len() - k);
        if target < me {
            Counterpart::Remote(self.path[target])
        } else if target == me {
            Counterpart::Local
        } else {
            Counterpart::None
        }
    }

    /// The next victim-side router, if the following round exists.
    pub fn upstream(&self, requester: NodeId) -> Option<NodeId> {
        let k = self.round_of(requester)?;
        if self.round_exists(k + 1) {
            self.victim_side(k + 1)
        } else {
            None
        }
    }

    /// The router just before `node`, toward the attacker.
    pub fn toward_attacker(&self, node: NodeId) -> Option<NodeId> {
        let i = self.position(node)?;
        i.checked_sub(1).map(|j| self.path[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // B_gw1, B_gw2, B_gw3, G_gw3, G_gw2, G_gw1
    fn fig1() -> Vec<NodeId> {
        (1..=6).map(NodeId).collect()
    }

    #[test]
    fn fig1_rounds() {
        let p = fig1();
        let v = AttackPathView::new(&p);
        assert_eq!(v.round_of(NodeId(6)), Some(1));
        assert_eq!(v.counterpart(NodeId(6)), Counterpart::Remote(NodeId(1)));
        assert_eq!(v.upstream(NodeId(6)), Some(NodeId(5)));
        assert_eq!(v.counterpart(NodeId(5)), Counterpart::Remote(NodeId(2)));
        assert_eq!(v.upstream(NodeId(5)), Some(NodeId(4)));
        assert_eq!(v.counterpart(NodeId(4)), Counterpart::Remote(NodeId(3)));
        // G_gw3 is the last victim-side router
        assert_eq!(v.upstream(NodeId(4)), None);
        assert_eq!(v.toward_attacker(NodeId(4)), Some(NodeId(3)));
    }

    #[test]
    fn rounds_walk_inward_one_node_at_a_time() {
        for len in 1..10u32 {
            let p: Vec<NodeId> = (0..len).map(NodeId).collect();
            let v = AttackPathView::new(&p);
            let mut cur = v.victim_side(1).unwrap();
            let mut pairs = vec![];
            loop {
                let k = v.round_of(cur).unwrap();
                pairs.push((k, cur, v.counterpart(cur)));
                match v.upstream(cur) {
                    Some(n) => cur = n,
                    None => break,
                }
            }
            for (i, (k, req, cp)) in pairs.iter().enumerate() {
                assert_eq!(*k, i + 1);
                assert_eq!(Some(*req), v.victim_side(*k));
                match cp {
                    Counterpart::Remote(t) => assert_eq!(Some(*t), v.attacker_side(*k)),
                    Counterpart::Local => assert_eq!(v.attacker_side(*k), Some(*req)),
                    Counterpart::None => panic!("round {k} of len {len} has no counterpart"),
                }
            }
            assert_eq!(pairs.len(), (len as usize).div_ceil(2));
        }
    }

    #[test]
    fn single_router_plays_both_roles() {
        let p = vec![NodeId(9)];
        let v = AttackPathView::new(&p);
        assert_eq!(v.counterpart(NodeId(9)), Counterpart::Local);
        assert_eq!(v.upstream(NodeId(9)), None);
        assert_eq!(v.toward_attacker(NodeId(9)), None);
    }

    #[test]
    fn off_path_node() {
        let p = fig1();
        let v = AttackPathView::new(&p);
        assert_eq!(v.counterpart(NodeId(42)), Counterpart::None);
        assert_eq!(v.upstream(NodeId(42)), None);
    }
}
