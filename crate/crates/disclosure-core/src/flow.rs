//! Maximal maximum-weight closure on a DAG by Dinic max-flow in `f64`.

use alloc::vec;
use alloc::vec::Vec;

/// Relative tolerance below which a finite residual counts as saturated.
pub const REL_EPS: f64 = 1e-12;

/// A DAG in CSR form: the out-neighbours of node `i` are
/// `to[start[i]..start[i + 1]]`. Edges point from subsets to supersets.
#[derive(Debug, Clone, Default)]
pub struct CsrDag {
    pub start: Vec<usize>,
    pub to: Vec<u32>,
}

impl CsrDag {
    pub fn n_nodes(&self) -> usize {
        self.start.len().saturating_sub(1)
    }

    pub fn n_edges(&self) -> usize {
        self.to.len()
    }

    pub fn out(&self, i: usize) -> &[u32] {
        &self.to[self.start[i]..self.start[i + 1]]
    }
}

/// Optimal closure together with the maximum flow that certifies it.
#[derive(Debug, Clone)]
pub struct ClosureCut {
    pub member: Vec<bool>,
    pub value: f64,
    /// Flow on each DAG edge, indexed like `CsrDag::to`.
    pub edge_flow: Vec<f64>,
    /// Flow on the terminal arc of each node: from the source for positive
    /// weights, into the sink for negative ones.
    pub terminal_flow: Vec<f64>,
}

/// Maximal maximum-weight closure: the largest set closed under following
/// edges that maximises the total weight.
pub fn maximal_closure(dag: &CsrDag, w: &[f64]) -> (Vec<bool>, f64) {
    let c = closure_cut(dag, w);
    (c.member, c.value)
}

/// Like [`maximal_closure`] but also returns the flow.
///
/// Solved as a min cut with source arcs on positive weights, sink arcs on
/// negative weights and infinite DAG arcs; the closure is the complement of
/// the nodes that can still reach the sink in the final residual graph.
pub fn closure_cut(dag: &CsrDag, w: &[f64]) -> ClosureCut {
    let n = dag.n_nodes();
    let e = dag.n_edges();
    // reverse adjacency: for each node, the (lower node, edge index) pairs
    let mut dstart = vec![0usize; n + 1];
    for &j in &dag.to {
        dstart[j as usize + 1] += 1;
    }
    for i in 0..n {
        dstart[i + 1] += dstart[i];
    }
    let mut fill = dstart.clone();
    let mut dsrc = vec![0u32; e];
    let mut dedge = vec![0u32; e];
    for i in 0..n {
        for k in dag.start[i]..dag.start[i + 1] {
            let j = dag.to[k] as usize;
            dsrc[fill[j]] = i as u32;
            dedge[fill[j]] = k as u32;
            fill[j] += 1;
        }
    }
    drop(fill);

    let mut res: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let tol: Vec<f64> = res.iter().map(|c| REL_EPS * c).collect();
    let mut flow = vec![0.0f64; e];
    let src_total: f64 = w.iter().filter(|&&x| x > 0.0).sum();
    let eps_rev = 1e-15 * src_total;
    let sources: Vec<u32> = (0..n).filter(|&i| w[i] > 0.0).map(|i| i as u32).collect();
    let sink_open = |i: usize, res: &[f64]| w[i] < 0.0 && res[i] > tol[i];

    const NONE: u32 = u32::MAX;
    let mut level = vec![NONE; n];
    let mut ptr = vec![0usize; n];
    let mut queue: Vec<u32> = Vec::with_capacity(n);
    let mut path: Vec<(u32, u32)> = Vec::new();
    loop {
        level.fill(NONE);
        queue.clear();
        for &s in &sources {
            if res[s as usize] > tol[s as usize] {
                level[s as usize] = 0;
                queue.push(s);
            }
        }
        let mut sink_level = NONE;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head] as usize;
            head += 1;
            let lu = level[u];
            if lu >= sink_level {
                break;
            }
            if sink_open(u, &res) {
                sink_level = lu;
                continue;
            }
            for &j in dag.out(u) {
                if level[j as usize] == NONE {
                    level[j as usize] = lu + 1;
                    queue.push(j);
                }
            }
            for p in dstart[u]..dstart[u + 1] {
                let k = dsrc[p] as usize;
                if level[k] == NONE && flow[dedge[p] as usize] > eps_rev {
                    level[k] = lu + 1;
                    queue.push(k as u32);
                }
            }
        }
        if sink_level == NONE {
            break;
        }
        ptr.fill(0);
        // arc numbering per node: 0 is the sink arc, then out arcs, then
        // reverse arcs
        for &s0 in &sources {
            let s0 = s0 as usize;
            if level[s0] != 0 {
                continue;
            }
            while res[s0] > tol[s0] && level[s0] == 0 {
                path.clear();
                let mut u = s0;
                let reached = loop {
                    let lu = level[u];
                    let nout = dag.start[u + 1] - dag.start[u];
                    let nin = dstart[u + 1] - dstart[u];
                    let mut next = None;
                    while ptr[u] < 1 + nout + nin {
                        let a = ptr[u];
                        if a == 0 {
                            if lu == sink_level && sink_open(u, &res) {
                                next = Some((u32::MAX, 0u32));
                                break;
                            }
                        } else if a <= nout {
                            let j = dag.to[dag.start[u] + a - 1] as usize;
                            if lu < sink_level && level[j] == lu + 1 {
                                next = Some((j as u32, a as u32));
                                break;
                            }
                        } else {
                            let p = dstart[u] + a - 1 - nout;
                            let k = dsrc[p] as usize;
                            if lu < sink_level && level[k] == lu + 1 && flow[dedge[p] as usize] > eps_rev {
                                next = Some((k as u32, a as u32));
                                break;
                            }
                        }
                        ptr[u] += 1;
                    }
                    match next {
                        Some((v, a)) => {
                            path.push((u as u32, a));
                            if v == u32::MAX {
                                break true;
                            }
                            u = v as usize;
                        }
                        None => {
                            level[u] = NONE;
                            match path.pop() {
                                Some((x, _)) => {
                                    u = x as usize;
                                    ptr[u] += 1;
                                }
                                None => break false,
                            }
                        }
                    }
                };
                if !reached {
                    break;
                }
                let mut b = res[s0];
                for &(x, a) in &path {
                    let x = x as usize;
                    let a = a as usize;
                    let nout = dag.start[x + 1] - dag.start[x];
                    if a == 0 {
                        b = b.min(res[x]);
                    } else if a > nout {
                        b = b.min(flow[dedge[dstart[x] + a - 1 - nout] as usize]);
                    }
                }
                res[s0] -= b;
                for &(x, a) in &path {
                    let x = x as usize;
                    let a = a as usize;
                    let nout = dag.start[x + 1] - dag.start[x];
                    if a == 0 {
                        res[x] -= b;
                    } else if a <= nout {
                        flow[dag.start[x] + a - 1] += b;
                    } else {
                        let k = dedge[dstart[x] + a - 1 - nout] as usize;
                        flow[k] = (flow[k] - b).max(0.0);
                    }
                }
            }
        }
    }

    // nodes that can reach the sink in the residual graph
    let mut reach = vec![false; n];
    queue.clear();
    for i in 0..n {
        if sink_open(i, &res) {
            reach[i] = true;
            queue.push(i as u32);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let x = queue[head] as usize;
        head += 1;
        for p in dstart[x]..dstart[x + 1] {
            let k = dsrc[p] as usize;
            if !reach[k] {
                reach[k] = true;
                queue.push(k as u32);
            }
        }
        for k in dag.start[x]..dag.start[x + 1] {
            let i = dag.to[k] as usize;
            if !reach[i] && flow[k] > eps_rev {
                reach[i] = true;
                queue.push(i as u32);
            }
        }
    }
    let member: Vec<bool> = reach.iter().map(|r| !r).collect();
    let value = (0..n).filter(|&i| member[i]).map(|i| w[i]).sum();
    let terminal_flow = (0..n).map(|i| w[i].abs() - res[i]).collect();
    ClosureCut { member, value, edge_flow: flow, terminal_flow }
}
