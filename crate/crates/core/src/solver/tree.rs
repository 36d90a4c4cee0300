use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_finite, distinct_controls, elapsed_ms, euler_step, Mode, Quadrature, Schedule, SolverConfig,
    ValueEstimate,
};
use super::quadrature::expect;
use crate::coefficients::{CoefficientField, ControlGrid, ControlPoint};
use crate::error::{Error, Result};
use crate::path::{SampledPath, TimedPath};

/// Below this many leaves the whole tree is walked on one thread.
const PAR_LEAVES: f64 = 4096.0;

struct Ctx<'a> {
    c: &'a CoefficientField,
    quad: &'a Quadrature,
    grid: ControlGrid,
    sched: &'a Schedule,
    par_depth: usize,
}

struct NodeValue {
    value: f64,
    control: usize,
    nodes: u64,
}

impl Ctx<'_> {
    fn leaf(&self, path: &SampledPath) -> Result<f64> {
        check_finite(self.c.terminal(path), || {
            format!("terminal value at leaf ending in {:?}", path.last_value())
        })
    }

    fn node(&self, k: usize, path: &mut SampledPath) -> Result<NodeValue> {
        if k == self.sched.steps() {
            return Ok(NodeValue {
                value: self.leaf(path)?,
                control: 0,
                nodes: 1,
            });
        }
        let t = self.sched.times[k];
        let x = path.last_value().to_vec();
        let controls = distinct_controls(self.c, self.grid, t, path);
        let q = self.quad.len();
        let child = |path: &mut SampledPath, ci: usize, j: usize| -> Result<(f64, u64)> {
            let (_, b, s) = &controls[ci];
            let mut next = vec![0.0; x.len()];
            euler_step(&x, b, s, &self.quad.nodes[j], self.sched.dt, self.sched.sqdt, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    location: format!("coefficients at step {k}, t = {t}, state {x:?}"),
                });
            }
            let len = path.len();
            path.push(self.sched.times[k + 1], &next)?;
            let out = self.node(k + 1, path);
            path.truncate(len);
            out.map(|v| (v.value, v.nodes))
        };
        let children: Vec<Result<(f64, u64)>> = if k < self.par_depth {
            (0..controls.len() * q)
                .into_par_iter()
                .map(|i| child(&mut path.clone(), i / q, i % q))
                .collect()
        } else {
            (0..controls.len() * q).map(|i| child(path, i / q, i % q)).collect()
        };
        let mut best = NodeValue {
            value: f64::NEG_INFINITY,
            control: 0,
            nodes: 1,
        };
        let mut iter = children.into_iter();
        for (ci, (index, _, _)) in controls.iter().enumerate() {
            let mut values = Vec::with_capacity(q);
            for _ in 0..q {
                let (v, n) = iter.next().expect("one result per child")?;
                values.push(v);
                best.nodes += n;
            }
            let acc = self.quad.expect(values);
            if acc > best.value || ci == 0 {
                best.value = acc;
                best.control = *index;
            }
        }
        Ok(best)
    }
}

/// Upper bound on the number of leaves, before controls with equal coefficients are merged.
fn leaf_bound(grid: ControlGrid, quad: &Quadrature, steps: usize) -> f64 {
    ((grid.len() * quad.len()) as f64).powi(steps as i32)
}

fn prepare(c: &CoefficientField, start: &TimedPath, cfg: &SolverConfig) -> Result<(Schedule, Quadrature, ControlGrid)> {
    let sched = Schedule::new(c, start, cfg.steps)?;
    let quad = Quadrature::new(cfg.quadrature, c.meta().noise_dim)?;
    let grid = c.control_grid(cfg.control_res)?;
    let required = leaf_bound(grid, &quad, cfg.steps);
    if required > cfg.tree_budget {
        return Err(Error::Budget {
            what: "path tree leaves",
            required,
            budget: cfg.tree_budget,
        });
    }
    Ok((sched, quad, grid))
}

/// Backward induction over the non-recombining tree of controlled Euler paths.
pub fn solve_tree(c: &CoefficientField, start: &TimedPath, cfg: &SolverConfig) -> Result<ValueEstimate> {
    let clock = Instant::now();
    let (sched, quad, grid) = prepare(c, start, cfg)?;
    let mut path = sched.prefix.clone();
    if sched.is_terminal() {
        let ctx = Ctx { c, quad: &quad, grid, sched: &sched, par_depth: 0 };
        return Ok(ValueEstimate {
            value: ctx.leaf(&path)?,
            stderr: 0.0,
            mode: Mode::Tree,
            nodes: 1,
            runtime_ms: elapsed_ms(clock),
            argmax_policy_summary: "terminal".into(),
        });
    }
    let par_depth = if leaf_bound(grid, &quad, cfg.steps) > PAR_LEAVES { 2 } else { 0 };
    let ctx = Ctx { c, quad: &quad, grid, sched: &sched, par_depth };
    let root = ctx.node(0, &mut path)?;
    Ok(ValueEstimate {
        value: root.value,
        stderr: 0.0,
        mode: Mode::Tree,
        nodes: root.nodes,
        runtime_ms: elapsed_ms(clock),
        argmax_policy_summary: format!("root control {:?}", grid.point(root.control).coords()),
    })
}

/// Controls with identical coefficients are merged; `children` are in shock order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildGroup {
    pub control: ControlPoint,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub path: SampledPath,
    pub value: f64,
    /// `None` at the leaves.
    pub argmax_control: Option<ControlPoint>,
    pub groups: Vec<ChildGroup>,
}

/// Every node of a solved tree, level by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTree {
    pub levels: Vec<Vec<TreeNode>>,
    pub weights: Vec<f64>,
}

impl ValueTree {
    pub fn root(&self) -> &TreeNode {
        &self.levels[0][0]
    }

    /// Recomputes every leaf from `ψ` and every interior node from its children.
    pub fn verify(&self, c: &CoefficientField) -> std::result::Result<(), String> {
        let last = self.levels.len() - 1;
        for (k, level) in self.levels.iter().enumerate() {
            for (i, node) in level.iter().enumerate() {
                if k == last {
                    let psi = c.terminal(&node.path);
                    if psi != node.value {
                        return Err(format!("leaf {i}: stored {} but ψ = {psi}", node.value));
                    }
                    continue;
                }
                let mut best: Option<(f64, &ControlPoint)> = None;
                for g in &node.groups {
                    let avg = expect(&self.weights, g.children.iter().map(|&ch| self.levels[k + 1][ch].value));
                    if best.is_none_or(|(b, _)| avg > b) {
                        best = Some((avg, &g.control));
                    }
                }
                let (value, control) = best.ok_or_else(|| format!("node {k}/{i} has no children"))?;
                if value != node.value || Some(control) != node.argmax_control.as_ref() {
                    return Err(format!(
                        "node {k}/{i}: stored {} at {:?}, recomputed {value} at {control:?}",
                        node.value, node.argmax_control
                    ));
                }
            }
        }
        Ok(())
    }
}

/// [`solve_tree`] keeping every node; meant for small instances.
pub fn solve_tree_recorded(
    c: &CoefficientField,
    start: &TimedPath,
    cfg: &SolverConfig,
) -> Result<(ValueEstimate, ValueTree)> {
    let clock = Instant::now();
    let (sched, quad, grid) = prepare(c, start, cfg)?;
    let mut levels: Vec<Vec<TreeNode>> = vec![vec![TreeNode {
        path: sched.prefix.clone(),
        value: 0.0,
        argmax_control: None,
        groups: Vec::new(),
    }]];
    let steps = if sched.is_terminal() { 0 } else { sched.steps() };
    for k in 0..steps {
        let t = sched.times[k];
        let mut next_level = Vec::new();
        for node in levels[k].iter_mut() {
            let x = node.path.last_value().to_vec();
            for (index, b, s) in distinct_controls(c, grid, t, &node.path) {
                let mut children = Vec::with_capacity(quad.len());
                for xi in &quad.nodes {
                    let mut next = vec![0.0; x.len()];
                    euler_step(&x, &b, &s, xi, sched.dt, sched.sqdt, &mut next);
                    children.push(next_level.len());
                    next_level.push(TreeNode {
                        path: node.path.pushed(sched.times[k + 1], &next)?,
                        value: 0.0,
                        argmax_control: None,
                        groups: Vec::new(),
                    });
                }
                node.groups.push(ChildGroup {
                    control: grid.point(index),
                    children,
                });
            }
        }
        levels.push(next_level);
    }
    for node in levels.last_mut().expect("root level").iter_mut() {
        node.value = check_finite(c.terminal(&node.path), || "terminal value at a leaf".into())?;
    }
    for k in (0..steps).rev() {
        let (head, tail) = levels.split_at_mut(k + 1);
        for node in head[k].iter_mut() {
            let mut best: Option<(f64, ControlPoint)> = None;
            for g in &node.groups {
                let avg = quad.expect(g.children.iter().map(|&ch| tail[0][ch].value));
                if best.as_ref().is_none_or(|(b, _)| avg > *b) {
                    best = Some((avg, g.control.clone()));
                }
            }
            let (value, control) = best.expect("interior nodes have children");
            node.value = value;
            node.argmax_control = Some(control);
        }
    }
    let nodes = levels.iter().map(|l| l.len() as u64).sum();
    let tree = ValueTree {
        levels,
        weights: quad.weights.clone(),
    };
    let root = tree.root();
    let est = ValueEstimate {
        value: root.value,
        stderr: 0.0,
        mode: Mode::Tree,
        nodes,
        runtime_ms: elapsed_ms(clock),
        argmax_policy_summary: match &root.argmax_control {
            Some(f) => format!("root control {:?}", f.coords()),
            None => "terminal".into(),
        },
    };
    Ok((est, tree))
}
