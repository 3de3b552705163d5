use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::tensor::Tensor;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Whether newly created operations are recorded on the tape.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

struct GradModeGuard(bool);

impl GradModeGuard {
    fn set(enabled: bool) -> Self {
        let prev = GRAD_ENABLED.with(|c| c.replace(enabled));
        GradModeGuard(prev)
    }
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.0));
    }
}

/// Run `f` without recording any operation.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = GradModeGuard::set(false);
    f()
}

/// Backward rule of a recorded operation.
///
/// Rules are written in terms of [`Var`] operations, so when the backward
/// pass itself runs with recording enabled the resulting gradients are
/// differentiable again.
pub(crate) trait Backward {
    fn backward(&self, inputs: &[Var], output: &Var, grad: &Var) -> Vec<Option<Var>>;
}

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    rule: Option<Box<dyn Backward>>,
    inputs: Vec<Var>,
}

/// A node in the computation graph.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Var#{}({:?}, requires_grad={})",
            self.0.id, self.0.value, self.0.requires_grad
        )
    }
}

impl Var {
    /// A leaf that never receives gradients.
    pub fn constant(value: Tensor) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: false,
            rule: None,
            inputs: Vec::new(),
        }))
    }

    /// A leaf whose gradient can be requested.
    pub fn leaf(value: Tensor) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: true,
            rule: None,
            inputs: Vec::new(),
        }))
    }

    pub(crate) fn from_op(value: Tensor, rule: impl Backward + 'static, inputs: Vec<Var>) -> Var {
        if grad_enabled() && inputs.iter().any(Var::requires_grad) {
            Var(Rc::new(Node {
                id: next_id(),
                value,
                requires_grad: true,
                rule: Some(Box::new(rule)),
                inputs,
            }))
        } else {
            Var::constant(value)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }
}

/// Post-order over the nodes reachable from `root` that require gradients.
fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        for input in &v.0.inputs {
            if input.requires_grad() && !seen.contains(&input.id()) {
                stack.push((input.clone(), false));
            }
        }
    }
    order
}

/// Gradients of the scalar `output` with respect to each of `wrt`.
///
/// With `create_graph` the returned gradients are themselves recorded and
/// can be differentiated again (used for gradient penalties). Inputs that
/// `output` does not depend on receive zero gradients.
pub fn grad(output: &Var, wrt: &[&Var], create_graph: bool) -> Vec<Var> {
    assert_eq!(
        output.value().numel(),
        1,
        "grad() needs a scalar output, got {:?}",
        output.shape()
    );
    let wanted: HashSet<u64> = wrt.iter().map(|v| v.id()).collect();
    let mut grads: HashMap<u64, Var> = HashMap::new();
    if output.requires_grad() {
        let _mode = GradModeGuard::set(create_graph);
        grads.insert(output.id(), Var::constant(Tensor::ones(output.shape())));
        for node in topo_order(output).iter().rev() {
            let Some(rule) = node.0.rule.as_ref() else {
                continue;
            };
            let g = if wanted.contains(&node.id()) {
                grads.get(&node.id()).cloned()
            } else {
                grads.remove(&node.id())
            };
            let Some(g) = g else { continue };
            let input_grads = rule.backward(&node.0.inputs, node, &g);
            debug_assert_eq!(input_grads.len(), node.0.inputs.len());
            for (input, ig) in node.0.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !input.requires_grad() {
                    continue;
                }
                debug_assert_eq!(ig.shape(), input.shape(), "gradient shape mismatch");
                let acc = match grads.remove(&input.id()) {
                    Some(prev) => &prev + &ig,
                    None => ig,
                };
                grads.insert(input.id(), acc);
            }
        }
    }
    wrt.iter()
        .map(|v| {
            grads
                .get(&v.id())
                .cloned()
                .unwrap_or_else(|| Var::constant(Tensor::zeros(v.shape())))
        })
        .collect()
}

/// First-order gradients as plain tensors.
pub fn grad_tensors(output: &Var, wrt: &[&Var]) -> Vec<Tensor> {
    grad(output, wrt, false)
        .into_iter()
        .map(|g| g.value().clone())
        .collect()
}
