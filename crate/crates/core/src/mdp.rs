//! Factored MDP model: per-action transition diagrams, reward, discount.
//!
//! Every action gives, for each state variable `X`, a diagram over the
//! unprimed variables holding `P(X' = true | X_1..X_n)`. Diagrams live in
//! a caller-owned [`DiagramStore`]; the model only keeps handles.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::diagram::{DiagramError, DiagramRef, DiagramStore, VarId};
use crate::scalar::Scalar;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("probability {value} of `{var}` lies outside [0, 1]")]
    ProbabilityOutOfRange { var: String, value: f64 },
    #[error("diagram for `{var}` mentions post-action variable `{found}`")]
    PrimedSupport { var: String, found: String },
    #[error("node limit must be at least 1")]
    ZeroNodeLimit,
}

/// Transition model of one action.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    /// Unprimed variable -> diagram of `P(var' = true)`.
    pub cpts: BTreeMap<VarId, DiagramRef>,
}

impl ActionSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ActionSpec { name: name.into(), cpts: BTreeMap::new() }
    }

    pub fn cpt(&self, var: VarId) -> Option<DiagramRef> {
        self.cpts.get(&var).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpSpec {
    /// Unprimed state variables in ordering position.
    pub variables: Vec<VarId>,
    pub actions: Vec<ActionSpec>,
    pub reward: DiagramRef,
    /// Discount factor in `[0, 1)`.
    pub discount: f64,
}

impl MdpSpec {
    pub fn action(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn action_names(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn num_states(&self) -> u128 {
        1u128 << self.variables.len().min(127)
    }

    /// Copy every diagram of the model from `src` into `dst`, converting
    /// terminals with `conv`.
    pub fn transfer<T: Scalar, U: Scalar>(
        &self,
        src: &DiagramStore<T>,
        dst: &mut DiagramStore<U>,
        mut conv: impl FnMut(T) -> U,
    ) -> Result<MdpSpec, DiagramError> {
        let mut actions = Vec::with_capacity(self.actions.len());
        for a in &self.actions {
            let mut cpts = BTreeMap::new();
            for (&v, &c) in &a.cpts {
                cpts.insert(v, src.transfer(c, dst, &mut conv)?);
            }
            actions.push(ActionSpec { name: a.name.clone(), cpts });
        }
        Ok(MdpSpec {
            variables: self.variables.clone(),
            actions,
            reward: src.transfer(self.reward, dst, &mut conv)?,
            discount: self.discount,
        })
    }
}

/// Frame axiom: `P(var' = true) = var`.
pub fn persistence_cpt<T: Scalar>(store: &mut DiagramStore<T>, var: VarId) -> Result<DiagramRef, DiagramError> {
    store.indicator(var.to_unprimed())
}

fn check_cpt<T: Scalar>(store: &DiagramStore<T>, cpt: DiagramRef, var: VarId) -> Result<(), ModelError> {
    for v in store.terminal_values(cpt)? {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(ModelError::ProbabilityOutOfRange { var: store.var_name(var), value: v.as_f64() });
        }
    }
    if let Some(p) = store.support(cpt)?.into_iter().find(|v| v.is_primed()) {
        return Err(ModelError::PrimedSupport { var: store.var_name(var), found: store.var_name(p) });
    }
    Ok(())
}

/// `Q(X'; X) = X' * P + !X' * (1 - P)` for one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualActionDiagram {
    /// Unprimed variable whose successor the diagram describes.
    pub var: VarId,
    pub diagram: DiagramRef,
}

pub fn build_dual_diagram<T: Scalar>(
    store: &mut DiagramStore<T>,
    cpt: DiagramRef,
    base_var: VarId,
) -> Result<DualActionDiagram, ModelError> {
    let var = base_var.to_unprimed();
    check_cpt(store, cpt, var)?;
    let negative = store.complement_one(cpt)?;
    // The CPT may test variables above X' in the interleaved ordering, so
    // the node is assembled with `ite` rather than placed at the root.
    let diagram = store.ite(var.to_primed(), cpt, negative)?;
    Ok(DualActionDiagram { var, diagram })
}

/// Consecutive variables whose dual diagrams were multiplied together.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionBlock {
    /// Unprimed variables of the block in ordering position.
    pub vars: Vec<VarId>,
    /// Product of the block's dual diagrams.
    pub diagram: DiagramRef,
}

/// Complete action diagram of one action, split into ordered blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPartition {
    pub action: String,
    pub blocks: Vec<PartitionBlock>,
    /// Internal-node cap per block; `None` means unbounded.
    pub node_limit: Option<usize>,
}

impl ActionPartition {
    /// Variables of all blocks, concatenated.
    pub fn variables(&self) -> Vec<VarId> {
        self.blocks.iter().flat_map(|b| b.vars.iter().copied()).collect()
    }
}

/// Group dual diagrams greedily in variable order: the running product
/// absorbs the next variable unless that would push it past `node_limit`
/// internal nodes. A block always holds at least one variable.
pub fn build_partitions<T: Scalar>(
    store: &mut DiagramStore<T>,
    action: &ActionSpec,
    node_limit: Option<usize>,
) -> Result<ActionPartition, ModelError> {
    if node_limit == Some(0) {
        return Err(ModelError::ZeroNodeLimit);
    }
    let mut blocks = Vec::new();
    let mut current: Option<PartitionBlock> = None;
    for (&var, &cpt) in &action.cpts {
        let dual = build_dual_diagram(store, cpt, var)?;
        current = Some(match current.take() {
            None => PartitionBlock { vars: vec![var], diagram: dual.diagram },
            Some(mut block) => {
                let product = store.multiply(block.diagram, dual.diagram)?;
                let fits = match node_limit {
                    None => true,
                    Some(limit) => store.stats(product)?.internal_nodes <= limit,
                };
                if fits {
                    block.vars.push(var);
                    block.diagram = product;
                    block
                } else {
                    blocks.push(block);
                    PartitionBlock { vars: vec![var], diagram: dual.diagram }
                }
            }
        });
    }
    blocks.extend(current);
    Ok(ActionPartition { action: action.name.clone(), blocks, node_limit })
}

/// One problem found by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationIssue {
    NoActions,
    DuplicateAction(String),
    MissingCpt { action: String, var: String },
    UnknownCptVariable { action: String, var: String },
    ProbabilityOutOfRange { action: String, var: String, value: f64 },
    PrimedInCpt { action: String, var: String },
    PrimedInReward,
    NonFiniteReward(f64),
    DiscountOutOfRange(f64),
    ForeignDiagram,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            NoActions => write!(f, "model defines no actions"),
            DuplicateAction(a) => write!(f, "action `{a}` is defined twice"),
            MissingCpt { action, var } => write!(f, "action `{action}` has no CPT for `{var}`"),
            UnknownCptVariable { action, var } => {
                write!(f, "action `{action}` has a CPT for undeclared variable `{var}`")
            }
            ProbabilityOutOfRange { action, var, value } => {
                write!(f, "action `{action}`, CPT `{var}`: probability {value} outside [0, 1]")
            }
            PrimedInCpt { action, var } => {
                write!(f, "action `{action}`, CPT `{var}` mentions a post-action variable")
            }
            PrimedInReward => write!(f, "reward mentions a post-action variable"),
            NonFiniteReward(v) => write!(f, "reward value {v} is not finite"),
            DiscountOutOfRange(d) => write!(f, "discount {d} outside [0, 1)"),
            ForeignDiagram => write!(f, "model refers to a diagram from another store"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Collect every problem in `spec`; never stops at the first.
pub fn validate<T: Scalar>(store: &DiagramStore<T>, spec: &MdpSpec) -> ValidationReport {
    let mut issues = Vec::new();
    if !(spec.discount >= 0.0 && spec.discount < 1.0) {
        issues.push(ValidationIssue::DiscountOutOfRange(spec.discount));
    }
    if spec.actions.is_empty() {
        issues.push(ValidationIssue::NoActions);
    }
    match (store.terminal_values(spec.reward), store.support(spec.reward)) {
        (Ok(values), Ok(support)) => {
            if let Some(v) = values.into_iter().find(|v| !v.finite()) {
                issues.push(ValidationIssue::NonFiniteReward(v.as_f64()));
            }
            if support.iter().any(|v| v.is_primed()) {
                issues.push(ValidationIssue::PrimedInReward);
            }
        }
        _ => issues.push(ValidationIssue::ForeignDiagram),
    }
    let mut seen = std::collections::HashSet::new();
    for action in &spec.actions {
        if !seen.insert(action.name.as_str()) {
            issues.push(ValidationIssue::DuplicateAction(action.name.clone()));
        }
        for &var in &spec.variables {
            if !action.cpts.contains_key(&var) {
                issues.push(ValidationIssue::MissingCpt { action: action.name.clone(), var: store.var_name(var) });
            }
        }
        for (&var, &cpt) in &action.cpts {
            let name = store.var_name(var);
            if !spec.variables.contains(&var) {
                issues.push(ValidationIssue::UnknownCptVariable { action: action.name.clone(), var: name.clone() });
            }
            let (Ok(values), Ok(support)) = (store.terminal_values(cpt), store.support(cpt)) else {
                issues.push(ValidationIssue::ForeignDiagram);
                continue;
            };
            for v in values {
                if !(v >= T::zero() && v <= T::one()) {
                    issues.push(ValidationIssue::ProbabilityOutOfRange {
                        action: action.name.clone(),
                        var: name.clone(),
                        value: v.as_f64(),
                    });
                }
            }
            if support.iter().any(|v| v.is_primed()) {
                issues.push(ValidationIssue::PrimedInCpt { action: action.name.clone(), var: name });
            }
        }
    }
    ValidationReport { issues }
}
