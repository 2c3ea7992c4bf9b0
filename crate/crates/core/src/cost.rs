//! Analytical per-epoch cost table for the triple-free protocol and two
//! reference frameworks. Communication is in ring elements, computation in
//! ring multiplications. Constants are the published ones, not re-derived.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;
use crate::protocol::Task;

/// `n_coef * n + d_coef * d + nd_coef * n * d`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Formula {
    pub n: u64,
    pub d: u64,
    pub nd: u64,
}

impl Formula {
    pub const fn new(n: u64, d: u64, nd: u64) -> Self {
        Formula { n, d, nd }
    }

    pub fn eval(&self, n: u64, d: u64) -> u64 {
        self.n * n + self.d * d + self.nd * n * d
    }

    pub fn add(&self, o: &Formula) -> Formula {
        Formula::new(self.n + o.n, self.d + o.d, self.nd + o.nd)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for (c, sym) in [(self.nd, "nd"), (self.n, "n"), (self.d, "d")] {
            match c {
                0 => {}
                1 => terms.push(sym.to_string()),
                c => terms.push(format!("{c}{sym}")),
            }
        }
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Vertices,
    Chameleon,
    Aby3,
}

impl Framework {
    pub const ALL: [Framework; 3] = [Framework::Chameleon, Framework::Aby3, Framework::Vertices];

    pub fn name(self) -> &'static str {
        match self {
            Framework::Vertices => "vertices",
            Framework::Chameleon => "chameleon",
            Framework::Aby3 => "aby3",
        }
    }
}

impl FromStr for Framework {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "vertices" => Ok(Framework::Vertices),
            "chameleon" => Ok(Framework::Chameleon),
            "aby3" => Ok(Framework::Aby3),
            other => Err(Error::config("framework", format!("unknown framework {other:?}"))),
        }
    }
}

/// Communication and computation of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseCost {
    pub comm: Formula,
    pub comp: Formula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostModel {
    pub framework: Framework,
    pub task: Task,
    pub forward: PhaseCost,
    pub backward: PhaseCost,
    pub total: PhaseCost,
}

const fn pc(comm: Formula, comp: Formula) -> PhaseCost {
    PhaseCost { comm, comp }
}

const F: fn(u64, u64, u64) -> Formula = Formula::new;

impl CostModel {
    pub fn new(framework: Framework, task: Task) -> Self {
        use Framework::*;
        let (forward, backward, total) = match (framework, task) {
            (Chameleon, _) => (
                pc(F(0, 0, 1), F(0, 0, 4)),
                pc(F(0, 0, 1), F(0, 0, 4)),
                pc(F(0, 0, 2), F(0, 0, 8)),
            ),
            (Aby3, Task::Linear) => (
                pc(F(2, 0, 0), F(0, 0, 6)),
                pc(F(0, 2, 0), F(0, 0, 6)),
                pc(F(2, 2, 0), F(0, 0, 12)),
            ),
            (Aby3, Task::Logistic) => (
                pc(F(9, 0, 0), F(0, 0, 6)),
                pc(F(0, 2, 0), F(0, 0, 6)),
                pc(F(9, 2, 0), F(0, 0, 12)),
            ),
            (Vertices, Task::Linear) => (
                pc(F(1, 0, 0), F(0, 0, 2)),
                pc(F(2, 5, 0), F(0, 0, 2)),
                pc(F(3, 5, 0), F(0, 0, 4)),
            ),
            (Vertices, Task::Logistic) => (
                pc(F(4, 0, 0), F(0, 0, 2)),
                pc(F(2, 5, 0), F(0, 0, 2)),
                pc(F(6, 5, 0), F(0, 0, 4)),
            ),
        };
        CostModel {
            framework,
            task,
            forward,
            backward,
            total,
        }
    }

    /// Every (task, phase) row for one framework, as in the published table.
    pub fn rows(framework: Framework) -> Vec<(Task, &'static str, PhaseCost)> {
        let mut out = Vec::new();
        for task in [Task::Linear, Task::Logistic] {
            let m = CostModel::new(framework, task);
            out.push((task, "forward", m.forward));
            out.push((task, "backward", m.backward));
            out.push((task, "total", m.total));
        }
        out
    }

    pub fn evaluate(&self, n: u64, d: u64) -> CostEstimate {
        CostEstimate {
            framework: self.framework,
            task: self.task,
            n,
            d,
            comm: self.total.comm.eval(n, d),
            comp: self.total.comp.eval(n, d),
            comm_formula: self.total.comm.to_string(),
            comp_formula: self.total.comp.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostEstimate {
    pub framework: Framework,
    pub task: Task,
    pub n: u64,
    pub d: u64,
    pub comm: u64,
    pub comp: u64,
    pub comm_formula: String,
    pub comp_formula: String,
}

/// Per-iteration elements this implementation actually puts on the wire
/// (its ledger), as opposed to the published model.
pub fn measured_formula(task: Task) -> Formula {
    match task {
        Task::Linear => Formula::new(4, 3, 0),
        Task::Logistic => Formula::new(14, 3, 0),
    }
}
