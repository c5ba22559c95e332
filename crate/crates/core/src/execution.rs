//! Action dependency graph (ADG) and continuous-time plan execution.
//!
//! A discrete plan becomes one task per agent per timestep. Each task waits
//! for the robot's previous task and, when it enters a cell, for the task
//! that moved the cell's previous occupant out. Executing tasks in
//! dependency order keeps robots apart whatever their speeds.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Action, Cell};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Staged,
    Enqueued,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdgTask {
    pub task_id: usize,
    pub robot_id: usize,
    pub action: Action,
    pub start_pos: Cell,
    pub end_pos: Cell,
    /// Planned timestep; the task runs from `time` to `time + 1`.
    pub time: usize,
    pub dependencies: Vec<usize>,
    /// Initial-occupancy anchor, done before execution starts.
    pub anchor: bool,
}

impl AdgTask {
    pub fn is_move(&self) -> bool {
        self.start_pos != self.end_pos
    }
}

#[derive(Debug, Clone)]
pub struct AdgGraph {
    tasks: Vec<AdgTask>,
    dependents: Vec<Vec<usize>>,
    /// Per robot: anchor first, then one task per timestep.
    robot_tasks: Vec<Vec<usize>>,
    /// Per cell: tasks that bring a robot into it, in plan order.
    cell_order: BTreeMap<Cell, Vec<usize>>,
    topo: Vec<usize>,
}

impl AdgGraph {
    pub fn tasks(&self) -> &[AdgTask] {
        &self.tasks
    }

    pub fn task(&self, id: usize) -> &AdgTask {
        &self.tasks[id]
    }

    pub fn n_robots(&self) -> usize {
        self.robot_tasks.len()
    }

    pub fn robot_tasks(&self, robot: usize) -> &[usize] {
        &self.robot_tasks[robot]
    }

    pub fn dependents(&self, id: usize) -> &[usize] {
        &self.dependents[id]
    }

    pub fn cell_order(&self) -> &BTreeMap<Cell, Vec<usize>> {
        &self.cell_order
    }

    /// A topological order (lowest ready id first).
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn edge_count(&self) -> usize {
        self.tasks.iter().map(|t| t.dependencies.len()).sum()
    }
}

/// Check that a per-agent plan (all the same length) is 4-connected and
/// free of vertex and swap conflicts.
pub fn validate_plan(plan: &[Vec<Cell>]) -> Result<()> {
    let Some(first) = plan.first() else {
        return Err(Error::Contract("empty plan".into()));
    };
    let len = first.len();
    if len == 0 || plan.iter().any(|p| p.len() != len) {
        return Err(Error::Contract("plan rows must be non-empty and equally long".into()));
    }
    for t in 0..len {
        let mut seen = BTreeMap::new();
        for (i, p) in plan.iter().enumerate() {
            if let Some(j) = seen.insert(p[t], i) {
                return Err(Error::Contract(format!(
                    "vertex conflict at t={t}: robots {j} and {i} at {}",
                    p[t]
                )));
            }
            if t > 0 && p[t - 1].manhattan(p[t]) > 1 {
                return Err(Error::Contract(format!("robot {i} jumps at t={t}")));
            }
        }
        if t == 0 {
            continue;
        }
        let before: BTreeMap<Cell, usize> = plan.iter().enumerate().map(|(i, p)| (p[t - 1], i)).collect();
        for (i, p) in plan.iter().enumerate() {
            if p[t] == p[t - 1] {
                continue;
            }
            if let Some(&j) = before.get(&p[t]) {
                if plan[j][t] == p[t - 1] {
                    return Err(Error::Contract(format!("swap at t={t}: robots {i} and {j}")));
                }
            }
        }
    }
    Ok(())
}

/// Pad each agent's vertex sequence with its last cell to a common length.
pub fn pad_plan(plan: &[Vec<Cell>]) -> Vec<Vec<Cell>> {
    let len = plan.iter().map(Vec::len).max().unwrap_or(0);
    plan.iter()
        .map(|p| {
            let mut p = p.clone();
            if let Some(&last) = p.last() {
                p.resize(len, last);
            }
            p
        })
        .collect()
}

/// Transpose a sequence of joint positions into per-agent vertex sequences.
pub fn plan_from_positions(steps: &[Vec<Cell>]) -> Vec<Vec<Cell>> {
    let n = steps.first().map_or(0, Vec::len);
    (0..n).map(|i| steps.iter().map(|s| s[i]).collect()).collect()
}

pub fn build_adg(plan: &[Vec<Cell>]) -> Result<AdgGraph> {
    let plan = pad_plan(plan);
    validate_plan(&plan)?;
    let n = plan.len();
    let horizon = plan[0].len() - 1;

    let mut tasks = Vec::with_capacity(n * (horizon + 1));
    let mut robot_tasks = vec![Vec::with_capacity(horizon + 1); n];
    for (i, p) in plan.iter().enumerate() {
        let id = tasks.len();
        tasks.push(AdgTask {
            task_id: id,
            robot_id: i,
            action: Action::Idle,
            start_pos: p[0],
            end_pos: p[0],
            time: 0,
            dependencies: Vec::new(),
            anchor: true,
        });
        robot_tasks[i].push(id);
        for k in 0..horizon {
            let id = tasks.len();
            tasks.push(AdgTask {
                task_id: id,
                robot_id: i,
                action: Action::between(p[k], p[k + 1]).expect("validated adjacency"),
                start_pos: p[k],
                end_pos: p[k + 1],
                time: k,
                dependencies: vec![id - 1],
                anchor: false,
            });
            robot_tasks[i].push(id);
        }
    }

    // Visits to each cell: (entered at, entering task, leaving task).
    let mut visits: BTreeMap<Cell, Vec<(usize, usize, Option<usize>)>> = BTreeMap::new();
    for (i, p) in plan.iter().enumerate() {
        let ids = &robot_tasks[i];
        let mut k = 0;
        while k <= horizon {
            let cell = p[k];
            let enter = if k == 0 { ids[0] } else { ids[k] };
            let mut end = k;
            while end < horizon && p[end + 1] == cell {
                end += 1;
            }
            let leave = (end < horizon).then(|| ids[end + 1]);
            visits.entry(cell).or_default().push((k, enter, leave));
            k = end + 1;
        }
    }
    let mut cell_order = BTreeMap::new();
    for (cell, mut v) in visits {
        v.sort_by_key(|&(at, enter, _)| (at, enter));
        for w in v.windows(2) {
            let (_, _, leave) = w[0];
            let (_, enter, _) = w[1];
            let leave =
                leave.ok_or_else(|| Error::Internal(format!("cell {cell} re-entered after a permanent stay")))?;
            if !tasks[enter].dependencies.contains(&leave) {
                tasks[enter].dependencies.push(leave);
            }
        }
        cell_order.insert(cell, v.into_iter().map(|(_, enter, _)| enter).collect());
    }

    let mut dependents = vec![Vec::new(); tasks.len()];
    for t in &tasks {
        for &d in &t.dependencies {
            dependents[d].push(t.task_id);
        }
    }
    let topo = topological_sort(&tasks, &dependents)?;
    Ok(AdgGraph {
        tasks,
        dependents,
        robot_tasks,
        cell_order,
        topo,
    })
}

fn topological_sort(tasks: &[AdgTask], dependents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = tasks.iter().map(|t| t.dependencies.len()).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..tasks.len()).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(tasks.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() < tasks.len() {
        let stuck = (0..tasks.len()).filter(|&i| indegree[i] > 0).collect();
        return Err(Error::DependencyCycle(stuck));
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Transition {
    Enqueued,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub task_id: usize,
    pub robot_id: usize,
    pub transition: Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub entries: Vec<LogEntry>,
    pub status: Vec<TaskStatus>,
    pub enqueued_at: Vec<f64>,
    pub done_at: Vec<f64>,
    pub makespan: f64,
}

impl ExecutionLog {
    pub fn all_done(&self) -> bool {
        self.status.iter().all(|s| *s == TaskStatus::Done)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Continuous-time occupancy `(cell, robot, from, until)`: a robot holds
    /// a cell from the moment the task entering it is enqueued until the
    /// task leaving it is done.
    pub fn occupancy(&self, graph: &AdgGraph) -> Vec<(Cell, usize, f64, f64)> {
        let mut out = Vec::new();
        for r in 0..graph.n_robots() {
            let ids = graph.robot_tasks(r);
            let mut cell = graph.task(ids[0]).start_pos;
            let mut since = 0.0;
            for &id in &ids[1..] {
                let task = graph.task(id);
                if task.is_move() {
                    out.push((cell, r, since, self.done_at[id]));
                    cell = task.end_pos;
                    since = self.enqueued_at[id];
                }
            }
            out.push((cell, r, since, f64::INFINITY));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Seconds to traverse one cell at unit speed.
    pub base_time: f64,
    /// Per-task duration factor drawn from [1/(1+j), 1+j].
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            base_time: 1.0,
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event(f64, usize);

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event-driven execution: a task is enqueued once all its dependencies
/// are done and completes after `base_time × speed × jitter` seconds.
/// `speeds` holds one duration multiplier per robot.
pub fn simulate_execution(graph: &AdgGraph, speeds: &[f64], cfg: &ExecutionConfig) -> Result<ExecutionLog> {
    if speeds.len() != graph.n_robots() {
        return Err(Error::Param(format!(
            "{} speed multipliers for {} robots",
            speeds.len(),
            graph.n_robots()
        )));
    }
    if speeds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Param("speed multipliers must be positive".into()));
    }
    if !(cfg.base_time.is_finite() && cfg.base_time > 0.0) || !(cfg.jitter >= 0.0 && cfg.jitter.is_finite()) {
        return Err(Error::Param(
            "base_time must be positive and jitter non-negative".into(),
        ));
    }
    let tasks = graph.tasks();
    let mut rng = rng_from_seed(cfg.seed);
    let lo = 1.0 / (1.0 + cfg.jitter);
    let hi = 1.0 + cfg.jitter;
    let durations: Vec<f64> = tasks
        .iter()
        .map(|t| {
            let j = if cfg.jitter > 0.0 { rng.gen_range(lo..=hi) } else { 1.0 };
            cfg.base_time * speeds[t.robot_id] * j
        })
        .collect();

    let n = tasks.len();
    let mut status = vec![TaskStatus::Staged; n];
    let mut pending: Vec<usize> = tasks.iter().map(|t| t.dependencies.len()).collect();
    let mut enqueued_at = vec![f64::NAN; n];
    let mut done_at = vec![f64::NAN; n];
    let mut entries = Vec::with_capacity(2 * n);
    let mut events = BinaryHeap::new();

    let mut enqueue = |id: usize, t: f64, status: &mut [TaskStatus], events: &mut BinaryHeap<Reverse<Event>>| {
        debug_assert_eq!(status[id], TaskStatus::Staged);
        status[id] = TaskStatus::Enqueued;
        enqueued_at[id] = t;
        entries.push(LogEntry {
            t,
            task_id: id,
            robot_id: tasks[id].robot_id,
            transition: Transition::Enqueued,
        });
        let finish = if tasks[id].anchor { t } else { t + durations[id] };
        events.push(Reverse(Event(finish, id)));
    };
    let roots: Vec<usize> = (0..n).filter(|&id| pending[id] == 0).collect();
    for id in roots {
        enqueue(id, 0.0, &mut status, &mut events);
    }
    let mut done_log = Vec::new();
    let mut makespan: f64 = 0.0;
    while let Some(Reverse(Event(t, id))) = events.pop() {
        if status[id] != TaskStatus::Enqueued {
            return Err(Error::Internal(format!("task {id} completed from {:?}", status[id])));
        }
        status[id] = TaskStatus::Done;
        done_at[id] = t;
        makespan = makespan.max(t);
        done_log.push(LogEntry {
            t,
            task_id: id,
            robot_id: tasks[id].robot_id,
            transition: Transition::Done,
        });
        for &d in graph.dependents(id) {
            pending[d] -= 1;
            if pending[d] == 0 {
                enqueue(d, t, &mut status, &mut events);
            }
        }
    }
    // Both transition kinds are emitted in time order; merge them so the
    // log reads chronologically (done before enqueued at equal times).
    let mut log = Vec::with_capacity(entries.len() + done_log.len());
    let (mut a, mut b) = (entries.into_iter().peekable(), done_log.into_iter().peekable());
    loop {
        let take_done = match (a.peek(), b.peek()) {
            (Some(e), Some(d)) => d.t <= e.t,
            (None, Some(_)) => true,
            (Some(_), None) => false,
            (None, None) => break,
        };
        log.push(if take_done { b.next() } else { a.next() }.unwrap());
    }
    if status.iter().any(|s| *s != TaskStatus::Done) {
        return Err(Error::Internal("execution stalled before all tasks were done".into()));
    }
    Ok(ExecutionLog {
        entries: log,
        status,
        enqueued_at,
        done_at,
        makespan,
    })
}
