//! Piecewise-constant state bookkeeping shared by the plain and coupled
//! engines. Integrals are kept lazily per server and per group, and flushed
//! at batch boundaries.

use serde::{Deserialize, Serialize};

use super::QueueState;
use crate::graph::CompatGraph;
use crate::stats::{t_interval, Estimate};

/// Group-level view of one sample of the state, used for traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub group: String,
    pub min: u32,
    pub mean: f64,
    pub max: u32,
}

/// Time-averaged statistics of one server label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub name: String,
    pub size: usize,
    /// Min, mean and max over the group's servers of their time-average queue.
    pub min_of_means: f64,
    pub mean_of_means: f64,
    pub max_of_means: f64,
    /// Time averages of the instantaneous group minimum, mean and maximum.
    pub instant_min: f64,
    pub instant_mean: f64,
    pub instant_max: f64,
    /// Fraction of time the group minimum is at least each configured k.
    pub min_tail: Vec<f64>,
    pub batch_instant_min: Vec<f64>,
    pub batch_instant_mean: Vec<f64>,
}

impl GroupMetrics {
    pub fn instant_min_ci(&self, confidence: f64) -> Estimate {
        t_interval(&self.batch_instant_min, confidence)
    }

    pub fn instant_mean_ci(&self, confidence: f64) -> Estimate {
        t_interval(&self.batch_instant_mean, confidence)
    }
}

/// Time-averaged occupancy statistics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMetrics {
    pub tail_ks: Vec<u32>,
    /// Per server time-average queue length.
    pub mean_queue: Vec<f64>,
    /// Per server, per k: time fraction with at least k tasks.
    pub tail: Vec<Vec<f64>>,
    /// Per server batch means of the queue length.
    pub batch_mean_queue: Vec<Vec<f64>>,
    pub groups: Vec<GroupMetrics>,
    /// Measurement window `[start, end]`.
    pub window: (f64, f64),
    pub sim_time: f64,
    pub events: u64,
    pub arrivals: u64,
    pub departures: u64,
    /// The event cap ran out before the horizon.
    pub partial: bool,
    pub final_state: QueueState,
    pub trace: Vec<TracePoint>,
}

impl OccupancyMetrics {
    pub fn group(&self, name: &str) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Batch-means confidence interval of one server's mean queue.
    pub fn mean_queue_ci(&self, server: usize, confidence: f64) -> Estimate {
        t_interval(&self.batch_mean_queue[server], confidence)
    }
}

struct GroupAcc {
    name: String,
    members: Vec<usize>,
    hist: Vec<u32>,
    min: u32,
    max: u32,
    sum: u64,
    last: f64,
    area_min: f64,
    area_sum: f64,
    area_max: f64,
    min_tail: Vec<f64>,
    prev_min: f64,
    prev_sum: f64,
    batch_min: Vec<f64>,
    batch_mean: Vec<f64>,
}

impl GroupAcc {
    fn add(&mut self, x: u32) {
        let x = x as usize;
        if self.hist.len() <= x {
            self.hist.resize(x + 1, 0);
        }
        self.hist[x] += 1;
    }
}

pub(crate) struct Recorder {
    x: Vec<u32>,
    ks: Vec<u32>,
    start: f64,
    boundaries: Vec<f64>,
    next_boundary: usize,
    last: Vec<f64>,
    area: Vec<f64>,
    tail_time: Vec<f64>,
    prev_area: Vec<f64>,
    batch_means: Vec<Vec<f64>>,
    group_of: Vec<u32>,
    groups: Vec<GroupAcc>,
    trace_interval: Option<f64>,
    trace_end: f64,
    next_trace: f64,
    trace: Vec<TracePoint>,
}

impl Recorder {
    /// `end` fixes the batch layout; `None` disables batching and tracing.
    pub fn new(
        g: &CompatGraph,
        x0: Vec<u32>,
        ks: Vec<u32>,
        start: f64,
        end: Option<f64>,
        batches: usize,
        trace_interval: Option<f64>,
    ) -> Self {
        let ns = g.num_servers();
        let boundaries = match end {
            Some(end) if batches > 0 => {
                let len = (end - start) / batches as f64;
                (1..=batches).map(|i| if i == batches { end } else { start + i as f64 * len }).collect()
            }
            _ => Vec::new(),
        };
        let names = g.group_names();
        let group_of: Vec<u32> = g
            .groups()
            .iter()
            .map(|l| names.iter().position(|n| n == l).expect("label listed") as u32)
            .collect();
        let mut groups: Vec<GroupAcc> = names
            .into_iter()
            .map(|name| GroupAcc {
                name,
                members: Vec::new(),
                hist: Vec::new(),
                min: 0,
                max: 0,
                sum: 0,
                last: 0.0,
                area_min: 0.0,
                area_sum: 0.0,
                area_max: 0.0,
                min_tail: vec![0.0; ks.len()],
                prev_min: 0.0,
                prev_sum: 0.0,
                batch_min: Vec::new(),
                batch_mean: Vec::new(),
            })
            .collect();
        for (u, &gi) in group_of.iter().enumerate() {
            let acc = &mut groups[gi as usize];
            acc.members.push(u);
            acc.add(x0[u]);
            acc.sum += x0[u] as u64;
        }
        for acc in &mut groups {
            acc.min = acc.hist.iter().position(|&c| c > 0).unwrap_or(0) as u32;
            acc.max = acc.hist.iter().rposition(|&c| c > 0).unwrap_or(0) as u32;
        }
        let nk = ks.len();
        Recorder {
            x: x0,
            ks,
            start,
            boundaries,
            next_boundary: 0,
            last: vec![0.0; ns],
            area: vec![0.0; ns],
            tail_time: vec![0.0; ns * nk],
            prev_area: vec![0.0; ns],
            batch_means: vec![Vec::with_capacity(batches); ns],
            group_of,
            groups,
            trace_interval: trace_interval.filter(|_| end.is_some()),
            trace_end: end.unwrap_or(f64::INFINITY),
            next_trace: 0.0,
            trace: Vec::new(),
        }
    }

    pub fn state(&self) -> &[u32] {
        &self.x
    }

    fn touch_server(&mut self, u: usize, t: f64) {
        let t0 = self.last[u].max(self.start);
        if t > t0 {
            let dt = t - t0;
            let x = self.x[u];
            self.area[u] += dt * x as f64;
            let nk = self.ks.len();
            for (i, &k) in self.ks.iter().enumerate() {
                if x >= k {
                    self.tail_time[u * nk + i] += dt;
                }
            }
        }
        self.last[u] = t;
    }

    fn touch_group(&mut self, gi: usize, t: f64) {
        let start = self.start;
        let acc = &mut self.groups[gi];
        let t0 = acc.last.max(start);
        if t > t0 {
            let dt = t - t0;
            acc.area_min += dt * acc.min as f64;
            acc.area_sum += dt * acc.sum as f64;
            acc.area_max += dt * acc.max as f64;
            for (i, &k) in self.ks.iter().enumerate() {
                if acc.min >= k {
                    acc.min_tail[i] += dt;
                }
            }
        }
        acc.last = t;
    }

    pub fn inc(&mut self, u: usize, t: f64) {
        self.touch_server(u, t);
        let gi = self.group_of[u] as usize;
        self.touch_group(gi, t);
        let x = self.x[u];
        self.x[u] = x + 1;
        let acc = &mut self.groups[gi];
        acc.hist[x as usize] -= 1;
        acc.add(x + 1);
        acc.sum += 1;
        if x == acc.min && acc.hist[x as usize] == 0 {
            acc.min = x + 1;
        }
        acc.max = acc.max.max(x + 1);
    }

    /// Removes one task from a nonempty server.
    pub fn dec(&mut self, u: usize, t: f64) {
        self.touch_server(u, t);
        let gi = self.group_of[u] as usize;
        self.touch_group(gi, t);
        let x = self.x[u];
        debug_assert!(x > 0);
        self.x[u] = x - 1;
        let acc = &mut self.groups[gi];
        acc.hist[x as usize] -= 1;
        acc.hist[x as usize - 1] += 1;
        acc.sum -= 1;
        acc.min = acc.min.min(x - 1);
        if x == acc.max && acc.hist[x as usize] == 0 {
            acc.max = x - 1;
        }
    }

    fn flush_all(&mut self, t: f64) {
        for u in 0..self.x.len() {
            self.touch_server(u, t);
        }
        for gi in 0..self.groups.len() {
            self.touch_group(gi, t);
        }
    }

    fn close_batch(&mut self, t: f64) {
        let begin = if self.next_boundary == 0 { self.start } else { self.boundaries[self.next_boundary - 1] };
        self.flush_all(t);
        let len = t - begin;
        for u in 0..self.x.len() {
            let v = if len > 0.0 { (self.area[u] - self.prev_area[u]) / len } else { 0.0 };
            self.batch_means[u].push(v);
            self.prev_area[u] = self.area[u];
        }
        for acc in &mut self.groups {
            let n = acc.members.len() as f64;
            let (dm, ds) = (acc.area_min - acc.prev_min, acc.area_sum - acc.prev_sum);
            acc.batch_min.push(if len > 0.0 { dm / len } else { 0.0 });
            acc.batch_mean.push(if len > 0.0 { ds / len / n } else { 0.0 });
            acc.prev_min = acc.area_min;
            acc.prev_sum = acc.area_sum;
        }
        self.next_boundary += 1;
    }

    /// Must be called with nondecreasing `t` before applying an event at `t`.
    pub fn advance(&mut self, t: f64) {
        while self.next_boundary < self.boundaries.len() && self.boundaries[self.next_boundary] <= t {
            self.close_batch(self.boundaries[self.next_boundary]);
        }
        if let Some(step) = self.trace_interval {
            while self.next_trace <= t && self.next_trace <= self.trace_end {
                let time = self.next_trace;
                for acc in &self.groups {
                    self.trace.push(TracePoint {
                        time,
                        group: acc.name.clone(),
                        min: acc.min,
                        mean: acc.sum as f64 / acc.members.len() as f64,
                        max: acc.max,
                    });
                }
                self.next_trace = (self.trace.len() / self.groups.len()) as f64 * step;
            }
        }
    }

    /// Closes the run at `end`. Batches that `end` does not complete are
    /// dropped from the batch series but still count toward the averages.
    pub fn finish(mut self, end: f64, counters: Counters) -> OccupancyMetrics {
        self.advance(end);
        self.flush_all(end);
        let len = end - self.start;
        let scale = if len > 0.0 { 1.0 / len } else { 0.0 };
        let nk = self.ks.len();
        let ns = self.x.len();
        let mean_queue: Vec<f64> = self.area.iter().map(|a| a * scale).collect();
        let tail = (0..ns)
            .map(|u| self.tail_time[u * nk..(u + 1) * nk].iter().map(|t| t * scale).collect())
            .collect();
        let groups = self
            .groups
            .into_iter()
            .map(|acc| {
                let means: Vec<f64> = acc.members.iter().map(|&u| mean_queue[u]).collect();
                let n = means.len() as f64;
                GroupMetrics {
                    size: acc.members.len(),
                    min_of_means: means.iter().cloned().fold(f64::INFINITY, f64::min),
                    mean_of_means: means.iter().sum::<f64>() / n,
                    max_of_means: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    instant_min: acc.area_min * scale,
                    instant_mean: acc.area_sum * scale / n,
                    instant_max: acc.area_max * scale,
                    min_tail: acc.min_tail.iter().map(|t| t * scale).collect(),
                    batch_instant_min: acc.batch_min,
                    batch_instant_mean: acc.batch_mean,
                    name: acc.name,
                }
            })
            .collect();
        OccupancyMetrics {
            tail_ks: self.ks,
            mean_queue,
            tail,
            batch_mean_queue: self.batch_means,
            groups,
            window: (self.start, end.max(self.start)),
            sim_time: end,
            events: counters.events,
            arrivals: counters.arrivals,
            departures: counters.departures,
            partial: counters.partial,
            final_state: QueueState { occupancy: self.x },
            trace: self.trace,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Counters {
    pub events: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub partial: bool,
}
