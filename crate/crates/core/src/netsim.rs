//! Discrete-event simulator of a single logical switch.
//!
//! Every message pays a constant latency and then `size * t_transfer_per_unit`
//! of transfer. Each worker owns one serial send channel and one serial
//! receive channel; the two run concurrently. A message starts only when its
//! source's send channel and its destination's receive channel are both free,
//! and it holds both until completion. Latency is not pipelined behind a busy
//! channel.
//!
//! Each source serves its ready messages in FIFO order keyed by
//! `(ready_time, issue_time, src, tag, id)`; only the head of a source's queue
//! may start. Time is exact (`SimTime`), so runs are bit-for-bit reproducible.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::SimTime;

pub type WorkerId = usize;
pub type MessageId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub t_latency: SimTime,
    pub t_transfer_per_unit: SimTime,
    pub workers: usize,
}

impl NetworkParams {
    pub fn new(t_latency: SimTime, t_transfer_per_unit: SimTime, workers: usize) -> Self {
        NetworkParams {
            t_latency,
            t_transfer_per_unit,
            workers,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        NetworkParams { workers, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_latency.is_negative() || self.t_transfer_per_unit.is_negative() {
            return Err(Error::invalid("latency and transfer time must be non-negative"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("network needs at least one worker"));
        }
        Ok(())
    }

    /// Duration of one uncontended message of `size` units.
    pub fn message_time(&self, size: SimTime) -> SimTime {
        self.t_latency + size * self.t_transfer_per_unit
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendRequest {
    pub issue_time: SimTime,
    pub src: WorkerId,
    pub dst: WorkerId,
    pub size: SimTime,
    pub tag: String,
    /// Indices of requests (within one batch) that must complete first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deps: Vec<usize>,
}

impl SendRequest {
    pub fn new(issue_time: SimTime, src: WorkerId, dst: WorkerId, size: SimTime, tag: impl Into<String>) -> Self {
        SendRequest {
            issue_time,
            src,
            dst,
            size,
            tag: tag.into(),
            deps: Vec::new(),
        }
    }

    pub fn after(mut self, deps: impl IntoIterator<Item = usize>) -> Self {
        self.deps.extend(deps);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub id: MessageId,
    pub tag: String,
    pub src: WorkerId,
    pub dst: WorkerId,
    pub size: SimTime,
    pub send_start: SimTime,
    pub first_bit: SimTime,
    pub completion: SimTime,
}

/// Completed messages, indexed by message id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTimeline {
    pub completions: Vec<Completion>,
}

impl EventTimeline {
    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn end(&self) -> Result<SimTime> {
        self.completions
            .iter()
            .map(|c| c.completion)
            .max()
            .ok_or_else(|| Error::invalid("empty timeline"))
    }

    pub fn start(&self) -> Result<SimTime> {
        self.completions
            .iter()
            .map(|c| c.send_start)
            .min()
            .ok_or_else(|| Error::invalid("empty timeline"))
    }

    /// Last completion minus the earliest send start.
    pub fn makespan(&self) -> Result<SimTime> {
        Ok(self.end()? - self.start()?)
    }

    /// Last completion minus an explicit origin.
    pub fn makespan_from(&self, origin: SimTime) -> Result<SimTime> {
        Ok(self.end()? - origin)
    }

    pub fn total_size(&self) -> SimTime {
        self.completions.iter().map(|c| c.size).sum()
    }

    pub fn by_tag(&self, tag: &str) -> Option<&Completion> {
        self.completions.iter().find(|c| c.tag == tag)
    }

    /// `[send_start, completion)` intervals on `w`'s send channel, sorted.
    pub fn send_intervals(&self, w: WorkerId) -> Vec<(SimTime, SimTime)> {
        let mut v: Vec<_> = self
            .completions
            .iter()
            .filter(|c| c.src == w)
            .map(|c| (c.send_start, c.completion))
            .collect();
        v.sort();
        v
    }

    /// `[first_bit, completion)` intervals on `w`'s receive channel, sorted.
    pub fn recv_intervals(&self, w: WorkerId) -> Vec<(SimTime, SimTime)> {
        let mut v: Vec<_> = self
            .completions
            .iter()
            .filter(|c| c.dst == w)
            .map(|c| (c.first_bit, c.completion))
            .collect();
        v.sort();
        v
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            tag: &'a str,
            src: WorkerId,
            dst: WorkerId,
            size: f64,
            send_start: f64,
            first_bit: f64,
            completion: f64,
        }
        let rows: Vec<Row> = self
            .completions
            .iter()
            .map(|c| Row {
                tag: &c.tag,
                src: c.src,
                dst: c.dst,
                size: c.size.to_f64(),
                send_start: c.send_start.to_f64(),
                first_bit: c.first_bit.to_f64(),
                completion: c.completion.to_f64(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,src,dst,send_start,first_bit,completion\n");
        for c in &self.completions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.tag, c.src, c.dst, c.send_start, c.first_bit, c.completion
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    ready: SimTime,
    issue: SimTime,
    src: WorkerId,
    tag: String,
    id: MessageId,
}

/// Incremental simulator: requests may be submitted while time advances, so
/// callers can react to completions (e.g. an asynchronous parameter server).
#[derive(Clone, Debug)]
pub struct Simulator {
    params: NetworkParams,
    now: SimTime,
    send_free: Vec<SimTime>,
    recv_free: Vec<SimTime>,
    requests: Vec<SendRequest>,
    waiting: BTreeSet<QueueKey>,
    in_flight: BTreeSet<(SimTime, MessageId)>,
    records: Vec<Option<Completion>>,
}

impl Simulator {
    pub fn new(params: NetworkParams) -> Result<Self> {
        params.validate()?;
        Ok(Simulator {
            params,
            now: SimTime::ZERO,
            send_free: vec![SimTime::ZERO; params.workers],
            recv_free: vec![SimTime::ZERO; params.workers],
            requests: Vec::new(),
            waiting: BTreeSet::new(),
            in_flight: BTreeSet::new(),
            records: Vec::new(),
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    fn check(&self, req: &SendRequest) -> Result<()> {
        let n = self.params.workers;
        if req.src >= n || req.dst >= n {
            return Err(Error::InvalidRequest(format!(
                "{}: worker id out of range ({} -> {}, {} workers)",
                req.tag, req.src, req.dst, n
            )));
        }
        if req.src == req.dst {
            return Err(Error::InvalidRequest(format!("{}: src equals dst", req.tag)));
        }
        if req.size.is_negative() {
            return Err(Error::InvalidRequest(format!("{}: negative size", req.tag)));
        }
        if req.issue_time.is_negative() {
            return Err(Error::InvalidRequest(format!("{}: negative issue time", req.tag)));
        }
        Ok(())
    }

    /// Queues a message that becomes ready at `max(issue_time, ready_at, now)`.
    /// Dependencies are ignored here; see [`simulate`].
    pub fn submit(&mut self, req: SendRequest, ready_at: SimTime) -> Result<MessageId> {
        self.check(&req)?;
        let id = self.requests.len();
        let ready = req.issue_time.max(ready_at).max(self.now);
        self.waiting.insert(QueueKey {
            ready,
            issue: req.issue_time,
            src: req.src,
            tag: req.tag.clone(),
            id,
        });
        self.requests.push(req);
        self.records.push(None);
        Ok(id)
    }

    fn start_ready(&mut self) {
        let mut seen = vec![false; self.params.workers];
        let mut started = Vec::new();
        for key in self.waiting.iter() {
            if key.ready > self.now {
                break;
            }
            if seen[key.src] {
                continue;
            }
            seen[key.src] = true;
            let req = &self.requests[key.id];
            if self.send_free[req.src] <= self.now && self.recv_free[req.dst] <= self.now {
                let first_bit = self.now + self.params.t_latency;
                let completion = first_bit + req.size * self.params.t_transfer_per_unit;
                self.send_free[req.src] = completion;
                self.recv_free[req.dst] = completion;
                self.records[key.id] = Some(Completion {
                    id: key.id,
                    tag: req.tag.clone(),
                    src: req.src,
                    dst: req.dst,
                    size: req.size,
                    send_start: self.now,
                    first_bit,
                    completion,
                });
                self.in_flight.insert((completion, key.id));
                started.push(key.clone());
            }
        }
        for key in started {
            self.waiting.remove(&key);
        }
    }

    /// Starts everything startable at the current instant, then advances to
    /// the next completion instant and returns every message completing then.
    /// Returns `None` once the network is idle with nothing queued.
    pub fn advance(&mut self) -> Result<Option<Vec<Completion>>> {
        loop {
            self.start_ready();
            let next_done = self.in_flight.iter().next().map(|(t, _)| *t);
            let next_ready = self
                .waiting
                .iter()
                .map(|k| k.ready)
                .filter(|r| *r > self.now)
                .min();
            match (next_done, next_ready) {
                (None, None) => {
                    if self.waiting.is_empty() {
                        return Ok(None);
                    }
                    return Err(Error::Stalled {
                        pending: self.waiting.len(),
                    });
                }
                (Some(done), ready) if ready.is_none_or(|r| done <= r) => {
                    self.now = done;
                    let mut out = Vec::new();
                    while let Some(&(t, id)) = self.in_flight.iter().next() {
                        if t != done {
                            break;
                        }
                        self.in_flight.remove(&(t, id));
                        out.push(self.records[id].clone().expect("started message has a record"));
                    }
                    return Ok(Some(out));
                }
                (_, Some(ready)) => self.now = ready,
                (Some(_), None) => unreachable!(),
            }
        }
    }

    /// Runs until idle and returns the timeline so far.
    pub fn run_to_idle(&mut self) -> Result<EventTimeline> {
        while self.advance()?.is_some() {}
        Ok(self.timeline())
    }

    pub fn timeline(&self) -> EventTimeline {
        EventTimeline {
            completions: self.records.iter().flatten().cloned().collect(),
        }
    }
}

/// Simulates a batch of requests. A request with dependencies becomes ready
/// at the later of its issue time and the completion of its last dependency.
pub fn simulate(params: NetworkParams, requests: &[SendRequest]) -> Result<EventTimeline> {
    let mut sim = Simulator::new(params)?;
    let n = requests.len();
    let mut remaining = vec![0usize; n];
    let mut dependents = vec![Vec::new(); n];
    let mut ready_at = vec![SimTime::ZERO; n];
    for (i, req) in requests.iter().enumerate() {
        sim.check(req)?;
        for &d in &req.deps {
            if d >= n || d == i {
                return Err(Error::InvalidRequest(format!("{}: bad dependency {d}", req.tag)));
            }
            dependents[d].push(i);
        }
        remaining[i] = req.deps.len();
    }
    // simulator ids follow submission order; map them back to batch indices
    let mut batch_of = Vec::with_capacity(n);
    for i in 0..n {
        if remaining[i] == 0 {
            sim.submit(requests[i].clone(), SimTime::ZERO)?;
            batch_of.push(i);
        }
    }
    let mut done = 0;
    while let Some(completions) = sim.advance()? {
        for c in completions {
            done += 1;
            let i = batch_of[c.id];
            for &j in &dependents[i] {
                ready_at[j] = ready_at[j].max(c.completion);
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    sim.submit(requests[j].clone(), ready_at[j])?;
                    batch_of.push(j);
                }
            }
        }
    }
    if done < n {
        return Err(Error::Stalled { pending: n - done });
    }
    let mut completions = vec![None; n];
    for mut c in sim.timeline().completions {
        let i = batch_of[c.id];
        c.id = i;
        completions[i] = Some(c);
    }
    Ok(EventTimeline {
        completions: completions.into_iter().map(|c| c.expect("all requests completed")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: i64) -> SimTime {
        SimTime::from_integer(n)
    }

    fn example_params() -> NetworkParams {
        NetworkParams::new(SimTime::new(3, 2), t(5), 3)
    }

    fn example_requests(size: SimTime) -> Vec<SendRequest> {
        vec![
            SendRequest::new(t(5), 0, 1, size, "A"),
            SendRequest::new(t(6), 1, 0, size, "B"),
            SendRequest::new(t(6), 2, 0, size, "C"),
        ]
    }

    #[test]
    fn example_timeline() {
        let tl = simulate(example_params(), &example_requests(t(1))).unwrap();
        assert_eq!(tl.by_tag("A").unwrap().completion, SimTime::new(23, 2));
        assert_eq!(tl.by_tag("B").unwrap().completion, SimTime::new(25, 2));
        assert_eq!(tl.by_tag("C").unwrap().send_start, SimTime::new(25, 2));
        assert_eq!(tl.makespan().unwrap(), t(14));
        let half = simulate(example_params(), &example_requests(SimTime::new(1, 2))).unwrap();
        assert_eq!(half.makespan().unwrap(), t(9));
    }

    #[test]
    fn single_message() {
        let p = NetworkParams::new(t(2), t(3), 2);
        let tl = simulate(p, &[SendRequest::new(t(1), 0, 1, t(4), "m")]).unwrap();
        assert_eq!(tl.completions[0].completion, t(1 + 2 + 12));
        assert_eq!(tl.makespan().unwrap(), t(14));
    }

    #[test]
    fn disjoint_pairs_run_in_parallel() {
        let p = NetworkParams::new(t(1), t(1), 4);
        let tl = simulate(
            p,
            &[
                SendRequest::new(t(0), 0, 1, t(2), "a"),
                SendRequest::new(t(0), 2, 3, t(2), "b"),
            ],
        )
        .unwrap();
        assert!(tl.completions.iter().all(|c| c.completion == t(3)));
    }

    #[test]
    fn rejects_bad_requests() {
        let p = NetworkParams::new(t(1), t(1), 2);
        assert!(simulate(p, &[SendRequest::new(t(0), 0, 0, t(1), "x")]).is_err());
        assert!(simulate(p, &[SendRequest::new(t(0), 0, 1, t(-1), "x")]).is_err());
        assert!(simulate(p, &[SendRequest::new(t(0), 0, 2, t(1), "x")]).is_err());
        let cyc = vec![
            SendRequest::new(t(0), 0, 1, t(1), "x").after([1]),
            SendRequest::new(t(0), 1, 0, t(1), "y").after([0]),
        ];
        assert!(matches!(simulate(p, &cyc), Err(Error::Stalled { pending: 2 })));
    }

    #[test]
    fn dependencies_delay_start() {
        let p = NetworkParams::new(t(1), t(1), 3);
        let tl = simulate(
            p,
            &[
                SendRequest::new(t(0), 0, 1, t(1), "first"),
                SendRequest::new(t(0), 1, 2, t(1), "second").after([0]),
            ],
        )
        .unwrap();
        assert_eq!(tl.completions[1].send_start, t(2));
        assert_eq!(tl.makespan().unwrap(), t(4));
    }

    #[test]
    fn fifo_per_source() {
        let p = NetworkParams::new(t(0), t(1), 3);
        let tl = simulate(
            p,
            &[
                SendRequest::new(t(0), 0, 1, t(2), "b"),
                SendRequest::new(t(0), 0, 2, t(2), "a"),
            ],
        )
        .unwrap();
        assert_eq!(tl.by_tag("a").unwrap().send_start, t(0));
        assert_eq!(tl.by_tag("b").unwrap().send_start, t(2));
    }

    #[test]
    fn timeline_exports() {
        let tl = simulate(example_params(), &example_requests(t(1))).unwrap();
        let csv = tl.to_csv();
        assert!(csv.starts_with("tag,src,dst,send_start,first_bit,completion\n"));
        assert_eq!(csv.lines().count(), 4);
        let json: serde_json::Value = serde_json::from_str(&tl.to_json().unwrap()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 3);
    }
}
