//! Asynchronous SGD through a single parameter server (node `N`).
//!
//! Each worker loops: fetch the model, compute a gradient, push it. The
//! server applies pushed gradients atomically. A fetch snapshots the model
//! version `D` when the server enqueues it, so a gradient's staleness is the
//! number of updates applied between its enqueue and its own application.
//!
//! Staleness is bounded by gating. With the outstanding gradients sorted by
//! `D`, the server keeps the state *safe*: applying them in that order from
//! the current version `t` would give every one staleness at most `tau`, i.e.
//! `t + (p - 1) - D_p <= tau` for every position `p`. Fetches and applies that
//! would break this are held and retried after the next update. The oldest
//! outstanding gradient can always be applied, so the gate never deadlocks.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::netsim::{Completion, EventTimeline, SendRequest, Simulator};
use crate::objective::Objective;
use crate::time::SimTime;
use crate::vecops::{self, ParamVector};

use super::metrics::Recorder;
use super::{LrRule, RunMetrics, Setup, TrainerConfig};

struct Outstanding {
    fetch: usize,
    version: usize,
}

fn is_safe(t: usize, versions: &mut [usize], tau: usize) -> bool {
    versions.sort_unstable();
    versions.iter().enumerate().all(|(p, &d)| t + p <= d + tau)
}

struct Server {
    t: usize,
    tau: usize,
    outstanding: Vec<Outstanding>,
}

impl Server {
    fn versions_without(&self, fetch: Option<usize>) -> Vec<usize> {
        self.outstanding
            .iter()
            .filter(|o| Some(o.fetch) != fetch)
            .map(|o| o.version)
            .collect()
    }

    fn may_fetch(&self) -> bool {
        let mut v = self.versions_without(None);
        v.push(self.t);
        is_safe(self.t, &mut v, self.tau)
    }

    fn may_apply(&self, fetch: usize, version: usize) -> bool {
        let mut rest = self.versions_without(Some(fetch));
        self.t <= version + self.tau && is_safe(self.t + 1, &mut rest, self.tau)
    }
}

pub fn run_asgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let n = cfg.workers;
    let total = cfg.iterations;
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()?),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Asgd, inputs)?;

    let units = cfg.network.unit_per_element * SimTime::from_integer(s.dim() as i64);
    let sizes = s.sizes(crate::compression::Compressor::Identity);
    let server_id = n;
    let mut sim = Simulator::new(s.network(n + 1))?;
    let mut server = Server {
        t: 0,
        tau: cfg.tau.expect("validated"),
        outstanding: Vec::new(),
    };
    let mut history: Vec<ParamVector> = vec![s.x0()?];
    let mut x = history[0].clone();
    // worker -> (fetch id, version, gradient) for in-flight pushes
    let mut pushing: Vec<Option<(usize, usize, ParamVector)>> = vec![None; n];
    // fetch message id -> (worker, version)
    let mut fetch_of: Vec<Option<(usize, usize)>> = Vec::new();
    // (fetch id, version, gradient) received but not yet applied
    let mut held: Vec<(usize, usize, ParamVector)> = Vec::new();
    let mut waiting: VecDeque<usize> = (0..n).collect();
    let mut issued = 0usize;
    let mut rounds = vec![0usize; n];
    let mut staleness = Vec::with_capacity(total);
    let mut completed_units = SimTime::ZERO;
    let mut rec = Recorder::new(obj);

    let try_fetches = |sim: &mut Simulator,
                           server: &mut Server,
                           waiting: &mut VecDeque<usize>,
                           fetch_of: &mut Vec<Option<(usize, usize)>>,
                           issued: &mut usize,
                           rounds: &mut [usize]|
     -> Result<()> {
        let mut still = VecDeque::new();
        while let Some(w) = waiting.pop_front() {
            if *issued >= total {
                continue;
            }
            if !server.may_fetch() {
                still.push_back(w);
                continue;
            }
            let now = sim.now();
            let id = sim.submit(
                SendRequest::new(now, server_id, w, units, format!("fetch/w{w:03}/r{:06}", rounds[w])),
                now,
            )?;
            if fetch_of.len() <= id {
                fetch_of.resize(id + 1, None);
            }
            fetch_of[id] = Some((w, server.t));
            server.outstanding.push(Outstanding {
                fetch: id,
                version: server.t,
            });
            *issued += 1;
        }
        *waiting = still;
        Ok(())
    };

    try_fetches(&mut sim, &mut server, &mut waiting, &mut fetch_of, &mut issued, &mut rounds)?;
    while server.t < total {
        let Some(mut batch) = sim.advance()? else {
            return Err(Error::Config(format!(
                "asgd stalled after {} of {total} updates ({} gradients outstanding, tau = {})",
                server.t,
                server.outstanding.len(),
                server.tau
            )));
        };
        let worker_of = |c: &Completion| if c.src == server_id { c.dst } else { c.src };
        batch.sort_by_key(|c| (c.src == server_id, worker_of(c)));
        for c in &batch {
            completed_units += c.size;
        }
        rec.clock = sim.now();
        rec.bytes = sizes.bytes_of(completed_units);
        for c in batch {
            if c.src == server_id {
                let (w, version) = fetch_of[c.id].expect("fetch was recorded");
                let g = s.gradient(w, &history[version])?;
                pushing[w] = Some((c.id, version, g));
                let ready = c.completion + cfg.network.compute_time_of(w);
                sim.submit(
                    SendRequest::new(c.completion, w, server_id, units, format!("push/w{w:03}/r{:06}", rounds[w])),
                    ready,
                )?;
                rounds[w] += 1;
            } else {
                let w = c.src;
                let (fetch, version, g) = pushing[w].take().expect("push was recorded");
                held.push((fetch, version, g));
                waiting.push_back(w);
            }
        }
        // apply held gradients in arrival order while the state stays safe
        loop {
            let pos = held
                .iter()
                .position(|(f, v, _)| server.t < total && server.may_apply(*f, *v));
            let Some(pos) = pos else { break };
            let (fetch, version, g) = held.remove(pos);
            staleness.push(server.t - version);
            vecops::step(&mut x, gamma, &g);
            server.t += 1;
            server.outstanding.retain(|o| o.fetch != fetch);
            history.push(x.clone());
            rec.record(&x, 0.0)?;
        }
        if server.t < total {
            try_fetches(&mut sim, &mut server, &mut waiting, &mut fetch_of, &mut issued, &mut rounds)?;
        }
    }

    let end = sim.now();
    let timeline = EventTimeline {
        completions: sim
            .timeline()
            .completions
            .into_iter()
            .filter(|c| c.completion <= end)
            .collect(),
    };
    let mut m = s.finish(gamma, rec);
    m.staleness = staleness;
    m.comm_rounds = timeline.len();
    m.total_comm_time = end;
    m.eta = Some(SimTime::from_integer(1));
    m.timeline = Some(timeline);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safety_predicate() {
        assert!(is_safe(3, &mut [0, 1, 2], 3));
        assert!(!is_safe(3, &mut [0, 1, 2], 2));
        assert!(is_safe(5, &mut [], 0));
    }
}
