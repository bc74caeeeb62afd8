//! Communication schedules for synchronous aggregation and neighbour exchange.
//!
//! Each collective produces a list of [`SendRequest`]s with dependencies, the
//! values every worker ends up holding, and a closed-form cost. The netsim
//! makespan of every schedule here equals its closed form exactly.
//!
//! Partitioned schedules split the vector into `W` chunks whose sizes differ
//! by at most one element; every chunk message is sized as the largest chunk
//! so that all hops of a step take the same time.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::compression::Compressor;
use crate::error::{Error, Result};
use crate::netsim::{self, EventTimeline, NetworkParams, SendRequest};
use crate::rng::Rng;
use crate::time::SimTime;
use crate::topology::ConfusionMatrix;
use crate::vecops::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectiveKind {
    PsSingle,
    AllreduceRingPartitioned,
    AllreduceRingUnpartitioned,
    PsMulti,
    DecentralizedRing,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 5] = [
        CollectiveKind::PsSingle,
        CollectiveKind::AllreduceRingPartitioned,
        CollectiveKind::AllreduceRingUnpartitioned,
        CollectiveKind::PsMulti,
        CollectiveKind::DecentralizedRing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CollectiveKind::PsSingle => "ps-single",
            CollectiveKind::AllreduceRingPartitioned => "allreduce-ring-partitioned",
            CollectiveKind::AllreduceRingUnpartitioned => "allreduce-ring-unpartitioned",
            CollectiveKind::PsMulti => "ps-multi",
            CollectiveKind::DecentralizedRing => "decentralized-ring",
        }
    }

    pub fn is_partitioned(self) -> bool {
        matches!(
            self,
            CollectiveKind::AllreduceRingPartitioned | CollectiveKind::PsMulti
        )
    }

    /// Sum collectives leave `S = sum_n w_n` on every worker.
    pub fn is_sum(self) -> bool {
        self != CollectiveKind::DecentralizedRing
    }

    pub fn min_workers(self) -> usize {
        match self {
            CollectiveKind::DecentralizedRing => 3,
            _ => 2,
        }
    }

    /// Checks the worker count and, for partitioned kinds, an explicit
    /// partition count (which must equal the worker count).
    pub fn validate(self, workers: usize, partition_count: Option<usize>) -> Result<()> {
        if workers < self.min_workers() {
            return Err(Error::invalid(format!(
                "{} needs at least {} workers, got {workers}",
                self.label(),
                self.min_workers()
            )));
        }
        if let Some(p) = partition_count {
            if !self.is_partitioned() {
                return Err(Error::invalid(format!("{} is not partitioned", self.label())));
            }
            if p != workers {
                return Err(Error::invalid(format!(
                    "partition count {p} must equal worker count {workers}"
                )));
            }
        }
        Ok(())
    }
}

/// Converts element counts into netsim size units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeModel {
    pub unit_per_element: SimTime,
    pub compressor: Compressor,
}

impl SizeModel {
    pub fn raw(unit_per_element: SimTime) -> Self {
        SizeModel {
            unit_per_element,
            compressor: Compressor::Identity,
        }
    }

    pub fn compressed(unit_per_element: SimTime, compressor: Compressor) -> Self {
        SizeModel {
            unit_per_element,
            compressor,
        }
    }

    pub fn eta(&self, len: usize) -> Result<SimTime> {
        self.compressor.ratio(len)
    }

    /// `eta * len * unit_per_element`.
    pub fn message_units(&self, len: usize) -> Result<SimTime> {
        Ok(self.eta(len)? * SimTime::from_integer(len as i64) * self.unit_per_element)
    }

    /// Raw 32-bit payload bytes equivalent of `units`.
    pub fn bytes_of(&self, units: SimTime) -> SimTime {
        if self.unit_per_element.is_zero() {
            return SimTime::ZERO;
        }
        units / self.unit_per_element * SimTime::from_integer(4)
    }
}

/// Chunk `p` of `parts` near-equal contiguous chunks of `0..dim`.
pub fn partition_bounds(dim: usize, parts: usize) -> Vec<Range<usize>> {
    let base = dim / parts;
    let extra = dim % parts;
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Element count of every chunk message (the largest chunk, at least one).
pub fn padded_chunk(dim: usize, parts: usize) -> usize {
    dim.div_ceil(parts).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// Network endpoints (workers, plus the server for `ps-single`).
    pub nodes: usize,
    pub requests: Vec<SendRequest>,
}

/// Message schedule of one collective round over a `dim`-element vector.
pub fn schedule(kind: CollectiveKind, workers: usize, dim: usize, sizes: &SizeModel) -> Result<Schedule> {
    kind.validate(workers, None)?;
    if dim == 0 {
        return Err(Error::invalid("vector must have at least one element"));
    }
    let w = workers;
    let zero = SimTime::ZERO;
    let mut reqs = Vec::new();
    let nodes = match kind {
        CollectiveKind::PsSingle => {
            let size = sizes.message_units(dim)?;
            for j in 0..w {
                reqs.push(SendRequest::new(zero, j, w, size, format!("up/w{j:03}")));
            }
            for j in 0..w {
                reqs.push(SendRequest::new(zero, w, j, size, format!("down/w{j:03}")).after(0..w));
            }
            w + 1
        }
        CollectiveKind::AllreduceRingPartitioned => {
            let size = sizes.message_units(padded_chunk(dim, w))?;
            for p in 0..w {
                let mut prev: Option<usize> = None;
                for s in 0..w - 1 {
                    let req = SendRequest::new(zero, (p + s) % w, (p + s + 1) % w, size, format!("rs/p{p:03}/h{s:03}"));
                    prev = Some(push_chain(&mut reqs, req, prev));
                }
                for s in 0..w - 1 {
                    let req = SendRequest::new(
                        zero,
                        (p + w - 1 + s) % w,
                        (p + w + s) % w,
                        size,
                        format!("ag/p{p:03}/h{s:03}"),
                    );
                    prev = Some(push_chain(&mut reqs, req, prev));
                }
            }
            w
        }
        CollectiveKind::AllreduceRingUnpartitioned => {
            let size = sizes.message_units(dim)?;
            let mut prev = None;
            for s in 0..w - 1 {
                let req = SendRequest::new(zero, s, s + 1, size, format!("reduce/h{s:03}"));
                prev = Some(push_chain(&mut reqs, req, prev));
            }
            for s in 0..w - 1 {
                let req = SendRequest::new(zero, (w - 1 + s) % w, s % w, size, format!("bcast/h{s:03}"));
                prev = Some(push_chain(&mut reqs, req, prev));
            }
            w
        }
        CollectiveKind::PsMulti => {
            let size = sizes.message_units(padded_chunk(dim, w))?;
            let mut into: Vec<Vec<usize>> = vec![Vec::new(); w];
            for k in 1..w {
                for j in 0..w {
                    let owner = (j + k) % w;
                    into[owner].push(reqs.len());
                    reqs.push(SendRequest::new(zero, j, owner, size, format!("psm-up/k{k:03}/w{j:03}")));
                }
            }
            for k in 1..w {
                for o in 0..w {
                    reqs.push(
                        SendRequest::new(zero, o, (o + k) % w, size, format!("psm-down/k{k:03}/o{o:03}"))
                            .after(into[o].iter().copied()),
                    );
                }
            }
            w
        }
        CollectiveKind::DecentralizedRing => {
            let size = sizes.message_units(dim)?;
            for n in 0..w {
                reqs.push(SendRequest::new(zero, n, (n + 1) % w, size, format!("dec/0-right/w{n:03}")));
            }
            for n in 0..w {
                reqs.push(SendRequest::new(zero, n, (n + w - 1) % w, size, format!("dec/1-left/w{n:03}")));
            }
            w
        }
    };
    Ok(Schedule { nodes, requests: reqs })
}

fn push_chain(reqs: &mut Vec<SendRequest>, req: SendRequest, prev: Option<usize>) -> usize {
    reqs.push(req.after(prev));
    reqs.len() - 1
}

/// Each worker sends its model to every neighbour `j != n` with `W[n][j] > 0`,
/// visiting neighbours in offset order `n+1, n+2, ...` (mod N).
pub fn neighbor_schedule(matrix: &ConfusionMatrix, dim: usize, sizes: &SizeModel) -> Result<Schedule> {
    let n = matrix.size();
    let size = sizes.message_units(dim)?;
    let mut reqs = Vec::new();
    for k in 1..n {
        for i in 0..n {
            let j = (i + k) % n;
            if matrix.get(i, j) > 0.0 {
                reqs.push(SendRequest::new(SimTime::ZERO, i, j, size, format!("nbr/k{k:03}/w{i:03}")));
            }
        }
    }
    Ok(Schedule { nodes: n, requests: reqs })
}

/// Closed-form cost of one round. `vector_units` is the size of the whole
/// vector; `eta` scales only the transfer term.
pub fn closed_form_cost(
    kind: CollectiveKind,
    workers: usize,
    vector_units: SimTime,
    params: &NetworkParams,
    eta: SimTime,
) -> Result<SimTime> {
    kind.validate(workers, None)?;
    if eta <= SimTime::ZERO {
        return Err(Error::invalid("compression ratio must be positive"));
    }
    let w = workers as i64;
    let lat = params.t_latency;
    let tr = eta * vector_units * params.t_transfer_per_unit;
    Ok(match kind {
        CollectiveKind::PsSingle => (lat + tr) * (2 * w),
        CollectiveKind::AllreduceRingPartitioned | CollectiveKind::PsMulti => {
            lat * (2 * (w - 1)) + tr * SimTime::new(2 * (w - 1), w)
        }
        CollectiveKind::AllreduceRingUnpartitioned => (lat + tr) * (2 * (w - 1)),
        CollectiveKind::DecentralizedRing => (lat + tr) * 2,
    })
}

/// Total communication of K-step averaging over `iterations` steps.
pub fn k_step_comm_cost(iterations: usize, k: usize, per_round: SimTime) -> Result<SimTime> {
    if k == 0 {
        return Err(Error::invalid("averaging period must be at least 1"));
    }
    Ok(per_round * iterations.div_ceil(k) as i64)
}

/// Closed-form inputs `(vector_units, eta)` matching how [`schedule`] sizes
/// its messages.
pub fn closed_form_inputs(kind: CollectiveKind, workers: usize, dim: usize, sizes: &SizeModel) -> Result<(SimTime, SimTime)> {
    if kind.is_partitioned() {
        let c = padded_chunk(dim, workers);
        Ok((
            sizes.unit_per_element * SimTime::from_integer((c * workers) as i64),
            sizes.eta(c)?,
        ))
    } else {
        Ok((sizes.unit_per_element * SimTime::from_integer(dim as i64), sizes.eta(dim)?))
    }
}

/// Timing of one round: the timeline, its makespan and the closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundCost {
    pub timeline: EventTimeline,
    pub simulated_cost: SimTime,
    pub closed_form_cost: SimTime,
    pub total_units: SimTime,
}

pub fn round_cost(
    kind: CollectiveKind,
    workers: usize,
    dim: usize,
    params: &NetworkParams,
    sizes: &SizeModel,
) -> Result<RoundCost> {
    let sched = schedule(kind, workers, dim, sizes)?;
    let timeline = netsim::simulate(params.with_workers(sched.nodes), &sched.requests)?;
    let (v, eta) = closed_form_inputs(kind, workers, dim, sizes)?;
    Ok(RoundCost {
        simulated_cost: timeline.makespan_from(SimTime::ZERO)?,
        closed_form_cost: closed_form_cost(kind, workers, v, params, eta)?,
        total_units: timeline.total_size(),
        timeline,
    })
}

fn check_inputs(kind: CollectiveKind, inputs: &[ParamVector]) -> Result<usize> {
    kind.validate(inputs.len(), None)?;
    let dim = inputs[0].len();
    if dim == 0 {
        return Err(Error::invalid("vector must have at least one element"));
    }
    if let Some(bad) = inputs.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(dim)
}

/// Values each worker holds after the collective, reduced in schedule order:
/// ring chunk `p` accumulates starting at worker `p`, the unpartitioned ring
/// and parameter servers accumulate workers `0..W` in order.
pub fn reduce(kind: CollectiveKind, inputs: &[ParamVector]) -> Result<Vec<ParamVector>> {
    let dim = check_inputs(kind, inputs)?;
    let w = inputs.len();
    let canonical = || {
        let mut acc = inputs[0].clone();
        for v in &inputs[1..] {
            crate::vecops::add_assign(&mut acc, v);
        }
        acc
    };
    Ok(match kind {
        CollectiveKind::PsSingle | CollectiveKind::PsMulti | CollectiveKind::AllreduceRingUnpartitioned => {
            vec![canonical(); w]
        }
        CollectiveKind::AllreduceRingPartitioned => {
            let mut s = vec![0.0; dim];
            for (p, range) in partition_bounds(dim, w).into_iter().enumerate() {
                for i in range {
                    let mut acc = inputs[p][i];
                    for step in 1..w {
                        acc += inputs[(p + step) % w][i];
                    }
                    s[i] = acc;
                }
            }
            vec![s; w]
        }
        CollectiveKind::DecentralizedRing => {
            let third = 1.0 / 3.0;
            (0..w)
                .map(|n| {
                    let mut acc = vec![0.0; dim];
                    for (j, v) in inputs.iter().enumerate() {
                        if j == n || j == (n + 1) % w || j == (n + w - 1) % w {
                            for (a, x) in acc.iter_mut().zip(v) {
                                *a += third * x;
                            }
                        }
                    }
                    acc
                })
                .collect()
        }
    })
}

/// The sum `S` a sum collective leaves on every worker, in schedule order.
pub fn sum(kind: CollectiveKind, inputs: &[ParamVector]) -> Result<ParamVector> {
    if !kind.is_sum() {
        return Err(Error::invalid(format!("{} is not a sum collective", kind.label())));
    }
    Ok(reduce(kind, inputs)?.swap_remove(0))
}

/// `sum / N` elementwise.
pub fn average(kind: CollectiveKind, inputs: &[ParamVector]) -> Result<ParamVector> {
    let n = inputs.len() as f64;
    let mut s = sum(kind, inputs)?;
    s.iter_mut().for_each(|v| *v /= n);
    Ok(s)
}

/// Compressed average of the inputs.
///
/// Parameter servers compute `Q((1/N) sum_n Q(w_n))` (per chunk for
/// `ps-multi`); rings re-compress the running sum at every hop and once more
/// before the allgather, then divide by `N`. `rngs[n]` drives worker `n`'s
/// compressions; `server_rng` drives the single server.
pub fn compressed_mean(
    kind: CollectiveKind,
    inputs: &[ParamVector],
    compressor: &Compressor,
    rngs: &mut [Rng],
    server_rng: &mut Rng,
) -> Result<ParamVector> {
    let dim = check_inputs(kind, inputs)?;
    let w = inputs.len();
    if rngs.len() != w {
        return Err(Error::DimensionMismatch {
            expected: w,
            actual: rngs.len(),
        });
    }
    let nf = w as f64;
    let ps_chunk = |range: Range<usize>, rngs: &mut [Rng], owner: &mut Rng| -> Result<ParamVector> {
        let mut acc = vec![0.0; range.len()];
        for (n, v) in inputs.iter().enumerate() {
            let q = compressor.compress(&v[range.clone()], &mut rngs[n])?;
            crate::vecops::add_assign(&mut acc, &q);
        }
        acc.iter_mut().for_each(|a| *a /= nf);
        compressor.compress(&acc, owner)
    };
    let ring_chunk = |range: Range<usize>, start: usize, rngs: &mut [Rng]| -> Result<ParamVector> {
        let mut acc = compressor.compress(&inputs[start][range.clone()], &mut rngs[start])?;
        for step in 1..w {
            let n = (start + step) % w;
            crate::vecops::add_assign(&mut acc, &inputs[n][range.clone()]);
            acc = compressor.compress(&acc, &mut rngs[n])?;
        }
        acc.iter_mut().for_each(|a| *a /= nf);
        Ok(acc)
    };
    match kind {
        CollectiveKind::PsSingle => ps_chunk(0..dim, rngs, server_rng),
        CollectiveKind::AllreduceRingUnpartitioned => ring_chunk(0..dim, 0, rngs),
        CollectiveKind::PsMulti | CollectiveKind::AllreduceRingPartitioned => {
            let mut out = Vec::with_capacity(dim);
            for (p, range) in partition_bounds(dim, w).into_iter().enumerate() {
                if range.is_empty() {
                    continue;
                }
                let chunk = if kind == CollectiveKind::PsMulti {
                    let mut owner = rngs[p].clone();
                    let c = ps_chunk(range, rngs, &mut owner)?;
                    rngs[p] = owner;
                    c
                } else {
                    ring_chunk(range, p, rngs)?
                };
                out.extend(chunk);
            }
            Ok(out)
        }
        CollectiveKind::DecentralizedRing => {
            Err(Error::invalid("decentralized-ring is not a sum collective"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveOutcome {
    pub results: Vec<ParamVector>,
    pub timeline: EventTimeline,
    pub closed_form_cost: SimTime,
    pub simulated_cost: SimTime,
}

/// Runs one round: exact (uncompressed) values plus timing under `sizes`,
/// whose compressor affects message sizes only.
pub fn run_collective(
    kind: CollectiveKind,
    inputs: &[ParamVector],
    params: &NetworkParams,
    sizes: &SizeModel,
) -> Result<CollectiveOutcome> {
    let dim = check_inputs(kind, inputs)?;
    let results = reduce(kind, inputs)?;
    let cost = round_cost(kind, inputs.len(), dim, params, sizes)?;
    Ok(CollectiveOutcome {
        results,
        timeline: cost.timeline,
        closed_form_cost: cost.closed_form_cost,
        simulated_cost: cost.simulated_cost,
    })
}
