use proptest::prelude::*;
use sgdlab::collectives::{self, reduce, round_cost, schedule, CollectiveKind, SizeModel};
use sgdlab::compression::Compressor;
use sgdlab::netsim::{simulate, NetworkParams};
use sgdlab::SimTime;

/// Per-round cost written out from the switch model, independent of the
/// library's closed-form helper. Partitioned kinds send `ceil(d/W)`-element
/// chunks.
fn expected(kind: CollectiveKind, w: i64, d: i64, lat: SimTime, tr: SimTime) -> SimTime {
    let full = tr * d;
    let chunk = tr * ((d + w - 1) / w);
    match kind {
        CollectiveKind::PsSingle => (lat + full) * (2 * w),
        CollectiveKind::AllreduceRingPartitioned | CollectiveKind::PsMulti => (lat + chunk) * (2 * (w - 1)),
        CollectiveKind::AllreduceRingUnpartitioned => (lat + full) * (2 * (w - 1)),
        CollectiveKind::DecentralizedRing => (lat + full) * 2,
    }
}

#[test]
fn simulated_rounds_match_the_switch_model() {
    for (lat, tr) in [(SimTime::new(3, 2), SimTime::new(1, 4)), (SimTime::from_integer(1), SimTime::ZERO), (SimTime::ZERO, SimTime::new(2, 7))] {
        let params = NetworkParams::new(lat, tr, 1);
        for kind in CollectiveKind::ALL {
            for w in [2usize, 3, 4, 5, 8, 16] {
                if w < kind.min_workers() {
                    continue;
                }
                for d in [1usize, 4, 7, 64, 100] {
                    let c = round_cost(kind, w, d, &params, &SizeModel::raw(SimTime::from_integer(1))).unwrap();
                    let e = expected(kind, w as i64, d as i64, lat, tr);
                    assert_eq!(c.simulated_cost, e, "{} W={w} d={d}", kind.label());
                    assert_eq!(c.closed_form_cost, e, "{} W={w} d={d}", kind.label());
                }
            }
        }
    }
}

#[test]
fn divisible_sizes_match_the_textbook_forms() {
    let lat = SimTime::new(5, 3);
    let t_tr = SimTime::from_integer(12);
    for w in [2i64, 4, 8, 16] {
        let d = 16 * w;
        let params = NetworkParams::new(lat, t_tr / d, 1);
        let cost = |k| round_cost(k, w as usize, d as usize, &params, &SizeModel::raw(SimTime::from_integer(1))).unwrap().simulated_cost;
        assert_eq!(cost(CollectiveKind::PsSingle), (lat + t_tr) * (2 * w));
        let ring = lat * (2 * (w - 1)) + t_tr * SimTime::new(2 * (w - 1), w);
        assert_eq!(cost(CollectiveKind::AllreduceRingPartitioned), ring);
        assert_eq!(cost(CollectiveKind::PsMulti), ring);
        assert_eq!(cost(CollectiveKind::AllreduceRingUnpartitioned), (lat + t_tr) * (2 * (w - 1)));
    }
}

#[test]
fn k_step_total_is_rounds_times_per_round() {
    let per = SimTime::new(7, 2);
    assert_eq!(collectives::k_step_comm_cost(10, 3, per).unwrap(), per * 4);
    assert_eq!(collectives::k_step_comm_cost(9, 3, per).unwrap(), per * 3);
    assert_eq!(collectives::k_step_comm_cost(1, 5, per).unwrap(), per);
    assert!(collectives::k_step_comm_cost(5, 0, per).is_err());
}

#[test]
fn compressed_sizes_scale_the_transfer_term() {
    let params = NetworkParams::new(SimTime::from_integer(1), SimTime::new(1, 10), 1);
    let comp = Compressor::RandomizedQuantization { bits: 4 };
    let sizes = SizeModel::compressed(SimTime::from_integer(1), comp.clone());
    let c = round_cost(CollectiveKind::AllreduceRingPartitioned, 4, 256, &params, &sizes).unwrap();
    let eta = comp.ratio(64).unwrap();
    let e = (params.t_latency + params.t_transfer_per_unit * eta * 64) * 6;
    assert_eq!(c.simulated_cost, e);
    assert_eq!(c.closed_form_cost, e);
}

#[test]
fn partitioning_helps_once_the_vector_splits() {
    let sizes = SizeModel::raw(SimTime::from_integer(1));
    for w in [2usize, 4, 8, 16] {
        for d in [1usize, 2, 4, 64] {
            let p = NetworkParams::new(SimTime::from_integer(1), SimTime::new(1, 3), 1);
            let part = round_cost(CollectiveKind::AllreduceRingPartitioned, w, d, &p, &sizes).unwrap().simulated_cost;
            let whole = round_cost(CollectiveKind::AllreduceRingUnpartitioned, w, d, &p, &sizes).unwrap().simulated_cost;
            if d >= 2 {
                assert!(part < whole, "W={w} d={d}");
            } else {
                assert_eq!(part, whole);
            }
            let free = NetworkParams::new(SimTime::from_integer(1), SimTime::ZERO, 1);
            let a = round_cost(CollectiveKind::AllreduceRingPartitioned, w, d, &free, &sizes).unwrap().simulated_cost;
            let b = round_cost(CollectiveKind::AllreduceRingUnpartitioned, w, d, &free, &sizes).unwrap().simulated_cost;
            assert_eq!(a, b);
        }
    }
}

#[test]
fn ring_steps_keep_one_partition_per_channel() {
    let sizes = SizeModel::raw(SimTime::from_integer(1));
    for w in [2usize, 4, 8] {
        let s = schedule(CollectiveKind::AllreduceRingPartitioned, w, 4 * w, &sizes).unwrap();
        let params = NetworkParams::new(SimTime::from_integer(1), SimTime::from_integer(1), s.nodes);
        let tl = simulate(params, &s.requests).unwrap();
        let step = params.message_time(SimTime::from_integer(4));
        for n in 0..w {
            let sends = tl.send_intervals(n);
            let recvs = tl.recv_intervals(n);
            assert_eq!(sends.len(), 2 * (w - 1));
            assert_eq!(recvs.len(), 2 * (w - 1));
            // message k of every worker occupies exactly step k
            for (k, (a, b)) in sends.iter().enumerate() {
                assert_eq!(*a, step * k as i64);
                assert_eq!(*b, step * (k as i64 + 1));
            }
        }
    }
}

fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..9, 1usize..12).prop_flat_map(|(w, d)| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, d), w))
}

proptest! {
    #[test]
    fn sums_are_identical_on_every_worker(inputs in vectors()) {
        let w = inputs.len();
        let d = inputs[0].len();
        let canonical: Vec<f64> = (0..d).map(|i| inputs[1..].iter().fold(inputs[0][i], |acc, v| acc + v[i])).collect();
        for kind in [CollectiveKind::PsSingle, CollectiveKind::PsMulti, CollectiveKind::AllreduceRingUnpartitioned] {
            let r = reduce(kind, &inputs).unwrap();
            prop_assert!(r.iter().all(|v| v == &canonical));
        }
        let ring = reduce(CollectiveKind::AllreduceRingPartitioned, &inputs).unwrap();
        prop_assert!(ring.iter().all(|v| v == &ring[0]));
        for (p, range) in collectives::partition_bounds(d, w).into_iter().enumerate() {
            for i in range {
                let mut acc = inputs[p][i];
                for s in 1..w {
                    acc += inputs[(p + s) % w][i];
                }
                prop_assert_eq!(ring[0][i], acc);
            }
        }
    }

    #[test]
    fn partitions_cover_and_differ_by_at_most_one(d in 1usize..200, w in 1usize..20) {
        let parts = collectives::partition_bounds(d, w);
        prop_assert_eq!(parts.len(), w);
        prop_assert_eq!(parts[0].start, 0);
        prop_assert_eq!(parts[w - 1].end, d);
        prop_assert!(parts.windows(2).all(|p| p[0].end == p[1].start));
        let lens: Vec<usize> = parts.iter().map(|r| r.len()).collect();
        prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
    }
}
