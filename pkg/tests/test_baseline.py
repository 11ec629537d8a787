"""Cost-comparator behavior: echo broadcast delivery and byte scaling."""

from coded_mbrb.simnet import SimConfig, Simulation


def run_baseline(n, t=0, d=0, payload_len=1024, seed=21, behaviors=()):
    cfg = SimConfig(
        n=n, t=t, d=d, k=1, payload_len=payload_len, seed=seed,
        protocol="baseline", byzantine_behavior=behaviors,
    )
    sim = Simulation(cfg)
    return sim, sim.run_to_quiescence()


def test_everyone_delivers_without_faults():
    _, metrics = run_baseline(n=8)
    assert metrics.delivery_count == 8
    assert len(set(metrics.delivered.values())) == 1


def test_rebroadcasters_pay_at_least_n_times_payload():
    n, payload_len = 8, 1024
    _, metrics = run_baseline(n=n, payload_len=payload_len)
    for node, bits in metrics.bits_sent.items():
        # every node broadcast at least once: n copies of the payload
        assert bits >= (n - 1) * payload_len * 8


def test_at_most_two_broadcasts_per_node():
    _, metrics = run_baseline(n=8)
    assert all(v <= 2 for v in metrics.batches_sent.values())
    assert metrics.batches_sent[1] == 2  # sender: initial + echo


def test_per_node_bytes_scale_linearly_in_n():
    payload_len = 64 * 1024
    per_node = {}
    for n in (8, 16, 32):
        _, metrics = run_baseline(n=n, payload_len=payload_len, seed=33)
        per_node[n] = metrics.max_node_bits
    ratio = per_node[32] / per_node[8]
    assert 3.0 <= ratio <= 5.0


def test_crash_sender_delivers_nothing():
    _, metrics = run_baseline(n=8, t=1, behaviors=((1, "crash"),))
    assert metrics.delivery_count == 0


def test_delivery_under_single_drop():
    # Not a guarantee of the comparator, but the common case should work.
    _, metrics = run_baseline(n=8, t=0, d=1, payload_len=256, seed=5)
    assert metrics.delivery_count >= 6
    assert metrics.verdicts.global_delivery == "n.a."
    assert metrics.verdicts.local_delivery == "n.a."
