"""Deterministic discrete-event asynchronous network with a message adversary.

One Simulation owns n nodes (protocol or baseline state machines for correct
nodes, behavior objects for Byzantine ones), a seeded scheduler, and the
adversary. A correct node's send-to-all goes through `comm`, where the
adversary may drop up to d of the batch's messages addressed to *other*
correct recipients; the message a node addresses to itself is applied
synchronously and cannot be dropped. Byzantine nodes bypass `comm` and
unicast whatever they like, bounded only by a per-node message budget so
quiescence stays decidable.

Everything is driven by one 64-bit seed: payload bytes, adversary choices,
Byzantine randomness, and the scheduler's interleaving. The run produces a
line-oriented event log ("idx kind from to digest16") that replays
byte-identically for the same (config, seed).
"""

from __future__ import annotations

import dataclasses
import hashlib
import random
from dataclasses import dataclass, field

from . import metrics as metrics_mod
from .baseline import BaselineNodeState, EchoMessage
from .codec import RawMessage, message_digest16, message_size_bits, payload_digest16
from .crypto import MERKLE_SCHEME, VC_SCHEMES, Keyring, Signer
from .ecc import derive_params
from .metrics import RunMetrics, record_batch, record_byzantine_message, record_message
from .protocol import (
    FragmentTuple,
    MessageKind,
    NodeState,
    ProtocolMessage,
    compute_frag_vec_commit,
)

ADVERSARY_STRATEGIES = ("random", "fixed-set", "adaptive-isolate")
SCHEDULER_POLICIES = ("random", "fifo")
BYZANTINE_BEHAVIORS = ("crash", "silent", "equivocate", "garbage", "mutate-fragments")
PROTOCOLS = ("coded", "baseline")

# Byzantine output cap, per node, in units of n (simulation artifact).
BYZ_BUDGET_FACTOR = 16


class SimError(Exception):
    pass


class ConfigError(SimError):
    pass


class WrongArityError(SimError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Full description of one run; (config, seed) determines everything."""

    n: int
    t: int
    d: int
    k: int
    payload_len: int
    seed: int
    epsilon: float = 1.0
    adversary_strategy: str = "random"
    byzantine_behavior: tuple = ()  # ((node_id, behavior), ...)
    scheduler_policy: str = "random"
    max_events: int = 500_000
    vc_scheme: str = MERKLE_SCHEME
    protocol: str = "coded"
    sender_id: int = 1
    adversary_targets: tuple = ()
    allow_unsafe: bool = False
    deep_checks: bool = False
    # Interleaving can be varied independently of payload/keys/adversary.
    sched_seed: int | None = None

    @property
    def byzantine_ids(self) -> frozenset:
        return frozenset(node for node, _ in self.byzantine_behavior)

    @property
    def correct_ids(self) -> tuple:
        byz = self.byzantine_ids
        return tuple(i for i in range(1, self.n + 1) if i not in byz)

    @property
    def c(self) -> int:
        return self.n - len(self.byzantine_ids)

    @property
    def sender_correct(self) -> bool:
        return self.sender_id not in self.byzantine_ids

    def behavior_of(self, node_id: int) -> str | None:
        for node, behavior in self.byzantine_behavior:
            if node == node_id:
                return behavior
        return None

    def validate(self) -> None:
        problems = []
        if self.n < 1:
            problems.append("n must be at least 1")
        if self.n > 255:
            problems.append("n must be at most 255 (GF(2^8) fragment indices)")
        if self.t < 0 or self.d < 0:
            problems.append("t and d must be non-negative")
        if self.k < 1:
            problems.append("k must be at least 1")
        if self.payload_len < 1:
            problems.append("payload_len must be at least 1")
        if not 1 <= self.sender_id <= self.n:
            problems.append("sender_id out of range")
        if not self.allow_unsafe:
            if self.n <= 3 * self.t + 2 * self.d:
                problems.append(
                    f"resilience requires n > 3t + 2d ({self.n} <= {3 * self.t + 2 * self.d})"
                )
            if self.k > self.n - self.t - 2 * self.d:
                problems.append(
                    f"k must satisfy k <= n - t - 2d ({self.k} > {self.n - self.t - 2 * self.d})"
                )
        seen = set()
        for node, behavior in self.byzantine_behavior:
            if not 1 <= node <= self.n:
                problems.append(f"byzantine id {node} out of range")
            if node in seen:
                problems.append(f"byzantine id {node} listed twice")
            seen.add(node)
            if behavior not in BYZANTINE_BEHAVIORS:
                problems.append(f"unknown behavior {behavior!r}")
            if behavior == "equivocate" and node != self.sender_id:
                problems.append("equivocate applies to the sender only")
            if self.protocol == "baseline" and behavior in ("equivocate", "mutate-fragments"):
                problems.append(f"behavior {behavior!r} is protocol-specific")
        if len(seen) > self.t:
            problems.append(f"{len(seen)} byzantine nodes exceed the bound t={self.t}")
        if self.adversary_strategy not in ADVERSARY_STRATEGIES:
            problems.append(f"unknown adversary strategy {self.adversary_strategy!r}")
        if self.scheduler_policy not in SCHEDULER_POLICIES:
            problems.append(f"unknown scheduler policy {self.scheduler_policy!r}")
        if self.vc_scheme not in VC_SCHEMES:
            problems.append(f"unknown vc scheme {self.vc_scheme!r}")
        if self.protocol not in PROTOCOLS:
            problems.append(f"unknown protocol {self.protocol!r}")
        for target in self.adversary_targets:
            if not 1 <= target <= self.n:
                problems.append(f"adversary target {target} out of range")
        if problems:
            raise ConfigError("; ".join(problems))

    def echo(self) -> dict:
        behaviors = "+".join(f"{node}:{b}" for node, b in sorted(self.byzantine_behavior))
        return {
            "n": self.n,
            "t": self.t,
            "d": self.d,
            "k": self.k,
            "epsilon": self.epsilon,
            "payload_len": self.payload_len,
            "seed": self.seed,
            "adversary_strategy": self.adversary_strategy,
            "scheduler_policy": self.scheduler_policy,
            "vc_scheme": self.vc_scheme,
            "protocol": self.protocol,
            "sender_id": self.sender_id,
            "behaviors": behaviors or "-",
            "adversary_targets": list(self.adversary_targets),
            "max_events": self.max_events,
            "allow_unsafe": self.allow_unsafe,
            "sched_seed": self.sched_seed,
        }


@dataclass
class InFlight:
    """One implementation message sitting on a channel."""

    seq: int
    src: int
    dst: int
    message: object
    comm_batch_id: int
    digest16: str
    dropped: bool = False


@dataclass(frozen=True)
class LogEntry:
    idx: int
    kind: str
    src: int
    dst: int
    digest16: str

    def line(self) -> str:
        return f"{self.idx} {self.kind} {self.src} {self.dst} {self.digest16}"


@dataclass
class EventLog:
    """Replayable record: same config + seed reproduces identical lines."""

    entries: list = field(default_factory=list)

    def append(self, kind: str, src: int, dst: int, digest16: str) -> LogEntry:
        entry = LogEntry(len(self.entries), kind, src, dst, digest16)
        self.entries.append(entry)
        return entry

    def serialize(self) -> str:
        return "".join(e.line() + "\n" for e in self.entries)

    @classmethod
    def parse(cls, text: str) -> "EventLog":
        log = cls()
        for line in text.splitlines():
            idx, kind, src, dst, digest16 = line.split(" ")
            log.entries.append(LogEntry(int(idx), kind, int(src), int(dst), digest16))
        return log


def _derived_rng(seed: int, tag: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class Adversary:
    """Per-comm drop selection; sees full message contents, spends at most d."""

    def __init__(self, config: SimConfig, rng: random.Random):
        self.strategy = config.adversary_strategy
        self.d = config.d
        self.rng = rng
        if self.strategy == "fixed-set":
            self.victims = set(config.adversary_targets)
        elif self.strategy == "adaptive-isolate":
            # Pin the same correct, non-sender victims for the whole run.
            pool = [i for i in config.correct_ids if i != config.sender_id]
            self.victims = set(sorted(pool, reverse=True)[: config.d])
        else:
            self.victims = set()

    def select_drops(self, candidates: list) -> list:
        """Pick up to d of this batch's messages to eliminate."""
        if self.d == 0 or not candidates:
            return []
        if self.strategy == "random":
            count = min(self.d, len(candidates))
            chosen = self.rng.sample(candidates, count)
        else:
            chosen = [e for e in candidates if e.dst in self.victims][: self.d]
        assert len(chosen) <= self.d
        return chosen


def _flip_fragment(ft: FragmentTuple) -> FragmentTuple:
    data = bytearray(ft.fragment.data)
    data[0] ^= 0xFF
    return FragmentTuple(
        fragment=dataclasses.replace(ft.fragment, data=bytes(data)),
        proof=ft.proof,
    )


class ByzantineNode:
    """Adversarial node: emits unicasts according to its configured behavior."""

    def __init__(
        self,
        node_id: int,
        behavior: str,
        config: SimConfig,
        keyring: Keyring,
        rng: random.Random,
        params,
        payload_pair: tuple[bytes, bytes],
    ):
        self.node_id = node_id
        self.behavior = behavior
        self.config = config
        self.signer = Signer(keyring, node_id)
        self.rng = rng
        self.params = params
        self.payload_pair = payload_pair
        self.budget = BYZ_BUDGET_FACTOR * config.n
        self.inner: NodeState | None = None
        if behavior == "mutate-fragments":
            self.inner = NodeState(
                node_id, config.sender_id, params, keyring, config.vc_scheme
            )

    def _garbage_volley(self) -> list:
        out = []
        for _ in range(self.rng.randint(1, 3)):
            target = self.rng.randint(1, self.config.n)
            junk = RawMessage(self.rng.randbytes(self.rng.randint(1, 64)))
            out.append((target, junk))
        return out

    def _equivocate(self) -> list:
        m_one, m_two = self.payload_pair
        sends = []
        for payload in (m_one, m_two):
            commitment, tuples = compute_frag_vec_commit(
                payload, self.params, self.config.vc_scheme
            )
            share = self.signer.sign_share(commitment)
            sends.append(
                [
                    ProtocolMessage(
                        kind=MessageKind.SEND,
                        commitment=commitment,
                        frag_a=tuples[j],
                        shares=(share,),
                    )
                    for j in range(self.config.n)
                ]
            )
        out = []
        for j in range(1, self.config.n + 1):
            first, second = (0, 1) if j % 2 == 1 else (1, 0)
            out.append((j, sends[first][j - 1]))
            out.append((j, sends[second][j - 1]))
        return out

    def _mutated(self, batches: list) -> list:
        out = []
        for batch in batches:
            for j, msg in enumerate(batch, 1):
                if msg is None:
                    continue
                changes = {}
                if msg.frag_a is not None:
                    changes["frag_a"] = _flip_fragment(msg.frag_a)
                if msg.frag_b is not None:
                    changes["frag_b"] = _flip_fragment(msg.frag_b)
                out.append((j, dataclasses.replace(msg, **changes) if changes else msg))
        return out

    def on_init(self) -> list:
        if self.behavior in ("crash", "silent"):
            return []
        if self.behavior == "garbage":
            return self._garbage_volley()
        if self.behavior == "equivocate":
            return self._equivocate() if self.node_id == self.config.sender_id else []
        if self.behavior == "mutate-fragments":
            if self.node_id == self.config.sender_id:
                return self._mutated(self.inner.mbrb_broadcast(self.payload_pair[0]))
            return []
        return []

    def on_message(self, msg, from_id: int) -> list:
        if self.behavior in ("crash", "silent", "equivocate"):
            return []
        if self.behavior == "garbage":
            return self._garbage_volley()
        if self.behavior == "mutate-fragments":
            batches, _ = self.inner.handle_event(msg, from_id, at_event=0)
            return self._mutated(batches)
        return []


class Simulation:
    """One seeded run of the configured protocol under the configured adversary."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.keyring = Keyring.generate(
            config.n, config.t, master_seed=config.seed & ((1 << 64) - 1)
        )
        self.params = derive_params(config.n, config.k, config.payload_len)
        payload_rng = _derived_rng(config.seed, "payload")
        self.payload = payload_rng.randbytes(config.payload_len)
        alt = payload_rng.randbytes(config.payload_len)
        while alt == self.payload:
            alt = payload_rng.randbytes(config.payload_len)
        self.payload_pair = (self.payload, alt)

        self.adversary = Adversary(config, _derived_rng(config.seed, "adversary"))
        sched_base = config.seed if config.sched_seed is None else config.sched_seed
        self.sched_rng = _derived_rng(sched_base, "scheduler")
        byz_rng = _derived_rng(config.seed, "byzantine")

        self.nodes: dict[int, object] = {}
        for i in range(1, config.n + 1):
            behavior = config.behavior_of(i)
            if behavior is not None:
                self.nodes[i] = ByzantineNode(
                    i, behavior, config, self.keyring,
                    random.Random(byz_rng.getrandbits(64)), self.params,
                    self.payload_pair,
                )
            elif config.protocol == "baseline":
                self.nodes[i] = BaselineNodeState(i, config.sender_id, config.n, self.keyring)
            else:
                self.nodes[i] = NodeState(
                    i, config.sender_id, self.params, self.keyring, config.vc_scheme
                )

        self.in_flight: list[InFlight] = []
        self.log = EventLog()
        self.metrics = RunMetrics(n=config.n, c=config.c)
        self.batches: list[list[InFlight]] = []
        self._seq = 0
        self._finished = False

    # -- primitives ------------------------------------------------------------

    def _kind_label(self, msg) -> str:
        if isinstance(msg, ProtocolMessage):
            return msg.kind.value
        if isinstance(msg, RawMessage):
            return "RAW"
        return "ECHO"

    def comm(self, sender: int, msgs) -> None:
        """Send-to-all: message j goes to node j; up to d may be dropped."""
        msgs = tuple(msgs)
        if len(msgs) != self.config.n:
            raise WrongArityError(f"comm needs {self.config.n} slots, got {len(msgs)}")
        sender_correct = sender not in self.config.byzantine_ids
        if sender_correct:
            record_batch(self.metrics, sender)
        batch_id = len(self.batches)
        batch_entries: list[InFlight] = []
        self_entry = None
        digest_cache: dict[int, str] = {}  # broadcasts repeat one object n times
        for j, msg in enumerate(msgs, 1):
            if msg is None:
                continue
            if sender_correct:
                record_message(self.metrics, sender, msg, self.config.n)
            else:
                record_byzantine_message(self.metrics, msg, self.config.n)
            digest = digest_cache.get(id(msg))
            if digest is None:
                digest = digest_cache[id(msg)] = message_digest16(msg)
            self.log.append(f"comm.{self._kind_label(msg)}", sender, j, digest)
            self._seq += 1
            entry = InFlight(self._seq, sender, j, msg, batch_id, digest)
            if j == sender and sender_correct:
                self_entry = entry
            else:
                batch_entries.append(entry)
        self.batches.append(batch_entries + ([self_entry] if self_entry else []))

        if sender_correct and self.config.d > 0:
            candidates = [
                e for e in batch_entries if e.dst in self.config.correct_ids
            ]
            drops = self.adversary.select_drops(candidates)
            assert len(drops) <= self.config.d
            for entry in drops:
                entry.dropped = True
                self.log.append(
                    f"drop.{self._kind_label(entry.message)}",
                    entry.src,
                    entry.dst,
                    entry.digest16,
                )
        self.in_flight.extend(e for e in batch_entries if not e.dropped)
        if self_entry is not None:
            # A node's message to itself never touches the network: applied
            # synchronously, out of the adversary's reach.
            self._dispatch(self_entry)

    def broadcast_prim(self, sender: int, msg) -> None:
        self.comm(sender, [msg] * self.config.n)

    def _enqueue_byzantine(self, sender: int, transmissions) -> None:
        node = self.nodes[sender]
        for dst, msg in transmissions:
            if node.budget <= 0:
                break
            node.budget -= 1
            record_byzantine_message(self.metrics, msg, self.config.n)
            digest = message_digest16(msg)
            self.log.append(f"comm.{self._kind_label(msg)}", sender, dst, digest)
            self._seq += 1
            self.in_flight.append(InFlight(self._seq, sender, dst, msg, -1, digest))

    # -- event dispatch --------------------------------------------------------

    def _dispatch(self, entry: InFlight) -> None:
        self.metrics.events += 1
        if self.config.deep_checks:
            # Channel integrity: content must match what was enqueued.
            assert message_digest16(entry.message) == entry.digest16
        self.log.append(
            f"recv.{self._kind_label(entry.message)}", entry.src, entry.dst, entry.digest16
        )
        node = self.nodes[entry.dst]
        if entry.dst in self.config.byzantine_ids:
            self._enqueue_byzantine(entry.dst, node.on_message(entry.message, entry.src))
            return
        at_event = len(self.log.entries)
        batches, delivered = node.handle_event(entry.message, entry.src, at_event)
        if delivered is not None:
            digest = payload_digest16(delivered)
            self.metrics.delivered[entry.dst] = digest
            self.metrics.delivered_at[entry.dst] = at_event
            self.log.append("deliver.app", entry.dst, entry.dst, digest)
        for batch in batches:
            self.comm(entry.dst, batch)
        if self.config.deep_checks and hasattr(node, "audit"):
            node.audit()

    def _start(self) -> None:
        cfg = self.config
        if cfg.sender_correct:
            sender_node = self.nodes[cfg.sender_id]
            if cfg.protocol == "baseline":
                batches = sender_node.baseline_broadcast(self.payload)
            else:
                batches = sender_node.mbrb_broadcast(self.payload)
            for batch in batches:
                self.comm(cfg.sender_id, batch)
        for node_id in sorted(self.config.byzantine_ids):
            self._enqueue_byzantine(node_id, self.nodes[node_id].on_init())

    # -- driver ------------------------------------------------------------

    def run_to_quiescence(self) -> RunMetrics:
        """Drain the network, then compute verdicts. Idempotent per instance."""
        if self._finished:
            return self.metrics
        self._finished = True
        self._start()
        while self.in_flight:
            if self.metrics.events >= self.config.max_events:
                self.metrics.inconclusive = True
                break
            if self.config.scheduler_policy == "fifo":
                entry = self.in_flight.pop(0)
            else:
                i = self.sched_rng.randrange(len(self.in_flight))
                self.in_flight[i], self.in_flight[-1] = (
                    self.in_flight[-1],
                    self.in_flight[i],
                )
                entry = self.in_flight.pop()
            self._dispatch(entry)

        self._audit_drop_bound()
        cfg = self.config
        finals = {
            i: self.metrics.delivered.get(i) for i in cfg.correct_ids
        }
        self.metrics.ell_bound = (
            metrics_mod.ell_bound_or_none(cfg.c, cfg.d, cfg.k)
            if cfg.protocol == "coded"
            else None
        )
        self.metrics.verdicts = metrics_mod.check_properties(
            self.log.entries,
            finals,
            correct_ids=cfg.correct_ids,
            sender_correct=cfg.sender_correct,
            d=cfg.d,
            k=cfg.k,
            broadcast_digest16=payload_digest16(self.payload) if cfg.sender_correct else None,
            protocol=cfg.protocol,
        )
        return self.metrics

    def _audit_drop_bound(self) -> None:
        for batch in self.batches:
            if not batch:
                continue
            if batch[0].src in self.config.byzantine_ids:
                continue
            assert sum(1 for e in batch if e.dropped) <= self.config.d

    def state_fingerprints(self) -> dict[int, str]:
        out = {}
        for i in self.config.correct_ids:
            node = self.nodes[i]
            out[i] = node.fingerprint() if hasattr(node, "fingerprint") else ""
        return out
