"""Accounting and verdicts: counters, delivery-power bound, property checkers.

The delivery-power bound for c correct nodes, drop budget d, and ECC
threshold k is

    ell = c - d * (c - d) / ((c - d) - (k - 1))

kept as an exact rational; acceptance compares delivery counts against
ceil(ell). Verdict checking is a pure function of the event log, the final
delivered map, and the run configuration, so verdicts can be recomputed
byte-for-byte from a serialized log.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .codec import message_size_bits

PASS = "pass"
FAIL = "fail"
NA = "n.a."

CSV_COLUMNS = [
    "point",
    "seed",
    "protocol",
    "n",
    "t",
    "d",
    "k",
    "epsilon",
    "payload_len",
    "adversary",
    "scheduler",
    "vc_scheme",
    "behaviors",
    "c",
    "ell_bound",
    "deliveries",
    "validity",
    "no_duplication",
    "no_duplicity",
    "local_delivery",
    "global_delivery",
    "correct_msgs",
    "max_node_msgs",
    "max_node_batches",
    "correct_bits",
    "max_node_bits",
    "byz_msgs",
    "byz_bits",
    "events",
    "inconclusive",
]


class MetricsError(Exception):
    pass


class InvalidRegimeError(MetricsError):
    """ell is undefined: c - d does not exceed k - 1."""


def compute_ell_bound(c: int, d: int, k: int) -> Fraction:
    """Guaranteed number of correct deliverers once any correct node delivers."""
    remaining = c - d
    if remaining <= k - 1:
        raise InvalidRegimeError(
            f"need c - d > k - 1, got c={c}, d={d}, k={k}"
        )
    return Fraction(c) - Fraction(d) * Fraction(remaining, remaining - (k - 1))


@dataclass(frozen=True)
class KValidation:
    ok: bool
    assumption_bound: int
    epsilon_bound: int
    failures: tuple[str, ...]

    def report(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(self.failures)


def validate_k(n: int, t: int, d: int, epsilon: float, k: int) -> KValidation:
    """Check k against both the model bound and the delivery-power bound.

    Valid k satisfy k <= min(n - t - 2d, floor(eps/(1+eps) * (n - t - d)) + 1).
    """
    eps = Fraction(epsilon).limit_denominator(1_000_000)
    if eps <= 0:
        raise MetricsError("epsilon must be positive")
    assumption_bound = n - t - 2 * d
    epsilon_bound = math.floor(eps / (1 + eps) * (n - t - d)) + 1
    failures = []
    if k > assumption_bound:
        failures.append(
            f"k={k} exceeds the resilience bound n-t-2d={assumption_bound}"
        )
    if k > epsilon_bound:
        failures.append(
            f"k={k} exceeds the delivery-power bound "
            f"floor(eps/(1+eps)*(n-t-d))+1={epsilon_bound} at eps={epsilon}"
        )
    if k < 1:
        failures.append(f"k={k} must be at least 1")
    return KValidation(
        ok=not failures,
        assumption_bound=assumption_bound,
        epsilon_bound=epsilon_bound,
        failures=tuple(failures),
    )


def auto_k(n: int, t: int, d: int, epsilon: float) -> int:
    """Largest k honoring both bounds (the standard selection rule)."""
    eps = Fraction(epsilon).limit_denominator(1_000_000)
    k = min(n - t - 2 * d, math.floor(eps / (1 + eps) * (n - t - d)) + 1)
    if k < 1:
        raise MetricsError(f"no admissible k for n={n}, t={t}, d={d}")
    return k


@dataclass(frozen=True)
class Verdicts:
    validity: str
    no_duplication: str
    no_duplicity: str
    local_delivery: str
    global_delivery: str

    def as_dict(self) -> dict:
        return {
            "validity": self.validity,
            "no_duplication": self.no_duplication,
            "no_duplicity": self.no_duplicity,
            "local_delivery": self.local_delivery,
            "global_delivery": self.global_delivery,
        }

    def failures(self) -> list[str]:
        return [name for name, v in self.as_dict().items() if v == FAIL]

    @property
    def all_ok(self) -> bool:
        return not self.failures()


@dataclass
class RunMetrics:
    """Per-run ledger: who sent what, who delivered, and the verdicts."""

    n: int
    c: int
    messages_sent: dict[int, int] = field(default_factory=dict)
    bits_sent: dict[int, int] = field(default_factory=dict)
    batches_sent: dict[int, int] = field(default_factory=dict)
    byz_messages: int = 0
    byz_bits: int = 0
    delivered: dict[int, str] = field(default_factory=dict)
    delivered_at: dict[int, int] = field(default_factory=dict)
    events: int = 0
    inconclusive: bool = False
    verdicts: Verdicts | None = None
    ell_bound: Fraction | None = None

    @property
    def total_correct_messages(self) -> int:
        return sum(self.messages_sent.values())

    @property
    def total_correct_bits(self) -> int:
        return sum(self.bits_sent.values())

    @property
    def max_node_messages(self) -> int:
        return max(self.messages_sent.values(), default=0)

    @property
    def max_node_batches(self) -> int:
        return max(self.batches_sent.values(), default=0)

    @property
    def max_node_bits(self) -> int:
        return max(self.bits_sent.values(), default=0)

    @property
    def delivery_count(self) -> int:
        return len(self.delivered)


def record_message(metrics: RunMetrics, from_id: int, message, n: int) -> None:
    """Meter one correct-node message at enqueue time (drops still count)."""
    bits = message_size_bits(message, n)
    if bits == 0:
        return
    metrics.messages_sent[from_id] = metrics.messages_sent.get(from_id, 0) + 1
    metrics.bits_sent[from_id] = metrics.bits_sent.get(from_id, 0) + bits


def record_byzantine_message(metrics: RunMetrics, message, n: int) -> None:
    metrics.byz_messages += 1
    metrics.byz_bits += message_size_bits(message, n)


def record_batch(metrics: RunMetrics, from_id: int) -> None:
    metrics.batches_sent[from_id] = metrics.batches_sent.get(from_id, 0) + 1


def _deliveries_from_entries(entries, correct_ids) -> dict[int, list[str]]:
    out: dict[int, list[str]] = {}
    for e in entries:
        if e.kind == "deliver.app" and e.src in correct_ids:
            out.setdefault(e.src, []).append(e.digest16)
    return out


def check_properties(
    entries,
    finals_delivered: dict[int, str | None],
    *,
    correct_ids,
    sender_correct: bool,
    d: int,
    k: int,
    broadcast_digest16: str | None,
    protocol: str = "coded",
) -> Verdicts:
    """Compute the five broadcast-property verdicts from a completed run.

    `entries` is any sequence of event-log records (kind, src, dst, digest16);
    `finals_delivered` maps each correct node to its delivered payload digest
    (or None) and is cross-checked against the log.
    """
    correct_ids = set(correct_ids)
    c = len(correct_ids)
    per_node = _deliveries_from_entries(entries, correct_ids)
    for node, digests in per_node.items():
        if finals_delivered.get(node) not in digests:
            raise MetricsError(f"log and final state disagree for node {node}")
    for node, digest in finals_delivered.items():
        if digest is not None and node not in per_node:
            raise MetricsError(f"node {node} delivered without a log record")

    delivered_digests = {ds[0] for ds in per_node.values()}
    deliveries = len(per_node)

    if sender_correct and broadcast_digest16 is not None:
        validity = (
            PASS
            if all(dg == broadcast_digest16 for ds in per_node.values() for dg in ds)
            else FAIL
        )
    else:
        validity = NA

    no_duplication = PASS if all(len(ds) <= 1 for ds in per_node.values()) else FAIL
    no_duplicity = PASS if len(delivered_digests) <= 1 else FAIL

    if sender_correct and (protocol == "coded" or d == 0):
        local_delivery = PASS if deliveries >= 1 else FAIL
    else:
        local_delivery = NA

    if protocol != "coded":
        global_delivery = NA
    elif deliveries == 0:
        global_delivery = PASS
    else:
        try:
            bound = math.ceil(compute_ell_bound(c, d, k))
        except InvalidRegimeError:
            global_delivery = NA
        else:
            global_delivery = PASS if deliveries >= bound else FAIL

    return Verdicts(validity, no_duplication, no_duplicity, local_delivery, global_delivery)


def finals_from_entries(entries, correct_ids) -> dict[int, str | None]:
    """Reconstruct the delivered map from a (possibly parsed) event log."""
    per_node = _deliveries_from_entries(entries, set(correct_ids))
    return {node: per_node.get(node, [None])[0] for node in correct_ids}


def ell_bound_or_none(c: int, d: int, k: int) -> Fraction | None:
    try:
        return compute_ell_bound(c, d, k)
    except InvalidRegimeError:
        return None


def run_json(config_echo: dict, metrics: RunMetrics, payload_digest16: str) -> str:
    """Deterministic per-run JSON document."""
    ell = metrics.ell_bound
    doc = {
        "config": config_echo,
        "payload_digest16": payload_digest16,
        "constant_rate_regime": config_echo.get("payload_len", 0) >= config_echo.get("n", 0),
        "counters": {
            "messages_sent": {str(i): v for i, v in sorted(metrics.messages_sent.items())},
            "bits_sent": {str(i): v for i, v in sorted(metrics.bits_sent.items())},
            "batches_sent": {str(i): v for i, v in sorted(metrics.batches_sent.items())},
            "correct_msgs": metrics.total_correct_messages,
            "correct_bits": metrics.total_correct_bits,
            "byz_msgs": metrics.byz_messages,
            "byz_bits": metrics.byz_bits,
        },
        "delivered": {str(i): v for i, v in sorted(metrics.delivered.items())},
        "deliveries": metrics.delivery_count,
        "ell_bound": f"{ell.numerator}/{ell.denominator}" if ell is not None else None,
        "c": metrics.c,
        "verdicts": metrics.verdicts.as_dict() if metrics.verdicts else None,
        "events": metrics.events,
        "inconclusive": metrics.inconclusive,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def csv_row(point: int, seed: int, config_echo: dict, metrics: RunMetrics) -> list[str]:
    ell = metrics.ell_bound
    v = metrics.verdicts
    values = {
        "point": point,
        "seed": seed,
        "protocol": config_echo["protocol"],
        "n": config_echo["n"],
        "t": config_echo["t"],
        "d": config_echo["d"],
        "k": config_echo["k"],
        "epsilon": config_echo["epsilon"],
        "payload_len": config_echo["payload_len"],
        "adversary": config_echo["adversary_strategy"],
        "scheduler": config_echo["scheduler_policy"],
        "vc_scheme": config_echo["vc_scheme"],
        "behaviors": config_echo["behaviors"],
        "c": metrics.c,
        "ell_bound": f"{ell.numerator}/{ell.denominator}" if ell is not None else "",
        "deliveries": metrics.delivery_count,
        "validity": v.validity,
        "no_duplication": v.no_duplication,
        "no_duplicity": v.no_duplicity,
        "local_delivery": v.local_delivery,
        "global_delivery": v.global_delivery,
        "correct_msgs": metrics.total_correct_messages,
        "max_node_msgs": metrics.max_node_messages,
        "max_node_batches": metrics.max_node_batches,
        "correct_bits": metrics.total_correct_bits,
        "max_node_bits": metrics.max_node_bits,
        "byz_msgs": metrics.byz_messages,
        "byz_bits": metrics.byz_bits,
        "events": metrics.events,
        "inconclusive": int(metrics.inconclusive),
    }
    return [str(values[col]) for col in CSV_COLUMNS]
