"""Locally-administered vs. global MAC classification and prefix rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .dot11 import MacAddress, ProbeRequest

GLOBAL = "global"
LOCAL = "local"
INDIVIDUAL = "individual"
GROUP = "group"

# hex digits a locally administered, individual address can start its first octet with
LOCAL_SECOND_DIGITS = frozenset("26AE")


@dataclass(frozen=True, slots=True)
class PrefixRule:
    name: str
    prefix: bytes

    def __post_init__(self):
        if len(self.prefix) != 3:
            raise ValueError(f"prefix rule {self.name!r} needs 3 bytes")
        if not self.prefix[0] & 0x02:
            raise ValueError(
                f"prefix rule {self.name!r}: {self.prefix.hex(':').upper()} is not locally administered"
            )

    def matches(self, mac: MacAddress) -> bool:
        return mac.octets[:3] == self.prefix


# The Android legacy randomization prefix is spelled two ways in the
# literature; both ship by default so either can be counted.
DEFAULT_PREFIX_RULES = (
    PrefixRule("android-legacy", bytes.fromhex("DAA119")),
    PrefixRule("android-legacy-alt", bytes.fromhex("DA1A19")),
)


@dataclass(frozen=True, slots=True)
class MacClass:
    locality: str
    scope: str
    known_prefix: str | None = None

    @property
    def is_randomized(self) -> bool:
        return self.locality == LOCAL and self.scope == INDIVIDUAL


def classify_mac(mac: MacAddress,
                 rules: Sequence[PrefixRule] = DEFAULT_PREFIX_RULES) -> MacClass:
    first = mac.octets[0]
    locality = LOCAL if first & 0x02 else GLOBAL
    scope = GROUP if first & 0x01 else INDIVIDUAL
    known = None
    if locality == LOCAL:
        known = next((r.name for r in rules if r.matches(mac)), None)
    return MacClass(locality, scope, known)


def is_randomized_by_text(text: str) -> bool:
    """Text-form test for a locally administered individual address.

    Equivalent to ``is_local and not is_group``: the second hex digit
    carries both functional bits, leaving only 2, 6, A and E.
    """
    return text[1].upper() in LOCAL_SECOND_DIGITS


def load_prefix_rules(path: str | Path) -> list[PrefixRule]:
    """Read ``name prefix`` pairs, one per line; ``#`` starts a comment."""
    rules = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'name prefix', got {line!r}")
        name, prefix = parts
        digits = prefix.replace(":", "").replace("-", "")
        try:
            rules.append(PrefixRule(name, bytes.fromhex(digits)))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rules


@dataclass
class LocalityShare:
    total: int = 0
    local: int = 0
    global_: int = 0
    prefix_counts: dict[str, int] = field(default_factory=dict)

    @property
    def fraction(self) -> float | None:
        """Share of locally administered sources; None when nothing was counted."""
        return self.local / self.total if self.total else None


def randomized_share(probes: Iterable[ProbeRequest],
                     rules: Sequence[PrefixRule] = DEFAULT_PREFIX_RULES) -> LocalityShare:
    share = LocalityShare(prefix_counts={r.name: 0 for r in rules})
    for probe in probes:
        cls = classify_mac(probe.source, rules)
        share.total += 1
        if cls.locality == LOCAL:
            share.local += 1
            if cls.known_prefix:
                share.prefix_counts[cls.known_prefix] += 1
        else:
            share.global_ += 1
    return share
