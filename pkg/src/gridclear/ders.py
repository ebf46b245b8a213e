"""Distributed energy resources: bids, offers, and their market attributes.

A DER is a price-quantity pair at a bus: bids buy energy (negative signed
volume), offers sell it (positive).  Volumes split evenly across the DER's
phases, and reactive output follows real output through a constant
power-factor ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, SchemaError
from .network import PHASES, Network

DERS_SCHEMA = "gridclear-ders/1"

SIDES = ("bid", "offer")


def reactive_ratio(power_factor: float) -> float:
    """Ratio of reactive to real power at a lagging power factor.

    sqrt(1 / pf^2 - 1); 0.9 gives about 0.4843.
    """
    if not 0.0 < power_factor <= 1.0:
        raise DomainError(f"power factor must be in (0, 1], got {power_factor}")
    return math.sqrt(1.0 / power_factor**2 - 1.0)


@dataclass(frozen=True)
class Der:
    """One bid or offer.

    volume_kw is signed: negative for bids (consumption), positive for
    offers (injection).  price is in cents per kWh and applies to the
    whole volume.
    """

    id: str
    bus: int
    phases: tuple[str, ...]
    side: str
    price: float
    volume_kw: float
    power_factor: float

    def __post_init__(self):
        if self.side not in SIDES:
            raise DomainError(f"DER {self.id}: side must be one of {SIDES}, got {self.side!r}")
        if self.volume_kw == 0.0:
            raise DomainError(f"DER {self.id}: zero volume")
        if self.side == "bid" and self.volume_kw > 0:
            raise DomainError(f"DER {self.id}: bids carry negative signed volume")
        if self.side == "offer" and self.volume_kw < 0:
            raise DomainError(f"DER {self.id}: offers carry positive signed volume")
        if self.price < 0:
            raise DomainError(f"DER {self.id}: negative price")
        if not self.phases or any(p not in PHASES for p in self.phases):
            raise DomainError(f"DER {self.id}: invalid phase set {self.phases!r}")
        if not 0.0 < self.power_factor <= 1.0:
            raise DomainError(f"DER {self.id}: power factor out of range")

    @property
    def eta(self) -> float:
        return reactive_ratio(self.power_factor)


def per_phase_injection(der: Der, s_base_kva: float) -> np.ndarray:
    """Signed per-unit real injection of one DER, split evenly over its phases."""
    vec = np.zeros(3)
    share = der.volume_kw / (s_base_kva * len(der.phases))
    for p in der.phases:
        vec[PHASES.index(p)] = share
    return vec


def gamma_price(der: Der, big_m: float) -> float:
    """Objective price coefficient: bids at their stated price, offers
    discounted by big_m / volume so grid-feasible offers are preferred."""
    if der.side == "bid":
        return der.price
    return der.price - big_m / der.volume_kw


@dataclass(frozen=True)
class DerPopulation:
    """All DERs participating in one interval, bound to a feeder.

    a_matrix is the (3N x 3|ders|) bus-scatter matrix: block column j holds
    I3 at DER j's bus rows.  eta holds the per-DER reactive ratio.
    """

    ders: tuple[Der, ...]
    a_matrix: np.ndarray
    eta: np.ndarray
    s_base_kva: float
    _p_phase: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.ders)

    @classmethod
    def from_ders(cls, ders, network: Network) -> "DerPopulation":
        ders = tuple(ders)
        n3 = 3 * network.n
        a = np.zeros((n3, 3 * len(ders)))
        p_phase = np.zeros((3, len(ders)))
        for j, der in enumerate(ders):
            rows = slice(3 * (der.bus - 1), 3 * der.bus)
            a[rows, 3 * j:3 * j + 3] = np.eye(3)
            p_phase[:, j] = per_phase_injection(der, network.s_base_kva)
        eta = np.array([d.eta for d in ders])
        return cls(ders=ders, a_matrix=a, eta=eta,
                   s_base_kva=network.s_base_kva, _p_phase=p_phase)

    def by_id(self, der_id: str) -> Der:
        for d in self.ders:
            if d.id == der_id:
                return d
        raise KeyError(der_id)

    def scatter_p(self) -> np.ndarray:
        """(3N x n) map from acceptance fractions to per-unit real injections."""
        n = self.n
        g = np.zeros((self.a_matrix.shape[0], n))
        for j in range(n):
            g[:, j] = self.a_matrix[:, 3 * j:3 * j + 3] @ self._p_phase[:, j]
        return g

    def scatter_q(self) -> np.ndarray:
        return self.scatter_p() * self.eta[np.newaxis, :]

    def subset(self, side: str) -> tuple[Der, ...]:
        return tuple(d for d in self.ders if d.side == side)


def _parse_der_phases(value, where: str) -> tuple[str, ...]:
    if isinstance(value, str):
        chars = list(value)
    elif isinstance(value, (list, tuple)):
        chars = [str(c) for c in value]
    else:
        raise SchemaError(f"{where}: phases must be a string or list")
    if not chars or any(c not in PHASES for c in chars) or len(set(chars)) != len(chars):
        raise SchemaError(f"{where}: invalid phase set {value!r}")
    return tuple(p for p in PHASES if p in chars)


def load_ders(source, network: Network) -> DerPopulation:
    """Load a DER document and bind it to a feeder.

    User-facing records state volumes as positive magnitudes with a side
    field; the sign convention is applied here.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict) or doc.get("schema") != DERS_SCHEMA:
        raise SchemaError(f"expected schema {DERS_SCHEMA!r}")
    recs = doc.get("ders")
    if not isinstance(recs, list):
        raise SchemaError("ders document needs a 'ders' list")

    ders = []
    seen = set()
    for rec in recs:
        der_id = str(rec.get("id", ""))
        if not der_id:
            raise SchemaError("DER record without id")
        if der_id in seen:
            raise SchemaError(f"duplicate DER id {der_id!r}")
        seen.add(der_id)
        where = f"DER {der_id}"
        try:
            bus = network.index_of(rec["bus"])
        except KeyError:
            raise SchemaError(f"{where}: unknown bus {rec.get('bus')!r}") from None
        if bus == 0:
            raise SchemaError(f"{where}: DERs cannot sit at the head bus")
        phases = _parse_der_phases(rec.get("phases"), where)
        if not set(phases) <= set(network.buses[bus].phases):
            raise SchemaError(f"{where}: phase not present at bus {rec['bus']!r}")
        side = rec.get("side")
        if side not in SIDES:
            raise SchemaError(f"{where}: side must be 'bid' or 'offer'")
        volume = float(rec.get("volume_kw", 0.0))
        if volume <= 0:
            raise DomainError(f"{where}: volume_kw must be positive")
        signed = -volume if side == "bid" else volume
        try:
            ders.append(Der(id=der_id, bus=bus, phases=phases, side=side,
                            price=float(rec.get("price_cents_per_kwh", -1.0)),
                            volume_kw=signed,
                            power_factor=float(rec.get("power_factor", 0.0))))
        except DomainError:
            raise
    return DerPopulation.from_ders(ders, network)


def population_document(pop: DerPopulation, network: Network) -> dict:
    """Serialize a population back to its document form (positive volumes)."""
    recs = []
    for d in pop.ders:
        recs.append({
            "id": d.id,
            "bus": network.label_of(d.bus),
            "phases": "".join(d.phases),
            "side": d.side,
            "price_cents_per_kwh": d.price,
            "volume_kw": abs(d.volume_kw),
            "power_factor": d.power_factor,
        })
    return {"schema": DERS_SCHEMA, "ders": recs}


@dataclass(frozen=True)
class GenerationSpec:
    """Parameters for sampling a synthetic DER population."""

    n_bids: int
    n_offers: int
    seed: int
    volume_mean_kw: float = 20.0
    volume_sd_kw: float = 10.0
    volume_lo_kw: float = 5.0
    volume_hi_kw: float = 45.0
    price_mean: float = 15.0
    price_sd: float = 5.0
    price_lo: float = 1.0
    price_hi: float = 25.0
    power_factor: float = 0.9


def _truncated_normal(rng, mean, sd, lo, hi) -> float:
    # plain rejection; acceptance rate is high for the default parameters
    while True:
        draw = rng.normal(mean, sd)
        if lo <= draw <= hi:
            return float(draw)


def _nonempty_subsets(phases):
    out = []
    n = len(phases)
    for mask in range(1, 2**n):
        out.append(tuple(p for i, p in enumerate(phases) if mask >> i & 1))
    return out


def generate_population(spec: GenerationSpec, network: Network) -> DerPopulation:
    """Sample a population: volumes and prices from truncated normals,
    locations uniform over non-head buses and their phase subsets.

    All randomness flows from spec.seed through two named child streams, one
    for market attributes and one for placement, so adding DERs of one side
    leaves the other stream's draws alone only if counts change together;
    identical specs always reproduce the identical population.
    """
    seq = np.random.SeedSequence(spec.seed)
    pop_stream, place_stream = [np.random.default_rng(s) for s in seq.spawn(2)]
    eligible = [b.index for b in network.buses[1:]]
    if not eligible:
        raise DomainError("feeder has no non-head buses to place DERs on")

    ders = []
    counter = 0
    for side, count in (("bid", spec.n_bids), ("offer", spec.n_offers)):
        for _ in range(count):
            counter += 1
            if side == "bid":
                vol = _truncated_normal(pop_stream, spec.volume_mean_kw, spec.volume_sd_kw,
                                        spec.volume_lo_kw, spec.volume_hi_kw)
                signed = -vol
            else:
                drawn = _truncated_normal(pop_stream, -spec.volume_mean_kw, spec.volume_sd_kw,
                                          -spec.volume_hi_kw, -spec.volume_lo_kw)
                signed = -drawn
            price = _truncated_normal(pop_stream, spec.price_mean, spec.price_sd,
                                      spec.price_lo, spec.price_hi)
            bus = int(eligible[place_stream.integers(len(eligible))])
            subsets = _nonempty_subsets(network.buses[bus].phases)
            phases = subsets[place_stream.integers(len(subsets))]
            ders.append(Der(id=f"der-{counter:03d}", bus=bus, phases=phases, side=side,
                            price=price, volume_kw=signed,
                            power_factor=spec.power_factor))
    return DerPopulation.from_ders(ders, network)
