"""Scenario description: geometry, radio constants and limits.

Scenarios are loaded from a YAML file (see ``data/reference.yaml``).  Values
written with a ``dB`` or ``dBm`` suffix are converted to linear units at load
time, so every number held by a :class:`Scenario` is linear / SI.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario files."""


_UNIT_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*(dBm|dB)?\s*$")


def to_linear_units(value: Any) -> float:
    """Convert ``"-30 dB"`` / ``"20 dBm"`` strings (or plain numbers) to linear.

    dB -> 10^(x/10); dBm -> 10^((x-30)/10) watts.  Plain numbers pass through.
    """
    if isinstance(value, bool):
        raise ScenarioError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _UNIT_RE.match(str(value))
    if m is None:
        raise ScenarioError(f"cannot parse quantity {value!r}")
    x = float(m.group(1))
    unit = m.group(2)
    if unit == "dB":
        return 10.0 ** (x / 10.0)
    if unit == "dBm":
        return 10.0 ** ((x - 30.0) / 10.0)
    return x


def db(x: float) -> float:
    return 10.0 ** (x / 10.0)


def dbm(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    rho0: float
    sigma2: float
    beta1: float = 2.2
    beta2: float = 2.2
    k1: float = 10.0
    k2: float = 10.0
    spacing_ratio: float = 0.5

    def validate(self) -> None:
        if not self.rho0 > 0:
            raise ScenarioError("channel.rho0 must be > 0")
        if not self.sigma2 > 0:
            raise ScenarioError("channel.sigma2 must be > 0")
        for name in ("beta1", "beta2"):
            if not getattr(self, name) >= 2:
                raise ScenarioError(f"channel.{name} must be >= 2")
        for name in ("k1", "k2"):
            if not getattr(self, name) >= 0:
                raise ScenarioError(f"channel.{name} must be >= 0")
        if not self.spacing_ratio > 0:
            raise ScenarioError("channel.spacing_ratio must be > 0")


@dataclass(frozen=True)
class UserGroup:
    users: tuple[tuple[float, float, float], ...]
    # horizontal sampling box [[x0, y0], [x1, y1]] used by random initialization
    area: tuple[tuple[float, float], tuple[float, float]] | None = None

    @property
    def positions(self) -> np.ndarray:
        return np.array(self.users, dtype=float).reshape(-1, 3)

    @property
    def size(self) -> int:
        return len(self.users)

    def sampling_box(self) -> np.ndarray:
        if self.area is not None:
            return np.array(self.area, dtype=float)
        w = self.positions
        return np.array([w[:, :2].min(axis=0), w[:, :2].max(axis=0)])


@dataclass(frozen=True)
class RicianSplits:
    kappa1: float
    kappa2: float
    tau: tuple[tuple[float, ...], ...]  # tau[k][i]


@dataclass(frozen=True)
class Scenario:
    groups: tuple[UserGroup, ...]
    irs_location: tuple[float, float, float]
    n_elements: int
    subsurface_size: int
    channel: ChannelParams
    z_min: float = 60.0
    z_max: float = 100.0
    delta_min: float = 10.0
    p_max: tuple[float, ...] = (0.1,)
    trust_ratio: float = 0.1
    trust_step: float = 5.0
    multistart_count: int = 10
    irs_enabled: bool = field(default=True)

    def __post_init__(self):
        if len(self.p_max) == 1 and len(self.groups) > 1:
            object.__setattr__(self, "p_max", tuple(self.p_max) * len(self.groups))
        self.validate()

    # -- derived quantities ------------------------------------------------
    @property
    def K(self) -> int:
        return len(self.groups)

    @property
    def M(self) -> int:
        """Number of independently phased sub-surfaces."""
        return self.n_elements // self.subsurface_size if self.irs_enabled else 0

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(g.size for g in self.groups)

    @property
    def u(self) -> np.ndarray:
        return np.array(self.irs_location, dtype=float)

    @property
    def trust_radius(self) -> float:
        return min(self.z_min * self.trust_ratio, self.trust_step)

    def users(self, k: int) -> np.ndarray:
        return self.groups[k].positions

    def validate(self) -> None:
        if self.K < 1:
            raise ScenarioError("groups: at least one group required")
        for k, g in enumerate(self.groups):
            if g.size == 0:
                raise ScenarioError(f"groups[{k}].users: group is empty")
            w = g.positions
            if not np.all(np.isfinite(w)):
                raise ScenarioError(f"groups[{k}].users: non-finite coordinate")
            for a in range(len(w)):
                for b in range(a + 1, len(w)):
                    if np.array_equal(w[a], w[b]):
                        raise ScenarioError(f"groups[{k}].users: duplicate position {w[a].tolist()}")
        if not self.z_min <= self.z_max:
            raise ScenarioError("uav: z_min>z_max")
        if not self.delta_min > 0:
            raise ScenarioError("uav.delta_min must be > 0")
        if self.n_elements < 1 or self.subsurface_size < 1:
            raise ScenarioError("irs: n_elements and subsurface_size must be positive")
        if self.n_elements % self.subsurface_size != 0:
            raise ScenarioError("irs: N not divisible by subsurface_size")
        if len(self.p_max) != self.K:
            raise ScenarioError("uav.p_max: need one value or one per group")
        if not all(p > 0 for p in self.p_max):
            raise ScenarioError("uav.p_max must be > 0")
        if not (self.trust_ratio > 0 and self.trust_step > 0):
            raise ScenarioError("uav.trust_ratio and uav.trust_step must be > 0")
        if self.multistart_count < 1:
            raise ScenarioError("multistart must be >= 1")
        self.channel.validate()

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def with_m(self, m: int) -> "Scenario":
        """Same scenario with ``m`` sub-surfaces of the current size."""
        return replace(self, n_elements=m * self.subsurface_size)

    def with_pmax(self, p: float) -> "Scenario":
        return replace(self, p_max=(float(p),) * self.K)


def rician_splits(params: ChannelParams, scenario: Scenario) -> RicianSplits:
    """LoS power shares kappa1/kappa2 and per-user reflected NLoS power tau."""
    rho0 = params.rho0

    def los_share(kf: float) -> float:
        return rho0 if math.isinf(kf) else kf * rho0 / (kf + 1.0)

    k1 = los_share(params.k1)
    k2 = los_share(params.k2)
    n = scenario.n_elements if scenario.irs_enabled else 0
    u = scenario.u
    tau = []
    for g in scenario.groups:
        row = []
        for w in g.positions:
            d = float(np.linalg.norm(u - w))
            if d == 0.0:
                raise ScenarioError("user coincides with the IRS")
            row.append(n * rho0 * (rho0 - k2) / d ** params.beta2)
        tau.append(tuple(row))
    return RicianSplits(kappa1=k1, kappa2=k2, tau=tuple(tau))


# -- file IO ----------------------------------------------------------------

def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"missing key {where}{key}")
    return d[key]


def _vec(v, n: int, where: str) -> tuple[float, ...]:
    try:
        out = tuple(to_linear_units(x) for x in v)
    except TypeError:
        raise ScenarioError(f"{where}: expected a list of {n} numbers") from None
    if len(out) != n:
        raise ScenarioError(f"{where}: expected {n} numbers")
    return out


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario file must contain a mapping")
    irs = _req(d, "irs", "")
    ch = _req(d, "channel", "")
    uav = _req(d, "uav", "")
    groups_raw = _req(d, "groups", "")
    if not isinstance(groups_raw, list):
        raise ScenarioError("groups: expected a list")
    groups = []
    for k, g in enumerate(groups_raw):
        users = _req(g, "users", f"groups[{k}].")
        if not isinstance(users, list):
            raise ScenarioError(f"groups[{k}].users: expected a list")
        pts = []
        for i, w in enumerate(users):
            w = list(w)
            if len(w) == 2:
                w = w + [0.0]  # ground users default to z = 0
            pts.append(_vec(w, 3, f"groups[{k}].users[{i}]"))
        area = g.get("area")
        if area is not None:
            area = (_vec(area[0], 2, f"groups[{k}].area"), _vec(area[1], 2, f"groups[{k}].area"))
        groups.append(UserGroup(users=tuple(pts), area=area))
    try:
        channel = ChannelParams(
            rho0=to_linear_units(_req(ch, "rho0", "channel.")),
            sigma2=to_linear_units(_req(ch, "sigma2", "channel.")),
            beta1=to_linear_units(ch.get("beta1", 2.2)),
            beta2=to_linear_units(ch.get("beta2", 2.2)),
            k1=to_linear_units(ch.get("k1", 10.0)),
            k2=to_linear_units(ch.get("k2", 10.0)),
            spacing_ratio=to_linear_units(ch.get("spacing_ratio", 0.5)),
        )
        pm = _req(uav, "p_max", "uav.")
        pm = tuple(to_linear_units(x) for x in pm) if isinstance(pm, list) else (to_linear_units(pm),)
        n_el = _req(irs, "n_elements", "irs.")
        n_sub = _req(irs, "subsurface_size", "irs.")
        if not (isinstance(n_el, int) and isinstance(n_sub, int)):
            raise ScenarioError("irs.n_elements and irs.subsurface_size must be integers")
        return Scenario(
            groups=tuple(groups),
            irs_location=_vec(_req(irs, "location", "irs."), 3, "irs.location"),
            n_elements=n_el,
            subsurface_size=n_sub,
            channel=channel,
            z_min=to_linear_units(_req(uav, "z_min", "uav.")),
            z_max=to_linear_units(_req(uav, "z_max", "uav.")),
            delta_min=to_linear_units(uav.get("delta_min", 10.0)),
            p_max=pm,
            trust_ratio=to_linear_units(uav.get("trust_ratio", 0.1)),
            trust_step=to_linear_units(uav.get("trust_step", 5.0)),
            multistart_count=int(d.get("multistart", 10)),
            irs_enabled=bool(irs.get("enabled", True)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None


def scenario_to_dict(s: Scenario) -> dict:
    """Plain-dict form in linear units; ``scenario_from_dict`` inverts it."""
    c = s.channel
    return {
        "irs": {
            "location": list(s.irs_location),
            "n_elements": s.n_elements,
            "subsurface_size": s.subsurface_size,
            "enabled": s.irs_enabled,
        },
        "channel": {
            "rho0": c.rho0, "sigma2": c.sigma2, "beta1": c.beta1, "beta2": c.beta2,
            "k1": c.k1, "k2": c.k2, "spacing_ratio": c.spacing_ratio,
        },
        "uav": {
            "z_min": s.z_min, "z_max": s.z_max, "delta_min": s.delta_min,
            "p_max": list(s.p_max), "trust_ratio": s.trust_ratio, "trust_step": s.trust_step,
        },
        "multistart": s.multistart_count,
        "groups": [
            {"users": [list(w) for w in g.users],
             **({"area": [list(g.area[0]), list(g.area[1])]} if g.area is not None else {})}
            for g in s.groups
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file.  ``"ref"`` names the bundled reference."""
    if str(path) in ("ref", "reference"):
        text = resources.files("uavirs").joinpath("data/reference.yaml").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise ScenarioError(f"scenario file not found: {p}")
        text = p.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    return scenario_from_dict(data)


def dump_scenario(s: Scenario, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(scenario_to_dict(s), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def reference_scenario() -> Scenario:
    return load_scenario("ref")


def make_scenario(groups: Sequence[Sequence[Sequence[float]]], *, m: int = 20, subsurface_size: int = 20,
                  irs_location=(0.0, 250.0, 20.0), p_max: float = 0.1, **kw) -> Scenario:
    """Convenience constructor with the reference radio constants."""
    channel = kw.pop("channel", ChannelParams(rho0=db(-30), sigma2=dbm(-80), k1=db(10), k2=db(10)))
    gs = tuple(UserGroup(users=tuple(tuple(float(c) for c in (list(w) + [0.0])[:3]) for w in g),
                         area=None) for g in groups)
    return Scenario(groups=gs, irs_location=tuple(irs_location), n_elements=max(m, 1) * subsurface_size,
                    subsurface_size=subsurface_size, channel=channel, p_max=(p_max,),
                    irs_enabled=kw.pop("irs_enabled", m > 0), **kw)
