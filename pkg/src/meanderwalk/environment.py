"""Quenched conductance environments on the nearest-neighbour edges of Z^d.

An environment assigns a strictly positive conductance to every unordered
nearest-neighbour edge, uniformly bounded into (kappa, 1/kappa).  Values
are deterministic functions of (seed, canonical edge encoding): the edge
is reduced to (lower endpoint, axis) with lexicographic endpoint ordering,
the endpoint coordinates are zig-zag packed to unsigned words, and the
word sequence is hashed by the chain in :mod:`meanderwalk.rng`.  Two
processes holding the same manifest therefore regenerate bit-identical
conductances in any query order (manifest ``format_version`` 1 names this
scheme: SplitMix64 chain over zig-zag words, 53-bit mantissa conversion).

The walk itself never mutates an environment; translations are expressed
through :func:`shift`, which only moves the coordinate frame.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import rng
from .errors import InvalidEdgeError, ManifestError, ParameterError

FORMAT_VERSION = 1
DEFAULT_KAPPA = 0.5


# ---------------------------------------------------------------------------
# conductance generators

@dataclass(frozen=True)
class Constant:
    """Every edge takes the same value."""
    value: float = 1.0
    tag = "constant"

    def params(self):
        return {"value": self.value}

    def validate(self, kappa: float) -> None:
        _check_range("value", self.value, kappa)

    def mean(self, kappa: float) -> float:
        return self.value

    def variance(self, kappa: float) -> float:
        return 0.0


@dataclass(frozen=True)
class IidUniform:
    """Independent uniform draws on the open interval (kappa, 1/kappa)."""
    tag = "iid_uniform"

    def params(self):
        return {}

    def validate(self, kappa: float) -> None:
        pass

    def mean(self, kappa: float) -> float:
        return 0.5 * (kappa + 1.0 / kappa)

    def variance(self, kappa: float) -> float:
        return (1.0 / kappa - kappa) ** 2 / 12.0


@dataclass(frozen=True)
class IidTwoPoint:
    """Independent draws: value lo with probability p, else hi."""
    p: float
    lo: float
    hi: float
    tag = "iid_two_point"

    def params(self):
        return {"p": self.p, "lo": self.lo, "hi": self.hi}

    def validate(self, kappa: float) -> None:
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"two-point probability must lie in (0,1), got {self.p}")
        _check_range("lo", self.lo, kappa)
        _check_range("hi", self.hi, kappa)
        if self.lo > self.hi:
            raise ParameterError("two-point generator needs lo <= hi")

    def mean(self, kappa: float) -> float:
        return self.p * self.lo + (1.0 - self.p) * self.hi

    def variance(self, kappa: float) -> float:
        return self.p * (1.0 - self.p) * (self.hi - self.lo) ** 2


@dataclass(frozen=True)
class Periodic:
    """Pattern values assigned by (sum of lower-endpoint coordinates + axis
    + random phase) mod pattern length.  The phase is drawn from the seed,
    which makes the induced field stationary."""
    pattern: tuple

    tag = "periodic"

    def params(self):
        return {"pattern": list(self.pattern)}

    def validate(self, kappa: float) -> None:
        if len(self.pattern) < 1:
            raise ParameterError("periodic pattern must be non-empty")
        for v in self.pattern:
            _check_range("pattern value", v, kappa)

    def mean(self, kappa: float) -> float:
        return float(np.mean(self.pattern))

    def variance(self, kappa: float) -> float:
        return float(np.var(self.pattern))


Generator = Union[Constant, IidUniform, IidTwoPoint, Periodic]

_GENERATORS = {
    "constant": Constant,
    "iid_uniform": IidUniform,
    "iid_two_point": IidTwoPoint,
    "periodic": Periodic,
}


def make_generator(tag: str, **params) -> Generator:
    if tag not in _GENERATORS:
        raise ManifestError(f"unknown generator tag {tag!r}; known: {sorted(_GENERATORS)}")
    if tag == "periodic":
        params = dict(params)
        if "pattern" in params:
            params["pattern"] = tuple(params["pattern"])
    try:
        return _GENERATORS[tag](**params)
    except TypeError as exc:
        raise ManifestError(f"bad parameters for generator {tag!r}: {exc}") from exc


def _check_range(name: str, value: float, kappa: float) -> None:
    if not (kappa < value < 1.0 / kappa):
        raise ParameterError(
            f"{name} = {value} violates the uniform ellipticity bounds "
            f"({kappa}, {1.0 / kappa})")


# ---------------------------------------------------------------------------
# environment

@dataclass(frozen=True)
class Environment:
    """Immutable conductance field with a coordinate-frame offset."""
    dimension: int
    kappa: float
    generator: Generator
    seed: int
    origin: tuple = None  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.dimension) < 2:
            raise ParameterError(f"dimension must be >= 2, got {self.dimension}")
        if not 0.0 < self.kappa < 1.0:
            raise ParameterError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.origin is None:
            object.__setattr__(self, "origin", (0,) * self.dimension)
        else:
            object.__setattr__(self, "origin", tuple(int(c) for c in self.origin))
        if len(self.origin) != self.dimension:
            raise ParameterError("origin length must equal dimension")
        if not isinstance(self.seed, (int, np.integer)):
            raise ParameterError("seed must be an integer")
        self.generator.validate(self.kappa)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.generator, Constant)

    @property
    def phase(self) -> int:
        if not isinstance(self.generator, Periodic):
            return 0
        length = len(self.generator.pattern)
        return int(rng.hash_key(rng.DOMAIN_ENV, self.seed, 0x50484153) % np.uint64(length))


def environment(dimension: int = 2, kappa: float = DEFAULT_KAPPA,
                generator=None, seed: int = 0, **params) -> Environment:
    """Convenience constructor; generator may be an instance or a tag."""
    if generator is None:
        generator = Constant(1.0)
    elif isinstance(generator, str):
        generator = make_generator(generator, **params)
    elif params:
        raise ParameterError("generator parameters need a tag, not an instance")
    return Environment(dimension, kappa, generator, seed)


# ---------------------------------------------------------------------------
# edges

def canonical_edge(a, b):
    """Canonical (lower endpoint, axis) form of the unordered edge {a, b}.

    Raises InvalidEdgeError unless a and b are nearest neighbours.
    """
    a = tuple(int(c) for c in a)
    b = tuple(int(c) for c in b)
    if len(a) != len(b):
        raise InvalidEdgeError("edge endpoints have mismatched dimension")
    diff = [bi - ai for ai, bi in zip(a, b)]
    nz = [i for i, v in enumerate(diff) if v != 0]
    if len(nz) != 1 or abs(diff[nz[0]]) != 1:
        raise InvalidEdgeError(f"{a} and {b} are not nearest neighbours")
    axis = nz[0]
    lower = a if diff[axis] == 1 else b
    return lower, axis


@dataclass(frozen=True)
class EdgeId:
    """Unordered nearest-neighbour edge in canonical form."""
    lower: tuple
    axis: int

    @classmethod
    def of(cls, a, b) -> "EdgeId":
        lower, axis = canonical_edge(a, b)
        return cls(lower, axis)

    @property
    def upper(self) -> tuple:
        return tuple(c + (1 if i == self.axis else 0) for i, c in enumerate(self.lower))


# ---------------------------------------------------------------------------
# conductance evaluation

def conductance_batch(env: Environment, lower: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Conductances for a batch of canonical edges.

    ``lower`` has shape (N, d) in the environment's coordinate frame;
    ``axis`` has shape (N,).  Vectorized, no state.
    """
    lower = np.asarray(lower, dtype=np.int64)
    axis = np.asarray(axis, dtype=np.int64)
    if lower.ndim != 2 or lower.shape[1] != env.dimension:
        raise InvalidEdgeError("lower endpoints must have shape (N, dimension)")
    gen = env.generator
    shifted = lower + np.asarray(env.origin, dtype=np.int64)
    if isinstance(gen, Constant):
        return np.full(lower.shape[0], gen.value, dtype=np.float64)
    if isinstance(gen, Periodic):
        length = len(gen.pattern)
        idx = (shifted.sum(axis=1) + axis + env.phase) % length
        return np.asarray(gen.pattern, dtype=np.float64)[idx]
    words = [rng.zigzag(shifted[:, j]) for j in range(env.dimension)]
    words.append(axis.view(np.uint64) if axis.dtype == np.int64 else axis.astype(np.uint64))
    bits = rng.hash_key(rng.DOMAIN_ENV, env.seed, *words)
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    if isinstance(gen, IidUniform):
        return env.kappa + u * (1.0 / env.kappa - env.kappa)
    if isinstance(gen, IidTwoPoint):
        return np.where(u < gen.p, gen.lo, gen.hi)
    raise ParameterError(f"unhandled generator {gen!r}")


def conductance(env: Environment, edge) -> float:
    """Conductance of a single edge, given as EdgeId or endpoint pair."""
    if isinstance(edge, EdgeId):
        lower, axis = edge.lower, edge.axis
    else:
        a, b = edge
        lower, axis = canonical_edge(a, b)
    if len(lower) != env.dimension:
        raise InvalidEdgeError(
            f"edge dimension {len(lower)} != environment dimension {env.dimension}")
    return float(conductance_batch(env, np.asarray([lower]), np.asarray([axis]))[0])


def incident_conductances(env: Environment, points: np.ndarray) -> np.ndarray:
    """Conductances of the 2d incident edges of each point.

    Returns shape (N, 2d); column order is +e_1, -e_1, +e_2, -e_2, ...
    matching the move table in :mod:`meanderwalk.walk`.
    """
    pts = np.asarray(points, dtype=np.int64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    d = env.dimension
    n = pts.shape[0]
    if isinstance(env.generator, Constant):
        return np.full((n, 2 * d) if not single else (2 * d,), env.generator.value)
    out = np.empty((n, 2 * d), dtype=np.float64)
    for j in range(d):
        out[:, 2 * j] = conductance_batch(env, pts, np.full(n, j, dtype=np.int64))
        low = pts.copy()
        low[:, j] -= 1
        out[:, 2 * j + 1] = conductance_batch(env, low, np.full(n, j, dtype=np.int64))
    return out[0] if single else out


def pi(env: Environment, x) -> float:
    """Total conductance pi(x), the sum over the 2d incident edges."""
    vals = incident_conductances(env, np.asarray([list(x)], dtype=np.int64))
    return float(vals.sum())


def shift(env: Environment, x) -> Environment:
    """Environment seen from x: conductances of the shifted field satisfy
    conductance(shift(env, x), (a, b)) == conductance(env, (a + x, b + x))."""
    x = tuple(int(c) for c in x)
    if len(x) != env.dimension:
        raise ParameterError("shift vector length must equal dimension")
    new_origin = tuple(o + c for o, c in zip(env.origin, x))
    return dataclasses.replace(env, origin=new_origin)


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class EnvironmentManifest:
    """Portable description sufficient to regenerate an environment."""
    format_version: int
    dimension: int
    kappa: float
    generator_tag: str
    generator_params: dict
    seed: int

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "dimension": self.dimension,
            "kappa": self.kappa,
            "generator": {"tag": self.generator_tag, **self.generator_params},
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_environment(self) -> Environment:
        if self.format_version != FORMAT_VERSION:
            raise ManifestError(
                f"manifest format_version {self.format_version} not supported "
                f"(this build reads version {FORMAT_VERSION})")
        gen = make_generator(self.generator_tag, **self.generator_params)
        try:
            return Environment(self.dimension, self.kappa, gen, self.seed)
        except ParameterError as exc:
            raise ManifestError(str(exc)) from exc


def save_manifest(env: Environment) -> EnvironmentManifest:
    if env.origin != (0,) * env.dimension:
        raise ManifestError("only unshifted environments are portable; "
                            "apply shifts after loading")
    return EnvironmentManifest(
        format_version=FORMAT_VERSION,
        dimension=env.dimension,
        kappa=env.kappa,
        generator_tag=env.generator.tag,
        generator_params=env.generator.params(),
        seed=int(env.seed),
    )


def load_manifest(text_or_dict) -> EnvironmentManifest:
    """Parse a manifest from its JSON text (or an already-decoded dict)."""
    if isinstance(text_or_dict, (str, bytes)):
        try:
            payload = json.loads(text_or_dict)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    else:
        payload = text_or_dict
    if not isinstance(payload, dict):
        raise ManifestError("manifest must be a JSON object")
    required = {"format_version", "dimension", "kappa", "generator", "seed"}
    missing = required - payload.keys()
    if missing:
        raise ManifestError(f"manifest missing keys: {sorted(missing)}")
    extra = payload.keys() - required
    if extra:
        raise ManifestError(f"manifest has unknown keys: {sorted(extra)}")
    gen = payload["generator"]
    if not isinstance(gen, dict) or "tag" not in gen:
        raise ManifestError("manifest generator must be an object with a 'tag'")
    gen_params = {k: v for k, v in gen.items() if k != "tag"}
    if not isinstance(payload["seed"], int):
        raise ManifestError("manifest seed must be a decimal integer")
    manifest = EnvironmentManifest(
        format_version=payload["format_version"],
        dimension=payload["dimension"],
        kappa=payload["kappa"],
        generator_tag=gen["tag"],
        generator_params=gen_params,
        seed=payload["seed"],
    )
    manifest.to_environment()  # validate eagerly
    return manifest


def write_manifest(env: Environment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_manifest(env).to_json())
        fh.write("\n")


def read_manifest(path) -> EnvironmentManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return load_manifest(fh.read())
