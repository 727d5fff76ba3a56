"""Mixture polynomials xi(x) = sum_p w_p x^p and the derived theta function.

The mixture polynomial encodes the covariance structure of the random
Hamiltonian: degree p enters with weight w_p >= 0.  Degrees are distinct
integers in [1, MAX_DEGREE]; odd degrees are allowed.  There is no constant
term, so xi(0) = 0 always holds.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import MixtureError

MAX_DEGREE = 8
MAX_DERIVATIVE_ORDER = 3

# slack for overlap values that land just outside [-1, 1] through rounding
_DOMAIN_SLACK = 1e-12

_TERM_RE = re.compile(r"^p(\d+):([^:]+)$")


@dataclass(frozen=True)
class MixturePolynomial:
    """Immutable mixture xi(x) = sum_p w_p x^p.

    ``terms`` is a tuple of (degree, weight) pairs, sorted by degree.
    Instances are hashable and can key caches.
    """

    terms: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        cleaned = []
        seen = set()
        for entry in self.terms:
            try:
                p, w = entry
            except (TypeError, ValueError):
                raise MixtureError(f"term {entry!r} is not a (degree, weight) pair")
            if not isinstance(p, (int, np.integer)) or isinstance(p, bool):
                raise MixtureError(f"degree {p!r} is not an integer")
            p = int(p)
            w = float(w)
            if p < 1 or p > MAX_DEGREE:
                raise MixtureError(f"degree {p} outside [1, {MAX_DEGREE}]")
            if p in seen:
                raise MixtureError(f"duplicate degree {p}")
            if not math.isfinite(w) or w < 0.0:
                raise MixtureError(f"weight {w!r} for degree {p} must be finite and >= 0")
            seen.add(p)
            cleaned.append((p, w))
        if not any(w > 0.0 for _, w in cleaned):
            raise MixtureError("at least one weight must be strictly positive")
        cleaned.sort()
        object.__setattr__(self, "terms", tuple(cleaned))

    @classmethod
    def from_pairs(cls, pairs) -> "MixturePolynomial":
        return cls(tuple((p, w) for p, w in pairs))

    @classmethod
    def from_string(cls, text: str) -> "MixturePolynomial":
        """Parse the CLI syntax ``p<degree>:<weight>[,p<degree>:<weight>...]``."""
        pairs = []
        for part in text.split(","):
            m = _TERM_RE.match(part.strip())
            if m is None:
                raise MixtureError(f"cannot parse mixture term {part!r}")
            try:
                weight = float(m.group(2))
            except ValueError:
                raise MixtureError(f"cannot parse weight in {part!r}")
            pairs.append((int(m.group(1)), weight))
        return cls.from_pairs(pairs)

    @classmethod
    def from_json_obj(cls, obj) -> "MixturePolynomial":
        """Build from ``{"mixture": [{"p": 2, "w": 1.0}, ...]}`` or the bare list."""
        if isinstance(obj, dict) and "mixture" in obj:
            obj = obj["mixture"]
        if not isinstance(obj, (list, tuple)):
            raise MixtureError("mixture JSON must be a list of {p, w} objects")
        pairs = []
        for entry in obj:
            if not isinstance(entry, dict) or "p" not in entry or "w" not in entry:
                raise MixtureError(f"mixture entry {entry!r} must have keys 'p' and 'w'")
            pairs.append((entry["p"], entry["w"]))
        return cls.from_pairs(pairs)

    @classmethod
    def from_json(cls, text: str) -> "MixturePolynomial":
        return cls.from_json_obj(json.loads(text))

    def to_json_obj(self) -> dict:
        return {"mixture": [{"p": p, "w": w} for p, w in self.terms]}

    def __str__(self) -> str:
        return ",".join(f"p{p}:{w:g}" for p, w in self.terms)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.terms)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def weight(self, p: int) -> float:
        for degree, w in self.terms:
            if degree == p:
                return w
        return 0.0

    def eval(self, x, order: int = 0):
        """Evaluate the ``order``-th derivative of xi at x.

        Derivatives are exact polynomial derivatives: the degree-p term
        contributes w_p * p! / (p - order)! * x^(p - order) when p >= order.
        x must lie in the overlap domain [-1, 1]; scalars and arrays are
        both accepted.

        Raises:
            MixtureError: if order is outside [0, 3] or |x| > 1.
        """
        if order not in (0, 1, 2, 3):
            raise MixtureError(f"derivative order {order!r} outside [0, {MAX_DERIVATIVE_ORDER}]")
        arr = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise MixtureError("x must be finite")
        if np.any(np.abs(arr) > 1.0 + _DOMAIN_SLACK):
            raise MixtureError(f"|x| <= 1 required, got extremum {arr.flat[np.argmax(np.abs(arr))]}")
        arr = np.clip(arr, -1.0, 1.0)
        out = np.zeros_like(arr)
        for p, w in self.terms:
            if p < order or w == 0.0:
                continue
            factor = w * math.perm(p, order)
            out = out + factor * arr ** (p - order)
        if np.isscalar(x) or arr.ndim == 0:
            return float(out)
        return out

    def theta(self, x):
        """theta(x) = x * xi'(x) - xi(x), nonnegative on [0, 1]."""
        arr = np.asarray(x, dtype=float)
        out = arr * self.eval(arr, 1) - self.eval(arr, 0)
        if np.isscalar(x) or arr.ndim == 0:
            return float(out)
        return out
