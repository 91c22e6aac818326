"""
Smooth scalar fields on R^d with value, gradient and Laplacian evaluation.

Fields are vectorized: every method takes an array of points with shape
``(n, d)`` (a single point of shape ``(d,)`` is promoted) and returns one value,
gradient row or Laplacian per point.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Mapping, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


class FieldEvaluationError(Exception):
    """Raised when a field evaluates to a non-finite value."""
    pass


class FieldDescriptorError(ValueError):
    """Raised when a field descriptor cannot be parsed."""
    pass


def as_points(x: ArrayLike, dimension: int = None) -> np.ndarray:
    """
    Promote a point or a batch of points to a float array of shape (n, d).

    Args:
        x: Scalar (1-d point), point of shape (d,) or batch of shape (n, d)
        dimension: Expected dimension; a flat vector is read as n points of
            dimension 1 when ``dimension == 1``

    Returns:
        np.ndarray: Points with shape (n, d)
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dimension == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(1, -1)
    if dimension is not None and arr.shape[1] != dimension:
        raise ValueError(f"Expected points of dimension {dimension}, got shape {arr.shape}")
    return arr


class ScalarField(ABC):
    """Base class of C^2 scalar fields."""

    kind: str = "abstract"

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Field values, shape (n,)."""

    @abstractmethod
    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Field gradients, shape (n, d)."""

    @abstractmethod
    def laplacian(self, points: np.ndarray) -> np.ndarray:
        """Field Laplacians, shape (n,)."""

    @abstractmethod
    def descriptor(self) -> Dict[str, Any]:
        """Plain-data description, parseable by ``field_from_descriptor``."""

    @property
    def is_radial(self) -> bool:
        return False

    @property
    def is_zero(self) -> bool:
        return False

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.evaluate(as_points(x))

    def __add__(self, other: "ScalarField") -> "SumField":
        return SumField(((1.0, self), (1.0, other)))

    def __sub__(self, other: "ScalarField") -> "SumField":
        return SumField(((1.0, self), (-1.0, other)))

    def __mul__(self, weight: float) -> "SumField":
        return SumField(((float(weight), self),))

    __rmul__ = __mul__

    def __neg__(self) -> "SumField":
        return self * -1.0

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.descriptor()})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ScalarField) and self.descriptor() == other.descriptor()

    def __hash__(self) -> int:
        return hash(repr(self))


class ConstantField(ScalarField):
    """The constant field x -> value."""

    kind = "constant"

    def __init__(self, value: float):
        self.value = float(value)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[0], self.value)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.zeros_like(points)

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(points.shape[0])

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "value": self.value}

    @property
    def is_radial(self) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


class QuadraticField(ScalarField):
    """The field V(x) = c|x|^2 / 2 (the OU potential for drift c x)."""

    kind = "quadratic"

    def __init__(self, c: float):
        self.c = float(c)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return 0.5 * self.c * np.einsum("ij,ij->i", points, points)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self.c * points

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[0], self.c * points.shape[1])

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "c": self.c}

    @property
    def is_radial(self) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        return self.c == 0.0


class RadialPolynomialField(ScalarField):
    """
    The field f(x) = a (|x|^2 + shift^2)^(alpha/2).

    A positive shift makes the field C^2 at the origin for any alpha >= 0;
    with shift = 0 only alpha = 0 or alpha >= 2 is smooth there.
    """

    kind = "radial"

    def __init__(self, a: float, alpha: float, shift: float = 0.0):
        if alpha < 0:
            raise FieldDescriptorError(f"Radial exponent must be >= 0, got {alpha}")
        self.a = float(a)
        self.alpha = float(alpha)
        self.shift = float(shift)

    def _s(self, points: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", points, points) + self.shift ** 2

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.a * self._s(points) ** (0.5 * self.alpha)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        if self.alpha == 0.0:
            return np.zeros_like(points)
        s = self._s(points)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = self.a * self.alpha * s ** (0.5 * self.alpha - 1.0)
        return factor[:, None] * points

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        if self.alpha == 0.0:
            return np.zeros(points.shape[0])
        d = points.shape[1]
        s = self._s(points)
        r2 = s - self.shift ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            value = d * s ** (0.5 * self.alpha - 1.0)
            if self.alpha != 2.0:
                value = value + (self.alpha - 2.0) * r2 * s ** (0.5 * self.alpha - 2.0)
        return self.a * self.alpha * value

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a, "alpha": self.alpha, "shift": self.shift}

    @property
    def is_radial(self) -> bool:
        return True

    @property
    def is_zero(self) -> bool:
        return self.a == 0.0


class SumField(ScalarField):
    """Weighted sum of fields, sum_i w_i f_i."""

    kind = "sum"

    def __init__(self, terms: Sequence[Tuple[float, ScalarField]]):
        self.terms: Tuple[Tuple[float, ScalarField], ...] = tuple(
            (float(w), f) for w, f in terms
        )

    def _combine(self, method: str, points: np.ndarray) -> np.ndarray:
        total = None
        for weight, term in self.terms:
            value = weight * getattr(term, method)(points)
            total = value if total is None else total + value
        if total is None:
            return np.zeros_like(points) if method == "gradient" else np.zeros(points.shape[0])
        return total

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self._combine("evaluate", points)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self._combine("gradient", points)

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return self._combine("laplacian", points)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "terms": [dict(term.descriptor(), weight=w) for w, term in self.terms],
        }

    @property
    def is_radial(self) -> bool:
        return all(term.is_radial for _, term in self.terms)

    @property
    def is_zero(self) -> bool:
        return all(w == 0.0 or term.is_zero for w, term in self.terms)


_FIELD_KEYS = {
    "constant": {"value"},
    "quadratic": {"c"},
    "radial": {"a", "alpha", "shift"},
    "sum": {"terms", "scale"},
}


def field_from_descriptor(descriptor: Mapping[str, Any]) -> ScalarField:
    """
    Build a field from its descriptor mapping.

    Args:
        descriptor: Mapping with a ``kind`` key and the kind's parameters; any
            descriptor may carry a ``weight`` multiplier

    Returns:
        ScalarField: The described field

    Raises:
        FieldDescriptorError: On unknown kinds, unknown keys or missing parameters
    """
    if isinstance(descriptor, ScalarField):
        return descriptor
    if not isinstance(descriptor, Mapping) or "kind" not in descriptor:
        raise FieldDescriptorError(f"Field descriptor must be a table with a 'kind': {descriptor!r}")

    kind = descriptor["kind"]
    if kind not in _FIELD_KEYS:
        raise FieldDescriptorError(f"Unknown field kind '{kind}'")

    params = {k: v for k, v in descriptor.items() if k not in ("kind", "weight")}
    unknown = set(params) - _FIELD_KEYS[kind]
    if unknown:
        raise FieldDescriptorError(f"Unknown keys for field kind '{kind}': {sorted(unknown)}")

    try:
        if kind == "constant":
            field: ScalarField = ConstantField(params["value"])
        elif kind == "quadratic":
            field = QuadraticField(params["c"])
        elif kind == "radial":
            field = RadialPolynomialField(params["a"], params["alpha"], params.get("shift", 0.0))
        else:
            terms = [(1.0, field_from_descriptor(t)) for t in params["terms"]]
            field = SumField(terms)
            scale = float(params.get("scale", 1.0))
            if scale != 1.0:
                field = field * scale
    except KeyError as e:
        raise FieldDescriptorError(f"Missing parameter {e} for field kind '{kind}'")
    except (TypeError, ValueError) as e:
        raise FieldDescriptorError(f"Invalid parameters for field kind '{kind}': {e}")

    weight = float(descriptor.get("weight", 1.0))
    return field if weight == 1.0 else field * weight


def checked(values: np.ndarray, name: str, points: np.ndarray) -> np.ndarray:
    """
    Return ``values`` unchanged, or raise if any entry is non-finite.

    Raises:
        FieldEvaluationError: Naming the field and the first offending point
    """
    finite = np.isfinite(values)
    if finite.all():
        return values
    row = np.argwhere(~finite)[0][0]
    point = points[row]
    logger.error(f"Non-finite value of {name} at point {point.tolist()}")
    raise FieldEvaluationError(f"Field {name} is not finite at point {point.tolist()}")
