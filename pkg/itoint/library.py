"""
Built-in integrands and Itô test functions.

Integrands are selected by name plus keyword parameters from the
configuration; the names here are the whole catalog.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from .errors import ConfigError
from .process import IntegrandFunctional, markov_functional


@dataclass(frozen=True)
class IntegrandEntry:
    """Catalog row for one built-in integrand."""

    name: str
    description: str
    parameters: Dict[str, float]
    h2: bool
    continuous: bool
    build: Callable[..., IntegrandFunctional]


def _const(value: float = 1.0) -> IntegrandFunctional:
    value = float(value)
    return markov_functional(
        "const",
        lambda w: np.full(np.shape(w), value),
        h2_claim=True,
        l2_oracle=lambda t, level: 0.0,
        isometry_oracle=lambda t, level: value * value * t,
    )


def _wiener() -> IntegrandFunctional:
    # l2: expected L2 error of left sampling on 2**level steps over [0, t]
    # isometry: sum of t_{i-1} dt over the same steps
    return markov_functional(
        "wiener",
        lambda w: np.array(w, dtype=np.float64),
        h2_claim=True,
        l2_oracle=lambda t, level: t * t / 2.0**level / 2.0,
        isometry_oracle=lambda t, level: t * t * (1.0 - 2.0**-level) / 2.0,
    )


def _sin_of_w(frequency: float = 1.0) -> IntegrandFunctional:
    frequency = float(frequency)
    return markov_functional("sin-of-w", lambda w: np.sin(frequency * w), h2_claim=True)


def _exp_w_squared() -> IntegrandFunctional:
    # E exp(2 W(s)^2) diverges once s >= 1/4, so the integrand is in L2 but not H2
    return markov_functional("exp-w-squared", lambda w: np.exp(np.square(w)), h2_claim=False)


INTEGRANDS: Dict[str, IntegrandEntry] = {
    "const": IntegrandEntry(
        name="const",
        description="b(s) = value",
        parameters={"value": 1.0},
        h2=True,
        continuous=True,
        build=_const,
    ),
    "wiener": IntegrandEntry(
        name="wiener",
        description="b(s) = W(s)",
        parameters={},
        h2=True,
        continuous=True,
        build=_wiener,
    ),
    "sin-of-w": IntegrandEntry(
        name="sin-of-w",
        description="b(s) = sin(frequency * W(s))",
        parameters={"frequency": 1.0},
        h2=True,
        continuous=True,
        build=_sin_of_w,
    ),
    "exp-w-squared": IntegrandEntry(
        name="exp-w-squared",
        description="b(s) = exp(W(s)^2); pathwise continuous, E int b^2 = inf for t >= 1/4",
        parameters={},
        h2=False,
        continuous=True,
        build=_exp_w_squared,
    ),
}


def build_integrand(kind: str, params: Optional[Mapping[str, Any]] = None) -> IntegrandFunctional:
    """
    Build a built-in integrand by name.

    Raises:
        ConfigError: If the name or a parameter is unknown
    """
    if kind not in INTEGRANDS:
        raise ConfigError(f"Unknown integrand '{kind}'. Available: {sorted(INTEGRANDS)}")
    entry = INTEGRANDS[kind]
    params = dict(params or {})
    unknown = set(params) - set(entry.parameters)
    if unknown:
        raise ConfigError(f"Unknown parameters for '{kind}': {sorted(unknown)}")
    return entry.build(**params)


def integrand_catalog() -> List[Dict[str, Any]]:
    """One row per built-in integrand with its flags."""
    return [
        {
            "name": entry.name,
            "parameters": ",".join(f"{k}={v:g}" for k, v in entry.parameters.items()),
            "h2": entry.h2,
            "continuous": entry.continuous,
            "description": entry.description,
        }
        for entry in INTEGRANDS.values()
    ]


@dataclass(frozen=True)
class ItoFunction:
    """A twice-differentiable scalar function with its derivatives."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    # whether f'(W) is in H2 on every bounded horizon
    h2_integrand: bool = True


ITO_FUNCTIONS: Dict[str, ItoFunction] = {
    "identity": ItoFunction(
        "identity",
        f=lambda x: np.array(x, dtype=np.float64),
        df=lambda x: np.ones_like(x, dtype=np.float64),
        d2f=lambda x: np.zeros_like(x, dtype=np.float64),
    ),
    "square": ItoFunction(
        "square",
        f=lambda x: np.square(x),
        df=lambda x: 2.0 * x,
        d2f=lambda x: np.full(np.shape(x), 2.0),
    ),
    "exp": ItoFunction(
        "exp",
        f=np.exp,
        df=np.exp,
        d2f=np.exp,
    ),
    "exp-square": ItoFunction(
        "exp-square",
        f=lambda x: np.exp(np.square(x)),
        df=lambda x: 2.0 * x * np.exp(np.square(x)),
        d2f=lambda x: (2.0 + 4.0 * np.square(x)) * np.exp(np.square(x)),
        h2_integrand=False,
    ),
}


def get_ito_function(name: str) -> ItoFunction:
    if name not in ITO_FUNCTIONS:
        raise ConfigError(f"Unknown Ito function '{name}'. Available: {sorted(ITO_FUNCTIONS)}")
    return ITO_FUNCTIONS[name]
