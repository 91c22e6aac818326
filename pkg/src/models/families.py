"""
Built-in model families with closed-form reference behaviour.
"""
from src.models.fields import ConstantField, QuadraticField, RadialPolynomialField
from src.models.model_spec import ModelSpec


def harmonic_model(dimension: int = 1) -> ModelSpec:
    """
    No drift, death rate |x|^2/2, no births.

    K~ = |x|^2/2 so the spectrum is the Hermite spectrum n + d/2.
    """
    return ModelSpec(
        dimension=dimension,
        potential=ConstantField(0.0),
        birth=ConstantField(0.0),
        death=QuadraticField(1.0),
        name="harmonic",
    )


def ou_model(c: float = -1.0, kappa: float = 0.3, dimension: int = 1) -> ModelSpec:
    """
    Ornstein-Uhlenbeck motion dX = c X dt + dB with constant reduction rate kappa.

    V = c|x|^2/2; a negative kappa is realized as a constant birth rate.
    """
    if c == 0.0:
        raise ValueError("The OU family needs a non-zero drift constant c")
    birth = max(-kappa, 0.0)
    death = max(kappa, 0.0)
    return ModelSpec(
        dimension=dimension,
        potential=QuadraticField(c),
        birth=ConstantField(birth),
        death=ConstantField(death),
        name="ou",
    )


def yule_model(rate: float = 0.5, dimension: int = 1) -> ModelSpec:
    """Pure birth at a constant rate with Brownian motion; E N_t = exp(rate t)."""
    return ModelSpec(
        dimension=dimension,
        potential=ConstantField(0.0),
        birth=ConstantField(rate),
        death=ConstantField(0.0),
        name="yule",
    )


def critical_model(rate: float = 1.0, dimension: int = 1) -> ModelSpec:
    """Equal birth and death rates (K = 0); E N_t = 1."""
    return ModelSpec(
        dimension=dimension,
        potential=ConstantField(0.0),
        birth=ConstantField(rate),
        death=ConstantField(rate),
        name="critical",
    )


def example13_model(alpha: float, beta: float, dimension: int = 1) -> ModelSpec:
    """
    Growth family V = (|x|^2 + 1)^(alpha/2), d = (|x|^2 + 1)^(beta/2), b = 0.

    |V| grows like |x|^alpha and the death rate like |x|^beta. K~ then grows
    like |x|^max(beta, 2 alpha - 2), so beta is the K~ exponent only while
    alpha <= 1 + beta/2.
    """
    return ModelSpec(
        dimension=dimension,
        potential=RadialPolynomialField(1.0, alpha, shift=1.0),
        birth=ConstantField(0.0),
        death=RadialPolynomialField(1.0, beta, shift=1.0),
        name="example13",
    )


FAMILIES = {
    "harmonic": harmonic_model,
    "ou": ou_model,
    "yule": yule_model,
    "critical": critical_model,
    "example13": example13_model,
}
