"""Fixed, versioned families of test functions.

Universal statements ("for all f") are audited on a finite surrogate; the
family is frozen per version so reports stay reproducible.
"""

from __future__ import annotations

from numpy.polynomial.hermite_e import herme2poly

from .errors import ArgumentError
from .jets import X, constant, exp

__all__ = ["FAMILY_VERSION", "hermite", "test_family"]

FAMILY_VERSION = "v1"

BUMP_CENTERS = (-2.0, -1.0, 0.0, 1.0, 2.0)
EXP_RATES = (-1.0, -0.5, 0.5, 1.0)


def hermite(k, x=X):
    """Probabilists' Hermite polynomial ``He_k`` as a SmoothFunction."""
    if k < 0:
        raise ArgumentError("Hermite degree must be nonnegative")
    coef = herme2poly([0.0] * k + [1.0])
    out = constant(float(coef[0]))
    for j in range(1, k + 1):
        if coef[j] != 0.0:
            out = out + float(coef[j]) * x**j
    return out


def test_family(version=FAMILY_VERSION, positive=False, shift=0.0):
    """List of ``(label, SmoothFunction)`` pairs.

    ``positive=True`` keeps only the strictly positive members (bumps and
    exponentials), suitable for generators Phi defined on ``(0, inf)``.
    ``shift`` is added to every member.
    """
    if version != "v1":
        raise ArgumentError(f"unknown test family version {version!r}")
    out = []
    if not positive:
        out += [(f"He{k}", hermite(k)) for k in range(1, 7)]
    out += [(f"bump({c:g})", exp(-((X - c) ** 2))) for c in BUMP_CENTERS]
    out += [(f"exp({lam:g}x)", exp(lam * X)) for lam in EXP_RATES]
    if shift:
        out = [(f"{shift:g}+{lab}", shift + f) for lab, f in out]
    return out


test_family.__test__ = False  # keep pytest from collecting it
