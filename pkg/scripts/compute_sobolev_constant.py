#!/usr/bin/env python3
"""Independent oracle for the sharp Sobolev constant in dimension 3.

Evaluates the Rayleigh quotient of the Aubin-Talenti radial profile
``U(r) = (1 + r^2)**-(1/2)`` by adaptive quadrature on the compactified
half-line (substitution ``r = t / (1 - t)``), and writes the result to the
package fixture ``src/ultragrid/fixtures/sobolev.json``.

Run this before any acceptance run; the library only ever reads the stored
value, never recomputes it.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np
from scipy.integrate import quad

FIXTURE = (
    pathlib.Path(__file__).resolve().parents[1]
    / "src"
    / "ultragrid"
    / "fixtures"
    / "sobolev.json"
)


def rayleigh_quotient_3d() -> float:
    sphere_area = 4.0 * np.pi  # |S^2|

    def profile_grad_sq(r: float) -> float:
        # U'(r) = -r (1 + r^2)^{-3/2}
        return r * r / (1.0 + r * r) ** 3

    def profile_sixth(r: float) -> float:
        return (1.0 + r * r) ** -3

    def compactified(f):
        def wrapped(t: float) -> float:
            r = t / (1.0 - t)
            jac = 1.0 / (1.0 - t) ** 2
            return f(r) * r * r * jac

        return wrapped

    num, num_err = quad(compactified(profile_grad_sq), 0.0, 1.0, limit=200)
    den, den_err = quad(compactified(profile_sixth), 0.0, 1.0, limit=200)
    if num_err > 1e-12 or den_err > 1e-12:
        raise RuntimeError("quadrature did not reach the requested accuracy")
    return sphere_area * num / (sphere_area * den) ** (1.0 / 3.0)


def main() -> None:
    value = rayleigh_quotient_3d()
    payload = {
        "3": {
            "value": value,
            "method": "adaptive radial quadrature of the Aubin-Talenti profile",
            "script": "scripts/compute_sobolev_constant.py",
        }
    }
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"S_3 = {value!r} -> {FIXTURE}")


if __name__ == "__main__":
    main()
