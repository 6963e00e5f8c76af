"""Physical constants and atomic species data (SI units)."""

import scipy.constants as _sc

hbar = _sc.hbar            # J s
mu0 = _sc.mu_0             # T m / A
muB = _sc.physical_constants["Bohr magneton"][0]  # J / T

# Atomic masses (kg)
SPECIES_MASS = {
    "li6": 9.9883e-27,
    "na23": 3.8175e-26,
    "rb87": 1.44316e-25,
}


def species_mass(name: str) -> float:
    try:
        return SPECIES_MASS[name]
    except KeyError:
        raise ValueError(f"unknown species {name!r}; known: {sorted(SPECIES_MASS)}") from None
