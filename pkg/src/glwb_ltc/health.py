"""Seven-state health Markov chain built from age-dependent transition intensities.

States: 1 healthy, 2 IADL impairment only, 3 one-two ADLs, 4 three-four ADLs,
5 five-six ADLs, 6 institutionalized, 7 dead (absorbing).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from .params import ConfigError

N_STATES = 7
DEAD = 7
MAX_AGE = 122
LTC_STATES = (4, 5, 6)
REFERENCE_AGE = 68.5


@dataclass(frozen=True)
class Coefficient:
    form: str  # "exp" or "linear"
    A: float
    B: Optional[float] = None
    C: Optional[float] = None
    D: Optional[float] = None

    def rate(self, age: float) -> float:
        if self.form == "exp":
            q = self.A + self.B * math.exp(self.C * (age - REFERENCE_AGE))
        else:
            q = self.A + self.D * age
        return max(0.0, q)


CoefficientTable = Dict[Tuple[int, int], Coefficient]


def _opt(s: str) -> Optional[float]:
    s = s.strip()
    return float(s) if s else None


def parse_coefficients(text: str) -> CoefficientTable:
    """Parse ``from,to,form,A,B,C,D`` rows; ``#`` lines are comments."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    table: CoefficientTable = {}
    for row in csv.DictReader(io.StringIO("\n".join(lines))):
        i, j = int(row["from"]), int(row["to"])
        form = row["form"].strip()
        A, B, C, D = (_opt(row[k]) for k in "ABCD")
        cell = f"({i},{j})"
        if not (1 <= i <= 6 and 1 <= j <= 7 and i != j):
            raise ConfigError(f"intensity{cell}", "invalid state pair")
        if A is None:
            raise ConfigError(f"intensity{cell}", "coefficient A missing")
        if form == "exp":
            if B is None or C is None or D is not None:
                raise ConfigError(f"intensity{cell}", "exp form needs A, B, C and no D")
        elif form == "linear":
            if D is None or B is not None or C is not None:
                raise ConfigError(f"intensity{cell}", "linear form needs A, D and no B, C")
        else:
            raise ConfigError(f"intensity{cell}", f"unknown form {form!r}")
        table[(i, j)] = Coefficient(form, A, B, C, D)
    return table


@lru_cache(maxsize=1)
def default_coefficients() -> CoefficientTable:
    text = resources.files("glwb_ltc").joinpath("data/intensities.csv").read_text()
    return parse_coefficients(text)


def load_coefficients(path) -> CoefficientTable:
    with open(path) as fh:
        return parse_coefficients(fh.read())


class HealthModel:
    """Annual transition matrices for a policyholder of entry age ``x0``.

    The generator for policy year ``n`` is evaluated at the start-of-year
    attained age ``x0 + n`` and held constant over the year.
    """

    def __init__(self, coefficients: Optional[CoefficientTable] = None):
        self.coefficients = coefficients if coefficients is not None else default_coefficients()

    def intensity(self, frm: int, to: int, attained_age: float) -> float:
        if frm == DEAD:
            return 0.0
        try:
            coef = self.coefficients[(frm, to)]
        except KeyError:
            raise ConfigError(f"intensity({frm},{to})", "missing coefficient pair") from None
        return coef.rate(attained_age)

    def generator(self, x0: int, n: int) -> np.ndarray:
        if int(n) != n:
            raise ValueError("policy year n must be an integer")
        if x0 + n >= MAX_AGE:
            raise ValueError(f"attained age {x0 + n} is beyond the age cap")
        age = x0 + n
        Q = np.zeros((N_STATES, N_STATES))
        for i in range(1, N_STATES):
            for j in range(1, N_STATES + 1):
                if j != i:
                    Q[i - 1, j - 1] = self.intensity(i, j, age)
            Q[i - 1, i - 1] = -Q[i - 1].sum()
        return Q

    @staticmethod
    def annual_transition(Q: np.ndarray) -> np.ndarray:
        P = expm(Q)
        # clean round-off so rows are stochastic to machine precision
        P = np.clip(P, 0.0, 1.0)
        return P / P.sum(axis=1, keepdims=True)

    def transition_sequence(self, x0: int) -> List[np.ndarray]:
        """One matrix per policy year ``n = 0 .. 121 - x0``; the last forces death."""
        if not 60 <= x0 < MAX_AGE:
            raise ValueError(f"entry age {x0} outside [60, {MAX_AGE})")
        T = MAX_AGE - x0
        mats = [self.annual_transition(self.generator(x0, n)) for n in range(T - 1)]
        final = np.zeros((N_STATES, N_STATES))
        final[:, DEAD - 1] = 1.0
        mats.append(final)
        return mats

    def state_distribution(self, x0: int, n: int, initial: int) -> np.ndarray:
        T = MAX_AGE - x0
        if not 0 <= n <= T:
            raise ValueError(f"n={n} outside [0, {T}]")
        v = np.zeros(N_STATES)
        v[initial - 1] = 1.0
        for P in self.transition_sequence(x0)[:n]:
            v = v @ P
        return v


def death_time_distribution(mats: List[np.ndarray], initial: int) -> np.ndarray:
    """P(tau = n), n = 0..T, where tau is the first anniversary after death."""
    v = np.zeros(N_STATES)
    v[initial - 1] = 1.0
    out = np.zeros(len(mats) + 1)
    for n, P in enumerate(mats, start=1):
        alive = v.copy()
        alive[DEAD - 1] = 0.0
        out[n] = alive @ P[:, DEAD - 1]
        v = alive @ P
    return out
