"""Weakly coupled MDP instances with per-epoch parameters.

Conventions used throughout the package:

* states are dense integers ``0..d-1``; optional labels are metadata only;
* actions are dense integers ``0..num_actions-1`` where action ``0`` is the
  passive action (free: it consumes no resource);
* a configuration vector ``m`` is a length-``d`` array of state proportions;
* a decision vector ``y`` is a ``(d, num_actions)`` array of state-action
  proportions; its flat ``(s, a)`` order (C ravel) matches the columns of the
  consumption matrix ``D``.

In the finite system of ``N`` arms, ``N * m`` and ``N * y`` are integer count
arrays.  All feasibility comparisons use an absolute tolerance (``FEAS_TOL``
by default) because the vectors typically come out of a floating-point LP
solve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

#: absolute tolerance for feasibility comparisons on LP-derived vectors
FEAS_TOL = 1e-9
#: tolerance for row-stochasticity of transition matrices
STOCHASTIC_TOL = 1e-12


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float, order="C")  # own copy, caller unaffected
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EpochParams:
    """Parameters of one decision epoch.

    P : (num_actions, d, d) transition matrices, one row-stochastic matrix
        per action.
    R : (d, num_actions) per-arm rewards.
    D : (J, d * num_actions) consumption matrix, columns in flat (s, a) order.
    b : (J,) per-arm budgets.
    """

    P: np.ndarray
    R: np.ndarray
    D: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", _readonly(self.P))
        object.__setattr__(self, "R", _readonly(self.R))
        object.__setattr__(self, "D", _readonly(np.atleast_2d(self.D)))
        object.__setattr__(self, "b", _readonly(np.atleast_1d(self.b)))


@dataclass(frozen=True)
class WcMdpModel:
    """A weakly coupled MDP with statistically identical arms.

    ``epochs`` has length ``horizon``; a stationary model simply repeats the
    same :class:`EpochParams` object.  Instances are immutable after
    construction and safe to share across concurrent simulation workers.
    """

    d: int
    num_actions: int
    J: int
    horizon: int
    epochs: tuple[EpochParams, ...]
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "epochs", tuple(self.epochs))
        if self.state_labels is not None:
            object.__setattr__(self, "state_labels", tuple(self.state_labels))
        if self.d < 1 or self.num_actions < 1 or self.J < 0 or self.horizon < 1:
            raise ValueError("d >= 1, num_actions >= 1, J >= 0, horizon >= 1 required")
        if len(self.epochs) != self.horizon:
            raise ValueError(
                f"expected {self.horizon} epochs, got {len(self.epochs)}"
            )

    @property
    def pair_count(self) -> int:
        """Number of (state, action) pairs, the length of a flat decision."""
        return self.d * self.num_actions

    def params(self, t: int) -> EpochParams:
        return self.epochs[t]

    @classmethod
    def stationary(cls, d, num_actions, J, horizon, params: EpochParams,
                   state_labels=None) -> "WcMdpModel":
        return cls(d, num_actions, J, horizon, (params,) * horizon, state_labels)


def validate_model(model: WcMdpModel) -> list[str]:
    """Check all model invariants; return one message per violation.

    An empty list means the model is valid.  Violations are data, not
    failures: malformed user input should be reported, not raised.
    """
    bad: list[str] = []
    d, na, J = model.d, model.num_actions, model.J
    for t, ep in enumerate(model.epochs):
        if ep.P.shape != (na, d, d):
            bad.append(f"epoch {t}: P has shape {ep.P.shape}, expected {(na, d, d)}")
            continue
        if ep.R.shape != (d, na):
            bad.append(f"epoch {t}: R has shape {ep.R.shape}, expected {(d, na)}")
        if ep.D.shape != (J, d * na):
            bad.append(f"epoch {t}: D has shape {ep.D.shape}, expected {(J, d * na)}")
            continue
        if ep.b.shape != (J,):
            bad.append(f"epoch {t}: b has shape {ep.b.shape}, expected {(J,)}")
            continue
        for a in range(na):
            for s in range(d):
                row = ep.P[a, s]
                if np.any(row < -STOCHASTIC_TOL):
                    bad.append(f"epoch {t}: P[{a}] row {s} has a negative entry")
                if abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                    bad.append(
                        f"epoch {t}: P[{a}] row {s} sums to {row.sum()!r}, not 1"
                    )
        if np.any(ep.D < 0):
            j, col = np.argwhere(ep.D < 0)[0]
            bad.append(f"epoch {t}: D[{j}, {col}] is negative")
        if np.any(ep.b < 0):
            j = int(np.argwhere(ep.b < 0)[0])
            bad.append(f"epoch {t}: budget b[{j}] is negative")
        # passive action must be free: D(s, 0) = 0
        nz = np.argwhere(np.abs(ep.D[:, [s * na for s in range(d)]]) > 0)
        for j, s in nz:
            bad.append(f"epoch {t}: D[{j}] charges {ep.D[j, s * na]!r} for the passive action in state {s}")
    return bad


def check_config(m, N=None, tol: float = FEAS_TOL) -> np.ndarray:
    """Validate a configuration vector, returning it as a float array.

    Raises ValueError when ``m`` is not a probability vector (within ``tol``)
    or, for finite ``N``, when ``N * m`` is not integer within ``tol``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 1:
        raise ValueError(f"configuration must be 1-D, got shape {m.shape}")
    if np.any(m < -tol):
        raise ValueError("configuration has negative entries")
    if abs(m.sum() - 1.0) > tol:
        raise ValueError(f"configuration sums to {m.sum()!r}, not 1")
    if N is not None and N != "relaxed":
        counts = m * N
        if np.max(np.abs(counts - np.rint(counts))) > tol:
            raise ValueError(f"N*m is not integer for N={N}")
    return m


def as_counts(m, N: int, tol: float = FEAS_TOL) -> np.ndarray:
    """Return ``N * m`` as an integer array, validating integrality."""
    m = np.asarray(m, dtype=float)
    counts = m * N
    rounded = np.rint(counts)
    if np.max(np.abs(counts - rounded)) > max(tol, tol * N):
        raise ValueError(f"N*m is not integer for N={N}")
    return rounded.astype(np.int64)


def snap_config_to_grid(m, N: int) -> np.ndarray:
    """Nearest configuration with ``N * m`` integer (largest-remainder rule).

    Deterministic: floors every scaled entry, then hands the leftover units
    to the largest fractional remainders, lowest state index first on ties.
    Used when a single nominal configuration is simulated across population
    sizes that do not all divide it.
    """
    m = check_config(m)
    scaled = m * N
    counts = np.floor(scaled + FEAS_TOL).astype(np.int64)
    leftover = N - counts.sum()
    if leftover:
        remainders = scaled - counts
        order = np.lexsort((np.arange(m.size), -remainders))
        counts[order[:leftover]] += 1
    return counts / N


def is_feasible_decision(model: WcMdpModel, t: int, m, y, N="relaxed",
                         tol: float = FEAS_TOL) -> bool:
    """True iff ``y`` is a feasible decision for configuration ``m`` at epoch ``t``.

    Checks, each within ``tol``: nonnegativity, per-state action totals equal
    to ``m``, the budget constraints ``D y <= b``, and (for finite ``N``)
    integrality of ``N * y``.  Shape mismatches raise ValueError.
    """
    m = np.asarray(m, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.shape != (model.d,):
        raise ValueError(f"configuration shape {m.shape} != ({model.d},)")
    if y.shape != (model.d, model.num_actions):
        raise ValueError(
            f"decision shape {y.shape} != {(model.d, model.num_actions)}"
        )
    if not 0 <= t < model.horizon:
        raise ValueError(f"epoch {t} outside 0..{model.horizon - 1}")
    if np.any(y < -tol):
        return False
    if np.max(np.abs(y.sum(axis=1) - m)) > tol:
        return False
    ep = model.params(t)
    if ep.D.size and np.any(ep.D @ y.ravel() > ep.b + tol):
        return False
    if N != "relaxed":
        counts = y * N
        if np.max(np.abs(counts - np.rint(counts))) > tol:
            return False
    return True


def passive_decision(model: WcMdpModel, m) -> np.ndarray:
    """The always-feasible decision that keeps every arm passive."""
    y = np.zeros((model.d, model.num_actions))
    y[:, 0] = np.asarray(m, dtype=float)
    return y


# ---------------------------------------------------------------------------
# JSON model schema
# ---------------------------------------------------------------------------

def _epoch_to_dict(ep: EpochParams) -> dict:
    return {
        "P": ep.P.tolist(),
        "R": ep.R.tolist(),
        "D": ep.D.tolist(),
        "b": ep.b.tolist(),
    }


def model_to_json(model: WcMdpModel) -> dict:
    """Serialize to the interchange schema (keys are part of the contract)."""
    out = {
        "d": model.d,
        "num_actions": model.num_actions,
        "J": model.J,
        "horizon": model.horizon,
        "epochs": [_epoch_to_dict(ep) for ep in model.epochs],
    }
    if model.state_labels is not None:
        out["state_labels"] = list(model.state_labels)
    return out


def model_from_json(obj: dict) -> WcMdpModel:
    """Build a model from the interchange schema.

    ``epochs`` may hold a single epoch object together with
    ``"stationary": true`` to broadcast it over the horizon.
    """
    try:
        d = int(obj["d"])
        na = int(obj["num_actions"])
        J = int(obj["J"])
        horizon = int(obj["horizon"])
        raw = obj["epochs"]
    except KeyError as exc:
        raise ValueError(f"model JSON is missing key {exc}") from exc
    if isinstance(raw, dict):
        raw = [raw]
    epochs = [EpochParams(P=e["P"], R=e["R"], D=e["D"], b=e["b"]) for e in raw]
    if obj.get("stationary") or len(epochs) == 1 and horizon > 1:
        if len(epochs) != 1:
            raise ValueError("stationary models must supply exactly one epoch")
        epochs = epochs * horizon
    labels = obj.get("state_labels")
    return WcMdpModel(d, na, J, horizon, tuple(epochs),
                      tuple(labels) if labels else None)


def save_model(model: WcMdpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh)
        fh.write("\n")


def load_model(path) -> WcMdpModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
