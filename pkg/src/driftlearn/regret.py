"""Dynamic and discounted regret accounting.

Everything here is expressed in *discounted* form: quantities that are
naturally written with beta**(-s) factors are folded into beta**(t-s)
weights before any arithmetic, since beta**(-t) overflows for t around 700
already at beta = 0.9.

Central objects:

* ``dynamic_regret``      sum_t f_t(x_t) - f_t(u_t)
* ``discounted_regret``   R_t(u) = sum_{s<=t} beta^(t-s) (f_s(x_s) - f_s(u))
* ``d2d_identity_gap``    |LHS - RHS| of the conversion identity
      D-Reg = beta * sum_{t<T} (R_t(u_t) - R_t(u_{t+1}))
              + (1-beta) * sum_t R_t(u_t) + beta * R_T(u_T)
* ``path_variation``      P_T^g = sum_{t<T} sum_{s=0..t} p_{t,s} [f_s(u_{t+1}) - f_s(u_t)]_+
* ``modular_bound_rhs``   the computable right-hand side of the template
  bound driven by a comparator-dependent phi_t and stability terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from driftlearn.streams import ComparatorPath, geometric_weights

LossEval = Callable[[int, np.ndarray], float]
PhiEval = Callable[[int, np.ndarray], float]
BatchLossEval = Callable[[np.ndarray], np.ndarray]


@dataclass
class RegretLedger:
    """Per-round losses of a learner plus evaluators of f_t at any point.

    losses_at_play  f_t(x_t) for t = 1..T.
    loss_eval       (t, u) -> f_t(u), t 1-based.
    beta            discount factor in (0, 1].
    phi_eval        optional (t, u) -> phi_t(u) >= 0 comparator term.
    lambdas         optional discounted stability terms; entry t-1 holds
                    beta^t * Lambda_t (suppliers fold the discount so the
                    ledger never sees a beta^(-t)).
    loss_eval_batch optional u -> array [f_1(u), ..., f_T(u)]; used to
                    vectorize the inner sums when available.
    """

    losses_at_play: np.ndarray
    loss_eval: LossEval
    beta: float
    phi_eval: Optional[PhiEval] = None
    lambdas: Optional[np.ndarray] = None
    loss_eval_batch: Optional[BatchLossEval] = None
    _beta_pows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.losses_at_play = np.asarray(self.losses_at_play, dtype=float)
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.lambdas is not None:
            self.lambdas = np.asarray(self.lambdas, dtype=float)
            if self.lambdas.shape != self.losses_at_play.shape:
                raise ValueError("lambdas must have one entry per round")
            if np.any(self.lambdas < -1e-12):
                raise ValueError("stability terms must be nonnegative")
        self._beta_pows = self.beta ** np.arange(self.T + 1, dtype=float)

    @property
    def T(self) -> int:
        return len(self.losses_at_play)

    def losses_at(self, u: np.ndarray, upto: Optional[int] = None) -> np.ndarray:
        """Array [f_1(u), ..., f_k(u)] with k = upto (default T)."""
        k = self.T if upto is None else upto
        if self.loss_eval_batch is not None:
            return self.loss_eval_batch(u)[:k]
        return np.array([self.loss_eval(s, u) for s in range(1, k + 1)])

    def weights(self, t: int) -> np.ndarray:
        """[beta^(t-1), ..., beta^0]: discount weights for rounds 1..t."""
        return self._beta_pows[t - 1 :: -1] if t > 0 else np.empty(0)


def dynamic_regret(ledger: RegretLedger, path: ComparatorPath) -> float:
    """Cumulative loss of the learner minus that of the comparator path."""
    if path.T != ledger.T:
        raise ValueError(f"path length {path.T} != ledger length {ledger.T}")
    comp = sum(ledger.loss_eval(t, path[t - 1]) for t in range(1, ledger.T + 1))
    return float(ledger.losses_at_play.sum() - comp)


def discounted_regret(ledger: RegretLedger, t: int, u: np.ndarray) -> float:
    """R_t(u) = sum_{s<=t} beta^(t-s) (f_s(x_s) - f_s(u))."""
    if not 1 <= t <= ledger.T:
        raise ValueError(f"round t must lie in [1, {ledger.T}], got {t}")
    diffs = ledger.losses_at_play[:t] - ledger.losses_at(u, upto=t)
    return float(ledger.weights(t) @ diffs)


def d2d_identity_gap(ledger: RegretLedger, path: ComparatorPath) -> float:
    """|LHS - RHS| of the discounted-to-dynamic conversion identity.

    The identity holds exactly for any horizon, discount and comparator
    sequence; the returned gap is float roundoff only.
    """
    T, beta = ledger.T, ledger.beta
    if path.T != T:
        raise ValueError(f"path length {path.T} != ledger length {ledger.T}")
    lhs = dynamic_regret(ledger, path)

    # R[t][k] = R_t(u_k) is needed at (t, t) and (t, t+1) only; evaluate the
    # loss column of each u_k once, up to round k.
    cols = [ledger.losses_at(path[k - 1], upto=k) for k in range(1, T + 1)]
    play = ledger.losses_at_play

    def reg(t: int, k: int) -> float:
        return float(ledger.weights(t) @ (play[:t] - cols[k - 1][:t]))

    diag = np.array([reg(t, t) for t in range(1, T + 1)])
    rhs = (1.0 - beta) * diag.sum() + beta * diag[-1]
    rhs += beta * sum(diag[t - 1] - reg(t, t + 1) for t in range(1, T))
    return abs(lhs - rhs)


@dataclass(frozen=True)
class PathVariation:
    """Value of P_T^beta together with the convention it was computed under."""

    value: float
    beta: float
    includes_f0: bool


def path_variation(
    ledger: RegretLedger,
    path: ComparatorPath,
    gamma: float,
    include_f0: Optional[bool] = None,
) -> PathVariation:
    """Comparator variation through geometrically weighted loss differences.

    P_T^g = sum_{t=1}^{T-1} sum_{s=0}^{t} p_{t,s} [f_s(u_{t+1}) - f_s(u_t)]_+
    with p_{t,s} = gamma^(t-s) / sum_{r=0}^{t} gamma^(t-r).  The s = 0 term
    uses f_0 = phi_1 and is included by default whenever the ledger carries a
    phi evaluator; the normalization always runs over s = 0..t.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    T = ledger.T
    if path.T != T:
        raise ValueError(f"path length {path.T} != ledger length {ledger.T}")
    if include_f0 is None:
        include_f0 = ledger.phi_eval is not None
    if include_f0 and ledger.phi_eval is None:
        raise ValueError("include_f0 requires the ledger to carry phi_eval")

    total = 0.0
    for t in range(1, T):
        u_now, u_next = path[t - 1], path[t]
        w = geometric_weights(gamma, t)  # indices s = 0..t
        diffs = ledger.losses_at(u_next, upto=t) - ledger.losses_at(u_now, upto=t)
        total += float(w[1:] @ np.maximum(diffs, 0.0))
        if include_f0:
            d0 = ledger.phi_eval(1, u_next) - ledger.phi_eval(1, u_now)
            total += w[0] * max(d0, 0.0)
    return PathVariation(value=total, beta=gamma, includes_f0=bool(include_f0))


def _ft_value(ledger: RegretLedger, t: int, u: np.ndarray) -> float:
    """F_t(u) = beta^t phi_t(u) + sum_{s<=t} beta^(t-s) f_s(u)."""
    val = float(ledger.weights(t) @ ledger.losses_at(u, upto=t))
    if ledger.phi_eval is not None:
        val += ledger._beta_pows[t] * ledger.phi_eval(t, u)
    return val


def ft_difference_term(ledger: RegretLedger, path: ComparatorPath) -> float:
    """beta * sum_{t=1}^{T-1} (F_t(u_{t+1}) - F_t(u_t)); may be negative."""
    T = ledger.T
    if path.T != T:
        raise ValueError(f"path length {path.T} != ledger length {ledger.T}")
    total = 0.0
    for t in range(1, T):
        total += _ft_value(ledger, t, path[t]) - _ft_value(ledger, t, path[t - 1])
    return ledger.beta * total


def modular_bound_rhs(ledger: RegretLedger, path: ComparatorPath) -> float:
    """Computable dynamic-regret upper bound from the reduction template.

    RHS = beta*phi_1(u_1) + sum_t beta^t Lambda_t
          + beta * sum_{t<T} (F_t(u_{t+1}) - F_t(u_t))
          + beta * sum_{t<T} beta^t (phi_{t+1}(u_{t+1}) - phi_t(u_{t+1})),

    where the stability terms arrive pre-discounted in ``ledger.lambdas``.
    """
    if ledger.phi_eval is None:
        raise ValueError("modular_bound_rhs requires phi_eval on the ledger")
    if ledger.lambdas is None:
        raise ValueError("modular_bound_rhs requires stability terms (lambdas)")
    T, beta = ledger.T, ledger.beta
    if path.T != T:
        raise ValueError(f"path length {path.T} != ledger length {ledger.T}")

    rhs = beta * ledger.phi_eval(1, path[0])
    rhs += float(ledger.lambdas.sum())
    rhs += ft_difference_term(ledger, path)
    phi_drift = 0.0
    for t in range(1, T):
        u_next = path[t]
        phi_drift += ledger._beta_pows[t] * (
            ledger.phi_eval(t + 1, u_next) - ledger.phi_eval(t, u_next)
        )
    rhs += beta * phi_drift
    return float(rhs)


def check_path_length_lemma(
    ledger: RegretLedger, path: ComparatorPath, beta: float, gamma: float
) -> bool:
    """beta * sum_{t<T}(F_t^b(u_{t+1}) - F_t^b(u_t)) <= gamma/(1-gamma) P_T^g.

    Requires 0 < beta <= gamma < 1 and nonnegative f_0..f_T; F_t^b includes
    the f_0 = phi_1 term with weight beta^t.
    """
    if not (0.0 < beta <= gamma < 1.0):
        raise ValueError(f"need 0 < beta <= gamma < 1, got beta={beta} gamma={gamma}")
    probe = RegretLedger(
        losses_at_play=ledger.losses_at_play,
        loss_eval=ledger.loss_eval,
        beta=beta,
        phi_eval=ledger.phi_eval,
        loss_eval_batch=ledger.loss_eval_batch,
    )
    lhs = ft_difference_term(probe, path)
    rhs = gamma / (1.0 - gamma) * path_variation(probe, path, gamma).value
    return lhs <= rhs + 1e-9 * (1.0 + abs(rhs))


def quadratic_loss_ledger(
    Z: np.ndarray,
    y: np.ndarray,
    losses_at_play: np.ndarray,
    beta: float,
    lam: Optional[float] = None,
    lambdas: Optional[np.ndarray] = None,
) -> RegretLedger:
    """Ledger over squared losses f_t(u) = (u.z_t - y_t)^2 / 2.

    When ``lam`` is given, phi_t(u) = lam/2 |u|^2 (time independent).
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)

    def eval_one(t: int, u: np.ndarray) -> float:
        return 0.5 * float(Z[t - 1] @ u - y[t - 1]) ** 2

    def eval_batch(u: np.ndarray) -> np.ndarray:
        return 0.5 * (Z @ u - y) ** 2

    phi = None
    if lam is not None:
        phi = lambda t, u: 0.5 * lam * float(u @ u)  # noqa: E731
    return RegretLedger(
        losses_at_play=losses_at_play,
        loss_eval=eval_one,
        beta=beta,
        phi_eval=phi,
        lambdas=lambdas,
        loss_eval_batch=eval_batch,
    )


def regret_trace_csv(
    ledger: RegretLedger, path: ComparatorPath, header_comment: Optional[str] = None
) -> str:
    """CSV trace `t,loss_play,loss_comp,cum_dynreg`."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("t,loss_play,loss_comp,cum_dynreg")
    cum = 0.0
    for t in range(1, ledger.T + 1):
        lp = float(ledger.losses_at_play[t - 1])
        lc = float(ledger.loss_eval(t, path[t - 1]))
        cum += lp - lc
        lines.append(f"{t},{lp!r},{lc!r},{cum!r}")
    return "\n".join(lines) + "\n"
