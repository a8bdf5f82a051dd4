"""Finite-horizon tabular MDPs: data model, validation, loading and enumeration.

Rewards are stored in the log domain: a success probability ``p`` becomes the
reward ``log p`` with ``p = 0`` mapped to ``-inf``. Rewards sit in two tables,
``step_reward[s, a]`` collected at each of the ``horizon`` decisions and
``terminal_reward[s]`` collected at the final state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import yaml

from ._logspace import safe_log

ROW_TOL = 1e-12
DEFAULT_ENUMERATION_CAP = 10**7


class MdpError(ValueError):
    """Base class for malformed MDP input."""


class SchemaError(MdpError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class StochasticityError(MdpError):
    pass


class RewardError(MdpError):
    pass


class EnumerationCapError(RuntimeError):
    """Raised when brute-force enumeration would exceed its size cap."""


class PreconditionError(ValueError):
    """Raised when an operation is called outside the scope where it applies."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mdp:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    horizon: int
    transition: np.ndarray
    initial: np.ndarray
    step_reward: np.ndarray
    terminal_reward: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        S, A = len(self.states), len(self.actions)
        shapes = {
            "transition": (S, A, S),
            "initial": (S,),
            "step_reward": (S, A),
            "terminal_reward": (S,),
        }
        for field, shape in shapes.items():
            arr = _frozen(getattr(self, field))
            if arr.shape != shape:
                raise ValueError(f"{field} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, field, arr)
        object.__setattr__(self, "_cache", {})

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)

    def replace(self, **changes) -> "Mdp":
        return dataclasses.replace(self, **changes)

    def scaled(self, alpha: float) -> "Mdp":
        """Same MDP with every reward multiplied by ``alpha`` (inverse temperature)."""
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        return self.replace(step_reward=alpha * self.step_reward,
                            terminal_reward=alpha * self.terminal_reward)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return (f"<Mdp{label} |S|={self.n_states} |A|={self.n_actions} "
                f"T={self.horizon}>")


class Trajectory(NamedTuple):
    states: tuple[int, ...]
    actions: tuple[int, ...]


def validate_mdp(m: Mdp) -> list[str]:
    """List every violated invariant of ``m``; an empty list means valid."""
    problems = []
    if not (isinstance(m.horizon, (int, np.integer)) and m.horizon >= 1):
        problems.append(f"horizon must be an integer >= 1, got {m.horizon!r}")
    for s, state in enumerate(m.states):
        for a, action in enumerate(m.actions):
            row = m.transition[s, a]
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                problems.append(f"transition {state}/{action} has a negative or "
                                f"non-finite entry")
            elif abs(row.sum() - 1.0) > ROW_TOL:
                problems.append(f"transition {state}/{action} sums to {row.sum()!r}")
    if np.any(m.initial < 0) or abs(m.initial.sum() - 1.0) > ROW_TOL:
        problems.append(f"initial distribution is not a distribution "
                        f"(sum {m.initial.sum()!r})")
    for s, state in enumerate(m.states):
        for a, action in enumerate(m.actions):
            r = m.step_reward[s, a]
            if np.isnan(r) or r > 0:
                problems.append(f"step reward {state}/{action} = {r!r} is not <= 0")
        r = m.terminal_reward[s]
        if np.isnan(r) or r > 0:
            problems.append(f"terminal reward {state} = {r!r} is not <= 0")
    return problems


def is_deterministic(m: Mdp) -> bool:
    return bool(np.all(np.isclose(m.transition.max(axis=-1), 1.0, rtol=0, atol=ROW_TOL)))


# -- loading -----------------------------------------------------------------

def _prob(value: Any, path: str) -> float:
    if isinstance(value, bool):
        raise SchemaError(path, f"expected a probability, got {value!r}")
    if isinstance(value, (int, float)):
        p = float(value)
    elif isinstance(value, str):
        try:
            p = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise SchemaError(path, f"cannot parse probability {value!r}") from None
    else:
        raise SchemaError(path, f"expected a probability, got {value!r}")
    if not np.isfinite(p):
        raise SchemaError(path, f"probability must be finite, got {value!r}")
    return p


def _mapping(doc: dict, key: str, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise SchemaError(key, "missing required field")
        return {}
    value = doc[key]
    if not isinstance(value, dict):
        raise SchemaError(key, f"expected a mapping, got {type(value).__name__}")
    return value


def _pair_keys(key: str, path: str, states, actions) -> list[tuple[int, int]]:
    """Resolve ``"state/action"`` (or ``"state/*"``) to index pairs."""
    if not isinstance(key, str) or "/" not in key:
        raise SchemaError(path, "keys must have the form 'state/action'")
    state, action = key.rsplit("/", 1)
    if state not in states:
        raise SchemaError(path, f"unknown state {state!r}")
    s = states.index(state)
    if action == "*":
        return [(s, a) for a in range(len(actions))]
    if action not in actions:
        raise SchemaError(path, f"unknown action {action!r}")
    return [(s, actions.index(action))]


def _distribution(value, path: str, states) -> np.ndarray:
    if not isinstance(value, dict):
        raise SchemaError(path, "expected a mapping state -> probability")
    out = np.zeros(len(states))
    for name, p in value.items():
        if name not in states:
            raise SchemaError(f"{path}.{name}", f"unknown state {name!r}")
        out[states.index(name)] = _prob(p, f"{path}.{name}")
    return out


def mdp_from_dict(doc: dict, name: str = "") -> Mdp:
    """Build a validated :class:`Mdp` from a parsed MDP document."""
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "document must be a mapping")
    for key in ("states", "actions"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
        value = doc[key]
        if (not isinstance(value, list) or not value
                or not all(isinstance(v, str) for v in value)):
            raise SchemaError(key, "expected a non-empty list of names")
        if len(set(value)) != len(value):
            raise SchemaError(key, "names must be unique")
    states, actions = list(doc["states"]), list(doc["actions"])
    horizon = doc.get("horizon")
    if isinstance(horizon, bool) or not isinstance(horizon, int) or horizon < 1:
        raise SchemaError("horizon", f"expected an integer >= 1, got {horizon!r}")

    S, A = len(states), len(actions)
    initial = _distribution(doc.get("initial"), "initial", states)

    transition = np.full((S, A, S), np.nan)
    for key, row in _mapping(doc, "transitions").items():
        path = f"transitions.{key}"
        for s, a in _pair_keys(key, path, states, actions):
            transition[s, a] = _distribution(row, path, states)
    missing = [f"{states[s]}/{actions[a]}" for s in range(S) for a in range(A)
               if np.isnan(transition[s, a, 0])]
    if missing:
        raise SchemaError("transitions", f"missing rows for {', '.join(missing)}")

    step_p = np.ones((S, A))
    for key, p in _mapping(doc, "step_success", required=False).items():
        path = f"step_success.{key}"
        for s, a in _pair_keys(key, path, states, actions):
            step_p[s, a] = _prob(p, path)
    terminal_p = np.ones(S)
    for state, p in _mapping(doc, "terminal_success", required=False).items():
        path = f"terminal_success.{state}"
        if state not in states:
            raise SchemaError(path, f"unknown state {state!r}")
        terminal_p[states.index(state)] = _prob(p, path)

    for s in range(S):
        for a in range(A):
            row = transition[s, a]
            if np.any(row < 0) or abs(row.sum() - 1.0) > ROW_TOL:
                raise StochasticityError(
                    f"transitions.{states[s]}/{actions[a]} is not a distribution "
                    f"(sum {row.sum():.15g})")
    if np.any(initial < 0) or abs(initial.sum() - 1.0) > ROW_TOL:
        raise StochasticityError(f"initial is not a distribution (sum {initial.sum():.15g})")
    for label, table, keys in (
            ("step_success", step_p,
             [f"{s}/{a}" for s in states for a in actions]),
            ("terminal_success", terminal_p, states)):
        flat = table.ravel()
        for key, p in zip(keys, flat):
            if p > 1:
                raise RewardError(f"{label}.{key} = {p!r} exceeds 1 "
                                  f"(reward log p would be positive)")
            if p < 0:
                raise RewardError(f"{label}.{key} = {p!r} is negative")

    return Mdp(states=states, actions=actions, horizon=horizon,
               transition=transition, initial=initial,
               step_reward=safe_log(step_p), terminal_reward=safe_log(terminal_p),
               name=name or str(doc.get("name", "")))


def _is_file(text: str) -> bool:
    if "\n" in text:
        return False
    try:
        return Path(text).is_file()
    except OSError:
        return False


def load_mdp(source) -> Mdp:
    """Load an MDP from a YAML/JSON document given as text or a file path."""
    if isinstance(source, Path) or (isinstance(source, str) and _is_file(source)):
        path = Path(source)
        text = path.read_text()
        default_name = path.stem
    else:
        text = source
        default_name = ""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<root>", f"not valid YAML/JSON: {exc}") from None
    m = mdp_from_dict(doc)
    return m if m.name else m.replace(name=default_name)


def _fmt_prob(p: float) -> Any:
    frac = Fraction(p).limit_denominator(10**6)
    if float(frac) == p:
        return str(frac) if frac.denominator != 1 else int(frac)
    return float(p)


def mdp_to_dict(m: Mdp) -> dict:
    """Inverse of :func:`mdp_from_dict` (rewards written back as probabilities)."""
    doc = {
        "name": m.name,
        "states": list(m.states),
        "actions": list(m.actions),
        "horizon": int(m.horizon),
        "initial": {m.states[s]: _fmt_prob(p) for s, p in enumerate(m.initial) if p > 0},
        "transitions": {},
    }
    for s, state in enumerate(m.states):
        for a, action in enumerate(m.actions):
            doc["transitions"][f"{state}/{action}"] = {
                m.states[j]: _fmt_prob(p) for j, p in enumerate(m.transition[s, a]) if p > 0}
    step = {f"{m.states[s]}/{m.actions[a]}": _fmt_prob(float(np.exp(m.step_reward[s, a])))
            for s in range(m.n_states) for a in range(m.n_actions)
            if m.step_reward[s, a] != 0}
    if step:
        doc["step_success"] = step
    doc["terminal_success"] = {
        m.states[s]: _fmt_prob(float(np.exp(r)))
        for s, r in enumerate(m.terminal_reward) if r != 0}
    return doc


def dump_mdp(m: Mdp) -> str:
    return yaml.safe_dump(mdp_to_dict(m), sort_keys=False, allow_unicode=True)


# -- builtin examples --------------------------------------------------------

_BUILTINS = {
    # Two-step race: risky ridge (gold or chasm) versus safe forest (silver).
    "mountain_race": {
        "states": ["start", "mountain", "forest", "gold", "skull",
                   "silver_up", "silver_down"],
        "actions": ["up", "down"],
        "horizon": 2,
        "initial": {"start": 1},
        "transitions": {
            "start/up": {"mountain": 1},
            "start/down": {"forest": 1},
            "mountain/up": {"gold": 1},
            "mountain/down": {"skull": 1},
            "forest/up": {"silver_up": 1},
            "forest/down": {"silver_down": 1},
            "gold/*": {"gold": 1},
            "skull/*": {"skull": 1},
            "silver_up/*": {"silver_up": 1},
            "silver_down/*": {"silver_down": 1},
        },
        "terminal_success": {"gold": 1, "skull": 0,
                             "silver_up": "3/4", "silver_down": "3/4"},
    },
    # One stochastic decision where the two temperature readings part ways.
    "temperature_counter": {
        "states": ["root", "s1", "s2"],
        "actions": ["a1", "a2"],
        "horizon": 1,
        "initial": {"root": 1},
        "transitions": {
            "root/a1": {"s1": "3/4", "s2": "1/4"},
            "root/a2": {"s1": "1/2", "s2": "1/2"},
            "s1/*": {"s1": 1},
            "s2/*": {"s2": 1},
        },
        "terminal_success": {"root": 1, "s1": "1/3", "s2": "2/3"},
    },
    # Three-step tree; the lower branch ends in a (2/3, 1/3) chance split.
    "stability_tree": {
        "states": ["s0", "s1", "s1p", "s2", "s2p", "s3", "s3p", "s3pp"],
        "actions": ["up", "down"],
        "horizon": 3,
        "initial": {"s0": 1},
        "transitions": {
            "s0/up": {"s1": 1},
            "s0/down": {"s1p": 1},
            "s1/*": {"s2": 1},
            "s1p/*": {"s2p": 1},
            "s2/*": {"s3": 1},
            "s2p/*": {"s3p": "2/3", "s3pp": "1/3"},
            "s3/*": {"s3": 1},
            "s3p/*": {"s3p": 1},
            "s3pp/*": {"s3pp": 1},
        },
        "terminal_success": {"s3": "1/2", "s3p": 1, "s3pp": 0},
    },
    # Variant where s2p is a decision rather than a chance node. Deep enough
    # lookahead sees the sure win behind s1p; the prior does not.
    "stability_tree_choice": {
        "states": ["s0", "s1", "s1p", "s2", "s2p", "s3", "s3p", "s3pp"],
        "actions": ["up", "down"],
        "horizon": 3,
        "initial": {"s0": 1},
        "transitions": {
            "s0/up": {"s1": 1},
            "s0/down": {"s1p": 1},
            "s1/*": {"s2": 1},
            "s1p/*": {"s2p": 1},
            "s2/*": {"s3": 1},
            "s2p/up": {"s3p": 1},
            "s2p/down": {"s3pp": 1},
            "s3/*": {"s3": 1},
            "s3p/*": {"s3p": 1},
            "s3pp/*": {"s3pp": 1},
        },
        "terminal_success": {"s3": "2/3", "s3p": 1, "s3pp": 0},
    },
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_document(name: str) -> dict:
    if name not in _BUILTINS:
        raise KeyError(f"unknown builtin MDP {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    return {"name": name, **_BUILTINS[name]}


def builtin_example(name: str) -> Mdp:
    return mdp_from_dict(builtin_document(name))


# -- trajectory enumeration --------------------------------------------------

def enumeration_size(m: Mdp) -> int:
    return m.n_states ** (m.horizon + 1) * m.n_actions ** m.horizon


def _check_cap(m: Mdp, cap: int):
    size = enumeration_size(m)
    if size > cap:
        raise EnumerationCapError(
            f"|S|^(T+1)|A|^T = {size} exceeds the enumeration cap {cap}")


def trajectory_arrays(m: Mdp, cap: int = DEFAULT_ENUMERATION_CAP):
    """All positive-probability trajectories as arrays.

    Returns ``(states, actions, dynamics_prob)`` with shapes ``(N, T+1)``,
    ``(N, T)`` and ``(N,)``; ``dynamics_prob`` is ``mu(s_0)`` times the product
    of transition probabilities, i.e. the trajectory probability under a policy
    that picks every action with probability one.
    """
    _check_cap(m, cap)
    cached = m._cache.get("paths")
    if cached is not None:
        return cached
    s0 = np.flatnonzero(m.initial > 0)
    states = s0[:, None]
    actions = np.zeros((len(s0), 0), dtype=int)
    prob = m.initial[s0]
    succ = {(s, a): np.flatnonzero(m.transition[s, a] > 0)
            for s in range(m.n_states) for a in range(m.n_actions)}
    for _ in range(m.horizon):
        new_s, new_a, new_p = [], [], []
        for i, last in enumerate(states[:, -1]):
            for a in range(m.n_actions):
                for nxt in succ[last, a]:
                    new_s.append((i, nxt))
                    new_a.append(a)
                    new_p.append(prob[i] * m.transition[last, a, nxt])
        idx = np.array([i for i, _ in new_s], dtype=int)
        nxt = np.array([n for _, n in new_s], dtype=int)
        states = np.column_stack([states[idx], nxt])
        actions = np.column_stack([actions[idx], np.array(new_a, dtype=int)])
        prob = np.array(new_p)
    for arr in (states, actions, prob):
        arr.setflags(write=False)
    m._cache["paths"] = (states, actions, prob)
    return states, actions, prob


def enumerate_trajectories(m: Mdp, cap: int = DEFAULT_ENUMERATION_CAP
                           ) -> list[tuple[Trajectory, float]]:
    """Every trajectory with positive dynamics probability, exactly once.

    Each item pairs the trajectory with its dynamics probability (see
    :func:`trajectory_arrays`).
    """
    states, actions, prob = trajectory_arrays(m, cap)
    return [(Trajectory(tuple(map(int, s)), tuple(map(int, a))), float(p))
            for s, a, p in zip(states, actions, prob)]


def trajectory_log_rewards(m: Mdp, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Total log-reward (step rewards plus terminal reward) of each enumerated path."""
    states, actions, _ = trajectory_arrays(m, cap)
    total = m.terminal_reward[states[:, -1]].copy()
    for t in range(m.horizon):
        total = total + m.step_reward[states[:, t], actions[:, t]]
    return total
