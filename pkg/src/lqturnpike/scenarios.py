"""Built-in problems: a rotating box system and a boundary cone turnpike."""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constraints import Box, ConstraintSet, NormBox, SecondOrderCone
from .model import Problem

DECAY = np.exp(-0.1)


def rotation_decay(angle=np.pi / 4, decay=DECAY):
    c, s = np.cos(angle), np.sin(angle)
    return decay * np.array([[c, s], [-s, c]])


def example_rotation_box():
    """Rotation with decay ``e^-0.1``, ``|x|_inf <= 1``, ``|u|_inf <= 0.1``.

    Zero state cost, identity control cost; the optimal steady state is the
    origin and ``u = 0`` is optimal from every ``|x0|_2 <= 1``.
    """
    S = ConstraintSet(2, 2, (NormBox((0, 1), 1.0), NormBox((2, 3), 0.1)))
    return Problem(A=rotation_decay(), B=np.eye(2), Q=np.zeros((2, 2)), R=np.eye(2),
                   z=np.zeros(2), v=np.zeros(2), c=0.0, S=S,
                   C=np.zeros((2, 2)), K=np.eye(2))


def example_cone():
    """Ice-cream cone ``x3 >= |(x1, x2)|`` with ``u in [-1, 1]``.

    Stage cost ``(x3 + 1)^2 + (u + 1)^2 - 2``: the unconstrained steady
    optimum ``x3 = -1`` lies outside the cone, so the constrained steady
    state sits at the cone vertex.
    """
    A = np.zeros((3, 3))
    A[:2, :2] = rotation_decay()
    A[2, 2] = 1.0
    C = np.diag([0.0, 0.0, 1.0])
    S = ConstraintSet(3, 1, (SecondOrderCone(2, (0, 1)), Box((3,), (-1.0,), (1.0,))))
    return Problem(A=A, B=np.array([[0.0], [0.0], [-1.0]]), Q=C.T @ C, R=np.eye(1),
                   z=np.array([0.0, 0.0, 1.0]), v=np.array([1.0]), c=0.0, S=S,
                   C=C, K=np.eye(1))


def cone_feedback(x):
    """``u(x) = min(1, x3 - e^-0.1 |(x1, x2)|)``; lands the next state on the cone."""
    x = np.asarray(x, dtype=float)
    return np.array([min(1.0, x[2] - DECAY * np.hypot(x[0], x[1]))])


def hold_steady(u_e):
    u_e = np.asarray(u_e, dtype=float)
    return lambda x: u_e.copy()


def sample_ball(n, radius, count, seed=42):
    """``count`` points with ``|x|_2 <= radius``: the center, then random."""
    rng = np.random.default_rng(seed)
    pts = [np.zeros(n)]
    while len(pts) < count:
        d = rng.normal(size=n)
        d /= np.linalg.norm(d)
        pts.append(radius * rng.uniform() ** (1.0 / n) * d)
    return np.array(pts[:count])


def sample_box(n, half_width, count, seed=42):
    rng = np.random.default_rng(seed)
    return rng.uniform(-half_width, half_width, size=(count, n))


def sample_cone_slice(height, count, seed=42):
    """Points of ``{x3 >= |(x1, x2)|, x3 <= height}``, apex included."""
    rng = np.random.default_rng(seed)
    pts = [np.zeros(3)]
    while len(pts) < count:
        x3 = height * rng.uniform() ** (1.0 / 3.0)
        r = x3 * np.sqrt(rng.uniform())
        t = rng.uniform(0, 2 * np.pi)
        pts.append(np.array([r * np.cos(t), r * np.sin(t), x3]))
    return np.array(pts[:count])


def example_rotation_box_xtp(count=20, seed=42):
    return sample_ball(2, 1.0, count, seed)


def example_cone_xtp(count=10, seed=42, height=5.0):
    return sample_cone_slice(height, count, seed)


@dataclass(frozen=True)
class Scenario:
    """A built-in problem with its turnpike-scan defaults.

    ``skip`` is the transient left out of the decay-rate fit.  The default
    horizons all exceed the longest eps = 1e-3 transient (about 35 steps for
    the rotating box, 54 for the cone), so counts can be compared across N.
    """

    name: str
    problem: Callable
    xtp: Callable
    policy: str
    skip: int = 0
    N_list: tuple = (80, 120, 160, 200)
    eps_list: tuple = (1e-3, 1e-2, 1e-1)


SCENARIOS = {
    "example1": Scenario("example1", example_rotation_box, example_rotation_box_xtp, "hold"),
    "example2": Scenario("example2", example_cone, example_cone_xtp, "cone", skip=5),
}
