"""Cooperative benchmark environments with a shared team reward.

All environments expose the same contract: per-agent observations whose
concatenation is exactly the global state, per-agent actions clamped to
[-1, 1] per coordinate, a single shared scalar reward, and fully seeded
resets. Dynamics are deterministic; the only randomness is in the reset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class EnvSpec:
    """Static dimensions of an environment.

    The global state is the concatenation of the per-agent observation
    blocks, in agent order, so ``global_state_dim == sum(obs_dims)``.
    """

    n_agents: int
    obs_dims: tuple[int, ...]
    action_dims: tuple[int, ...]
    max_episode_steps: int

    def __post_init__(self):
        if len(self.obs_dims) != self.n_agents or len(self.action_dims) != self.n_agents:
            raise ContractError("per-agent dimension lists must have one entry per agent")

    @property
    def global_state_dim(self) -> int:
        return sum(self.obs_dims)

    @property
    def action_dim(self) -> int:
        dims = set(self.action_dims)
        if len(dims) != 1:
            raise ContractError("agents have unequal action widths")
        return self.action_dims[0]


@dataclass
class StepResult:
    state: np.ndarray
    observations: list[np.ndarray]
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class Env:
    """Base class wiring the clamp/NaN checks and the obs-concat contract."""

    spec: EnvSpec

    def reset(self, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
        raise NotImplementedError

    def step(self, joint_action: np.ndarray) -> StepResult:
        raise NotImplementedError

    def _prepare_action(self, joint_action) -> np.ndarray:
        a = np.asarray(joint_action, dtype=np.float64)
        expected = (self.spec.n_agents, self.spec.action_dim)
        if a.shape != expected:
            raise ContractError(f"joint action shape {a.shape}, expected {expected}")
        if not np.all(np.isfinite(a)):
            raise ContractError("joint action contains non-finite entries")
        return np.clip(a, -1.0, 1.0)


def split_observations(state: np.ndarray, spec: EnvSpec) -> list[np.ndarray]:
    """Slice a global state into per-agent observation blocks."""
    out = []
    base = 0
    for d in spec.obs_dims:
        out.append(state[base : base + d].copy())
        base += d
    return out


class ChainWorld(Env):
    """A chain of actuated paddles crawling along a line.

    Each agent drives one joint. The paddle tip's velocity over the ground
    is u_i = v + L w_i cos(th_i); the ground reacts with a viscous drag
    whose coefficient ramps up smoothly when the tip slides backward, so
    strokes ratchet: a backward-slipping paddle grips and pushes the body
    forward, a forward-slipping one nearly freewheels. Joints feel the
    motor torque, a restoring spring, viscous joint damping, coupling to
    neighboring joints, and the reaction of the ground drag. Integration
    is semi-implicit Euler (velocities first, then positions), and every
    non-spring term dissipates, so with zero torque the energy is bounded
    and a resting chain stays exactly at rest.

    State layout: [x, v, th_0, w_0 | th_1, w_1 | ...]; agent 0 also
    observes the root position and velocity.
    """

    LINK_LENGTH = 1.0
    LINK_MASS = 1.0
    JOINT_INERTIA = 0.5
    SPRING = 3.0
    JOINT_DAMPING = 1.2
    COUPLING = 1.0
    DRAG_FORWARD = 0.2
    DRAG_RANGE = 2.0
    DRAG_RAMP = 1.2
    BODY_DRAG = 0.3
    TORQUE_SCALE = 5.0
    RESET_ANGLE = 0.1

    def __init__(self, n_links: int, dt: float = 0.05, horizon: int = 200, action_cost: float = 0.05):
        if n_links < 2:
            raise ContractError("a chain needs at least two links")
        self.n_links = n_links
        self.dt = float(dt)
        self.horizon = int(horizon)
        self.action_cost = float(action_cost)
        obs_dims = tuple(4 if i == 0 else 2 for i in range(n_links))
        self.spec = EnvSpec(n_links, obs_dims, (1,) * n_links, horizon)
        self._x = 0.0
        self._v = 0.0
        self._theta = np.zeros(n_links)
        self._omega = np.zeros(n_links)
        self._steps = 0

    def _state(self) -> np.ndarray:
        joints = np.empty(2 * self.n_links)
        joints[0::2] = self._theta
        joints[1::2] = self._omega
        return np.concatenate(([self._x, self._v], joints))

    def reset(self, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
        rng = np.random.default_rng(seed)
        self._x = 0.0
        self._v = 0.0
        self._theta = rng.uniform(-self.RESET_ANGLE, self.RESET_ANGLE, size=self.n_links)
        self._omega = np.zeros(self.n_links)
        self._steps = 0
        state = self._state()
        return state, split_observations(state, self.spec)

    def step(self, joint_action) -> StepResult:
        a = self._prepare_action(joint_action)[:, 0]
        th, w, v = self._theta, self._omega, self._v
        L = self.LINK_LENGTH

        cos_th = np.cos(th)
        tip_vel = v + L * w * cos_th
        drag_coeff = self.DRAG_FORWARD + self.DRAG_RANGE * 0.5 * (1.0 - np.tanh(tip_vel / self.DRAG_RAMP))
        ground_force = -drag_coeff * tip_vel

        coupling = np.zeros_like(th)
        coupling[1:] += th[1:] - th[:-1]
        coupling[:-1] += th[:-1] - th[1:]

        torque = (
            self.TORQUE_SCALE * a
            - self.SPRING * th
            - self.JOINT_DAMPING * w
            - self.COUPLING * coupling
            + L * cos_th * ground_force
        )
        total_mass = self.LINK_MASS * self.n_links
        accel = (ground_force.sum() - self.BODY_DRAG * v) / total_mass

        self._omega = w + self.dt * torque / self.JOINT_INERTIA
        self._v = v + self.dt * accel
        self._theta = th + self.dt * self._omega
        x_before = self._x
        self._x = x_before + self.dt * self._v
        self._steps += 1

        reward = (self._x - x_before) / self.dt - self.action_cost * float(np.sum(a * a))
        state = self._state()
        return StepResult(
            state=state,
            observations=split_observations(state, self.spec),
            reward=float(reward),
            done=self._steps >= self.horizon,
            info={"displacement": self._x},
        )


class AdditiveTeam(Env):
    """Single-step team game with a per-agent separable reward.

    r(a) = sum_i w_i * (1 - (a_i - g_i)^2). The constant observation makes
    the state carry no information; everything rides on the actions. With
    default actions fixed at zero, agent i's marginal contribution to any
    coalition is w_i * ((1 - (a_i - g_i)^2) - (1 - g_i^2)) regardless of
    the coalition, so every semivalue family assigns the same credit.
    """

    def __init__(self, weights, targets):
        w = np.asarray(weights, dtype=np.float64)
        g = np.asarray(targets, dtype=np.float64)
        if w.shape != g.shape or w.ndim != 1:
            raise ContractError("weights and targets must be equal-length vectors")
        self.weights = w
        self.targets = g
        n = w.size
        self.spec = EnvSpec(n, (1,) * n, (1,) * n, 1)

    def reward(self, actions: np.ndarray) -> float:
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != self.targets.shape:
            raise ContractError(f"actions shape {actions.shape}, expected {self.targets.shape}")
        gaps = actions - self.targets
        return float(np.sum(self.weights * (1.0 - gaps * gaps)))

    def reset(self, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
        state = np.zeros(self.spec.n_agents)
        return state, split_observations(state, self.spec)

    def step(self, joint_action) -> StepResult:
        a = self._prepare_action(joint_action)[:, 0]
        state = np.zeros(self.spec.n_agents)
        return StepResult(
            state=state,
            observations=split_observations(state, self.spec),
            reward=self.reward(a),
            done=True,
            info={},
        )


class LinearTeam(Env):
    """Deterministic linear dynamics with a quadratic regulation cost.

    s' = A s + B a, r = -|s|^2 - 0.1 |a|^2, fixed initial state. The exact
    transition map makes this the reference problem for dynamics-model
    fitting: a learned model can be scored against the true A and B.
    """

    ACTION_COST = 0.1

    def __init__(self, n_agents: int = 3, horizon: int = 25):
        self.n = n_agents
        self.horizon = int(horizon)
        self.spec = EnvSpec(n_agents, (1,) * n_agents, (1,) * n_agents, horizon)
        gen = np.random.default_rng(20240517)
        # Stable A: random orthogonal-ish mix scaled below unit spectral radius.
        raw = gen.normal(size=(n_agents, n_agents))
        q, _ = np.linalg.qr(raw)
        self.A = 0.9 * q
        self.B = gen.uniform(-1.0, 1.0, size=(n_agents, n_agents)) * 0.5
        self.s0 = gen.uniform(-1.0, 1.0, size=n_agents)
        self._s = self.s0.copy()
        self._steps = 0

    def reset(self, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
        self._s = self.s0.copy()
        self._steps = 0
        return self._s.copy(), split_observations(self._s, self.spec)

    def step(self, joint_action) -> StepResult:
        a = self._prepare_action(joint_action)[:, 0]
        self._s = self.A @ self._s + self.B @ a
        self._steps += 1
        reward = -float(self._s @ self._s) - self.ACTION_COST * float(a @ a)
        return StepResult(
            state=self._s.copy(),
            observations=split_observations(self._s, self.spec),
            reward=reward,
            done=self._steps >= self.horizon,
            info={},
        )


def make_env(env_id: str) -> Env:
    """Build a registered environment: chain4, chain6, additive, linear."""
    if env_id == "chain4":
        return ChainWorld(4)
    if env_id == "chain6":
        return ChainWorld(6)
    if env_id == "additive":
        return AdditiveTeam(weights=[1.0, 2.0, 3.0, 4.0], targets=[0.5, 0.5, 0.5, 0.5])
    if env_id == "linear":
        return LinearTeam()
    raise ContractError(f"unknown environment id {env_id!r}")
