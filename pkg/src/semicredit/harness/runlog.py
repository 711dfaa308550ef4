"""Append-only per-iteration training log.

One CSV row per iteration, flushed as soon as it is written so a crashed
run still leaves a readable file. Floats are printed with 17 significant
digits, enough for an exact float64 round trip, so two runs are comparable
byte for byte. Per-agent columns are expanded by agent count; the trailing
status column is "ok" on normal rows and carries a reason on abort rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError

FIXED_HEAD = ("iteration", "env_steps", "mean_episode_reward", "reward_std")
FIXED_MID = ("model_delta_mse", "model_reward_mse", "critic_loss")
FIXED_TAIL = ("wall_clock", "status")


def runlog_columns(n_agents: int) -> list[str]:
    cols = list(FIXED_HEAD)
    cols += [f"mean_abs_action_{i}" for i in range(n_agents)]
    cols += list(FIXED_MID)
    cols += [f"mean_psi_{i}" for i in range(n_agents)]
    cols += list(FIXED_TAIL)
    return cols


@dataclass
class RunRecord:
    iteration: int
    env_steps: int
    mean_episode_reward: float
    reward_std: float
    mean_abs_action: np.ndarray
    model_delta_mse: float
    model_reward_mse: float
    critic_loss: float
    mean_psi: np.ndarray
    wall_clock: float
    status: str = "ok"


def _fmt(value: float) -> str:
    return "%.17g" % float(value)


class RunLog:
    """Writes rows for a fixed agent count; the header pins the layout."""

    def __init__(self, path, n_agents: int):
        if n_agents < 1:
            raise ContractError("n_agents must be positive")
        self.path = Path(path)
        self.n_agents = n_agents
        self.columns = runlog_columns(n_agents)
        self._fh = open(self.path, "w")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def append(self, rec: RunRecord) -> None:
        per_action = np.asarray(rec.mean_abs_action, dtype=np.float64)
        per_psi = np.asarray(rec.mean_psi, dtype=np.float64)
        if per_action.shape != (self.n_agents,) or per_psi.shape != (self.n_agents,):
            raise ContractError("per-agent column count does not match the header")
        if "," in rec.status or "\n" in rec.status:
            raise ContractError("status must not contain separators")
        parts = [str(int(rec.iteration)), str(int(rec.env_steps))]
        parts += [_fmt(rec.mean_episode_reward), _fmt(rec.reward_std)]
        parts += [_fmt(v) for v in per_action]
        parts += [_fmt(rec.model_delta_mse), _fmt(rec.model_reward_mse), _fmt(rec.critic_loss)]
        parts += [_fmt(v) for v in per_psi]
        parts += [_fmt(rec.wall_clock), rec.status]
        self._fh.write(",".join(parts) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


@dataclass
class RunTable:
    """Parsed log: numeric columns as float arrays, status as strings."""

    columns: list[str]
    numeric: dict[str, np.ndarray]
    status: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.numeric[name]

    @property
    def n_agents(self) -> int:
        return sum(1 for c in self.columns if c.startswith("mean_psi_"))

    def __len__(self) -> int:
        return len(self.status)


def read_runlog(path) -> RunTable:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ContractError(f"{path} is empty")
    columns = lines[0].split(",")
    if columns[: len(FIXED_HEAD)] != list(FIXED_HEAD) or columns[-1] != "status":
        raise ContractError(f"{path} does not look like a run log")
    raw = {c: [] for c in columns}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise ContractError(f"{path} line {lineno}: {len(parts)} fields, expected {len(columns)}")
        for c, p in zip(columns, parts):
            raw[c].append(p)
    numeric = {c: np.array([float(v) for v in raw[c]]) for c in columns if c != "status"}
    return RunTable(columns=columns, numeric=numeric, status=raw["status"])
