"""Experiment configuration and the sweep / verification / demo drivers behind the CLI."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import INFEASIBLE, BoundConstants, theorem1_bound, theorem2_bound
from .core import (MeanFieldModel, Policy, PolicySequence, SoftmaxLinearPolicy, SpaceSpec,
                   TabularPolicy, as_distribution, empirical_distribution, sample_categorical, uniform)
from .dynamics import compute_flow, propagate_state, truncation_horizon
from .envs import identity_model, random_model
from .firm import FirmConfig, firm_model
from .lemmas import lemma_checks, loglog_slope
from .localization import LocalizedSequence
from .npg import MLPPolicy, TrainerConfig, load_checkpoint, train
from .simulator import (ExecutionMode, derive_seed, discounted_return, estimate_value,
                        initial_joint_state)

VERSION_TAG = f"mflocal-v{__version__}"


@dataclass
class EnvSection:
    name: str = "firm"
    Q: int = 10
    alpha_r: float = 1.0
    beta_r: float = 0.5
    lambda_r: float = 0.5
    num_states: int = 3
    num_actions: int = 3
    coupling: float = 0.5
    action_dist_free: bool = False
    env_seed: int = 0


@dataclass
class TrainerSection:
    eta: float = 1e-3
    alpha: float = 1e-3
    J: int = 100
    L: int = 100
    hidden: int = 128
    episode_cap: int | None = None
    w0: float = 0.0
    mu0: str | list = "uniform"
    train: bool = True
    checkpoint: str | None = None


@dataclass
class SweepSection:
    n_values: list = field(default_factory=lambda: [10, 20, 50, 100])
    q_values: list = field(default_factory=lambda: [5, 10, 15])
    n_fixed: int = 50
    q_fixed: int = 10
    seeds: int = 10


@dataclass
class EvaluationSection:
    gamma: float = 0.9
    trunc_tol: float = 1e-4
    episodes: int = 100
    init_strategy: str = "iid_sample"
    horizon: int | None = None


@dataclass
class BoundsSection:
    n_values: list = field(default_factory=lambda: [10, 100, 1000])
    trials: int = 500
    horizon: int = 10
    policy: str = "random-softmax"
    policy_seed: int = 0
    policy_coupling: float = 0.5
    theorem_gamma: float | None = None


@dataclass
class DemoSection:
    n_agents: int = 3
    horizon: int = 5


@dataclass
class OutputSection:
    dir: str = "out"
    json: bool = False


_SECTIONS = {
    "env": EnvSection, "trainer": TrainerSection, "sweep": SweepSection,
    "evaluation": EvaluationSection, "bounds": BoundsSection, "demo": DemoSection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    env: EnvSection = field(default_factory=EnvSection)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    demo: DemoSection = field(default_factory=DemoSection)
    output: OutputSection = field(default_factory=OutputSection)
    seed: int = 0

    def __post_init__(self):
        ev = self.evaluation
        if not 0.0 <= ev.gamma < 1.0:
            raise ValueError("evaluation.gamma must be in [0, 1)")
        if ev.trunc_tol <= 0 or ev.episodes < 1:
            raise ValueError("evaluation.trunc_tol must be > 0 and episodes >= 1")
        if ev.init_strategy not in ("iid_sample", "exact_rounding"):
            raise ValueError(f"unknown init_strategy {ev.init_strategy!r}")
        if self.env.name not in ("firm", "random", "identity"):
            raise ValueError(f"unknown env {self.env.name!r}")
        if self.env.Q < 2:
            raise ValueError("env.Q must be >= 2")
        if any(int(n) < 1 for n in self.sweep.n_values + self.bounds.n_values):
            raise ValueError("population sizes must be >= 1")
        if self.sweep.seeds < 1:
            raise ValueError("sweep.seeds must be >= 1")
        if self.bounds.policy not in ("random-softmax", "uniform", "checkpoint"):
            raise ValueError(f"unknown bounds.policy {self.bounds.policy!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(_SECTIONS) - {"seed"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, section in _SECTIONS.items():
            raw = d.get(name, {})
            allowed = {f.name for f in dataclasses.fields(section)}
            bad = set(raw) - allowed
            if bad:
                raise ValueError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = section(**raw)
        return cls(seed=int(d.get("seed", 0)), **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def trainer_config(self, seed: int) -> TrainerConfig:
        t = self.trainer
        mu0 = None if t.mu0 == "uniform" else list(t.mu0)
        return TrainerConfig(eta=t.eta, alpha=t.alpha, J=t.J, L=t.L, gamma=self.evaluation.gamma,
                             mu0=mu0, seed=seed, hidden=t.hidden, episode_cap=t.episode_cap,
                             w0=t.w0, eval_trunc_tol=self.evaluation.trunc_tol)


def build_model(env: EnvSection, Q: int | None = None) -> MeanFieldModel:
    if env.name == "firm":
        return firm_model(FirmConfig(Q if Q is not None else env.Q, env.alpha_r, env.beta_r, env.lambda_r))
    spaces = SpaceSpec(env.num_states, env.num_actions)
    if env.name == "random":
        return random_model(spaces, np.random.default_rng(env.env_seed), env.coupling,
                            action_dist_free=env.action_dist_free)
    return identity_model(spaces)


def evaluation_horizon(config: ExperimentConfig, model: MeanFieldModel) -> int:
    ev = config.evaluation
    if ev.horizon is not None:
        return int(ev.horizon)
    return max(1, truncation_horizon(model.m_r, ev.gamma, ev.trunc_tol))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_json(path, rows: list[dict]) -> None:
    def conv(v):
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return v.item()
        return v
    Path(path).write_text(json.dumps([{k: conv(v) for k, v in r.items()} for r in rows], indent=1))


# ---------------------------------------------------------------- error sweep

SWEEP_COLUMNS = ["row_type", "sweep_var", "sweep_value", "N", "Q", "seed", "v_global",
                 "v_global_stderr", "v_local", "v_local_stderr", "error", "error_std",
                 "theorem1_bound", "theorem2_bound", "gamma", "horizon", "episodes",
                 "init_strategy", "mode", "config_hash", "version"]


def obtain_policy(config: ExperimentConfig, model: MeanFieldModel, seed: int) -> MLPPolicy:
    """Train on ``model`` or load the configured checkpoint."""
    t = config.trainer
    if t.train:
        result = train(config.trainer_config(seed), model)
        template = MLPPolicy(model.num_states, model.num_actions, t.hidden)
        return template.with_params(result.params[result.best_index])
    if not t.checkpoint or not Path(t.checkpoint).exists():
        raise FileNotFoundError("no checkpoint available and training is disabled")
    policy, _, _ = load_checkpoint(t.checkpoint)
    if (policy.num_states, policy.num_actions) != (model.num_states, model.num_actions):
        raise ValueError(f"checkpoint spaces {(policy.num_states, policy.num_actions)} do not match {model.name}")
    return policy


def evaluate_gap(config: ExperimentConfig, model: MeanFieldModel, policy: Policy, n: int,
                 seed: int) -> dict:
    """Global vs localised execution of ``policy`` from one joint initial state."""
    ev = config.evaluation
    T = evaluation_horizon(config, model)
    mu0 = config.trainer_config(seed).initial_distribution(model.num_states)
    joint0 = initial_joint_state(mu0, n, ev.init_strategy, derive_seed(seed, 2 + n))
    flow = compute_flow(joint0.empirical(), policy, model, T)
    local_seq = LocalizedSequence(PolicySequence.stationary(policy), flow)
    base = derive_seed(seed, 3)
    g = estimate_value(joint0, policy, ExecutionMode.global_(), model, ev.gamma, T, ev.episodes, base)
    loc = estimate_value(joint0, local_seq, ExecutionMode.local(flow), model, ev.gamma, T, ev.episodes, base)
    k = BoundConstants.from_model(model, policy.l_q)
    return {
        "N": n, "seed": seed, "v_global": g.mean, "v_global_stderr": g.std_err,
        "v_local": loc.mean, "v_local_stderr": loc.std_err, "error": abs(g.mean - loc.mean),
        "theorem1_bound": theorem1_bound(k, n, model.num_states, model.num_actions, ev.gamma),
        "theorem2_bound": theorem2_bound(k, n, model.num_states, ev.gamma),
        "gamma": ev.gamma, "horizon": T, "episodes": ev.episodes,
        "init_strategy": ev.init_strategy, "mode": "global-vs-local",
    }


def _sweep_task(args):
    config, Q, n_values, seed = args
    model = build_model(config.env, Q)
    policy = obtain_policy(config, model, seed)
    return [dict(evaluate_gap(config, model, policy, n, seed), Q=Q) for n in n_values]


def summarize(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def run_error_sweep(config: ExperimentConfig, sweep: str, out_dir=None, threads: int = 1,
                    write_json_mirror: bool | None = None) -> list[dict]:
    """Error between global and localised execution over N (``sweep='n'``) or Q (``'q'``)."""
    if sweep not in ("n", "q"):
        raise ValueError("sweep must be 'n' or 'q'")
    if not config.trainer.train and not (config.trainer.checkpoint and Path(config.trainer.checkpoint).exists()):
        raise FileNotFoundError("no checkpoint available and training is disabled")
    s = config.sweep
    seeds = [config.seed + i for i in range(s.seeds)]
    if sweep == "n":
        var, values = "N", [int(n) for n in s.n_values]
        tasks = [(config, s.q_fixed, values, sd) for sd in seeds]
    else:
        var, values = "Q", [int(q) for q in s.q_values]
        tasks = [(config, q, [s.n_fixed], sd) for q in values for sd in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    cells = [r for group in results for r in group]
    chash = config.config_hash()
    for c in cells:
        c.update(row_type="cell", sweep_var=var, sweep_value=c[var], config_hash=chash, version=VERSION_TAG)
    cells.sort(key=lambda c: (c["sweep_value"], c["seed"]))
    summary = []
    for v in values:
        group = [c for c in cells if c["sweep_value"] == v]
        mean_err, std_err = summarize([c["error"] for c in group])
        first = group[0]
        summary.append({
            "row_type": "summary", "sweep_var": var, "sweep_value": v, "N": first["N"], "Q": first["Q"],
            "v_global": summarize([c["v_global"] for c in group])[0],
            "v_local": summarize([c["v_local"] for c in group])[0],
            "error": mean_err, "error_std": std_err,
            "theorem1_bound": first["theorem1_bound"], "theorem2_bound": first["theorem2_bound"],
            "gamma": first["gamma"], "horizon": first["horizon"], "episodes": first["episodes"],
            "init_strategy": first["init_strategy"], "mode": first["mode"],
            "seed": f"{seeds[0]}..{seeds[-1]}", "config_hash": chash, "version": VERSION_TAG,
        })
    rows = cells + summary
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"sweep_{sweep}.csv", SWEEP_COLUMNS, rows)
        if write_json_mirror if write_json_mirror is not None else config.output.json:
            write_json(out / f"sweep_{sweep}.json", rows)
    return rows


# ---------------------------------------------------------- bound verification

BOUND_COLUMNS = ["kind", "name", "N", "t", "empirical_mean", "stderr", "bound", "trials", "passed",
                 "gamma", "feasible", "seed", "mode", "config_hash", "version"]


def verification_policy(config: ExperimentConfig, model: MeanFieldModel) -> Policy:
    b = config.bounds
    spaces = model.spaces
    if b.policy == "uniform":
        return TabularPolicy.uniform(spaces.num_states, spaces.num_actions)
    if b.policy == "checkpoint":
        return obtain_policy(dataclasses.replace(config, trainer=dataclasses.replace(config.trainer, train=False)),
                             model, config.seed)
    return SoftmaxLinearPolicy.random(spaces, np.random.default_rng(b.policy_seed), coupling=b.policy_coupling)


def run_bound_verification(config: ExperimentConfig, out_dir=None, trials: int | None = None,
                           write_json_mirror: bool | None = None) -> list[dict]:
    """Lemma checks at every configured N plus theorem-bound feasibility and values."""
    b = config.bounds
    model = build_model(config.env)
    policy = verification_policy(config, model)
    mu0 = uniform(model.num_states)
    gamma = config.evaluation.gamma if b.theorem_gamma is None else b.theorem_gamma
    n_trials = b.trials if trials is None else trials
    chash = config.config_hash()
    common = {"seed": config.seed, "mode": "global", "config_hash": chash, "version": VERSION_TAG}
    rows = []
    action_means = []
    for n in b.n_values:
        checks = lemma_checks(model, policy, mu0, int(n), b.horizon, n_trials, derive_seed(config.seed, int(n)))
        for r in checks:
            rows.append({"kind": "lemma", "name": r.lemma, "N": r.n, "t": r.t, "empirical_mean": r.mean,
                         "stderr": r.stderr, "bound": r.bound, "trials": r.trials, "passed": r.passed,
                         "gamma": "", "feasible": "", **common})
        action_means.append(np.mean([r.mean for r in checks if r.lemma == "action_gap"]))
        k = BoundConstants.from_model(model, policy.l_q)
        t1 = theorem1_bound(k, int(n), model.num_states, model.num_actions, gamma)
        t2 = theorem2_bound(k, int(n), model.num_states, gamma)
        for name, val in (("theorem1", t1), ("theorem2", t2)):
            rows.append({"kind": "theorem", "name": name, "N": int(n), "t": "", "empirical_mean": "",
                         "stderr": "", "bound": val, "trials": "", "passed": "", "gamma": gamma,
                         "feasible": val != INFEASIBLE, **common})
    if len(b.n_values) >= 2:
        rows.append({"kind": "scaling", "name": "action_gap_loglog_slope", "N": "", "t": "",
                     "empirical_mean": loglog_slope(b.n_values, action_means), "stderr": "",
                     "bound": -0.5, "trials": n_trials, "passed": "", "gamma": "", "feasible": "", **common})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "verify_bounds.csv", BOUND_COLUMNS, rows)
        if write_json_mirror if write_json_mirror is not None else config.output.json:
            write_json(out / "verify_bounds.json", rows)
    return rows


# ------------------------------------------------------- decentralised demo

class DecentralizedAgent:
    """One agent running the localised policy from its own state and its own flow copy.

    The agent knows the transition law and ``mu0``; it never receives the
    population's empirical distribution.
    """

    def __init__(self, index: int, x0: int, mu0, policy: Policy, model: MeanFieldModel, seed: int):
        self.index = index
        self.x = int(x0)
        self.mu = as_distribution(mu0, model.num_states)
        self.policy = policy
        self.model = model
        self.rng = np.random.default_rng(seed)
        self.states = [self.x]
        self.actions: list[int] = []
        self.mu_history = [self.mu.tolist()]
        self.policy_inputs: list[list[float]] = []

    def act(self) -> int:
        self.policy_inputs.append(self.mu.tolist())
        probs = self.policy.decide(self.x, self.mu)
        u = int(sample_categorical(probs, np.array(self.rng.random())))
        self.actions.append(u)
        return u

    def advance_flow(self) -> None:
        self.mu = as_distribution(propagate_state(self.mu, self.policy, self.model), self.model.num_states)
        self.mu_history.append(self.mu.tolist())

    def observe(self, x_next: int) -> None:
        self.x = int(x_next)
        self.states.append(self.x)


def run_decentralized_demo(config: ExperimentConfig, policy: Policy | None = None, seed: int | None = None,
                           n_agents: int | None = None, horizon: int | None = None,
                           model: MeanFieldModel | None = None, out_dir=None) -> dict:
    """Execute the localised policy agent by agent; the environment alone sees the population."""
    seed = config.seed if seed is None else seed
    n = config.demo.n_agents if n_agents is None else n_agents
    T = config.demo.horizon if horizon is None else horizon
    model = build_model(config.env) if model is None else model
    if policy is None:
        policy = obtain_policy(config, model, seed)
    gamma = config.evaluation.gamma
    mu_init = config.trainer_config(seed).initial_distribution(model.num_states)
    joint0 = initial_joint_state(mu_init, n, config.evaluation.init_strategy, derive_seed(seed, 2 + n))
    mu0 = joint0.empirical()
    agents = [DecentralizedAgent(i, joint0.states[i], mu0, policy, model, derive_seed(seed, 100 + i))
              for i in range(n)]
    env_rng = np.random.default_rng(derive_seed(seed, 99))
    X, U = model.num_states, model.num_actions
    mu_emp, rewards = [], []
    for t in range(T + 1):
        acts = [a.act() for a in agents]
        states = [a.x for a in agents]
        mu_n = empirical_distribution(states, X)
        nu_n = empirical_distribution(acts, U)
        mu_emp.append(mu_n.tolist())
        rewards.append([model.reward(x, u, mu_n, nu_n) for x, u in zip(states, acts)])
        if t == T:
            break
        for a in agents:
            a.advance_flow()
        P = model.transition_table(mu_n, nu_n)
        draws = env_rng.random(n)
        for a, x, u, r in zip(agents, states, acts, draws):
            a.observe(int(sample_categorical(P[x, u], np.array(r))))
    flow = compute_flow(mu0, policy, model, T)
    flows = np.array([a.mu_history for a in agents])
    ret = float(discounted_return(np.array(rewards), gamma))
    trace = {
        "seed": seed, "n_agents": n, "horizon": T, "gamma": gamma, "mu0": mu0.tolist(),
        "agents": [{"index": a.index, "states": a.states, "actions": a.actions,
                    "local_flow": a.mu_history, "policy_inputs": a.policy_inputs} for a in agents],
        "shared_flow": flow.mu.tolist(),
        "environment_mu": mu_emp,
        "rewards": rewards,
        "return": ret,
        "flows_identical": bool(all(np.array_equal(flows[0], f) for f in flows)),
        "matches_compute_flow": bool(np.allclose(flows[0], flow.mu, rtol=0, atol=1e-12)),
        "policy_saw_only_local_flow": bool(all(a.policy_inputs == a.mu_history[:T + 1] for a in agents)),
        "version": VERSION_TAG,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"demo_seed{seed}.json").write_text(json.dumps(trace, indent=1))
    return trace
