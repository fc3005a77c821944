"""INI-style run configuration: parsing, strict validation, and assembly
of datasets and models.

Sections: [data] generator choice and parameters, [model] branch and the
member list, one [trunk.<name>] section per member, [train] optimizer and
schedule, [eval] the train/test split. Unknown sections or keys are
configuration errors; nothing is silently ignored.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as datamod
from .errors import ConfigError, CoverageError
from .networks import ACTIVATIONS, MLPConfig, init_mlp
from .partition import (
    Patch,
    PatchSet,
    coverage_check,
    grid_patch_centers,
    uniform_radius,
)
from .pod import compute_pod
from .trunks import EnsembleModel, PODTrunk, PoUTrunk, VanillaTrunk
from .training import OPTIMIZERS, TrainConfig

_DATA_KEYS = {
    "generator", "n", "seed", "grid", "modes", "branch_grid", "dt", "nu",
    "t_final", "path",
}
_MODEL_KEYS = {"members", "branch_hidden", "activation"}
_TRUNK_KEYS = {"kind", "p", "hidden", "modified", "bbox", "grid", "select", "delta"}
_TRAIN_KEYS = {
    "epochs", "optimizer", "lr0", "gamma", "decay_step", "weight_decay",
    "batch", "seeds",
}
_EVAL_KEYS = {"test_count", "split_seed"}


@dataclass
class TrunkSpec:
    """Declarative description of one trunk member."""

    name: str
    kind: str  # vanilla | pod | pou
    p: int
    hidden: tuple = ()
    modified: bool = False
    bbox: tuple = ()  # (lo1, hi1, lo2, hi2, ...)
    grid: tuple = ()
    select: tuple | None = None
    delta: float = 0.0


@dataclass
class DataSpec:
    generator: str
    n: int = 240
    seed: int = 0
    grid: int = 0  # generator-dependent default
    modes: int = 5
    branch_grid: int = 8
    dt: float | None = None
    nu: float = 0.1
    t_final: float = 0.5
    path: str = ""


@dataclass
class EvalSpec:
    test_count: int = 40
    split_seed: int = 0


@dataclass
class RunConfig:
    text: str
    data: DataSpec
    members: list
    branch_hidden: tuple
    activation: str
    train: TrainConfig
    seeds: list
    eval: EvalSpec = field(default_factory=EvalSpec)


def _ints(raw: str):
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _floats(raw: str):
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _check_keys(section: str, present, allowed):
    unknown = set(present) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
        )


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None

    known = {"data", "model", "train", "eval"}
    for sec in parser.sections():
        if sec not in known and not sec.startswith("trunk."):
            raise ConfigError(f"unknown section [{sec}]")
    for sec in ("data", "model", "train"):
        if sec not in parser:
            raise ConfigError(f"missing required section [{sec}]")

    d = parser["data"]
    _check_keys("data", d.keys(), _DATA_KEYS)
    generator = d.get("generator", "").strip()
    if generator not in ("antiderivative", "rd2d", "file"):
        raise ConfigError(f"unknown generator {generator!r}")
    if generator == "file" and not d.get("path", "").strip():
        raise ConfigError("generator=file requires a path")
    if generator != "file" and d.get("path", "").strip():
        raise ConfigError("path is only valid with generator=file")
    data = DataSpec(
        generator=generator,
        n=int(d.get("n", "240")),
        seed=int(d.get("seed", "0")),
        grid=int(d.get("grid", "0")),
        modes=int(d.get("modes", "5")),
        branch_grid=int(d.get("branch_grid", "8")),
        dt=float(d["dt"]) if "dt" in d else None,
        nu=float(d.get("nu", "0.1")),
        t_final=float(d.get("t_final", "0.5")),
        path=d.get("path", "").strip(),
    )

    m = parser["model"]
    _check_keys("model", m.keys(), _MODEL_KEYS)
    member_names = [tok for tok in m.get("members", "").replace(",", " ").split()]
    if not member_names:
        raise ConfigError("[model] members must list at least one trunk")
    branch_hidden = _ints(m.get("branch_hidden", "64 64"))
    if not branch_hidden:
        raise ConfigError("branch_hidden needs at least one width")
    activation = m.get("activation", "tanh").strip()
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")

    members = []
    for name in member_names:
        sec = f"trunk.{name}"
        if sec not in parser:
            raise ConfigError(f"member {name!r} has no [{sec}] section")
        members.append(_parse_trunk(name, parser[sec]))
    declared = {f"trunk.{n}" for n in member_names}
    for sec in parser.sections():
        if sec.startswith("trunk.") and sec not in declared:
            raise ConfigError(f"section [{sec}] is not listed in [model] members")

    t = parser["train"]
    _check_keys("train", t.keys(), _TRAIN_KEYS)
    seeds = list(_ints(t.get("seeds", "0")))
    if not seeds:
        raise ConfigError("[train] seeds must list at least one seed")
    train = TrainConfig(
        epochs=int(t.get("epochs", "5000")),
        optimizer=t.get("optimizer", "adam").strip(),
        lr0=float(t.get("lr0", "1e-3")),
        gamma=float(t.get("gamma", "0.5")),
        decay_step=int(t.get("decay_step", "0")),
        weight_decay=float(t.get("weight_decay", "1e-4")),
        batch_size=int(t.get("batch", "0")),
        seed=seeds[0],
    )
    if train.optimizer not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {train.optimizer!r}")

    ev = EvalSpec()
    if "eval" in parser:
        e = parser["eval"]
        _check_keys("eval", e.keys(), _EVAL_KEYS)
        ev = EvalSpec(
            test_count=int(e.get("test_count", "40")),
            split_seed=int(e.get("split_seed", "0")),
        )

    return RunConfig(
        text=text,
        data=data,
        members=members,
        branch_hidden=branch_hidden,
        activation=activation,
        train=train,
        seeds=seeds,
        eval=ev,
    )


def _parse_trunk(name: str, section) -> TrunkSpec:
    _check_keys(f"trunk.{name}", section.keys(), _TRUNK_KEYS)
    kind = section.get("kind", "").strip()
    if kind not in ("vanilla", "pod", "pou"):
        raise ConfigError(f"trunk {name!r}: unknown kind {kind!r}")
    p = int(section.get("p", "0"))
    if p < 1:
        raise ConfigError(f"trunk {name!r}: p must be >= 1")
    spec = TrunkSpec(name=name, kind=kind, p=p)
    if kind in ("vanilla", "pou"):
        spec.hidden = _ints(section.get("hidden", "64 64 64"))
        if not spec.hidden:
            raise ConfigError(f"trunk {name!r}: hidden needs at least one width")
    if kind == "pod":
        spec.modified = _bool(section.get("modified", "true"))
        for key in ("hidden", "bbox", "grid", "select", "delta"):
            if key in section:
                raise ConfigError(f"trunk {name!r}: key {key!r} not valid for kind=pod")
    if kind == "pou":
        spec.bbox = _floats(section.get("bbox", ""))
        spec.grid = _ints(section.get("grid", ""))
        if not spec.bbox or len(spec.bbox) != 2 * len(spec.grid):
            raise ConfigError(
                f"trunk {name!r}: bbox needs lo/hi per grid axis "
                f"(got {len(spec.bbox)} numbers for {len(spec.grid)} axes)"
            )
        sel = section.get("select", "").strip()
        spec.select = _ints(sel) if sel else None
        spec.delta = float(section.get("delta", "0.1"))
    elif kind == "vanilla":
        for key in ("bbox", "grid", "select", "delta", "modified"):
            if key in section:
                raise ConfigError(f"trunk {name!r}: key {key!r} not valid for kind=vanilla")
    return spec


def generate_dataset(spec: DataSpec) -> datamod.OperatorDataset:
    if spec.generator == "antiderivative":
        grid = spec.grid if spec.grid else 64
        return datamod.gen_antiderivative(
            spec.n, n_modes=spec.modes, grid=grid, seed=spec.seed
        )
    if spec.generator == "rd2d":
        params = datamod.RDParams(
            nu=spec.nu,
            t_final=spec.t_final,
            n=spec.grid if spec.grid else 32,
            dt=spec.dt,
            branch_grid=spec.branch_grid,
        )
        return datamod.gen_reaction_diffusion_2d(params, spec.n, seed=spec.seed)
    return datamod.read_dataset(spec.path)


def split_indices(n: int, test_count: int, split_seed: int):
    """Deterministic shuffle split into (train, test) index arrays."""
    if test_count < 0 or test_count >= n:
        raise ConfigError(f"test_count={test_count} must be in [0, {n})")
    order = np.random.default_rng(split_seed).permutation(n)
    if test_count == 0:
        return np.sort(order), np.array([], dtype=order.dtype)
    return np.sort(order[:-test_count]), np.sort(order[-test_count:])


def build_patchset(spec: TrunkSpec) -> PatchSet:
    axes = len(spec.grid)
    lows = spec.bbox[0::2]
    highs = spec.bbox[1::2]
    centers = grid_patch_centers(lows, highs, spec.grid, spec.select)
    spacings = [
        (hi - lo) / (c - 1)
        for lo, hi, c in zip(lows, highs, spec.grid)
        if c > 1
    ]
    if not spacings:
        # single node per axis: fall back to the box side length
        spacings = [hi - lo for lo, hi in zip(lows, highs)]
    rho = uniform_radius(spec.delta, max(spacings), axes)
    return PatchSet([Patch(c, rho) for c in centers], delta=spec.delta)


def build_model(cfg: RunConfig, dataset: datamod.OperatorDataset,
                train_idx, seed: int) -> EnsembleModel:
    """Assemble the ensemble for a dataset: POD bases come from the
    training split only, and PoU patch sets must cover all of Y."""
    d_v = dataset.d_v
    seed_seq = np.random.SeedSequence(entropy=(int(seed), 0xD0)).spawn(len(cfg.members) + 1)
    members = []
    for i, spec in enumerate(cfg.members):
        child = seed_seq[i].generate_state(1)[0]
        if spec.kind == "vanilla":
            mcfg = MLPConfig(d_v, spec.hidden, spec.p, cfg.activation, activate_last=True)
            members.append(VanillaTrunk(init_mlp(mcfg, child)))
        elif spec.kind == "pod":
            targets = dataset.scalar_targets()[np.asarray(train_idx)]
            basis = compute_pod(targets, spec.p, y_locations=dataset.Y)
            members.append(PODTrunk(basis, spec.p, spec.modified))
        else:
            ps = build_patchset(spec)
            if ps.dimension != d_v:
                raise ConfigError(
                    f"trunk {spec.name!r}: patch dimension {ps.dimension} != d_v {d_v}"
                )
            uncovered = coverage_check(ps, dataset.Y)
            if uncovered:
                raise CoverageError(
                    f"trunk {spec.name!r}: {len(uncovered)} output location(s) "
                    f"not covered by any patch (first index {uncovered[0]})"
                )
            ecfg = MLPConfig(d_v, spec.hidden, spec.p, cfg.activation, activate_last=True)
            expert_seeds = np.random.SeedSequence(entropy=(int(child), 0xE)).spawn(len(ps))
            experts = [
                init_mlp(ecfg, s.generate_state(1)[0]) for s in expert_seeds
            ]
            members.append(PoUTrunk(ps, experts, spec.p))
    total_p = sum(m.p for m in members)
    bcfg = MLPConfig(dataset.n_x, cfg.branch_hidden, total_p, cfg.activation,
                     activate_last=False)
    branch = init_mlp(bcfg, seed_seq[-1].generate_state(1)[0])
    bias = None
    standalone_standard_pod = (
        len(members) == 1
        and isinstance(members[0], PODTrunk)
        and not members[0].modified
    )
    if not standalone_standard_pod:
        bias = ad.Tensor(np.zeros(()), requires_grad=True)
    return EnsembleModel(members, branch, bias)
