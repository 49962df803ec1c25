"""Scenario files: YAML mappings whose keys are the Scenario field names."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .model import (
    BatchEvent,
    GroupParams,
    InteractionType,
    ModelError,
    Scenario,
    TransitionIndicators,
)


class ConfigError(ModelError):
    pass


_SCENARIO_KEYS = {f.name for f in dataclasses.fields(Scenario)}
_FLAG_KEYS = {f.name for f in dataclasses.fields(TransitionIndicators)}


def _check_keys(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _interaction_from(raw):
    if isinstance(raw, str):
        try:
            return InteractionType(raw)
        except ValueError:
            raise ConfigError(f"interaction: unknown type {raw!r}") from None
    _check_keys(raw, {"custom"}, "interaction")
    flags = raw["custom"]
    _check_keys(flags, _FLAG_KEYS, "interaction.custom")
    return TransitionIndicators(**{k: int(v) for k, v in flags.items()})


def scenario_from_dict(data: dict) -> Scenario:
    _check_keys(data, _SCENARIO_KEYS, "scenario")
    if "groups" not in data:
        raise ConfigError("scenario: groups is required")
    kw = dict(data)
    groups = []
    for k, gp in enumerate(kw.pop("groups")):
        _check_keys(gp, {"n_nodes", "intra_rate"}, f"groups[{k}]")
        try:
            groups.append(GroupParams(int(gp["n_nodes"]), float(gp["intra_rate"])))
        except KeyError as exc:
            raise ConfigError(f"groups[{k}]: missing {exc.args[0]}") from None
    kw["groups"] = tuple(groups)

    if "interaction" in kw:
        kw["interaction"] = _interaction_from(kw["interaction"])
    if "batch_schedule" in kw:
        events = []
        for k, ev in enumerate(kw["batch_schedule"] or []):
            _check_keys(ev, {"time", "deltas"}, f"batch_schedule[{k}]")
            deltas = ev.get("deltas") or {}
            _check_keys(deltas, {"s_star", "s_prime", "i_a", "i_b"}, f"batch_schedule[{k}].deltas")
            events.append(BatchEvent(float(ev["time"]), {n: tuple(float(x) for x in v) for n, v in deltas.items()}))
        kw["batch_schedule"] = tuple(events)
    if "inter_rates" in kw:
        kw["inter_rates"] = tuple(tuple(float(x) for x in row) for row in kw["inter_rates"])
    if "group_transitions" in kw:
        kw["group_transitions"] = {
            n: tuple(tuple(float(x) for x in row) for row in m) for n, m in (kw["group_transitions"] or {}).items()
        }
    for name in ("initial_prey", "initial_predator"):
        if name in kw:
            kw[name] = tuple(float(x) for x in kw[name])
    for name in ("cooperation", "immunization", "on_prob", "delay", "resusceptible_rate",
                 "manual_removal_rate", "manual_vaccination_rate", "horizon", "on_off_interval"):
        if name in kw:
            try:
                kw[name] = float(kw[name])
            except (TypeError, ValueError):
                raise ConfigError(f"{name}: expected a number, got {kw[name]!r}") from None
    try:
        return Scenario(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def scenario_to_dict(scn: Scenario) -> dict:
    out = {
        "groups": [{"n_nodes": gp.n_nodes, "intra_rate": gp.intra_rate} for gp in scn.groups],
        "inter_rates": [list(row) for row in scn.inter_rates],
    }
    for name in ("cooperation", "immunization", "on_prob", "delay", "resusceptible_rate",
                 "manual_removal_rate", "manual_vaccination_rate", "horizon", "on_off_interval"):
        out[name] = getattr(scn, name)
    out["group_transitions"] = {n: [list(r) for r in m] for n, m in scn.group_transitions.items()}
    out["initial_prey"] = list(scn.initial_prey)
    out["initial_predator"] = list(scn.initial_predator)
    if isinstance(scn.interaction, TransitionIndicators):
        out["interaction"] = {"custom": dataclasses.asdict(scn.interaction)}
    else:
        out["interaction"] = scn.interaction.value
    out["batch_schedule"] = [
        {"time": ev.time, "deltas": {n: list(v) for n, v in ev.deltas.items()}} for ev in scn.batch_schedule
    ]
    return out


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return scenario_from_dict(data or {})


def dump_scenario(scn: Scenario, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(scn), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
