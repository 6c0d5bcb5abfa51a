"""Sectioned key-value run configuration.

Grammar: INI-style ``[section]`` headers followed by ``key = value`` lines;
``#`` and ``;`` start comments. Allowed sections and keys::

    [sim]
    n_robots, n_tasks_total, lambda, mu, episode_event_horizon,
    task_duration, fail_service_multiplier, discipline (fifo|sjf), seed

    [learning]
    alpha, gamma, epsilon, r_s, r_f, r_t, mu_bar, lambda_bar,
    mu_bar_convention (time|rate), alpha_decay

    [events]
    preset (default|sjf), fail_probs, mix, service_multipliers

List values are comma separated, one entry per event type (E1, E2, E3).
Anything left out takes the default scenario value.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

from .learning import InvalidInputError, LearningParams
from .queue_core import Discipline, InvalidParameterError, default_catalog, sjf_catalog
from .sim_kernel import SimConfig


class ConfigError(ValueError):
    pass


SIM_KEYS = {
    "n_robots": ("n_robots", int),
    "n_tasks_total": ("n_tasks_total", int),
    "lambda": ("lam", float),
    "mu": ("mu", float),
    "episode_event_horizon": ("episode_event_horizon", int),
    "task_duration": ("task_duration", float),
    "fail_service_multiplier": ("fail_service_multiplier", float),
    "discipline": ("discipline", str),
    "seed": ("seed", int),
}
LEARNING_KEYS = {
    "alpha": float,
    "gamma": float,
    "epsilon": float,
    "r_s": float,
    "r_f": float,
    "r_t": float,
    "mu_bar": float,
    "lambda_bar": float,
    "mu_bar_convention": str,
    "alpha_decay": float,
}
EVENT_KEYS = {"preset", "fail_probs", "mix", "service_multipliers"}
SECTIONS = {"sim": SIM_KEYS, "learning": LEARNING_KEYS, "events": EVENT_KEYS}


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"[events] {key}: expected comma-separated numbers, got {text!r}") from None


def _convert(section: str, key: str, raw: str, kind):
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> tuple[SimConfig, LearningParams]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    sim_kw = {}
    if cp.has_section("sim"):
        for key, raw in cp["sim"].items():
            name, kind = SIM_KEYS[key]
            sim_kw[name] = _convert("sim", key, raw, kind)
    if "discipline" in sim_kw:
        try:
            sim_kw["discipline"] = Discipline(sim_kw["discipline"].lower())
        except ValueError:
            raise ConfigError(f"[sim] discipline: expected fifo or sjf, got {sim_kw['discipline']!r}") from None

    catalog = default_catalog()
    if cp.has_section("events"):
        ev = cp["events"]
        preset = ev.get("preset", "default").strip().lower()
        if preset not in ("default", "sjf"):
            raise ConfigError(f"[events] preset: expected default or sjf, got {preset!r}")
        catalog = sjf_catalog() if preset == "sjf" else default_catalog()
        try:
            if "fail_probs" in ev:
                catalog = catalog.with_fail_probs(_floats(ev["fail_probs"], "fail_probs"))
            if "service_multipliers" in ev:
                catalog = catalog.with_service_multipliers(
                    _floats(ev["service_multipliers"], "service_multipliers")
                )
            if "mix" in ev:
                catalog = catalog.with_mix(_floats(ev["mix"], "mix"))
        except InvalidParameterError as exc:
            raise ConfigError(f"[events] {exc}") from None
    sim_kw["catalog"] = catalog

    learn_kw = {}
    if cp.has_section("learning"):
        for key, raw in cp["learning"].items():
            learn_kw[key] = _convert("learning", key, raw, LEARNING_KEYS[key])

    try:
        sim = SimConfig(**sim_kw)
    except InvalidParameterError as exc:
        raise ConfigError(f"[sim] {exc}") from None
    try:
        params = LearningParams(**learn_kw)
    except InvalidInputError as exc:
        raise ConfigError(f"[learning] {exc}") from None
    return sim, params


def load_config(path) -> tuple[SimConfig, LearningParams]:
    if path is None:
        return parse_config("")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def dump_config(sim: SimConfig, params: LearningParams) -> str:
    """Render a configuration that ``parse_config`` reads back unchanged."""
    lines = ["[sim]"]
    for key, (name, _) in SIM_KEYS.items():
        value = getattr(sim, name)
        lines.append(f"{key} = {value.value if isinstance(value, Discipline) else _num(value)}")
    lines.append("")
    lines.append("[learning]")
    for f in fields(LearningParams):
        value = getattr(params, f.name)
        if value is not None:
            lines.append(f"{f.name} = {_num(value)}")
    lines.append("")
    lines.append("[events]")
    cat = sim.catalog
    lines.append("fail_probs = " + ", ".join(_num(e.fail_prob) for e in cat.entries))
    lines.append("service_multipliers = " + ", ".join(_num(e.service_multiplier) for e in cat.entries))
    lines.append("mix = " + ", ".join(_num(p) for p in cat.mix))
    return "\n".join(lines) + "\n"
