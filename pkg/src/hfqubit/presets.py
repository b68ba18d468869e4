"""Shipped presets: material inputs and named experiment configurations."""

from __future__ import annotations

import copy
import re
from functools import lru_cache
from importlib import resources

import yaml


class Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot or sign (1e3, 2.5e6)."""


Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=Loader)


@lru_cache(maxsize=None)
def _load(name: str) -> dict:
    text = resources.files(__package__).joinpath("presets").joinpath(name).read_text(encoding="utf-8")
    return load_yaml(text) or {}


def material_tables() -> list[str]:
    return sorted(_load("materials.yaml"))


def material_table(table: str) -> dict:
    data = _load("materials.yaml")
    if table not in data:
        raise KeyError(f"unknown material table {table!r}")
    return data[table]


def experiment_names() -> list[str]:
    return sorted(_load("experiments.yaml"))


def experiment(name: str) -> dict:
    data = _load("experiments.yaml")
    if name not in data:
        raise KeyError(f"unknown experiment preset {name!r}")
    return copy.deepcopy(data[name])


def listing() -> list[tuple[str, str, str]]:
    """(group, name, description) rows for every preset."""
    rows = []
    for name in experiment_names():
        rows.append(("experiment", name, experiment(name)["kind"]))
    for table in material_tables():
        for name, body in material_table(table).items():
            rows.append((table, name, str(body.get("note", "")).strip()))
    return rows
