"""Built-in model files and the expected results shipped with them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from ..dsl import ModelDef, parse_model, validate_model
from ..expr import Expression, render

BUILTINS = ("second_chern", "euler", "bf_ym", "martellini")


class UnknownModelError(KeyError):
    def __str__(self) -> str:
        return f"unknown built-in model {self.args[0]!r}; choose from {', '.join(BUILTINS)}"


def model_text(name: str) -> str:
    if name not in BUILTINS:
        raise UnknownModelError(name)
    return resources.files(__name__).joinpath(f"{name}.model").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _parsed(name: str) -> ModelDef:
    m = parse_model(model_text(name))
    errors = validate_model(m)
    if errors:
        raise ValueError(f"built-in model {name} failed validation: {errors[0].message}")
    return m


def builtin(name: str) -> ModelDef:
    """Parsed and validated built-in model (a fresh copy each call)."""
    _parsed(name)  # validated once per process
    return parse_model(model_text(name))


@dataclass
class Fixture:
    """Expected results for one built-in model; expressions are DSL strings.

    Bracket keys are ``"A,B"`` and the strings use ``lam`` and ``mu`` for the
    smearing parameters of ``A`` and ``B``.  Every entry carries a ``source``
    note describing where the expected value comes from.
    """

    model: str
    pairings: list[dict]
    brackets: dict[str, dict] = field(default_factory=dict)
    classification: dict = field(default_factory=dict)
    reducibilities: dict = field(default_factory=dict)
    dof: dict = field(default_factory=dict)
    hamiltonian_remainder: dict = field(default_factory=dict)
    hamiltonian_on_shell: dict | None = None
    gauge: dict | None = None

    def bracket(self, a: str, b: str) -> str | None:
        e = self.brackets.get(f"{a},{b}")
        return None if e is None else e["expected"]


@lru_cache(maxsize=None)
def _fixtures() -> dict:
    return json.loads(resources.files(__name__).joinpath("fixtures.json").read_text(encoding="utf-8"))


def fixture(name: str) -> Fixture:
    if name not in BUILTINS:
        raise UnknownModelError(name)
    return Fixture(model=name, **_fixtures()["models"][name])


def describe(m: ModelDef) -> dict:
    """Short summary used by the CLI and the tests."""
    return {
        "name": m.name,
        "constants": list(m.constants),
        "fields": {n: f.kind for n, f in m.fields.items()},
        "constraints": [c.label for c in m.constraints],
        "hamiltonian": render(m.hamiltonian) if isinstance(m.hamiltonian, Expression) else "",
    }
