"""Declarative model files (YAML or JSON) validated with pydantic."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from . import distributions as D
from .cascade import CascadeSpec
from .errors import ConfigurationError
from .microenv import MicroEnvModel
from .routes import CascadeRoute, PowerLawRoute, SequentialRoute, SystemSpec, UnorderedRoute

SCHEMA_VERSION = 1


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExponentialLaw(Strict):
    law: Literal["exponential"]
    rate: PositiveFloat

    def build(self):
        return D.Exponential(self.rate)


class GammaLaw(Strict):
    law: Literal["gamma"]
    shape: PositiveFloat
    rate: PositiveFloat

    def build(self):
        return D.Gamma(self.shape, self.rate)


class Weibull2Law(Strict):
    law: Literal["weibull2"]
    b: PositiveFloat

    def build(self):
        return D.Weibull2(self.b)


class LogisticLaw(Strict):
    law: Literal["logistic"]
    a: PositiveFloat
    c: PositiveFloat
    N: float = Field(1.0, ge=1.0)

    def build(self):
        return D.LogisticDetection(self.a, self.c, self.N)


class PowerLawLaw(Strict):
    law: Literal["powerlaw"]
    coef: PositiveFloat
    exponent: float = Field(0.0, ge=0.0)
    truncation: Optional[PositiveFloat] = None

    def build(self):
        return D.PowerLawHazard(self.coef, self.exponent, self.truncation)


Law = Annotated[
    Union[ExponentialLaw, GammaLaw, Weibull2Law, LogisticLaw, PowerLawLaw], Field(discriminator="law")
]


def _steps_from_rates(rates, shapes):
    if shapes is None:
        return [D.Exponential(r) for r in rates]
    if len(shapes) != len(rates):
        raise ValueError("shapes and rates must have the same length")
    return [D.Gamma(p, r) for p, r in zip(shapes, rates)]


class StepList(Strict):
    steps: Optional[list[Law]] = None
    rates: Optional[list[PositiveFloat]] = None
    shapes: Optional[list[PositiveFloat]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.steps is None) == (self.rates is None):
            raise ValueError("give exactly one of 'steps' or 'rates'")
        if self.shapes is not None and self.rates is None:
            raise ValueError("'shapes' needs 'rates'")
        if self.steps is not None and not self.steps or self.rates is not None and not self.rates:
            raise ValueError("a route needs at least one step")
        return self

    def build_steps(self):
        if self.steps is not None:
            return [s.build() for s in self.steps]
        return _steps_from_rates(self.rates, self.shapes)


class SequentialRouteModel(StepList):
    type: Literal["sequential"]

    def build(self):
        return SequentialRoute(tuple(self.build_steps()))


class UnorderedRouteModel(StepList):
    type: Literal["unordered"]

    def build(self):
        return UnorderedRoute(tuple(self.build_steps()))


class PowerTerm(Strict):
    a: PositiveFloat
    p: PositiveFloat


class PowerLawRouteModel(Strict):
    type: Literal["powerlaw"]
    terms: list[PowerTerm] = Field(min_length=1)

    def build(self):
        return PowerLawRoute(tuple((t.a, t.p) for t in self.terms))


class CascadeLawEntry(Strict):
    after: list[str] = Field(default_factory=list)
    next: str
    step: Law
    ordered: bool = False


class CascadeModel(Strict):
    components: list[str] = Field(min_length=1)
    baseline: dict[str, Law] = Field(default_factory=dict)
    laws: list[CascadeLawEntry] = Field(default_factory=list)
    composition: Literal["product", "partition"] = "product"

    @model_validator(mode="after")
    def _labels(self):
        known = set(self.components)
        if len(known) != len(self.components):
            raise ValueError("component labels must be unique")
        for name in self.baseline:
            if name not in known:
                raise ValueError(f"baseline names unknown component {name!r}")
        for e in self.laws:
            for name in [*e.after, e.next]:
                if name not in known:
                    raise ValueError(f"law entry names unknown component {name!r}")
        return self

    def build(self):
        import itertools

        comps = tuple(self.components)
        table = {}
        for c, law in self.baseline.items():
            others = [o for o in comps if o != c]
            for r in range(len(others) + 1):
                for failed in itertools.combinations(others, r):
                    table[(frozenset(failed), c)] = law.build()
        prefix = {}
        for e in self.laws:
            if e.ordered:
                prefix[(tuple(e.after), e.next)] = e.step.build()
            else:
                table[(frozenset(e.after), e.next)] = e.step.build()
        return CascadeSpec(comps, table, prefix)


class CascadeRouteModel(Strict):
    type: Literal["cascade"]
    cascade: CascadeModel

    def build(self):
        return CascadeRoute(self.cascade.build(), self.cascade.composition)


Route = Annotated[
    Union[SequentialRouteModel, UnorderedRouteModel, PowerLawRouteModel, CascadeRouteModel],
    Field(discriminator="type"),
]


class SystemModel(Strict):
    multiplicity: PositiveInt = 1
    routes: list[Route] = Field(min_length=1)

    def build(self):
        return SystemSpec(tuple(r.build() for r in self.routes), self.multiplicity)


class MicroEnvFields(Strict):
    mu0: list[PositiveFloat] = Field(min_length=1)
    mu1: list[float] = Field(min_length=1)

    def build(self):
        return MicroEnvModel(tuple(self.mu0), tuple(self.mu1))


class LifetimeRiskFields(Strict):
    mu: float = Field(gt=0.0, le=1.0)
    divisions: float = Field(ge=1.0)
    steps: PositiveInt
    cells: float = Field(ge=1.0)


class GridSettings(Strict):
    t_max: Optional[PositiveFloat] = None
    points: int = Field(1024, ge=2)


class VerifySettings(Strict):
    tolerance: PositiveFloat = 1e-5
    samples: PositiveInt = 100_000
    seed: int = Field(12345, ge=0)


class OutputSettings(Strict):
    format: Literal["csv"] = "csv"


class ModelFile(Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    kind: Literal["system", "cascade", "microenv", "lifetime-risk"]
    description: str = ""
    grid: GridSettings = GridSettings()
    verify: VerifySettings = VerifySettings()
    output: OutputSettings = OutputSettings()
    system: Optional[SystemModel] = None
    cascade: Optional[CascadeModel] = None
    microenv: Optional[MicroEnvFields] = None
    lifetime_risk: Optional[LifetimeRiskFields] = None

    @model_validator(mode="after")
    def _section_matches_kind(self):
        field = self.kind.replace("-", "_")
        given = [name for name in ("system", "cascade", "microenv", "lifetime_risk") if getattr(self, name) is not None]
        if given != [field]:
            raise ValueError(f"kind {self.kind!r} needs exactly the '{field}' section (found {given or 'none'})")
        return self


def format_validation_error(err):
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_model(text, suffix=".yaml"):
    """Parse and validate model text; raises ConfigurationError with field paths."""
    try:
        data = json.loads(text) if suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse model file: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("model file must hold a mapping at the top level")
    try:
        return ModelFile.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return parse_model(text, path.suffix.lower())


def json_schema():
    return ModelFile.model_json_schema()
