from __future__ import annotations
import math
from typing import Any, Callable, Dict, Literal, Optional, Type

from pydantic import BaseModel, Field

from . import estimators


class EffectiveRateArgs(BaseModel):
    p: float = Field(ge=0.0, le=1.0)
    pd: float = Field(ge=0.0, le=1.0)


class EmissionArgs(BaseModel):
    relative_intensity: float = Field(ge=0.0)
    linewidth: float = Field(default=2 * math.pi * 20e6, gt=0.0)
    detect_time: float = Field(default=10e-6, gt=0.0)


class AbsorptionArgs(BaseModel):
    wavelength: float = Field(default=369.5e-9, gt=0.0)
    distance: float = Field(default=5e-6, gt=0.0)
    scatter_rate: float = Field(default=7e6, gt=0.0)
    detect_time: float = Field(default=10e-6, gt=0.0)
    fraction_form: Literal["solid_angle", "printed"] = "solid_angle"


class PostselectionArgs(BaseModel):
    n: int = Field(ge=0)
    p: float = Field(ge=0.0, le=1.0)
    cycles: int = Field(ge=0)
    max_runs: Optional[float] = Field(default=None, gt=0.0)


class CalculatorSpec(BaseModel):
    name: str
    description: str
    args_model: Type[BaseModel]
    # result key printed on its own first line
    primary: str


class CalculatorRegistry:
    def __init__(self):
        self.calculators: Dict[str, CalculatorSpec] = {}
        self.handlers: Dict[str, Callable[[BaseModel], Dict[str, Any]]] = {}

    def register(self, spec: CalculatorSpec, handler: Callable[[BaseModel], Dict[str, Any]]) -> None:
        self.calculators[spec.name] = spec
        self.handlers[spec.name] = handler

    def list_specs(self) -> Dict[str, CalculatorSpec]:
        return dict(self.calculators)

    def validate_args(self, name: str, args: Dict[str, Any]) -> BaseModel:
        return self.calculators[name].args_model.model_validate(args)

    def execute(self, name: str, args_obj: BaseModel) -> Dict[str, Any]:
        return self.handlers[name](args_obj)


def handle_effective_rate(args: EffectiveRateArgs) -> Dict[str, Any]:
    return {"effective_rate": estimators.effective_rate(args.p, args.pd), "p": args.p, "pd": args.pd}


def handle_emission(args: EmissionArgs) -> Dict[str, Any]:
    p_d = estimators.crosstalk_emission_estimate(args.relative_intensity, args.linewidth, args.detect_time)
    return {"p_d": p_d}


def handle_absorption(args: AbsorptionArgs) -> Dict[str, Any]:
    est = estimators.crosstalk_absorption_estimate(
        args.wavelength, args.distance, args.scatter_rate, args.detect_time, fraction_form=args.fraction_form
    )
    return {**est._asdict(), "fraction_form": args.fraction_form}


def handle_postselection(args: PostselectionArgs) -> Dict[str, Any]:
    cost = estimators.postselection_runs(args.n, args.p, args.cycles)
    out: Dict[str, Any] = {"log2_runs": cost.log2_runs, "runs": cost.runs}
    if args.max_runs is not None:
        out["feasible"] = estimators.postselection_feasible(args.n, args.p, args.cycles, args.max_runs)
    return out


def build_registry() -> CalculatorRegistry:
    reg = CalculatorRegistry()
    reg.register(CalculatorSpec(
        name="effective-rate",
        description="Measurement rate seen by each ion once crosstalk is included.",
        args_model=EffectiveRateArgs,
        primary="effective_rate",
    ), handle_effective_rate)
    reg.register(CalculatorSpec(
        name="emission",
        description="Crosstalk probability from scattering of stray detection light.",
        args_model=EmissionArgs,
        primary="p_d",
    ), handle_emission)
    reg.register(CalculatorSpec(
        name="absorption",
        description="Crosstalk probability from a neighbor absorbing scattered photons.",
        args_model=AbsorptionArgs,
        primary="p_d",
    ), handle_absorption)
    reg.register(CalculatorSpec(
        name="postselection",
        description="Expected runs needed to repeat one monitored outcome record.",
        args_model=PostselectionArgs,
        primary="runs",
    ), handle_postselection)
    return reg
