"""Request/response models for the service endpoints.

File-shaped payloads (trace CSVs, model JSON, report files) travel as
exact strings so clients can write them to disk verbatim; determinism
guarantees then carry across the wire.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class GroupInfo(BaseModel):
    name: str
    metric_names: list[str]


class GroupsResponse(BaseModel):
    groups: list[GroupInfo]


class SynthRequest(BaseModel):
    group: str
    separation: float = Field(default=1.0, ge=0.0)
    n_per_class: int = Field(default=50, ge=1)
    seed: int = 0
    preset: str = "standard"


class SynthResponse(BaseModel):
    group: str
    n_traces: int
    csv_text: str


class ValidateRequest(BaseModel):
    csv_text: str


class ValidateResponse(BaseModel):
    group: str
    n_traces: int
    n_benign: int
    n_ransomware: int


class ConfusionOut(BaseModel):
    tp: int
    tn: int
    fp: int
    fn: int


class TrainRequest(BaseModel):
    csv_text: str
    config_text: str


class TrainSummary(BaseModel):
    group: str
    optimizer: str
    train_fraction: float
    seed: int
    n_test: int
    test_accuracy: float
    counts: ConfusionOut
    fn_rate: float | None
    fp_rate: float | None
    best_epoch: int


class TrainResponse(BaseModel):
    summary: TrainSummary
    model_json: str
    history_csv: str


class SyntheticGridSpec(BaseModel):
    separation: float = Field(default=1.0, ge=0.0)
    n_per_class: int = Field(default=50, ge=1)
    preset: str = "standard"


class GridRequest(BaseModel):
    data_csvs: dict[str, str] | None = None
    synthetic: SyntheticGridSpec | None = None
    groups: list[str] | None = None
    optimizers: list[str] = Field(default_factory=lambda: ["SGD", "Adadelta", "Adamax", "RMSprop"])
    fractions: list[float] = Field(default_factory=lambda: [0.7])
    trials: int = Field(default=50, ge=1)
    seed: int = 0
    epochs: int = Field(default=1000, ge=1)
    batch_size: int = Field(default=16, ge=1)
    hidden_dim: int = Field(default=32, ge=1)


class GridFailureInfo(BaseModel):
    group: str
    optimizer: str
    train_fraction: float
    trial_index: int
    message: str


class GridResponse(BaseModel):
    n_cells: int
    files: dict[str, str]
    failures: list[GridFailureInfo]


class DetectRequest(BaseModel):
    model_json: str
    csv_text: str
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)


class Verdict(BaseModel):
    trace_id: str
    score: float
    label: str
    samples_used: int


class DetectResponse(BaseModel):
    verdicts: list[Verdict]


class EvalRequest(BaseModel):
    model_json: str
    csv_text: str
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)


class EvalResponse(BaseModel):
    group: str
    n: int
    counts: ConfusionOut
    accuracy: float | None
    fn_rate: float | None
    fp_rate: float | None


class GradcheckRequest(BaseModel):
    seed: int = 0
    input_dim: int = Field(default=4, ge=1, le=8)
    hidden_dim: int = Field(default=4, ge=1, le=8)
    eps: float = Field(default=1e-5, gt=0.0)


class GradcheckResponse(BaseModel):
    max_rel_error: float
    threshold: float
    passed: bool


class HealthResponse(BaseModel):
    status: str
    version: str
