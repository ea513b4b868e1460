"""FastAPI application: one endpoint per pipeline operation.

Endpoints are pure request -> response functions over the core
library; no state lives in the process. Data problems surface as
HTTP 400 with detail.code "data_error", training divergence as 400
with detail.code "divergence"; malformed request shapes get FastAPI's
usual 422.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DataError, DivergenceError
from ..groups import GROUP_ORDER, GROUPS, PerformanceGroup, get_group
from ..metrics import (
    classify,
    confusion,
    rates,
    render_accuracy_csv,
    render_accuracy_text,
    render_statistics_csv,
    render_statistics_text,
)
from ..model import deserialize_model, gradient_check, init_params, serialize_model
from ..optim import OptimizerKind
from ..rng import CounterRng, derive_seed
from ..synth import CorpusSpec, default_profiles, generate_corpus
from ..traces import (
    WINDOW_LENGTH,
    Label,
    TraceSeries,
    dataset_to_csv,
    make_timestamps,
    parse_trace_csv,
)
from ..training import parse_train_config, run_grid, run_trial
from . import schemas

GRADCHECK_THRESHOLD = 1e-4


def _counts_out(counts) -> schemas.ConfusionOut:
    return schemas.ConfusionOut(tp=counts.tp, tn=counts.tn, fp=counts.fp, fn=counts.fn)


def _synth_corpus(req: schemas.SynthRequest) -> CorpusSpec:
    group = get_group(req.group)
    benign, ransomware = default_profiles(group, req.separation, req.preset)
    return CorpusSpec(group, benign, ransomware, req.n_per_class, req.seed)


def _grid_sources(req: schemas.GridRequest):
    if (req.data_csvs is None) == (req.synthetic is None):
        raise DataError("provide exactly one of data_csvs or synthetic")
    if req.synthetic is not None:
        names = req.groups if req.groups else list(GROUP_ORDER)
        sources = {}
        for name in names:
            group = get_group(name)
            benign, ransomware = default_profiles(
                group, req.synthetic.separation, req.synthetic.preset
            )
            sources[name] = CorpusSpec(
                group, benign, ransomware, req.synthetic.n_per_class,
                derive_seed(req.seed, "corpus", name),
            )
        return sources
    wanted = req.groups if req.groups else [g for g in GROUP_ORDER if g in req.data_csvs]
    sources = {}
    for name in wanted:
        if name not in req.data_csvs:
            raise DataError(f"no data provided for group {name}")
        dataset = parse_trace_csv(req.data_csvs[name])
        if dataset.group.name != name:
            raise DataError(
                f"data for {name} actually holds group {dataset.group.name}"
            )
        sources[name] = dataset
    if not sources:
        raise DataError("no grid sources resolved")
    return sources


def _grid_files(report) -> dict[str, str]:
    files: dict[str, str] = {}
    for fraction in report.fractions:
        tag = f"{round(fraction * 100):g}"
        base = f"accuracy_{tag}"
        if f"{base}.csv" in files:
            raise DataError(f"fractions collide at two decimal places: {fraction}")
        files[f"{base}.csv"] = render_accuracy_csv(report, fraction)
        files[f"{base}.txt"] = render_accuracy_text(report, fraction)
        for kind in report.optimizers:
            stem = f"statistics_{tag}_{kind.value}"
            files[f"{stem}.csv"] = render_statistics_csv(report, fraction, kind)
            files[f"{stem}.txt"] = render_statistics_text(report, fraction, kind)
    return files


def _parse_kinds(names: list[str]) -> list[OptimizerKind]:
    kinds: list[OptimizerKind] = []
    for name in names:
        kind = OptimizerKind.parse(name)
        if kind in kinds:
            raise DataError(f"duplicate optimizer {kind.value}")
        kinds.append(kind)
    return kinds


def create_app() -> FastAPI:
    app = FastAPI(title="hpcguard", version=__version__)

    @app.exception_handler(DataError)
    async def _data_error(_request: Request, exc: DataError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"code": "data_error", "message": str(exc)}},
        )

    @app.exception_handler(DivergenceError)
    async def _divergence(_request: Request, exc: DivergenceError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"code": "divergence", "message": str(exc)}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/groups", response_model=schemas.GroupsResponse)
    def groups():
        return schemas.GroupsResponse(
            groups=[
                schemas.GroupInfo(name=name, metric_names=list(GROUPS[name].metric_names))
                for name in GROUP_ORDER
            ]
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        dataset = generate_corpus(_synth_corpus(req))
        return schemas.SynthResponse(
            group=dataset.group.name,
            n_traces=len(dataset),
            csv_text=dataset_to_csv(dataset),
        )

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate(req: schemas.ValidateRequest):
        dataset = parse_trace_csv(req.csv_text)
        return schemas.ValidateResponse(
            group=dataset.group.name,
            n_traces=len(dataset),
            n_benign=dataset.count(Label.BENIGN),
            n_ransomware=dataset.count(Label.RANSOMWARE),
        )

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        dataset = parse_trace_csv(req.csv_text)
        config = parse_train_config(req.config_text)
        outcome = run_trial(dataset, config)
        result = outcome.result
        summary = rates(result.counts)
        return schemas.TrainResponse(
            summary=schemas.TrainSummary(
                group=result.group,
                optimizer=result.optimizer.value,
                train_fraction=result.train_fraction,
                seed=result.seed,
                n_test=result.counts.total,
                test_accuracy=result.accuracy,
                counts=_counts_out(result.counts),
                fn_rate=summary.fn_rate,
                fp_rate=summary.fp_rate,
                best_epoch=result.best_epoch,
            ),
            model_json=serialize_model(outcome.params),
            history_csv=outcome.history.to_csv(),
        )

    @app.post("/grid", response_model=schemas.GridResponse)
    def grid(req: schemas.GridRequest):
        sources = _grid_sources(req)
        kinds = _parse_kinds(req.optimizers)
        fractions = []
        for fraction in req.fractions:
            if not (0.0 < fraction < 1.0):
                raise DataError(f"train fraction must lie in (0, 1), got {fraction}")
            if fraction in fractions:
                raise DataError(f"duplicate train fraction {fraction}")
            fractions.append(fraction)
        report = run_grid(
            sources,
            kinds,
            fractions,
            n_trials=req.trials,
            master_seed=req.seed,
            epochs=req.epochs,
            batch_size=req.batch_size,
            hidden_dim=req.hidden_dim,
        )
        return schemas.GridResponse(
            n_cells=len(report.cells),
            files=_grid_files(report),
            failures=[
                schemas.GridFailureInfo(
                    group=f.group,
                    optimizer=f.optimizer.value,
                    train_fraction=f.train_fraction,
                    trial_index=f.trial_index,
                    message=f.message,
                )
                for f in report.failures
            ],
        )

    @app.post("/detect", response_model=schemas.DetectResponse)
    def detect(req: schemas.DetectRequest):
        params = deserialize_model(req.model_json)
        if params.group is None:
            raise DataError("model carries no group binding; cannot check trace compatibility")
        dataset = parse_trace_csv(req.csv_text)
        verdicts = []
        for trace, _label in dataset.entries:
            label, score = classify(params, trace, req.threshold)
            verdicts.append(
                schemas.Verdict(
                    trace_id=trace.trace_id,
                    score=score,
                    label=label.value,
                    samples_used=WINDOW_LENGTH,
                )
            )
        return schemas.DetectResponse(verdicts=verdicts)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_(req: schemas.EvalRequest):
        params = deserialize_model(req.model_json)
        dataset = parse_trace_csv(req.csv_text)
        counts = confusion(params, dataset, req.threshold)
        summary = rates(counts)
        return schemas.EvalResponse(
            group=dataset.group.name,
            n=counts.total,
            counts=_counts_out(counts),
            accuracy=summary.accuracy,
            fn_rate=summary.fn_rate,
            fp_rate=summary.fp_rate,
        )

    @app.post("/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck(req: schemas.GradcheckRequest):
        params = init_params(req.input_dim, req.hidden_dim, derive_seed(req.seed, "params"))
        rng = CounterRng(derive_seed(req.seed, "trace"))
        group = PerformanceGroup(
            f"SYNTH_{req.input_dim}",
            tuple(f"feature_{i}" for i in range(req.input_dim)),
        )
        values = rng.normal(WINDOW_LENGTH * req.input_dim).reshape(WINDOW_LENGTH, req.input_dim)
        trace = TraceSeries("gradcheck-0000", group, make_timestamps(), values)
        y = float(rng.randbelow(2))
        err = gradient_check(params, trace, y, req.eps)
        return schemas.GradcheckResponse(
            max_rel_error=err,
            threshold=GRADCHECK_THRESHOLD,
            passed=err < GRADCHECK_THRESHOLD,
        )

    return app


app = create_app()
