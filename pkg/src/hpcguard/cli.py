"""Command line surface.

Every subcommand is a thin client of the service: flags become one
request, the response becomes files and/or stdout lines. With no
--server the request is served in-process, so the CLI needs nothing
running and behaves deterministically given its flags.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
divergence (training blow-up or failed gradient check). Transport and
other unexpected failures exit 1.
"""

from __future__ import annotations

import functools
import re
import sys
from pathlib import Path

import click

from . import __version__
from .client import RequestRejected, ServiceClient, ServiceError
from .errors import DataError, DivergenceError
from .groups import GROUP_ORDER, GROUPS
from .optim import OptimizerKind
from .synth import PRESETS

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

_THRESHOLD = click.FloatRange(0.0, 1.0, min_open=True, max_open=True)


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RequestRejected as e:
            _fail(str(e), EXIT_USAGE)
        except DivergenceError as e:
            _fail(str(e), EXIT_DIVERGENCE)
        except DataError as e:
            _fail(str(e), EXIT_DATA)
        except BrokenPipeError:
            sys.exit(0)
        except OSError as e:
            _fail(str(e), EXIT_DATA)
        except ServiceError as e:
            _fail(str(e), 1)

    return wrapper


def _write_text(path: str, content: str):
    Path(path).write_text(content, encoding="utf-8", newline="")


def _fmt_rate(value) -> str:
    return "NA" if value is None else f"{value:.6f}"


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
@click.option(
    "--server",
    metavar="URL",
    default=None,
    help="Base URL of a running service instance; by default commands run in-process.",
)
@click.pass_context
def main(ctx: click.Context, server: str | None):
    """Ransomware detection from hardware performance counter timeseries."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--group", required=True, type=click.Choice(GROUP_ORDER), help="Performance group to synthesize.")
@click.option("--separation", type=click.FloatRange(min=0.0), default=1.0, show_default=True, help="Class mean gap per feature.")
@click.option("--n-per-class", type=click.IntRange(min=1), default=50, show_default=True, help="Traces per class.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--preset", type=click.Choice(PRESETS), default="standard", show_default=True, help="degenerate gives both classes the same constant profile.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output trace CSV path.")
@click.pass_context
@guarded
def synth(ctx, group, separation, n_per_class, seed, preset, out):
    """Generate a labeled synthetic trace corpus."""
    resp = ctx.obj.call("POST", "/synth", {
        "group": group,
        "separation": separation,
        "n_per_class": n_per_class,
        "seed": seed,
        "preset": preset,
    })
    _write_text(out, resp["csv_text"])
    click.echo(f"wrote {resp['n_traces']} traces (group {resp['group']}) to {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Trace CSV to check.")
@click.pass_context
@guarded
def validate(ctx, data):
    """Parse a trace CSV and report what it holds."""
    resp = ctx.obj.call("POST", "/validate", {
        "csv_text": Path(data).read_text(encoding="utf-8"),
    })
    click.echo(
        f"ok: {resp['n_traces']} traces (group {resp['group']}, "
        f"{resp['n_benign']} benign, {resp['n_ransomware']} ransomware)"
    )


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Labeled trace CSV.")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False), help="key = value training config.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model JSON output path.")
@click.option("--history", default=None, type=click.Path(dir_okay=False), help="Loss history CSV path [default: OUT.history.csv].")
@click.pass_context
@guarded
def train(ctx, data, config, out, history):
    """Run one training trial: split, carve, train, score the test set."""
    resp = ctx.obj.call("POST", "/train", {
        "csv_text": Path(data).read_text(encoding="utf-8"),
        "config_text": Path(config).read_text(encoding="utf-8"),
    })
    history_path = history if history is not None else f"{out}.history.csv"
    _write_text(out, resp["model_json"])
    _write_text(history_path, resp["history_csv"])
    s = resp["summary"]
    c = s["counts"]
    click.echo(
        f"test accuracy: {100.0 * s['test_accuracy']:.2f}% "
        f"(n={s['n_test']} tp={c['tp']} tn={c['tn']} fp={c['fp']} fn={c['fn']})"
    )
    click.echo(f"FN rate: {_fmt_rate(s['fn_rate'])}")
    click.echo(f"FP rate: {_fmt_rate(s['fp_rate'])}")
    click.echo(f"best epoch: {s['best_epoch']}")
    click.echo(f"wrote model to {out}")
    click.echo(f"wrote history to {history_path}")


def _parse_synth_spec(text: str) -> dict:
    spec = {"separation": 1.0, "n_per_class": 50, "preset": "standard"}
    if not text.strip():
        return spec
    for part in text.split(","):
        if "=" not in part:
            raise click.UsageError(f"--synthetic: expected key=value, got {part!r}")
        key, _, value = part.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            if key == "separation":
                spec["separation"] = float(value)
                if spec["separation"] < 0:
                    raise ValueError
            elif key == "n_per_class":
                spec["n_per_class"] = int(value)
                if spec["n_per_class"] < 1:
                    raise ValueError
            elif key == "preset":
                if value not in PRESETS:
                    raise ValueError
                spec["preset"] = value
            else:
                raise click.UsageError(f"--synthetic: unknown key {key!r}")
        except ValueError:
            raise click.UsageError(f"--synthetic: bad value for {key}: {value!r}") from None
    return spec


def _parse_fractions(text: str) -> list[float]:
    out = []
    for part in text.split(","):
        try:
            value = float(part)
        except ValueError:
            raise click.UsageError(f"--fractions: not a number: {part!r}") from None
        if not (0.0 < value < 1.0):
            raise click.UsageError(f"--fractions: must lie in (0, 1): {part}")
        out.append(value)
    if not out:
        raise click.UsageError("--fractions: empty list")
    return out


def _parse_optimizers(text: str) -> list[str]:
    kinds = []
    for part in text.split(","):
        try:
            kinds.append(OptimizerKind.parse(part).value)
        except DataError as e:
            raise click.UsageError(f"--optimizers: {e}") from None
    return kinds


def _parse_groups(text: str | None) -> list[str] | None:
    if text is None:
        return None
    names = []
    for part in text.split(","):
        name = part.strip()
        if name not in GROUPS:
            raise click.UsageError(f"--groups: unknown group {name!r}")
        names.append(name)
    return names


@main.command()
@click.option("--data-dir", default=None, type=click.Path(exists=True, file_okay=False), help="Directory of <GROUP>.csv trace files.")
@click.option("--synthetic", default=None, metavar="SPEC", help="Synthesize corpora instead: comma list of separation=X, n-per-class=N, preset=NAME.")
@click.option("--groups", default=None, metavar="LIST", help="Comma list of groups to run [default: all in the data, or all 16 for --synthetic].")
@click.option("--optimizers", default="SGD,Adadelta,Adamax,RMSprop", show_default=True, metavar="LIST")
@click.option("--fractions", default="0.7", show_default=True, metavar="LIST", help="Comma list of train fractions.")
@click.option("--trials", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed; every trial seed derives from it.")
@click.option("--epochs", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--hidden-dim", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Report output directory.")
@click.pass_context
@guarded
def grid(ctx, data_dir, synthetic, groups, optimizers, fractions, trials, seed,
         epochs, batch_size, hidden_dim, out):
    """Run the full (group x optimizer x fraction) evaluation grid."""
    if (data_dir is None) == (synthetic is None):
        raise click.UsageError("provide exactly one of --data-dir or --synthetic")
    payload = {
        "groups": _parse_groups(groups),
        "optimizers": _parse_optimizers(optimizers),
        "fractions": _parse_fractions(fractions),
        "trials": trials,
        "seed": seed,
        "epochs": epochs,
        "batch_size": batch_size,
        "hidden_dim": hidden_dim,
    }
    if synthetic is not None:
        payload["synthetic"] = _parse_synth_spec(synthetic)
    else:
        csvs = {}
        for path in sorted(Path(data_dir).glob("*.csv")):
            if path.stem not in GROUPS:
                click.echo(f"warning: skipping {path.name}: not a group name", err=True)
                continue
            csvs[path.stem] = path.read_text(encoding="utf-8")
        if not csvs:
            _fail(f"no <GROUP>.csv files found in {data_dir}", EXIT_DATA)
        payload["data_csvs"] = csvs

    resp = ctx.obj.call("POST", "/grid", payload)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(resp["files"]):
        _write_text(str(out_dir / name), resp["files"][name])
        click.echo(f"wrote {out_dir / name}")
    for failure in resp["failures"]:
        click.echo(
            f"warning: {failure['group']}/{failure['optimizer']}"
            f"/{failure['train_fraction']:.2f} trial {failure['trial_index']} "
            f"failed: {failure['message']}",
            err=True,
        )
    click.echo(f"{resp['n_cells']} grid cells completed")


@main.command("eval")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False), help="Model JSON file.")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Labeled trace CSV.")
@click.option("--threshold", type=_THRESHOLD, default=0.5, show_default=True)
@click.pass_context
@guarded
def eval_cmd(ctx, model, data, threshold):
    """Score a labeled dataset against a saved model."""
    resp = ctx.obj.call("POST", "/eval", {
        "model_json": Path(model).read_text(encoding="utf-8"),
        "csv_text": Path(data).read_text(encoding="utf-8"),
        "threshold": threshold,
    })
    c = resp["counts"]
    click.echo(f"n={resp['n']} tp={c['tp']} tn={c['tn']} fp={c['fp']} fn={c['fn']}")
    acc = resp["accuracy"]
    click.echo("accuracy: NA" if acc is None else f"accuracy: {100.0 * acc:.2f}%")
    click.echo(f"FN rate: {_fmt_rate(resp['fn_rate'])}")
    click.echo(f"FP rate: {_fmt_rate(resp['fp_rate'])}")


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False), help="Model JSON file.")
@click.option("--trace", required=True, type=click.Path(exists=True, dir_okay=False), help="Trace CSV; labels present are ignored.")
@click.option("--threshold", type=_THRESHOLD, default=0.5, show_default=True)
@click.pass_context
@guarded
def detect(ctx, model, trace, threshold):
    """Classify traces from their first 20 samples, one line each."""
    resp = ctx.obj.call("POST", "/detect", {
        "model_json": Path(model).read_text(encoding="utf-8"),
        "csv_text": Path(trace).read_text(encoding="utf-8"),
        "threshold": threshold,
    })
    for verdict in resp["verdicts"]:
        click.echo(
            f"{verdict['trace_id']},{verdict['score']:.6f},{verdict['label']},"
            f"samples_used={verdict['samples_used']}"
        )


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dims", default="4x4", show_default=True, metavar="FxH", help="Model size; F and H at most 8.")
@click.option("--eps", type=click.FloatRange(min=0.0, min_open=True), default=1e-5, show_default=True)
@click.pass_context
@guarded
def gradcheck(ctx, seed, dims, eps):
    """Compare analytic gradients with central finite differences."""
    match = re.fullmatch(r"(\d+)x(\d+)", dims.strip())
    if not match:
        raise click.UsageError(f"--dims: expected FxH, got {dims!r}")
    f, h = int(match.group(1)), int(match.group(2))
    if not (1 <= f <= 8 and 1 <= h <= 8):
        raise click.UsageError("--dims: F and H must lie in 1..8")
    resp = ctx.obj.call("POST", "/gradcheck", {
        "seed": seed, "input_dim": f, "hidden_dim": h, "eps": eps,
    })
    click.echo(
        f"max relative error: {resp['max_rel_error']:.6e} "
        f"(threshold {resp['threshold']:.0e})"
    )
    if resp["passed"]:
        click.echo("PASS")
    else:
        click.echo("FAIL")
        sys.exit(EXIT_DIVERGENCE)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
