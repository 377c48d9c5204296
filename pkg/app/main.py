import asyncio
import logging
import sys
from typing import List, Optional

import click

from app.actions.configurations import MomentEstimator, SketchLayout
from app.numerics.moments import Normalization
from app.numerics.planner import EpsExponent, PlanMode
from app.numerics.sketches import SketchKind
from app.numerics.verification import TestMatrixKind
from app.services.action_runner import EXIT_PARAMETER_ERROR, execute_action
from app.services.reports import ReportFormat, load_report


logger = logging.getLogger(__name__)

COMMON_OPTIONS = ("config_file", "output_format", "output_path")


def _choice(enum_type):
    return click.Choice([member.value for member in enum_type])


def _split(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


COMMON_OPTION_DECORATORS = [
    click.option("--config", "config_file", default=None, help="JSON configuration file, flat or keyed by action."),
    click.option("--threads", type=int, default=None, help="Worker threads for Monte Carlo trials."),
    click.option("--seed", type=int, default=None, help="Master seed (64-bit unsigned)."),
    click.option("--format", "output_format", type=_choice(ReportFormat), default=ReportFormat.JSON.value, show_default=True),
    click.option("--output", "output_path", default=None, help="Write the report to this file instead of stdout."),
]

BASIS_OPTION_DECORATORS = [
    click.option("--basis", default=None, help="Matrix Market file whose columns span the subspace."),
    click.option("--matrix", type=_choice(TestMatrixKind), default=None, help="Generated test-matrix kind."),
    click.option("--matrix-seed", type=int, default=None),
    click.option("--group-size", type=int, default=None),
    click.option("--n", type=int, default=None),
    click.option("--d", type=int, default=None),
]


def _apply(decorators, func):
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def common_options(func):
    return _apply(COMMON_OPTION_DECORATORS, func)


def basis_options(func):
    return _apply(BASIS_OPTION_DECORATORS, func)


def run_action(action_id: str, options: dict) -> int:
    common = {key: options.pop(key) for key in COMMON_OPTIONS}
    response = asyncio.run(
        execute_action(
            action_id=action_id,
            config_overrides=options,
            config_file=common["config_file"],
            output_format=ReportFormat(common["output_format"]),
            output_path=common["output_path"],
        )
    )
    return _emit(response)


def _emit(response) -> int:
    if response.exit_code:
        click.echo(response.content.get("detail", "Action failed"), err=True)
    elif response.report is not None:
        click.echo(response.report, nl=False)
    return response.exit_code


@click.group(invoke_without_command=True)
@click.option("--replay", "replay_path", default=None, help="Re-run a JSON report and check that its payload is reproduced.")
@click.pass_context
def cli(ctx, replay_path):
    """Sparse oblivious subspace embeddings: planning, sketching and empirical verification."""
    if ctx.invoked_subcommand is not None:
        return None
    if not replay_path:
        raise click.UsageError("Missing command.", ctx=ctx)
    try:
        with open(replay_path) as f:
            envelope = load_report(f.read())
    except (OSError, ValueError) as e:
        click.echo(f"Cannot load report '{replay_path}': {e}", err=True)
        return EXIT_PARAMETER_ERROR
    response = asyncio.run(execute_action(action_id=envelope.action, replay=envelope))
    return _emit(response)


@cli.command()
@common_options
@click.option("--d", type=int, default=None, help="Subspace dimension.")
@click.option("--n", type=int, default=None, help="Ambient dimension.")
@click.option("--eps", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--mode", type=_choice(PlanMode), default=None)
@click.option("--k", default=None, help="Positive integer or 'auto'.")
@click.option("--theta", default=None, help="Positive real or 'auto'.")
@click.option("--eps-exponent", type=_choice(EpsExponent), default=None)
@click.option("--c1", type=float, default=None)
@click.option("--c2", type=float, default=None)
@click.option("--c3", type=float, default=None)
@click.option("--c-basic1", type=float, default=None)
@click.option("--c-basic2", type=float, default=None)
@click.option("--c-subpoly1", type=float, default=None)
@click.option("--c-subpoly2", type=float, default=None)
def plan(**options):
    """Embedding dimension m and sparsity s for a target (eps, delta)."""
    return run_action("plan", options)


@cli.command()
@common_options
@click.option("--kind", type=_choice(SketchKind), default=None)
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--layout", type=_choice(SketchLayout), default=None, help="Nonzeros as triplets or a Matrix Market file.")
def sketch(**options):
    """Emit one sketch matrix."""
    return run_action("sketch", options)


@cli.command()
@common_options
@basis_options
@click.option("--kind", type=_choice(SketchKind), default=None)
@click.option("--m", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--eps", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--grid", default=None, help="Comma separated m:s points, e.g. 256:4,512:8.")
@click.option("--gaussian-baseline", is_flag=True, default=None, help="Check the Gaussian singular value limits instead.")
@click.option("--t", type=float, default=None, help="Deviation for the Gaussian baseline.")
def verify(**options):
    """Embedding trials, sweeps and the Gaussian baseline."""
    options["grid"] = _split(options["grid"])
    return run_action("verify", options)


@cli.command()
@common_options
@basis_options
@click.option("--estimator", type=_choice(MomentEstimator), default=None)
@click.option("--kind", type=_choice(SketchKind), default=None)
@click.option("--m", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--q", type=int, default=None, help="Moment order (r for the R quantities).")
@click.option("--trials", type=int, default=None)
@click.option("--exact", is_flag=True, default=None, help="Enumerate every outcome instead of sampling.")
@click.option("--normalization", type=_choice(Normalization), default=None)
@click.option("--constant", type=float, default=None)
@click.option("--eps", type=float, default=None, help="Also report the implied failure probability bound.")
def moments(**options):
    """Trace-moment estimators, the decoupling check and the R quantities."""
    return run_action("moments", options)


@cli.command()
@common_options
@click.option("--a", default=None, help="Matrix Market file with A.")
@click.option("--b", default=None, help="Plain-text vector b, one value per line.")
@click.option("--kind", type=_choice(SketchKind), default=None)
@click.option("--m", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--eps", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--export", default=None, help="Directory for the sketched reduction.")
def regress(**options):
    """Sketch-and-solve least squares."""
    return run_action("regress", options)


@cli.command()
@common_options
@click.option("--m", type=int, default=None)
@click.option("--d", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--nnz", default=None, help="Comma separated nonzero counts.")
@click.option("--repeats", type=int, default=None)
def bench(**options):
    """Sparse sketch application time against nnz(A)."""
    options["nnz"] = _split(options["nnz"])
    return run_action("bench", options)


def cli_main(argv: List[str] = None) -> int:
    try:
        result = cli.main(args=argv, prog_name="ose", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_PARAMETER_ERROR
    except click.exceptions.Abort:
        return EXIT_PARAMETER_ERROR
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(cli_main())
