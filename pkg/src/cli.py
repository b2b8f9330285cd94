"""
permfield command line.

    permfield moments --model k2.json --measures bundle.json
    permfield verify --seed 7 --samples 5000 --record
    permfield soup --seed 1 --out soup.jsonl
    permfield norms --measures bundle.json --format csv --out norms.csv
    permfield levy-report --kernel rw64.json --out report.json
    permfield caf-demo --seed 3 --format csv --out modulus.csv

Exit codes: 0 pass, 1 numerical or statistical failure, 2 bad input.
Without --model the two-state reference chain is used.
"""

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from icecream import ic
from pydantic import BaseModel, TypeAdapter, ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table
from sqlmodel import Session

from src import __version__
from src.analysis import get_analyzer, report_frame
from src.config import (
    DEFAULT_DELTA_SCHEDULE,
    DEFAULT_SAMPLES,
    DEFAULT_THREADS,
)
from src.db import engine, init_db, record_report
from src.errors import NumericalError
from src.fixtures import k2_model
from src.isomorphism import isomorphism_check
from src.levy import REPORT_DELTAS, kernel_from_spec, levy_report
from src.loops import loop_mass, sample_soup, write_soup_jsonl
from src.markov import MarkovModel, model_from_spec, potential_kernel
from src.measures import MIN_REVUZ_SAMPLES, SignedMeasure
from src.norms import proper_constant_probe
from src.schemas.schemas import (
    Command,
    ExponentKind,
    ExponentSpec,
    IsomorphismReport,
    KernelSpec,
    ModelSpec,
    MomentRow,
    NormKind,
    OutputFormat,
    RunConfig,
    VerificationReport,
)
from src.verify import (
    caf_field_demo,
    verify_isomorphism_mc,
    verify_permanental_moments,
    verify_revuz_suite,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEMO_TIMES = (0.0, 0.25, 0.5, 1.0)
DEMO_PATHS = 200

console = Console()


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(',') if v.strip())
    except ValueError as exc:
        message = f'not a list of numbers: {text}'
        raise argparse.ArgumentTypeError(message) from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(',') if v.strip())
    except ValueError as exc:
        message = f'not a list of integers: {text}'
        raise argparse.ArgumentTypeError(message) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--model', dest='model_path', type=Path)
    common.add_argument('--measures', dest='measures_path', type=Path)
    common.add_argument('--kernel', dest='kernel_path', type=Path)
    common.add_argument('--alpha', type=float, default=1.0)
    common.add_argument('--delta-schedule', type=_floats)
    common.add_argument('--seed', type=int)
    common.add_argument('--samples', type=int)
    common.add_argument('--out', type=Path)
    common.add_argument(
        '--format', choices=[f.value for f in OutputFormat], default='json'
    )
    common.add_argument('--threads', type=int, default=DEFAULT_THREADS)
    common.add_argument('--record', action='store_true')
    common.add_argument('--corrupt-kernel', type=float, default=0.0)
    common.add_argument('--orders', type=_ints)
    common.add_argument('--n-max', type=int, default=6)
    common.add_argument('--trials', type=int, default=200)

    parser = argparse.ArgumentParser(
        prog='permfield',
        description='Permanental fields from Markov loop soups.',
    )
    parser.add_argument(
        '--version', action='version', version=f'%(prog)s {__version__}'
    )
    commands = parser.add_subparsers(dest='command', required=True)
    for command in Command:
        commands.add_parser(command.value, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {
        key: value
        for key, value in vars(args).items()
        if value is not None
    }
    values.setdefault('delta_schedule', DEFAULT_DELTA_SCHEDULE)
    return RunConfig.model_validate(values)


# Inputs
def load_model(config: RunConfig) -> MarkovModel:
    if config.model_path is None:
        return k2_model()
    text = config.model_path.read_text(encoding='utf-8')
    return model_from_spec(ModelSpec.model_validate_json(text))


def load_bundle(path: Path | None, states: Sequence[str]) -> dict:
    """{name: {state: weight}} as {name: atoms}."""
    if path is None:
        return {}
    raw = json.loads(path.read_text(encoding='utf-8'))
    weights = TypeAdapter(dict[str, dict[str, float]]).validate_python(raw)
    return {
        name: SignedMeasure.from_mapping(states, mapping).atoms
        for name, mapping in weights.items()
    }


def load_kernel_spec(config: RunConfig) -> KernelSpec:
    if config.kernel_path is None:
        return KernelSpec(
            d=1, N=64, beta=1.0, exponent=ExponentSpec(kind=ExponentKind.RW)
        )
    text = config.kernel_path.read_text(encoding='utf-8')
    return KernelSpec.model_validate_json(text)


def _samples(config: RunConfig) -> int:
    return config.samples if config.samples is not None else DEFAULT_SAMPLES


# Output
def _write(config: RunConfig, payload: str, frame: pd.DataFrame) -> None:
    if config.out is None:
        return
    if config.format is OutputFormat.CSV:
        frame.to_csv(config.out, index=False)
    else:
        config.out.write_text(payload + '\n', encoding='utf-8')
    console.print(f'[green]Written:[/green] {config.out}')


def _print_frame(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title, style='cyan')
    for column in frame.columns:
        table.add_column(str(column), justify='right')
    for row in frame.itertuples(index=False):
        table.add_row(*(_cell(value) for value in row))
    console.print(table)


def _cell(value) -> str:
    if isinstance(value, float):
        return f'{value:.6g}'
    return str(value)


def _header(config: RunConfig, **extra) -> None:
    lines = [f'command: {config.command.value}', f'alpha: {config.alpha}']
    if config.seed is not None:
        lines.append(f'seed: {config.seed}')
    lines.extend(f'{key}: {value}' for key, value in extra.items())
    console.print(Panel('\n'.join(lines), title=f'permfield {__version__}'))


# Commands
def cmd_moments(config: RunConfig) -> int:
    model = load_model(config)
    measures = load_bundle(config.measures_path, model.states)
    orders = sorted({1, *config.orders})
    _header(config, states=', '.join(model.states), orders=orders)
    table = get_analyzer(model, measures, config.alpha).get_moment_table(
        orders
    )
    _print_frame(table, 'Moments')
    rows = [MomentRow(**row) for row in table.to_dict(orient='records')]
    payload = TypeAdapter(list[MomentRow]).dump_json(rows, indent=2)
    _write(config, payload.decode(), table)
    return EXIT_OK


def _verification_inputs(model: MarkovModel, measures: dict):
    fields = {k: v for k, v in measures.items() if k not in {'rho', 'phi'}}
    if not fields:
        fields = {model.states[0]: SignedMeasure.delta(model.n, 0).atoms}
    rho = measures.get('rho', np.ones(model.n))
    phi = measures.get('phi', SignedMeasure.delta(model.n, 0).atoms)
    return fields, rho, phi


def _closed_form_checks(config, model, rho, phi, nu) -> list:
    """Isomorphism closed forms for degrees 0, 1, 2; with a corruption
    factor the field side uses (1 + factor) u."""
    field_kernel = None
    if config.corrupt_kernel > 0:
        u = potential_kernel(model).u
        field_kernel = (1.0 + config.corrupt_kernel) * u
    return [
        isomorphism_check(
            model,
            config.alpha,
            rho,
            phi,
            [nu],
            [degree],
            field_kernel=field_kernel,
        )
        for degree in (0, 1, 2)
    ]


def _record(config: RunConfig, reports: Sequence[BaseModel]) -> None:
    init_db()
    with Session(engine) as session:
        for report in reports:
            run = record_report(session, config.command.value, report)
            ic(f'Recorded run {run.id}')
    console.print(f'[green]Recorded {len(reports)} reports[/green]')


def _verdict_table(reports: Sequence[BaseModel]) -> None:
    table = Table(title='Verification', style='cyan')
    table.add_column('Report', style='yellow')
    table.add_column('Worst |z|', justify='right')
    table.add_column('Passed', justify='center')
    for report in reports:
        if isinstance(report, VerificationReport):
            worst = max((abs(c.z_score) for c in report.checks), default=0.0)
            name = report.name
        elif isinstance(report, IsomorphismReport):
            worst = report.rel_diff
            name = f'isomorphism_closed_form d={report.spec["degrees"]}'
        else:
            worst, name = abs(report.z_score), report.name
        mark = '[green]yes[/green]' if report.passed else '[red]no[/red]'
        table.add_row(name, f'{worst:.3g}', mark)
    console.print(table)


def cmd_verify(config: RunConfig) -> int:
    model = load_model(config)
    measures = load_bundle(config.measures_path, model.states)
    fields, rho, phi = _verification_inputs(model, measures)
    samples = _samples(config)
    _header(config, samples=samples, schedule=config.delta_schedule)

    reports: list[BaseModel] = []
    with Progress(
        SpinnerColumn(),
        TextColumn('[progress.description]{task.description}'),
        console=console,
    ) as progress:
        task = progress.add_task('Permanental moments...', total=None)
        reports.append(
            verify_permanental_moments(
                model,
                config.alpha,
                fields,
                orders=config.orders,
                soups=samples,
                delta_schedule=config.delta_schedule,
                seed=config.seed,
                threads=config.threads,
            )
        )
        first = next(iter(fields.values()))
        progress.update(task, description='Isomorphism...')
        reports.extend(_closed_form_checks(config, model, rho, phi, first))
        reports.append(
            verify_isomorphism_mc(
                model,
                config.alpha,
                rho,
                phi,
                [first],
                [1],
                soups=samples,
                delta=min(config.delta_schedule),
                seed=config.seed + 1,
                threads=config.threads,
            )
        )
        progress.update(task, description='Revuz identity...')
        reports.extend(
            verify_revuz_suite(
                max(samples, MIN_REVUZ_SAMPLES),
                config.seed,
                threads=config.threads,
            )
        )
        progress.update(task, completed=True)

    _verdict_table(reports)
    passed = all(report.passed for report in reports)
    if config.record:
        _record(config, reports)
    payload = json.dumps(
        {
            'passed': passed,
            'reports': [report.model_dump(mode='json') for report in reports],
        },
        indent=2,
    )
    checked = [r for r in reports if isinstance(r, VerificationReport)]
    _write(config, payload, report_frame(checked))
    ic(passed)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_soup(config: RunConfig) -> int:
    model = load_model(config)
    delta = min(config.delta_schedule)
    soup = sample_soup(
        model,
        config.alpha,
        delta,
        np.random.default_rng(config.seed),
        seed=config.seed,
    )
    expected = config.alpha * loop_mass(model, delta)
    _header(config, delta=delta, loops=len(soup), expected=f'{expected:.4g}')
    if config.out is not None:
        write_soup_jsonl(soup, config.out, model)
        console.print(f'[green]Written:[/green] {config.out}')
    return EXIT_OK


def cmd_norms(config: RunConfig) -> int:
    model = load_model(config)
    measures = load_bundle(config.measures_path, model.states)
    _header(config, states=', '.join(model.states))
    table = get_analyzer(model, measures).get_norm_table()
    _print_frame(table, 'Norms')

    rng = np.random.default_rng(config.seed or 0)
    probe = proper_constant_probe(
        NormKind.U2_INF, model, rng, config.n_max, config.trials
    )
    console.print(
        Panel(
            '\n'.join(
                [f'C_{n} = {c:.4f}' for n, c in probe.per_order.items()]
                + [f'fitted C = {probe.constant:.4f}']
                + [f'stable: {probe.stable}']
            ),
            title='Proper-constant probe (u2_inf)',
        )
    )
    payload = json.dumps(
        {
            'norms': json.loads(table.to_json(orient='records')),
            'probe': {
                'norm_kind': probe.norm_kind.value,
                'per_order': probe.per_order,
                'constant': probe.constant,
                'stable': probe.stable,
            },
        },
        indent=2,
    )
    _write(config, payload, table)
    if config.out is not None and config.format is OutputFormat.CSV:
        probe_path = config.out.with_name(f'{config.out.stem}_probe.csv')
        probe.rows.to_csv(probe_path, index=False)
    return EXIT_OK


def _lattice_measure(config: RunConfig, kernel) -> np.ndarray | None:
    if config.measures_path is None:
        return None
    bundle = load_bundle(config.measures_path, kernel.states)
    return next(iter(bundle.values()), None)


def cmd_levy_report(config: RunConfig) -> int:
    spec = load_kernel_spec(config)
    kernel = kernel_from_spec(spec)
    nu = _lattice_measure(config, kernel)
    report = levy_report(spec, nu, REPORT_DELTAS)
    _header(config, kernel=f'{spec.exponent.kind.value} d={spec.d} N={spec.N}')

    summary = Table(title='Levy kernel', style='cyan')
    summary.add_column('Quantity', style='yellow')
    summary.add_column('Value', justify='right')
    for label, value in [
        ('sup gamma', report.gamma_sup),
        ('sup gamma / sum |u_hat|^2', report.gamma_sup_ratio),
        ('Parseval error', report.parseval_error),
        ('sectorial constant', report.sectorial_constant),
        ('tau slope', report.tau.slope),
        ('tau residual', report.tau.residual_band),
        ('convolution constant', report.convolution_constant),
        ('shell integral', report.shell_integral.get('value', float('nan'))),
        *report.norms.items(),
    ]:
        summary.add_row(label, _cell(float(value)))
    console.print(summary)
    _print_frame(pd.DataFrame(report.phi_omega), 'phi / omega')

    frame = pd.DataFrame(report.example.get('rows', []))
    _write(config, report.model_dump_json(indent=2), frame)
    return EXIT_OK


def cmd_caf_demo(config: RunConfig) -> int:
    spec = load_kernel_spec(config)
    if config.kernel_path is None:
        spec = spec.model_copy(update={'N': 32})
    kernel = kernel_from_spec(spec)
    nu = _lattice_measure(config, kernel)
    nu = kernel.delta(0) if nu is None else nu
    paths = config.samples or DEMO_PATHS
    _header(config, paths=paths, note='diagnostic, non-asserting')
    table = caf_field_demo(
        kernel, nu, REPORT_DELTAS, DEMO_TIMES, paths, config.seed
    )
    _print_frame(table, 'Empirical modulus')
    _write(config, table.to_json(orient='records', indent=2), table)
    return EXIT_OK


COMMANDS: dict[Command, Callable[[RunConfig], int]] = {
    Command.MOMENTS: cmd_moments,
    Command.VERIFY: cmd_verify,
    Command.SOUP: cmd_soup,
    Command.NORMS: cmd_norms,
    Command.LEVY_REPORT: cmd_levy_report,
    Command.CAF_DEMO: cmd_caf_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        config = config_from_args(args)
        return COMMANDS[config.command](config)
    except NumericalError as exc:
        console.print(f'[red]Numerical failure: {exc}[/red]')
        return EXIT_FAILED
    except (ValidationError, ValueError, OSError) as exc:
        console.print(f'[red]Invalid input: {exc}[/red]')
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
