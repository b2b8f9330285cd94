from contextlib import asynccontextmanager

from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from icecream import ic
from sqlmodel import Session, select

from src import __version__
from src.analysis import get_analyzer
from src.db import get_session, init_db
from src.errors import ModelValidationError, NumericalError
from src.isomorphism import isomorphism_check
from src.levy import levy_report
from src.markov import model_from_spec
from src.measures import SignedMeasure
from src.models.models import VerificationRun
from src.schemas.schemas import (
    IsomorphismReport,
    IsomorphismRequest,
    KernelSpec,
    LevyReport,
    MomentRow,
    MomentsRequest,
    NormsRequest,
)


@asynccontextmanager
async def lifespan(app: FastAPI):
    init_db()
    yield


app = FastAPI(lifespan=lifespan)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=['http://localhost:5173', 'http://localhost:5174'],
    allow_credentials=True,
    allow_methods=['*'],
    allow_headers=['*'],
)


def _fail(exc: Exception) -> HTTPException:
    """Map engine errors to HTTP status codes."""
    ic(f'Request failed: {exc!r}')
    if isinstance(exc, NumericalError):
        return HTTPException(status_code=500, detail=str(exc))
    return HTTPException(status_code=422, detail=str(exc))


def _measures(model, mappings):
    return {
        name: SignedMeasure.from_mapping(model.states, weights).atoms
        for name, weights in mappings.items()
    }


@app.get('/')
async def index() -> dict[str, str]:
    return {'message': 'permfield', 'version': __version__}


@app.get('/about')
async def about() -> dict[str, str]:
    return {
        'message': (
            'Exact moments, isomorphism checks and norms of permanental '
            'fields built from Markov loop soups.'
        )
    }


@app.post('/moments')
def compute_moments(request: MomentsRequest) -> list[MomentRow]:
    try:
        model = model_from_spec(request.model)
        analyzer = get_analyzer(
            model, _measures(model, request.measures), request.alpha
        )
        table = analyzer.get_moment_table()
    except (ModelValidationError, ValueError, NumericalError) as exc:
        raise _fail(exc) from exc
    ic(f'Computed {len(table)} moment rows')
    return [MomentRow(**row) for row in table.to_dict(orient='records')]


@app.post('/norms')
def compute_norms(request: NormsRequest) -> list[dict]:
    try:
        model = model_from_spec(request.model)
        analyzer = get_analyzer(model, _measures(model, request.measures))
        table = analyzer.get_norm_table()
    except (ModelValidationError, ValueError, NumericalError) as exc:
        raise _fail(exc) from exc
    # NaN is not valid JSON
    return table.astype(object).where(table.notna(), None).to_dict(
        orient='records'
    )


@app.post('/isomorphism')
def check_isomorphism(request: IsomorphismRequest) -> IsomorphismReport:
    try:
        model = model_from_spec(request.model)
        states = model.states
        measures = [
            SignedMeasure.from_mapping(states, weights).atoms
            for weights in request.measures
        ]
        report = isomorphism_check(
            model,
            request.alpha,
            SignedMeasure.from_mapping(states, request.rho).atoms,
            SignedMeasure.from_mapping(states, request.phi).atoms,
            measures,
            request.degrees,
        )
    except (ModelValidationError, ValueError, NumericalError) as exc:
        raise _fail(exc) from exc
    ic(f'Isomorphism check passed: {report.passed}')
    return report


@app.post('/levy')
def summarize_levy(spec: KernelSpec) -> LevyReport:
    try:
        return levy_report(spec, detailed=False)
    except (ModelValidationError, ValueError, NumericalError) as exc:
        raise _fail(exc) from exc


@app.get('/runs')
async def read_runs(
    passed: bool | None = None, session: Session = Depends(get_session)
) -> list[VerificationRun]:
    statement = select(VerificationRun)
    if passed is not None:
        statement = statement.where(VerificationRun.passed == passed)
    runs = session.exec(statement).all()
    return list(runs)


@app.get('/runs/{run_id}')
async def read_run(
    run_id: int, session: Session = Depends(get_session)
) -> VerificationRun:
    ic(f'Getting run with id: {run_id}')
    run = session.get(VerificationRun, run_id)
    if not run:
        ic(f'Run {run_id} not found')
        raise HTTPException(status_code=404, detail='Run not found')
    return run
