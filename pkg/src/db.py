from pydantic import BaseModel
from sqlmodel import Session, SQLModel, create_engine

from src.config import DATABASE_URL, SQL_ECHO

# Import models so they are registered with SQLModel
from src.models.models import VerificationRun, VerificationRunCreate

engine = create_engine(DATABASE_URL, echo=SQL_ECHO)


def init_db():
    SQLModel.metadata.create_all(engine)


def get_session():
    with Session(engine) as session:
        yield session


def record_report(
    session: Session, command: str, report: BaseModel
) -> VerificationRun:
    """Store a report in the run ledger; the payload is its JSON form."""
    run = VerificationRunCreate(
        name=getattr(report, 'name', command),
        command=command,
        passed=bool(getattr(report, 'passed', True)),
        seed=getattr(report, 'seed', None),
        payload=report.model_dump_json(),
    )
    db_run = VerificationRun.model_validate(run)
    session.add(db_run)
    session.commit()
    session.refresh(db_run)
    return db_run
