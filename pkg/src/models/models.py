from datetime import datetime, timezone

from sqlalchemy import func
from sqlmodel import Field, SQLModel


class VerificationRunBase(SQLModel):
    name: str = Field(index=True)
    command: str
    passed: bool
    seed: int | None = None
    payload: str


class VerificationRunCreate(VerificationRunBase):
    pass


class VerificationRun(VerificationRunBase, table=True):
    id: int = Field(default=None, primary_key=True)

    # Audit
    created_at: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc),
        sa_column_kwargs={'server_default': func.now()},
    )
