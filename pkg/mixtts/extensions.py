"""SQLAlchemy engine and session setup for the run registry."""
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import DeclarativeBase, Session, scoped_session, sessionmaker
from sqlalchemy.pool import StaticPool


class Base(DeclarativeBase):
    """Base class for all SQLAlchemy models."""
    pass


class Database:
    """Holds the registry engine and a scoped session bound to it."""

    def __init__(self):
        self.engine: Optional[Engine] = None
        self._session: Optional[scoped_session] = None

    def init_app(self, url: str) -> None:
        """Bind to ``url``; an in-memory SQLite URL shares one connection."""
        if self._session is not None:
            self._session.remove()
        kwargs = {}
        if url.endswith(':memory:'):
            kwargs = {'connect_args': {'check_same_thread': False}, 'poolclass': StaticPool}
        self.engine = create_engine(url, **kwargs)
        self._session = scoped_session(sessionmaker(bind=self.engine, expire_on_commit=False))

    @property
    def session(self) -> Session:
        if self._session is None:
            raise RuntimeError('registry database is not initialised; call init_app first')
        return self._session()

    def create_all(self) -> None:
        Base.metadata.create_all(self.engine)

    def close(self) -> None:
        if self._session is not None:
            self._session.remove()
        if self.engine is not None:
            self.engine.dispose()
        self._session = None
        self.engine = None


# Registry shared by the command layer and the trainer
db = Database()
