from sqlalchemy import create_engine, inspect
from sqlalchemy.orm import declarative_base, sessionmaker
import logging

logger = logging.getLogger(__name__)

# Единая база моделей журнала запусков
Base = declarative_base()

_sessions = {}


def init_ledger(url):
    """Создаёт (один раз на URL) движок журнала запусков и возвращает фабрику сессий."""
    if url in _sessions:
        return _sessions[url]

    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args)

    # Импортируем модели, чтобы они зарегистрировались в Base
    from models.run_models import RunRecord

    Base.metadata.create_all(bind=engine)

    inspector = inspect(engine)
    if RunRecord.__tablename__ not in inspector.get_table_names():
        logger.warning(f"Таблица {RunRecord.__tablename__} не найдена после create_all в {url}")
    else:
        logger.info(f"Журнал запусков готов: {url}")

    factory = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    _sessions[url] = factory
    return factory

