from sqlalchemy import Column, Integer, String, DateTime, Float, Text, desc
import datetime
import logging

from models.db_init import Base, init_ledger

logger = logging.getLogger(__name__)


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String(30), nullable=False)  # assign, sweep, compare, synth, nms-demo
    strategy = Column(String(30), nullable=True)
    config_json = Column(Text, nullable=False)  # канонический JSON конфигурации запуска
    seed = Column(Integer, nullable=True)
    num_images = Column(Integer, default=0)
    num_ground_truths = Column(Integer, default=0)
    mean_positives = Column(Float, nullable=True)
    zero_positive_fraction = Column(Float, nullable=True)
    output_dir = Column(String(255), nullable=True)
    created_at = Column(DateTime, default=lambda: datetime.datetime.now(datetime.timezone.utc))

    def __repr__(self):
        return f'<RunRecord {self.id} {self.command}/{self.strategy}>'


def record_run(url, command, config_json, strategy=None, seed=None, output_dir=None, report=None):
    """
    Сохраняет запись о запуске в журнал.

    Ошибки журнала только логируются и не меняют результат запуска.
    """
    try:
        db = init_ledger(url)()
    except Exception as e:
        logger.error(f"Журнал запусков недоступен ({url}): {str(e)}")
        return False

    try:
        run = RunRecord(
            command=command,
            strategy=strategy,
            config_json=config_json,
            seed=seed,
            output_dir=output_dir,
        )
        if report is not None:
            run.num_images = report.num_images
            run.num_ground_truths = report.num_ground_truths
            run.mean_positives = report.mean_positives
            run.zero_positive_fraction = report.zero_positive_fraction
        db.add(run)
        db.commit()
        logger.info(f"Запуск #{run.id} записан в журнал")
        return True
    except Exception as e:
        logger.error(f"Ошибка при записи запуска в журнал: {str(e)}")
        db.rollback()
        return False
    finally:
        db.close()


def latest_runs(url, limit=20):
    """Последние записи журнала, новые сверху."""
    db = init_ledger(url)()
    try:
        return db.query(RunRecord).order_by(desc(RunRecord.id)).limit(limit).all()
    finally:
        db.close()
