# Import the Celery app when Django starts so shared_task in capsules.tasks binds to it.
from .celery import app as celery_app

__all__ = ("celery_app",)
