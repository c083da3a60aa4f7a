import logging

from celery import shared_task

from .pipeline import evaluate_scene

logger = logging.getLogger(__name__)


# Task to evaluate one scene under one method cell
@shared_task
def evaluate_scene_task(payload):
    record = evaluate_scene(payload)
    logger.debug("Evaluated scene %s with %s", record["scene"], record["method"])
    return record
