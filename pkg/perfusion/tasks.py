import logging

from celery import shared_task

from perfusion.exceptions import PerfusionError
from perfusion.models import ExperimentRun
from perfusion.services.pipeline import ExperimentConfig, ExperimentPipeline, write_run_json

logger = logging.getLogger(__name__)


@shared_task
def run_experiment(run_id):
    """
    Executes a queued experiment through the same pipeline the `pipeline`
    command runs inline.
    """
    try:
        run = ExperimentRun.objects.get(id=run_id)
    except ExperimentRun.DoesNotExist:
        logger.error(f"❌ Experiment run {run_id} not found.")
        return None

    run.mark_in_progress()
    logger.info(f"🔁 Running experiment {run.id}")
    try:
        config = ExperimentConfig.from_dict(run.config)
        write_run_json(config.out_dir, "pipeline", dict(config.to_dict(), run_id=str(run.id)))
        result = ExperimentPipeline(config).run()
    except PerfusionError as e:
        logger.error(f"❌ Experiment {run.id} failed: {e}")
        run.mark_failed(str(e))
        return None

    run.mark_completed(result)
    logger.info(f"✅ Experiment {run.id} completed")
    return str(run.id)
