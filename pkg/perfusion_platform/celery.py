import os
from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "perfusion_platform.settings")

celery_app = Celery("perfusion_platform")

# CELERY_* entries of the Django settings
celery_app.config_from_object("django.conf:settings", namespace="CELERY")

# one experiment at a time per worker process
celery_app.conf.worker_prefetch_multiplier = 1
celery_app.conf.task_acks_late = True

celery_app.autodiscover_tasks(["perfusion"])
