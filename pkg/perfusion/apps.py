from django.apps import AppConfig


class PerfusionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'perfusion'
    verbose_name = 'CT Perfusion Toolkit'
