"""
Django settings for perfusion_platform project.

The project hosts the CT-perfusion toolkit: phantom simulation, model-based
perfusion fitting, the map regressor and the lesion validation harness. It is
driven from management commands (``python manage.py simulate|fit|train|infer|
validate|pipeline``); the database only stores queued experiment runs.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production
SECRET_KEY = os.environ.get('PERFUSION_SECRET_KEY', 'perfusion-desk-only-not-secret')

DEBUG = os.environ.get('PERFUSION_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'perfusion',
]

MIDDLEWARE = []


# Database
# Only queued experiment runs are persisted; SQLite keeps the toolkit self-contained.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('PERFUSION_DB_PATH', str(BASE_DIR / 'perfusion.sqlite3')),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Celery settings
CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', "redis://localhost:6379/0")
CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"


# Logging
PERFUSION_LOG_LEVEL = os.environ.get('PERFUSION_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
        },
    },
    'loggers': {
        'perfusion': {
            'handlers': ['console'],
            'level': PERFUSION_LOG_LEVEL,
            'propagate': False,
        },
    },
}


# 🧠 Perfusion toolkit defaults
# Every config dataclass resolves its defaults from this block through
# ``from_settings``; command-line flags override them per run.
PERFUSION = {
    'seed': int(os.environ.get('PERFUSION_SEED', 0)),
    'threads': int(os.environ.get('PERFUSION_THREADS', 0)),  # 0 = all available cores
    'out_dir': os.environ.get('PERFUSION_OUT_DIR', str(BASE_DIR / 'runs')),

    # Unit constant k = brain density (g/ml) / 100 * correction
    'brain_density_g_per_ml': 1.04,
    'unit_correction': float(os.environ.get('PERFUSION_UNIT_CORRECTION', 1.0)),

    'acquisition': {
        'nt': 89,
        'dt': 0.5,
        'baseline_hu': 35.0,
    },
    'bolus': {
        'amplitude': 500.0,
        'onset': 5.0,
        'alpha': 3.0,
        'beta': 1.0,
        'recirculation_fraction': 0.0,
    },
    'noise_motion': {
        'noise_sigma_hu': 0.0,
        'max_shift_px': 0,
    },
    'vein_delay_s': 2.0,

    'registration': {
        'max_shift_px': 10,
        'subpixel': False,
    },
    'bilateral': {
        'sigma_spatial': 1.5,
        'sigma_intensity': 20.0,
        # range sigma = noise_factor x measured noise; None keeps sigma_intensity
        'noise_factor': 1.5,
    },
    'vascular': {
        'aif_voxels': 100,
        'vof_voxels': 100,
        'pvc': False,
    },
    'fit': {
        'mtt_min': 1.0,
        'mtt_max': 24.0,
        'mtt_points': 24,
        'delay_max': 10.0,
        'refine': True,
        'max_refine_iters': 20,
        'zero_signal_factor': 3.0,
        'ttp_raw': False,
        'svd_threshold_frac': 0.2,
    },
    'normalization': {
        'CBV': (0.0, 8.0),
        'CBF': (0.0, 100.0),
        'MTT': (0.0, 20.0),
        'TTP': (0.0, 40.0),
        'DELAY': (0.0, 10.0),
        'input_hu_window': (0.0, 60.0),
    },
    'unet': {
        'depth': 2,
        'base_channels': 8,
        'time_stride': 1,
    },
    'train': {
        'lr0': 0.05,
        'momentum': 0.9,
        'batch_size': 4,
        'max_epochs': 200,
        'patience': 10,
        'min_improvement': 1e-5,
        'max_decays': 3,
    },
    'segmentation': {
        'core_cbv_max': 1.5,
        'core_cbf_fraction': 0.3,
        'penumbra_ttp_delta_s': 4.0,
        'penumbra_cbf_fraction': None,
        'min_component': 5,
    },
}
