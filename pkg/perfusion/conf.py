import copy

from django.conf import settings


def perfusion_settings():
    """Return a copy of the ``PERFUSION`` settings block ({} when Django is not configured)."""
    if not settings.configured:
        return {}
    return copy.deepcopy(getattr(settings, 'PERFUSION', {}))


def perfusion_section(name):
    section = perfusion_settings().get(name, {})
    return section if isinstance(section, dict) else {}


def unit_constant():
    """k = brain density / 100 * correction, converting ml/100g to enhancement units."""
    block = perfusion_settings()
    density = float(block.get('brain_density_g_per_ml', 1.04))
    correction = float(block.get('unit_correction', 1.0))
    return density / 100.0 * correction
