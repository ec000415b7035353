from django.apps import AppConfig
from django.conf import settings

from .presets_cache import load_presets


class CqedAppConfig(AppConfig):
    name = "cqed_app"
    default_auto_field = "django.db.models.BigAutoField"

    def ready(self):
        load_presets(settings.CQED["PRESETS_FILE"])
