from django.apps import AppConfig


class OpenEndedConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'open_ended'
    verbose_name = 'Open-Ended Inference'
