from django.apps import AppConfig


class StackConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.stack'
