from django.apps import AppConfig


class WalklabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'walklab'
    verbose_name = 'Kac walk laboratory'
