from django.apps import AppConfig


class ParticlesConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "particles"
