from django.apps import AppConfig


class MechanismConfig(AppConfig):
    name = 'mechanism'
