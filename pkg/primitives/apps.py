from django.apps import AppConfig


class PrimitivesConfig(AppConfig):
    name = 'primitives'
