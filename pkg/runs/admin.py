from django.contrib import admin

from .models import RunManifest


@admin.register(RunManifest)
class RunManifestAdmin(admin.ModelAdmin):
    list_display = ['command', 'scenario', 'seed', 'digest', 'wall_time', 'created', ]
    list_filter = ['command', 'scenario', ]
    search_fields = ['command', 'scenario', 'digest', ]
    readonly_fields = ['digest', 'created', ]
