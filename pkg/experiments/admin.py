from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ["id", "experiment", "root_seed", "status", "created_at", "finished_at"]
    list_filter = ["experiment", "status"]
    readonly_fields = ["config", "summary", "error"]
