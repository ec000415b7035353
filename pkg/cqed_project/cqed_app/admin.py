from django.contrib import admin

from .models import ScenarioRun


# Admin class for recorded scenario runs
@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    # Fields to display in the list view for ScenarioRun objects
    list_display = (
        "name",
        "mode",
        "seed",
        "created_at",
    )
    list_filter = ("mode",)
    # Fields that can be searched in the admin list view for ScenarioRun objects
    search_fields = (
        "name",
        "output_dir",
    )
    readonly_fields = ("created_at",)

    fieldsets = (
        (
            None,
            {
                "fields": (
                    "name",
                    "mode",
                    "seed",
                    "output_dir",
                    "created_at",
                ),
                "description": "These fields identify the run and where its files live.",
            },
        ),
        (
            "Manifest",
            {
                "fields": ("manifest",),
                "classes": ("collapse",),
            },
        ),
    )
