from django.contrib import admin

from .models import ExperimentRun, ResultRecord, SignificanceTest


class ResultRecordInline(admin.TabularInline):
    model = ResultRecord
    extra = 0
    readonly_fields = (
        "method", "sigma", "lambda_init", "mask", "sa", "ari", "vi", "scene_accuracy",
        "wall_time", "scene_count",
    )
    can_delete = False


# Admin for ExperimentRun model
@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("id", "out_dir", "master_seed", "wall_time", "created_at")
    readonly_fields = ("id", "created_at")
    inlines = [ResultRecordInline]


# Admin for ResultRecord model
@admin.register(ResultRecord)
class ResultRecordAdmin(admin.ModelAdmin):
    list_display = ("id", "run", "method", "sigma", "lambda_init", "mask", "sa", "ari", "vi", "scene_accuracy")
    list_filter = ("method", "mask", "sigma")


# Admin for SignificanceTest model
@admin.register(SignificanceTest)
class SignificanceTestAdmin(admin.ModelAdmin):
    list_display = ("id", "run", "sigma", "lambda_init", "mask", "metric", "method_a", "method_b", "p_value")
    list_filter = ("metric", "mask")
