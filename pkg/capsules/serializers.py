from rest_framework import serializers

from .models import ExperimentRun, ResultRecord, SignificanceTest

METHOD_CHOICES = ("gcm-ds", "gcm-gmm", "ransac")
MASK_CHOICES = ("full", "gt")
BASIS_CHOICES = ("fixed", "all")
BACKEND_CHOICES = ("pool", "celery")


def _point_field():
    return serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)


# Serializer for one line of a dataset file
class SceneRecordSerializer(serializers.Serializer):
    index = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField(min_value=0)
    sigma = serializers.FloatField(min_value=0.0)
    points = serializers.ListField(child=_point_field(), min_length=1)
    labels = serializers.ListField(child=serializers.IntegerField(min_value=1))
    parts = serializers.ListField(child=serializers.IntegerField(min_value=0))
    missing_mask = serializers.ListField(child=serializers.BooleanField())
    poses = serializers.ListField(
        child=serializers.ListField(
            child=serializers.FloatField(), min_length=4, max_length=4, allow_null=True
        )
    )

    def validate(self, attrs):
        library = self.context.get("library")
        n_points = len(attrs["points"])
        if len(attrs["labels"]) != n_points or len(attrs["parts"]) != n_points:
            raise serializers.ValidationError(
                "Invariant violated: points, labels and parts must have equal length"
            )
        if sum(not flag for flag in attrs["missing_mask"]) != n_points:
            raise serializers.ValidationError(
                "Invariant violated: point count must equal the number of unmasked slots"
            )
        if any(abs(c) > 1.0 for point in attrs["points"] for c in point):
            raise serializers.ValidationError("Invariant violated: points must lie in [-1, 1]^2")
        if library is not None:
            if len(attrs["missing_mask"]) != library.n_slots:
                raise serializers.ValidationError(
                    f"missing_mask must have {library.n_slots} entries for this template library"
                )
            if len(attrs["poses"]) != len(library):
                raise serializers.ValidationError(
                    f"poses must have {len(library)} entries for this template library"
                )
            sizes = library.sizes
            for label, part in zip(attrs["labels"], attrs["parts"]):
                if label > len(sizes) or part >= sizes[label - 1]:
                    raise serializers.ValidationError(f"Unknown slot ({label}, {part})")
        return attrs


class ObjectRecordSerializer(serializers.Serializer):
    template = serializers.IntegerField(min_value=1)
    pose = serializers.ListField(child=serializers.FloatField(), min_length=4, max_length=4)


# Serializer for one line of a per-scene outcome file
class OutcomeRecordSerializer(serializers.Serializer):
    scene = serializers.IntegerField(min_value=0)
    method = serializers.ChoiceField(choices=METHOD_CHOICES)
    sigma = serializers.FloatField(min_value=0.0)
    lambda_init = serializers.FloatField(allow_null=True)
    labels = serializers.ListField(child=serializers.IntegerField(min_value=0))
    phantoms = serializers.ListField(child=serializers.IntegerField(min_value=1))
    missing_slots = serializers.ListField(child=serializers.IntegerField(min_value=0))
    objects = ObjectRecordSerializer(many=True)
    degenerate = serializers.BooleanField()
    scores = serializers.DictField(child=serializers.DictField())


# Serializer for experiment config files; every key is optional
class ExperimentConfigSerializer(serializers.Serializer):
    methods = serializers.ListField(
        child=serializers.ChoiceField(choices=METHOD_CHOICES), min_length=1, required=False
    )
    sigmas = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=1, required=False
    )
    lambdas = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=1, required=False
    )
    masks = serializers.ListField(
        child=serializers.ChoiceField(choices=MASK_CHOICES), min_length=1, required=False
    )
    draws = serializers.IntegerField(min_value=0, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    restarts = serializers.IntegerField(min_value=1, required=False)
    workers = serializers.IntegerField(min_value=1, required=False)
    ransac_tol = serializers.FloatField(min_value=0.0, required=False)
    basis_policy = serializers.ChoiceField(choices=BASIS_CHOICES, required=False)
    ransac_refine = serializers.BooleanField(required=False)
    ransac_relaxed_tols = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), allow_empty=True, required=False
    )
    backend = serializers.ChoiceField(choices=BACKEND_CHOICES, required=False)
    out = serializers.CharField(required=False)

    def validate_lambdas(self, value):
        if any(lam <= 0 for lam in value):
            raise serializers.ValidationError("Initial lambda values must be positive")
        return value

    def validate_ransac_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError("RANSAC tolerance must be positive")
        return value

    def validate_ransac_relaxed_tols(self, value):
        if any(tol <= 0 for tol in value):
            raise serializers.ValidationError("Relaxed RANSAC tolerances must be positive")
        return value


# Serializer for the result rows of a recorded run
class ResultRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = ResultRecord
        fields = (
            "method",
            "sigma",
            "lambda_init",
            "mask",
            "sa",
            "ari",
            "vi",
            "scene_accuracy",
            "wall_time",
            "scene_count",
        )


class SignificanceTestSerializer(serializers.ModelSerializer):
    class Meta:
        model = SignificanceTest
        fields = ("sigma", "lambda_init", "mask", "metric", "method_a", "method_b", "statistic", "p_value")


# Serializer for a recorded run; report.md is rendered from its data
class ExperimentRunSerializer(serializers.ModelSerializer):
    rows = serializers.SerializerMethodField()
    tests = serializers.SerializerMethodField()

    class Meta:
        model = ExperimentRun
        fields = ("id", "created_at", "out_dir", "master_seed", "config", "wall_time", "rows", "tests")

    def get_rows(self, run):
        return ResultRecordSerializer(run.rows.order_by("id"), many=True).data

    def get_tests(self, run):
        return SignificanceTestSerializer(run.tests.order_by("id"), many=True).data
