"""
Experiment config schema. Each section is a serializer; the root
serializer checks the cross-section constraints.
"""
from rest_framework import serializers

from apps.encoders.services import EncoderKind
from apps.optimizer.services import GA_PROFILES, SWEEP_AXES
from apps.shared.serializers import IntervalValidationMixin, SplitSerializer

DATASET_SOURCES = ('mackey_glass', 'narma10', 'csv')
SPLIT_CHOICES = ('train', 'validate', 'test')
DIAGNOSTIC_KINDS = ('condition', 'esp', 'perturbation', 'convergence')


class MackeyGlassParamsSerializer(serializers.Serializer):
    tau = serializers.FloatField(required=False, min_value=0.0)
    delta = serializers.FloatField(required=False, min_value=0.0)
    a = serializers.FloatField(required=False)
    b = serializers.FloatField(required=False)
    n = serializers.FloatField(required=False)
    burn_in = serializers.IntegerField(required=False, min_value=0)
    history = serializers.FloatField(required=False)
    jitter = serializers.FloatField(required=False, min_value=0.0)

    def validate_tau(self, value):
        if value <= 0:
            raise serializers.ValidationError('tau must be positive')
        return value


class DatasetSerializer(serializers.Serializer):
    """Where the series comes from and how it becomes a task"""
    source = serializers.ChoiceField(choices=DATASET_SOURCES)
    name = serializers.CharField(required=False)
    length = serializers.IntegerField(required=False, allow_null=True, min_value=1)
    params = MackeyGlassParamsSerializer(required=False)
    path = serializers.CharField(required=False, allow_null=True)
    column = serializers.JSONField(required=False, default=0)
    delimiter = serializers.CharField(required=False, default=',', trim_whitespace=False)
    header = serializers.BooleanField(required=False, allow_null=True, default=None)
    mode = serializers.ChoiceField(choices=('series', 'system'), required=False, default='series')
    smoothing_window = serializers.IntegerField(required=False, default=1, min_value=1)
    drop_last = serializers.IntegerField(required=False, default=0, min_value=0)
    horizon = serializers.IntegerField(required=False, default=1, min_value=0)
    split = SplitSerializer()
    mape_offset = serializers.FloatField(required=False, default=0.0)

    def validate_smoothing_window(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError('smoothing window must be odd')
        return value

    def validate_column(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise serializers.ValidationError('column must be an index or a header name')
        return value

    def validate(self, attrs):
        errors = {}
        if attrs['source'] == 'csv' and not attrs.get('path'):
            errors['path'] = 'a CSV source needs a path'
        if attrs['source'] != 'mackey_glass' and attrs.get('params'):
            errors['params'] = 'generator parameters apply to mackey_glass only'
        if attrs.get('mode') == 'system' and attrs['source'] != 'narma10':
            errors['mode'] = "'system' mode applies to narma10 only"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class HyperparameterSerializer(IntervalValidationMixin, serializers.Serializer):
    """(IS, SR, γ) of one reservoir"""
    input_scaling = serializers.FloatField()
    spectral_radius = serializers.FloatField()
    leak_rate = serializers.FloatField()

    def validate_input_scaling(self, value):
        return self._validate_closed_unit(value, 'input_scaling')

    def validate_spectral_radius(self, value):
        return self._validate_open_unit(value, 'spectral_radius')

    def validate_leak_rate(self, value):
        return self._validate_half_open_unit(value, 'leak_rate')


class ArchitectureSerializer(IntervalValidationMixin, serializers.Serializer):
    depth = serializers.IntegerField(min_value=1)
    reservoir_size = serializers.IntegerField(min_value=1, default=300)
    encoder = serializers.ChoiceField(choices=[kind.value for kind in EncoderKind], default=EncoderKind.PCA.value)
    encoder_size = serializers.IntegerField(min_value=1, default=30)
    sparsity = serializers.FloatField(default=0.1)
    feature_links = serializers.BooleanField(default=True)
    direct_input = serializers.BooleanField(default=True)
    ridge_beta = serializers.FloatField(min_value=0.0, required=False)
    encoder_regularization = serializers.FloatField(min_value=0.0, required=False)
    washout = serializers.IntegerField(min_value=0, default=100)

    def validate_sparsity(self, value):
        return self._validate_half_open_unit(value, 'sparsity')

    def validate(self, attrs):
        if attrs['encoder'] == EncoderKind.PCA.value and attrs['depth'] > 1 \
                and attrs['encoder_size'] > attrs['reservoir_size']:
            raise serializers.ValidationError(
                {'encoder_size': 'PCA encoder size cannot exceed the reservoir size'}
            )
        return attrs


class OptimizerSerializer(serializers.Serializer):
    profile = serializers.ChoiceField(choices=sorted(GA_PROFILES), default='desk')
    population = serializers.IntegerField(min_value=1, required=False)
    generations = serializers.IntegerField(min_value=1, required=False)
    crossover_rate = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    mutation_rate = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    mutation_sigma = serializers.FloatField(min_value=0.0, required=False)
    elitism = serializers.IntegerField(min_value=0, required=False)
    tournament_size = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)


class SweepSerializer(serializers.Serializer):
    axis = serializers.ChoiceField(choices=sorted(SWEEP_AXES), default='depth')
    start = serializers.IntegerField(min_value=1, required=False)
    stop = serializers.IntegerField(min_value=1, required=False)
    step = serializers.IntegerField(min_value=1, required=False)
    split = serializers.ChoiceField(choices=SPLIT_CHOICES, default='test')


class DiagnosticsSerializer(serializers.Serializer):
    perturb_step = serializers.IntegerField(min_value=0, default=200)
    magnitude = serializers.FloatField(required=False)
    horizon = serializers.IntegerField(min_value=1, default=300)
    full_trace = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if attrs['perturb_step'] >= attrs['horizon']:
            raise serializers.ValidationError({'perturb_step': 'must be smaller than horizon'})
        return attrs


class RunSerializer(serializers.Serializer):
    repetitions = serializers.IntegerField(min_value=1, default=10)
    base_seed = serializers.IntegerField(min_value=0, default=0)
    evaluate_split = serializers.ChoiceField(choices=SPLIT_CHOICES, default='test')


class OutputSerializer(serializers.Serializer):
    directory = serializers.CharField(required=False, allow_null=True)


class ExperimentConfigSerializer(serializers.Serializer):
    """Root of an experiment config document"""
    name = serializers.CharField()
    dataset = DatasetSerializer()
    architecture = ArchitectureSerializer()
    hyperparameters = HyperparameterSerializer(many=True, required=False)
    optimizer = OptimizerSerializer(required=False)
    sweep = SweepSerializer(required=False)
    diagnostics = DiagnosticsSerializer(required=False)
    run = RunSerializer(required=False)
    output = OutputSerializer(required=False)

    def validate(self, attrs):
        errors = {}
        architecture = attrs['architecture']
        split = attrs['dataset']['split']
        if architecture['depth'] * architecture['washout'] >= split['train']:
            errors['architecture'] = {
                'washout': f"cumulative washout {architecture['depth']}x{architecture['washout']} "
                           f"must be shorter than the training split {split['train']}"
            }
        hyperparameters = attrs.get('hyperparameters')
        if hyperparameters is not None and len(hyperparameters) == 0:
            errors['hyperparameters'] = 'give at least one layer or omit the section'
        if errors:
            raise serializers.ValidationError(errors)
        return attrs
