from rest_framework import serializers

from engine.hypotheses import HYPOTHESIS_MODES, PRIOR_MODES
from environment.corpus import list_trajectories
from open_ended.scenarios import list_scenarios, load_scenario, scenario_path

MODES = ('laip-full', 'laip-lcp', 'laip-single-cot', 'generic-cot', 'zero-shot', 'optimal')
TASKS = ('restaurants', 'open_ended')
BACKEND_KINDS = ('http', 'scripted-oracle', 'replay')
CACHE_MODES = ('record', 'replay', 'off')
CANDIDATE_MODES = ('fixed', 'free')


def defaults(serializer_class):
    serializer = serializer_class(data={})
    serializer.is_valid(raise_exception=True)
    return dict(serializer.validated_data)


class BackendSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=BACKEND_KINDS, default='http')
    model_id = serializers.CharField(required=False, allow_blank=True, default='')
    base_url = serializers.CharField(required=False, allow_blank=True, default='')
    cache_path = serializers.CharField(required=False, allow_blank=True, default='')
    cache_mode = serializers.ChoiceField(choices=CACHE_MODES, default='record')


class EmbeddingSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=('http', 'mock'), default='http')
    model = serializers.CharField(required=False, allow_blank=True, default='')


class ExperimentConfigSerializer(serializers.Serializer):
    """Validates an experiment config file before anything is run."""

    name = serializers.SlugField(max_length=100)
    mode = serializers.ChoiceField(choices=MODES)
    task = serializers.ChoiceField(choices=TASKS, default='restaurants')
    trajectories = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    repetitions = serializers.IntegerField(min_value=1, default=1)
    seeds = serializers.ListField(child=serializers.IntegerField(), required=False)
    backend = BackendSerializer(required=False)
    embedding = EmbeddingSerializer(required=False)
    hypothesis_mode = serializers.ChoiceField(choices=HYPOTHESIS_MODES, default='orderings')
    hypothesis_fixture = serializers.CharField(required=False, allow_blank=True, default='')
    n_hypotheses = serializers.IntegerField(min_value=1, default=6)
    prior_mode = serializers.ChoiceField(choices=PRIOR_MODES, default='uniform')
    candidate_mode = serializers.ChoiceField(choices=CANDIDATE_MODES, default='fixed')
    proposed_actions = serializers.IntegerField(min_value=1, required=False)
    epsilon = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    softmax_temperature = serializers.FloatField(required=False)
    likelihood_temperature = serializers.FloatField(min_value=0.0, required=False)
    hypothesis_temperature = serializers.FloatField(min_value=0.0, required=False)
    floor = serializers.FloatField(min_value=0.0, required=False)
    retries = serializers.IntegerField(min_value=0, required=False)
    max_workers = serializers.IntegerField(min_value=1, required=False)
    run_workers = serializers.IntegerField(min_value=1, required=False)
    prompt_version = serializers.CharField(required=False)
    mapping = serializers.CharField(required=False, allow_blank=True, default='')

    def validate_softmax_temperature(self, value):
        if not value > 0:
            raise serializers.ValidationError("Softmax temperature must be positive.")
        return value

    def validate(self, attrs):
        """Check that seeds, trajectories, mode and task fit together."""
        attrs.setdefault('backend', defaults(BackendSerializer))
        attrs.setdefault('embedding', defaults(EmbeddingSerializer))
        repetitions = attrs['repetitions']
        seeds = attrs.get('seeds')
        if seeds is None:
            attrs['seeds'] = list(range(repetitions))
        elif len(seeds) != repetitions:
            raise serializers.ValidationError(f"{len(seeds)} seeds given for {repetitions} repetitions.")

        task = attrs['task']
        if task == 'restaurants':
            unknown = [t for t in attrs['trajectories'] if t not in list_trajectories()]
        else:
            unknown = [t for t in attrs['trajectories'] if t not in list_scenarios() and not scenario_path(t).is_file()]
        if unknown:
            raise serializers.ValidationError(f"Unknown {task} ids: {', '.join(unknown)}")
        if task == 'open_ended':
            self.check_scenarios(attrs)

        mode = attrs['mode']
        if mode == 'optimal' and (task != 'restaurants' or attrs['hypothesis_mode'] != 'orderings'):
            raise serializers.ValidationError("The optimal model runs on restaurant trajectories over orderings only.")
        if task == 'open_ended' and attrs['hypothesis_mode'] == 'orderings':
            raise serializers.ValidationError("Open-ended scenarios need fixture or generated hypotheses.")
        if attrs['hypothesis_mode'] == 'fixture' and task == 'restaurants' and not attrs['hypothesis_fixture']:
            raise serializers.ValidationError("Fixture hypotheses need a hypothesis_fixture path.")
        if attrs['backend']['kind'] == 'scripted-oracle':
            if task != 'restaurants' or attrs['candidate_mode'] != 'fixed' or attrs['hypothesis_mode'] == 'fixture':
                raise serializers.ValidationError(
                    "The scripted oracle answers fixed-candidate restaurant runs over orderings only."
                )
        return attrs

    def check_scenarios(self, attrs):
        """Scenario ids name the runs, so they must be unique; fixture hypotheses must exist."""
        scenarios = [load_scenario(reference) for reference in attrs['trajectories']]
        ids = [scenario.id for scenario in scenarios]
        duplicated = sorted({i for i in ids if ids.count(i) > 1})
        if duplicated:
            raise serializers.ValidationError(f"Scenario ids appear more than once: {', '.join(duplicated)}")
        if attrs['hypothesis_mode'] == 'fixture' and not attrs['hypothesis_fixture']:
            missing = [
                scenario.id for scenario in scenarios
                if scenario.hypotheses_path is None or not scenario.hypotheses_path.is_file()
            ]
            if missing:
                raise serializers.ValidationError(f"No hypothesis fixture for scenarios: {', '.join(missing)}")
