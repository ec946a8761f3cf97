from rest_framework import serializers


class HypothesisEntrySerializer(serializers.Serializer):
    text = serializers.CharField()
    probability = serializers.FloatField(required=False, min_value=0.0)


class HypothesisFixtureSerializer(serializers.Serializer):
    """A shipped hypothesis list, optionally with prior masses."""

    name = serializers.CharField(max_length=100, required=False, default='')
    hypotheses = HypothesisEntrySerializer(many=True, allow_empty=False)

    def validate_hypotheses(self, value):
        """Either every entry carries a probability or none does."""
        with_probability = sum('probability' in entry for entry in value)
        if with_probability not in (0, len(value)):
            raise serializers.ValidationError("Give a probability for every hypothesis or for none.")
        if with_probability and not sum(entry['probability'] for entry in value) > 0:
            raise serializers.ValidationError("Hypothesis probabilities cannot all be zero.")
        return value
