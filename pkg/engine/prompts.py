from typing import Any, Mapping, Optional, Sequence

from django.conf import settings
from django.template.loader import render_to_string


def render_prompt(name: str, context: Mapping[str, Any], version: Optional[str] = None) -> str:
    """Render ``laip/<version>/<name>.txt``."""
    version = version or settings.LAIP['PROMPT_VERSION']
    return render_to_string(f"laip/{version}/{name}.txt", dict(context)).strip()


def labelled(texts: Sequence[str], prefix: str):
    """[{'label': 'A1', 'text': ...}, ...] in display order."""
    return [{'label': f"{prefix}{i}", 'text': text} for i, text in enumerate(texts, start=1)]


def format_probability(value: float) -> str:
    return f"{value:.4g}"
