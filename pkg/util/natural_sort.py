import re

_number_pattern = re.compile(r'([0-9]+(?:\.[0-9]+)?)')


def natural_sort_key(s: str):
    """'cv_alpha_0.05' sorts before 'cv_alpha_0.1', 'run2' before 'run10'"""
    return [(0, float(text), '') if _number_pattern.fullmatch(text) else (1, 0.0, text)
            for text in _number_pattern.split(s) if text]
