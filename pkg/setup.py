from setuptools import setup

from util.constants import VERSION

setup(
    name='mvir-intervals',
    version=VERSION,
    description='Conformal prediction intervals for virial black hole mass regression',
    packages=['boosting', 'catalogue', 'catalogue.schema', 'feature_net', 'interval_metrics', 'intervals', 'util'],
    py_modules=['main', 'pipeline', 'run_config'],
    python_requires='>=3.7',
    install_requires=['numpy>=1.20.3', 'scipy>=1.3', 'chardet>=3.0.4', 'pandas>=1.5'],
    extras_require={'test': ['pytest>=6.0']},
    entry_points={'console_scripts': ['mvir-intervals=main:main']},
)
