from setuptools import setup

setup(
    entry_points={
        'console_scripts': [
            'tradeeq=tradeeq:main_entry',
        ],
    },
)
