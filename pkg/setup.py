from setuptools import setup

setup(
    name="pbmix",
    version="0.1.0",
    description="Mixed RT0/P_k finite elements for the linearised Poisson-Boltzmann equation with rough loads",
    author="pbmix developers",
    packages=["src"],
    install_requires=[
        "python-dotenv>=1.0.0",
        "numpy>=1.26.0",
        "pandas>=2.0.0",
        "scipy>=1.11.0",
        "pytest>=7.0.0",
        "hypothesis>=6.80.0",
    ],
    python_requires=">=3.9",
    entry_points={
        "console_scripts": [
            "pbmix=src.cli:main",
        ],
    },
)
