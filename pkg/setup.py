from setuptools import setup, find_packages

setup(
    name="trilayer_magic",
    version="0.1.0",
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "joblib>=1.3",
        "tqdm>=4.66",
        "python-dotenv==1.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.4", "mpmath>=1.3"],
    },
    entry_points={
        "console_scripts": [
            "trilayer-magic=trilayer_magic.cli:main",
        ],
    },
    python_requires=">=3.9",
)
