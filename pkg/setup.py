from setuptools import setup, find_packages

setup(
    name="mixlingual-tts",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.9",
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'librosa>=0.10',
        'scikit-learn>=1.3',
        'matplotlib>=3.7',
        'tqdm>=4.66',
        'click>=8.1',
        'SQLAlchemy==2.0.37',
    ],
    entry_points={
        'console_scripts': [
            'mixtts=mixtts.commands.main:cli',
        ],
    },
)
