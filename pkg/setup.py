from setuptools import setup

install_requires = ['numpy>=1.19']

setup(
    name = 'stepgrid',
    packages = ['stepgrid', 'stepgrid.data'],
    package_data = {
        'stepgrid.data': ['defaults.json']
    },
    entry_points = {
        'console_scripts': ['stepgrid = stepgrid.cli:run']
    },
    test_suite="tests",
    version = '0.1.1',
    description = 'Non-overlapping step grounding over 2D temporal proposal score maps',
    install_requires=install_requires,
    python_requires='>=3.6',
    classifiers = [
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache Software License",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ]
)
