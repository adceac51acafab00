import os
from setuptools import setup

def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()

setup(
    name = 'stochastic-delivery-planner',
    version = '0.1a1',
    license = 'BSD',
    description = 'Two-stage stochastic planning of deliveries over a private fleet and common carriers',
    long_description = read('README'),
    packages = ['delivery_planner', 'delivery_planner.tests'],
    package_dir = {'': 'src'},
    package_data = {'delivery_planner': ['fixtures/*',]},
    python_requires = '>=3.8',
    install_requires = [
        'numpy',
        'pandas',
        'simplejson',
    ],
    extras_require = {
        'test': ['nose2', 'coverage', 'pytest'],
        'docs': ['sphinx'],
    },
    entry_points = {
        'console_scripts': [
            'delivery-planner = delivery_planner.cli:main',
        ],
    },
    classifiers = [
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Mathematics',
    ]
)
