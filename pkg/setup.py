from setuptools import setup, find_packages

long_description = '''
Scoreflow is a small toolkit for training score-based diffusion models with maximum likelihood
and for evaluating their likelihoods. It trains score networks with likelihood weighting and
importance sampled times, computes exact probability flow log-likelihoods and upper bounds on
the negative log-likelihood, estimates entropies and learns variational dequantization noise
for discrete data. All experiments run on synthetic low-dimensional data on a desktop machine.

Scoreflow is compatible with Python 3.7+ and is distributed under the MIT license.
'''

setup(
    name='scoreflow',
    version='0.1.0',
    description='Likelihood training and evaluation of score-based diffusion models.',
    long_description=long_description,
    license='MIT',
    install_requires=['numpy', 'scipy', 'pyyaml', 'tensorflow>=2.4'],
    extras_require={
        'tests': ['pytest', 'pytest-cov', 'codecov'],
        'dev': ['bumpversion']
    },
    entry_points={
        'console_scripts': ['scoreflow=scoreflow.cli:main'],
    },
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Developers',
        'Intended Audience :: Education',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Software Development :: Libraries :: Python Modules',
    ],
    packages=find_packages(exclude=('tests',)),
)
