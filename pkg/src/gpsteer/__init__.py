"""Covariance steering for unknown discrete-time dynamics learned with sparse
variational Gaussian processes.

The package is organized bottom-up:

- ``kernels``  -- squared-exponential ARD kernel and its derivatives
- ``gp``       -- exact and sparse variational GP regression, training, I/O
- ``dynamics`` -- transition-model interface, unicycle simulator, linearization
- ``ut``       -- unscented transform for closed-loop moment propagation
- ``sdp``      -- barrier interior-point solver for LMI-constrained QPs
- ``lcs``      -- one linearized covariance-steering solve (mean + covariance)
- ``greedy``   -- shrinking-horizon steering loop and Monte Carlo evaluation
- ``cli``      -- command-line pipeline (collect / train / steer / evaluate / plot)
"""

__version__ = "0.1.0"
