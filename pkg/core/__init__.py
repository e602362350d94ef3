from . import circuit, ensemble, errors, gates, mps, scaling, seeding, statevector
