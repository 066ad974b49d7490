"""Simulator for an entanglement source with keystream-controlled access.

Modules:

``quantum_core``   two-qubit states, Born-rule statistics, CHSH
``modulation``     AES-CTR keystream, trit strings, control correlation U
``channel_sim``    pair emission, loss, accidentals, coincidence records
``protocol``       controller/user session, certification, key pipeline
``adversary``      tap pattern recovery, blind-guess bound, memory attack
``analysis``       figure-data experiments and reproducible tables
"""

__version__ = "0.1.0"
