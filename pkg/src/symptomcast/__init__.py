"""symptomcast: region-level next-day symptom severity forecasting.

Two-stage pipeline over daily symptom-survey streams: responder profiles
learned with a Gaussian mixture feed a gridded spatio-temporal
representation, and a 3D convolutional encoder-decoder predicts a
truncated-Gaussian severity distribution per grid cell for the next day.
"""

__version__ = "0.1.0"
