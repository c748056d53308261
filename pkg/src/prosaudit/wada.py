"""Blind SNR estimation by waveform amplitude distribution analysis.

Clean speech amplitudes are modeled as Gamma-distributed with shape 0.4;
additive Gaussian noise shifts the statistic G = ln(mean |x|) -
mean(ln |x|) along a fixed curve, so inverting the curve reads the SNR
directly off the waveform. G_TABLE below holds G on a 1 dB grid from -20
to 100 dB, computed by quadrature from that amplitude model (see
tools/make_wada_table.py for the derivation and regeneration script).
"""

from __future__ import annotations

import numpy as np

from .audio_io import AudioBuffer
from .errors import SilentInputError

_AMPLITUDE_FLOOR = 1e-10

DB_TABLE = np.arange(-20.0, 101.0)

G_TABLE = np.array([
    0.40943470, 0.40945950, 0.40949762, 0.40955585, 0.40964412,
    0.40977680, 0.40997422, 0.41026473, 0.41068699, 0.41129251,
    0.41214827, 0.41333908, 0.41496934, 0.41716371, 0.42006640,
    0.42383855, 0.42865366, 0.43469103, 0.44212755, 0.45112839,
    0.46183732, 0.47436773, 0.48879504, 0.50515144, 0.52342326,
    0.54355138, 0.56543434, 0.58893370, 0.61388120, 0.64008667,
    0.66734632, 0.69545050, 0.72419070, 0.75336533, 0.78278429,
    0.81227220, 0.84167053, 0.87083865, 0.89965408, 0.92801212,
    0.95582492, 0.98302037, 1.00954067, 1.03534094, 1.06038765,
    1.08465732, 1.10813505, 1.13081336, 1.15269102, 1.17377204,
    1.19406475, 1.21358106, 1.23233570, 1.25034569, 1.26762978,
    1.28420806, 1.30010156, 1.31533194, 1.32992126, 1.34389172,
    1.35726554, 1.37006476, 1.38231115, 1.39402611, 1.40523061,
    1.41594510, 1.42618950, 1.43598315, 1.44534479, 1.45429254,
    1.46284393, 1.47101584, 1.47882453, 1.48628568, 1.49341434,
    1.50022498, 1.50673149, 1.51294719, 1.51888488, 1.52455681,
    1.52997471, 1.53514984, 1.54009295, 1.54481436, 1.54932393,
    1.55363110, 1.55774489, 1.56167393, 1.56542647, 1.56901042,
    1.57243332, 1.57570237, 1.57882447, 1.58180620, 1.58465387,
    1.58737348, 1.58997078, 1.59245127, 1.59482018, 1.59708253,
    1.59924311, 1.60130649, 1.60327704, 1.60515893, 1.60695615,
    1.60867250, 1.61031162, 1.61187699, 1.61337191, 1.61479957,
    1.61616298, 1.61746503, 1.61870849, 1.61989599, 1.62103005,
    1.62211307, 1.62314735, 1.62413509, 1.62507837, 1.62597920,
    1.62683949,
])


def g_statistic(samples: np.ndarray) -> float:
    """G = ln(mean |x|) - mean(ln |x|) over samples with |x| above the floor."""
    x = np.abs(np.asarray(samples, dtype=np.float64))
    x = x[x > _AMPLITUDE_FLOOR]
    if len(x) == 0:
        raise SilentInputError("signal has no samples above the amplitude floor")
    return float(np.log(np.mean(x)) - np.mean(np.log(x)))


def wada_snr(buffer: AudioBuffer) -> float:
    """Blind SNR estimate in dB, clamped to the table range [-20, 100]."""
    g = g_statistic(buffer.samples)
    # np.interp clamps beyond the table ends, which is the documented behavior
    return float(np.interp(g, G_TABLE, DB_TABLE))
