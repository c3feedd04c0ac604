"""Unit conversions, kept in one place to avoid silent unit bugs.

Everything internal runs in SI (m, s, Hz); MRayl, micrometres and
dB/MHz/cm appear only at the I/O boundary. Attenuation is the messy one:
the spectral model carries a dimensionless damping ``gamma`` per
component, while maps and reports quote attenuation in dB/MHz/cm. The
"natural" intermediate used below is attenuation per unit frequency and
per unit propagation distance, in Np/(Hz*m).
"""

NEPER_TO_DB = 8.6859

M_PER_UM = 1e-6
UM_PER_M = 1e6

# dB/MHz/cm -> Np/(Hz*m): /NEPER_TO_DB (dB->Np), *1e-6 (/MHz -> /Hz), *1e2 (/cm -> /m)
_DB_MHZ_CM_TO_NATURAL = 1e-4 / NEPER_TO_DB


def attenuation_db_to_natural(alpha_db_mhz_cm: float) -> float:
    """dB/MHz/cm -> Np/(Hz*m)."""
    return alpha_db_mhz_cm * _DB_MHZ_CM_TO_NATURAL


def attenuation_natural_to_db(alpha_natural: float) -> float:
    """Np/(Hz*m) -> dB/MHz/cm."""
    return alpha_natural / _DB_MHZ_CM_TO_NATURAL
