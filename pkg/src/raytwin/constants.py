"""Physical constants."""

C_LIGHT = 299792458.0  # m/s

# Clarke's rule-of-thumb coefficient for coherence time, 0.423 * lambda / v.
COHERENCE_COEFF = 0.423
