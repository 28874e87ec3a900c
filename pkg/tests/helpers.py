def within(estimate, expected, sigmas=4.0):
    """True when the estimate lies within ``sigmas`` reported std errors of ``expected``"""
    return abs(estimate.value - expected) <= sigmas * estimate.std_error + 1e-12
