"""
Scenario and grid-file codecs
"""
