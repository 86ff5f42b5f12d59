"""
Physics-validity rule sets
"""
