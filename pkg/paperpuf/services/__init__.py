"""
Services package - simulation, feature extraction, attacks and reporting
"""
