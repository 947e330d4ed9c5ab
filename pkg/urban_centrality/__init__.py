"""
Urban centrality from geo-located business data.
"""
