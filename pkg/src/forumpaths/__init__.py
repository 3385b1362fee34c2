"""Post/reply path analysis of threaded forums.

Each user's history is split into an ordered path of posts (p) and received
replies (r) plus a timing vector.  The modules cover ingestion, path
statistics, generative path models, inter-event timing, dead zones, forum
features, clustering and plotting.
"""

__version__ = "0.1.0"
