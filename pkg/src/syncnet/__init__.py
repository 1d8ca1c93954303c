"""Scale-free exact output synchronization of discrete-time multi-agent systems.

Modules
-------
graph_topology
    Graphs, Laplacians, row-stochastic and expanded coupling matrices.
control_math
    Spectral, rank, zero and regulation-equation utilities; gain synthesis.
homogeneous
    Pre-compensated cascade and protocol for identical agents.
heterogeneous
    Target-model homogenization and regulated protocol for non-identical agents.
simulation
    Synchronous network simulation, closed-loop oracle and CSV logs.
scenario, cli
    JSON scenario files and the ``syncnet`` command line.
"""

__version__ = "0.1.0"
