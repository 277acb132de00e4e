from typing import List

import networkx as nx
import numpy as np
import scipy.sparse as sp

from zrpflux.common import logger


class StateGraph(nx.Graph):
    """
    Transition graph of a reversible generator: one node per state index, an edge
    wherever the generator has a positive off-diagonal rate.
    """

    @classmethod
    def from_generator(cls, generator) -> "StateGraph":
        g = cls()
        size = generator.shape[0]
        g.add_nodes_from(range(size))
        coo = sp.coo_matrix(generator)
        off = (coo.row != coo.col) & (coo.data > 0)
        g.add_edges_from(zip(coo.row[off].tolist(), coo.col[off].tolist()))
        return g

    @property
    def connected(self) -> bool:
        if self.number_of_nodes() == 0:
            return True
        return nx.is_connected(self)

    def components(self) -> List[np.ndarray]:
        parts = [np.array(sorted(c)) for c in nx.connected_components(self)]
        if len(parts) > 1:
            logger.debug(f"State graph splits into {len(parts)} components")
        return parts
