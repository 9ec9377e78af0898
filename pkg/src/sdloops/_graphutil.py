"""Iterative strongly-connected-components (Tarjan).

Kept free of recursion so that pathological graphs (10,000-node chains or
rings) cannot hit the interpreter's recursion limit.
"""

from __future__ import annotations

__all__ = ["strongly_connected_components"]


def strongly_connected_components(nodes, adj) -> list[list[str]]:
    """Tarjan's algorithm with an explicit stack.

    `nodes` fixes the visit order, `adj` maps node -> iterable of
    successors.  Components come out in reverse topological order; the
    members of each component keep stack order.  Deterministic for a
    given node order.
    """
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work: list[tuple[str, int]] = [(root, 0)]
        while work:
            node, child_i = work[-1]
            if child_i == 0:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            successors = adj.get(node, ())
            for i in range(child_i, len(successors)):
                succ = successors[i]
                if succ not in index:
                    work[-1] = (node, i + 1)
                    work.append((succ, 0))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            work.pop()
            if lowlink[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                components.append(comp)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return components
