"""Build a nverts/simplices hypergraph from the SocioPatterns High School 2013
contact records (columns: t i j class_i class_j, one row per 20 s contact).

Each simplex is a maximal clique of the contact graph within one 20 s window,
which is the usual construction for the contact-high-school hypergraph.

Usage: python3 build_contact_high_school.py High-School_data_2013.csv OUT_DIR
"""
import sys
from collections import defaultdict

import networkx as nx


def main(src, out_dir):
    windows = defaultdict(list)
    with open(src) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 3:
                continue
            t, i, j = int(parts[0]), int(parts[1]), int(parts[2])
            windows[t].append((i, j))
    nverts, simplices = [], []
    for t in sorted(windows):
        g = nx.Graph()
        g.add_edges_from(windows[t])
        for clique in sorted(sorted(c) for c in nx.find_cliques(g)):
            nverts.append(len(clique))
            simplices.extend(clique)
    with open(f"{out_dir}/contact-high-school-nverts.txt", "w") as fh:
        fh.write("".join(f"{k}\n" for k in nverts))
    with open(f"{out_dir}/contact-high-school-simplices.txt", "w") as fh:
        fh.write("".join(f"{v}\n" for v in simplices))
    print(f"{len(nverts)} simplices, {len(set(simplices))} nodes")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
