"""Walk a six-customer toy graph through the reduction pipeline one step at a time.

Run with ``python demos/toy_reduction.py``.
"""

from waml.graph import NodeType
from waml.reduction import (ReductionConfig, candidate_filter, project_copurchase, reduce_pipeline,
                            restrict_attached_edges, threshold_filter)

C, P, S, A = NodeType.CUSTOMER, NodeType.PRODUCT, NodeType.SELLER, NodeType.CATEGORY

baskets = {"c1": ["p1", "p3"], "c2": ["p1", "p3", "p4"], "c3": ["p2", "p5"],
           "c4": ["p2", "p5", "p6"], "c5": ["p4", "p6"], "c6": ["p4", "p6"]}
seller_edges = [("s1", "p1"), ("s1", "p4"), ("s2", "p5"), ("s2", "p6"), ("s3", "p6")]
category_edges = [("a1", "p1"), ("a1", "p3"), ("a1", "p4"), ("a2", "p6")]
candidates = {"p1", "p2"}

cp = [(c, p) for c, items in baskets.items() for p in items]

# Step 1: customers vanish; every pair of products bought by the same customer
# becomes an edge weighted by the number of such customers.
projected = project_copurchase(cp)
print("co-purchase edges:")
for e in projected:
    print(f"  {e.u}-{e.v}  shared by {e.count}")

# Step 2: weak pairs are dropped.
strong = threshold_filter(projected, 2)
print("after threshold 2:", [f"{e.u}-{e.v}" for e in strong])

# Step 3: only edges touching a candidate survive. Their endpoints form the
# training product set.
kept, training = candidate_filter(strong, candidates)
print("touching candidates:", [f"{e.u}-{e.v}" for e in kept])
print("training products:", sorted(training))

# Step 4: seller and category edges pointing outside the training set go.
sp, ap = restrict_attached_edges(seller_edges, category_edges, training)
print("seller edges kept:", sp)
print("category edges kept:", ap)

# The same thing in one call, with a size report.
nodes = ([(c, C) for c in baskets] + [(f"p{i}", P) for i in range(1, 7)]
         + [("s1", S), ("s2", S), ("s3", S), ("a1", A), ("a2", A)])
edges = ([(c, p, "CP") for c, p in cp] + [(s, p, "SP") for s, p in seller_edges]
         + [(a, p, "AP") for a, p in category_edges])
graph, report = reduce_pipeline(nodes, edges, ReductionConfig(2, frozenset(candidates)))
print(f"\nreduced graph: {graph.num_nodes} nodes, {graph.num_edges} edges")
for key, value in report.as_flat().items():
    print(f"  {key:36s} {value}")
