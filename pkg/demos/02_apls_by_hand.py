"""APLS on a graph small enough to check with pencil and paper.

The ground truth is a bent road from A(0, 0) over (4, 3) to B(8, 0), so its
length is 5 + 5 = 10. The proposal is the straight chord A-B, length 8.

  gt -> proposal:  |10 - 8| / 10 = 0.20, direction score 0.80
  proposal -> gt:  |8 - 10| / 8  = 0.25, direction score 0.75
  final score is the mean of the two directions, 0.775

Then we drop the proposal entirely (every path gets the maximum penalty) and
break the gt road in the middle, to see how a gap is punished.
"""

from pplinknet.graph import SpatialGraph
from pplinknet.metrics import apls


def bent_road():
    g = SpatialGraph()
    a, b = g.add_node(0, 0), g.add_node(8, 0)
    g.add_edge(a, b, [(0, 0), (4, 3), (8, 0)])
    return g


def main():
    gt = bent_road()
    chord = SpatialGraph.from_segments([(0, 0), (8, 0)], [(0, 1)])
    rep = apls(gt, chord)
    print(f"chord:      gt->prop {rep.gt_to_prop:.3f}  prop->gt {rep.prop_to_gt:.3f}  APLS {rep.score:.3f}")

    rep = apls(gt, gt.copy())
    print(f"identical:  APLS {rep.score:.3f}")

    rep = apls(gt, SpatialGraph())
    print(f"empty:      APLS {rep.score:.3f}  (the empty direction has no paths and scores 0)")

    # a long straight road with a 4 px hole in the proposal
    long_gt = SpatialGraph.from_segments([(0, 0), (200, 0)], [(0, 1)])
    gap = SpatialGraph.from_segments([(0, 0), (98, 0), (102, 0), (200, 0)], [(0, 1), (2, 3)])
    for spacing in (50.0, 20.0):
        rep = apls(long_gt, gap, spacing=spacing)
        print(f"4 px gap, spacing {spacing:4.0f}: APLS {rep.score:.3f} "
              f"over {rep.n_gt_to_prop} + {rep.n_prop_to_gt} node pairs")


if __name__ == "__main__":
    main()
