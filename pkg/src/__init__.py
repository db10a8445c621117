# Package source per lp-manifold