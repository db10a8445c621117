# Test package per lp-manifold