# Configurazioni per lp-manifold