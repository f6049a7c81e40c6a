"""Code structure graph simplification and edge-aware GNN vulnerability detection."""
