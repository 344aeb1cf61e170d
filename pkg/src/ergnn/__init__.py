"""ER-GNN: fraud detection with similarity filtering, an RL-tuned threshold and relation aggregation."""
