from .attacks import feasible_box, fgsm_attack, pgd_attack
from .ensemble import (
    ensemble_accuracy,
    ensemble_from_checkpoints,
    ensemble_predict,
    ensemble_predict_batch,
    even_indices,
    member_accuracies,
    sample_ensemble_along_path,
)
from .diagnostics import coherence_score, diversity_score, paired_cosine
