"""robustmix: a desk-scale laboratory for adversarially robust training and
inference via latent-space mixup."""

__version__ = "0.1.0"

from .attacks import (AT_TRAIN_BUDGET, EVAL_PROFILES, AdaptiveConfig, AttackBudget,
                      adaptive_pgd_varmi, fgsm, pgd, pgd_targeted, project,
                      second_likely_targets, spsa)
from .checkpoint import (CheckpointError, load_checkpoint, read_header,
                         save_checkpoint)
from .corruptions import CORRUPTION_KINDS, SEVERITY_TABLES, CorruptionSpec, corrupt, corrupt_batch
from .data import (Dataset, DataError, FormatError, IngestionError, LabeledExample,
                   SyntheticSpec, batches, load_cifar10, load_mnist, one_hot,
                   subsample, synthetic_dataset)
from .inference import (InferencePolicy, Pool, build_pool_other_labels, mi_ol_predict,
                        plain_predict, predict, varmi_predict)
from .metrics import (CalibrationReport, RobustnessReport, adaptive_eval,
                      confidences_from_outputs, corruption_eval, ece, frechet_distance,
                      latent_stat_distance, local_linearity_curve, local_linearity_error,
                      oblivious_eval)
from .models import (ModelConfig, build_model, cross_entropy, finite_diff_check,
                     flat_parameters, grad_input, load_model)
from .seeding import derive_rng, derive_seed
from .training import RiskReport, TrainConfig, at_step, estimate_risks, iat_step, train
from .vae import (IdentityVae, Vae, VaeConfig, decode_mean, encode_mean, load_vae, mmd,
                  save_vae, train_vae, train_vae_adversarial, vae_loss)
from .vicinal import (MixupConfig, VicinalSample, manifold_mixup_batch, mixup_batch,
                      mixup_pair, sample_lambda, sample_lambda_batch, varerm_batch,
                      varerm_sample, varmixup_batch, varmixup_pair)
