"""Single-stream cross-modal embedding learning for faces and voices.

One encoder maps both face images and voice spectrograms into a shared
latent space, trained with a joint softmax + class-center loss and
evaluated on verification, forced matching, and retrieval.
"""

from .preprocess import (InputTensor, SpectrogramMatrix, StftConfig, Waveform,
                         bilinear_resize, clip_or_pad, image_to_input,
                         spectrogram_to_input, stft_magnitude, to_mono_resample)
from .synth import (IdentityProfile, Manifest, SampleRecord, generate_dataset,
                    load_manifest, make_identities, render_face, render_voice)
from .encoder import (EncoderConfig, EncoderParams, backward, backward_batch,
                      forward, forward_batch, init_params)
from .optim import AdamState, adam_step
from .loss import (ClassifierHead, ClassCenters, LossConfig, MiniBatch,
                   center_distance, compute_centers, ema_center_update,
                   init_head, joint_loss, softmax_xent)
from .checkpoint import load_checkpoint, save_checkpoint
from .trainer import (EmbeddingTable, TrainConfig, export_embeddings,
                      plan_epoch, sample_batch, train)
from .evaluation import (EvalReport, VerificationPair, build_pairs, eer,
                         forced_match, matching_accuracy, recall_at_k,
                         roc_auc, similarity, verify)
from .projection import project_2d

__version__ = "0.1.0"
