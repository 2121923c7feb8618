"""Joint SAR target recognition and segmentation.

A from-scratch numpy implementation of a shared-encoder / dual-decoder
convolutional network trained with hand-derived backpropagation, plus a
synthetic SAR chip generator, classical segmentation baselines, and
metric reporting.
"""

from .tensor import Rng, zero_pad, center_crop, gaussian_fill, inner_product
from .layers import (BNParams, ConvParams, PoolIndices, TransposedConvParams,
                     bn_backward, bn_forward, conv_backward, conv_forward,
                     maxpool_backward, maxpool_forward, relu_backward,
                     relu_forward, softmax, tconv_backward, tconv_forward)
from .losses import (LossValue, joint_loss, predict_classes, predict_masks,
                     recognition_loss, segmentation_loss)
from .network import MtlNetwork, NetworkConfig, load_checkpoint, save_checkpoint
from .train import EpochSummary, SgdState, sgd_step, train_epoch
from .data import (CorpusCounts, DataError, Dataset, Sample, SyntheticSpec,
                   TargetGeometry, augment_crops, augment_training_set,
                   build_corpus, center_crop_sample, default_classes,
                   generate_chip, load_manifest, make_eoc_splits, save_dataset,
                   stack_samples)
from .baselines import (BaselineReport, canny_segment, evaluate_baseline,
                        histogram256, otsu_threshold, quantize256)
from .metrics import (ConfusionMatrix, EvalReport, PixelAccuracyMatrix,
                      confusion, pixel_accuracy, pixel_confusion_counts)
from .report import emit_report, overlay_image
from .gradcheck import check_network, run_verification

__version__ = "0.1.0"
