"""Default configuration values for PEMI prompt tuning."""

# Template
DEFAULT_LAYOUT = "P:4 A1 P:4 MASK P:4 SEP P:4 A2 P:4"
DEFAULT_MIN_COUNT = 1

# Encoder (toy stand-in for RoBERTa-base)
DEFAULT_D_MODEL = 64
DEFAULT_N_LAYERS = 4
DEFAULT_N_HEADS = 4
DEFAULT_D_FF = 256
DEFAULT_MAX_SEQ_LEN = 128
DEFAULT_ENCODER_SEED = 0
DEFAULT_INIT_STD = 0.02
DEFAULT_INIT_SCHEME = "scaled"
DEFAULT_LAYER_NORM_EPS = 1e-5
DEFAULT_PROMPT_POSITIONS = "keep"

# Verbalizer
DEFAULT_VERBALIZER_MODE = "hlr"
DEFAULT_NORMALIZATION = "softmax"

# Training
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BATCH_SIZE = 8
DEFAULT_MAX_EPOCHS = 15
DEFAULT_EVAL_STEP = 500
DEFAULT_TRAIN_SEED = 0
DEFAULT_PATIENCE = 0
DEFAULT_ADAM_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8

# Synthetic data
DEFAULT_SYNTH_PER_LABEL = 200
DEFAULT_SYNTH_VOCAB_SIZE = 64
DEFAULT_SYNTH_SIGNATURE_SIZE = 3
DEFAULT_SYNTH_SEED = 0

# Embedding export
DEFAULT_PCA_ITERATIONS = 200
DEFAULT_PCA_TOLERANCE = 1e-9

# Output
DEFAULT_OUT_DIR = "runs/pemi"
DEFAULT_LOG_LEVEL = "info"
