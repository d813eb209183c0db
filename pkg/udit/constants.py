# 配置键
DATASET_ROOT_CONFIG_KEY = 'dataset_root'
EXTRACTOR_PATH_CONFIG_KEY = 'extractor_path'
SEED_CONFIG_KEY = 'seed'
LOGGING_CONFIG_KEY = 'LOGGING'
SEED_ENV_VAR = 'UDIT_SEED'

# 文件布局
DOMAINS = ('A', 'B')
IMAGES_DIRNAME = 'images'
MANIFEST_FILENAME = 'manifest.json'
LABELS_FILENAME = 'labels.csv'
EFFECTIVE_CONFIG_FILENAME = 'effective_config.json'
TRAIN_LOG_FILENAME = 'train_log.jsonl'
FAILURE_FILENAME = 'failure.json'
CHECKPOINT_DIRNAME = 'checkpoints'
FINAL_CHECKPOINT_FILENAME = 'final.ckpt'
CHECKPOINT_MANIFEST_MEMBER = 'manifest.json'
CHECKPOINT_STATE_MEMBER = 'state.pt'
CHECKPOINT_FORMAT_VERSION = 1

# 网络结构
SUPPORTED_IMAGE_SIZES = (64, 128)
STYLE_DIM = 8
BASE_CHANNELS = 64
N_RES_BLOCKS = 6
N_DISCRIMINATOR_SCALES = 3
NORM_EPS = 1e-5
LRELU_SLOPE = 0.2
INIT_STD = 0.02

# 训练
DEFAULT_LAMBDA_X = 10.0
DEFAULT_LAMBDA_C = 1.0
DEFAULT_LAMBDA_S = 1.0
DEFAULT_LAMBDA_U = 1.0
DEFAULT_LR = 1e-4
DEFAULT_BETAS = (0.5, 0.999)
DEFAULT_BATCH_SIZE = 4
DEFAULT_CHECKPOINT_EVERY = 1000
DEFAULT_LOG_EVERY = 100

# 语义提取器
DEFAULT_SWEEP_GRID = (2, 8, 16, 32, 64, 128, 256)
DEFAULT_TAP_POINT = 'stage4'
CLASSIFIER_VALIDATION_FRACTION = 0.2

# 评估
DIVERSITY_PAIR_COUNT = 19
DIVERSITY_INPUT_COUNT = 100
DEFAULT_SAMPLES_PER_INPUT = 10

# 翻译方向
DIRECTIONS = ('A->B', 'B->A')
CHECKPOINT_NAME_TEMPLATE = 'iter_{:06d}.ckpt'

# 命令行产物
CLASSIFIER_FILENAME = 'classifier.ckpt'
METRIC_CLASSIFIER_FILENAME = 'metric_classifier.ckpt'
EXTRACTOR_FILENAME = 'extractor.ckpt'
SWEEP_FILENAME = 'sweep.json'
REPORTS_FILENAME = 'bias_reports.json'
DIVERSITY_TABLE_FILENAME = 'diversity_table.csv'
REPORT_METRICS = ('misclassification_rate', 'drop_in_confidence', 'feature_distance')
