"""
Константы форматов файлов и перечислений конвейера.
"""

# Бинарный файл признаков
FEATURE_MAGIC = b'STFV'
FEATURE_VERSION = 1
FEATURE_INDEX_SUFFIX = '.index.json'

# Контрольная точка
CHECKPOINT_MAGIC = b'STCK'
CHECKPOINT_VERSION = 1

# Виды трубок
TUBE_UNARY = 'unary'
TUBE_MULTIVARIATE = 'multivariate'
TUBE_KINDS = (TUBE_UNARY, TUBE_MULTIVARIATE)

# Дорожки признаков
TRACK_REGION = 'region'
TRACK_IMAGE = 'image'
TRACK_VIDEOLET = 'videolet'
TRACKS = (TRACK_REGION, TRACK_IMAGE, TRACK_VIDEOLET)

# Источники экземпляров
SOURCE_TUBE_REGION = 'tube_region'
SOURCE_TUBE_IMAGE = 'tube_image'
SOURCE_VIDEOLET = 'videolet'

# Метки видео
LABEL_ABNORMAL = 'abnormal'
LABEL_NORMAL = 'normal'
SPLIT_TRAIN = 'train'
SPLIT_TEST = 'test'

# Ветви сети
BRANCH_TUBE = 'tube'
BRANCH_TEMPORAL = 'temporal'

# Режимы функции потерь
LOSS_MG_RANK_CE = 'mg_rank_ce'
LOSS_RANK_CE = 'rank_ce'
LOSS_MG_RANK = 'mg_rank'
LOSS_RANK = 'rank'
LOSS_CE = 'ce'
LOSS_MODES = (LOSS_MG_RANK_CE, LOSS_RANK_CE, LOSS_MG_RANK, LOSS_RANK, LOSS_CE)

# Агрегация оценок при выводе
SCORING_DUAL = 'dual'
SCORING_TUBE = 'tube'
SCORING_TEMPORAL = 'temporal'
SCORING_RANDOM = 'random'
SCORING_MODES = (SCORING_DUAL, SCORING_TUBE, SCORING_TEMPORAL, SCORING_RANDOM)

# Численная защита логарифма
SCORE_EPSILON = 1e-7

# Пороги локализации по умолчанию
DEFAULT_EPS_THRESHOLDS = (0.1, 0.2, 0.3)

# Синтетическая сцена (720 x 1280)
CANVAS_HEIGHT = 720
CANVAS_WIDTH = 1280
SYNTHETIC_CATEGORIES = (
    'person', 'car', 'bicycle', 'motorcycle', 'truck', 'bus', 'dog', 'backpack'
)
