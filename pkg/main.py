#!/usr/bin/env python3
"""
Командная строка конвейера слабо контролируемого обнаружения
пространственно-временных аномалий.

Подкоманды: synth, tubes, extract, train, infer, eval, gradcheck.
Коды выхода: 0 - успех, 1 - ошибка использования, 2 - ошибка данных.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set

import numpy as np

from config.constants import (
    LABEL_NORMAL, LOSS_MODES, SCORING_MODES, SCORING_RANDOM, SCORING_TUBE, SPLIT_TEST, SPLIT_TRAIN,
)
from config.pipeline import PipelineConfig, apply_overrides, load_pipeline_config
from config.settings import CLIP_LENGTH, LOG_FILE, LOG_LEVEL
from evaluation.inference import predict_video, score_segments
from evaluation.metrics import FrameScoring
from evaluation.report import build_report, export_csv, save_report
from instances.bank import assemble_bag, subdivide_bag, tubes_by_video
from network.gradcheck import run_gradcheck
from storage.checkpoint_store import load_checkpoint, save_checkpoint
from storage.feature_store import FeatureStore
from storage.jsonl_store import (
    load_detections, load_ground_truth, load_tubes, save_predictions, save_tubes,
)
from storage.models import GroundTruthRecord, InstanceBag
from synthetic.extractor import extract_features
from synthetic.generator import generate_synthetic, load_scene
from training.trainer import save_loss_trace, train
from tubes.builder import build_video_tubes
from utils.exceptions import PipelineError, UsageError
from utils.logger import setup_logging
from workers.statistics_manager import StatisticsManager
from workers.video_worker import VideoStageWorker

logger = logging.getLogger(__name__)


class PipelineArgumentParser(argparse.ArgumentParser):
    """Парсер, превращающий ошибки разбора в UsageError."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='JSON-документ конфигурации')
    parser.add_argument('--seed', type=int, help='Зерно всей случайности')
    parser.add_argument('--threads', type=int, help='Число параллельных видео')
    parser.add_argument('--out', help='Путь результата')
    parser.add_argument('--log-level', help='Уровень логирования')
    parser.add_argument('--log-file', help='Файл логов')


def build_parser() -> PipelineArgumentParser:
    parser = PipelineArgumentParser(prog='stad', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', parser_class=PipelineArgumentParser)
    sub.required = True

    p = sub.add_parser('synth', help='Сгенерировать синтетический корпус')
    _shared_flags(p)
    p.add_argument('--positive', type=int, dest='synth.positive_videos')
    p.add_argument('--negative', type=int, dest='synth.negative_videos')
    p.add_argument('--frames', type=int, dest='synth.frames')
    p.add_argument('--objects', type=int, dest='synth.objects')
    p.add_argument('--anomaly-length', type=int, dest='synth.anomaly_length')
    p.add_argument('--dim', type=int, dest='synth.dim')
    p.add_argument('--delta', type=float, dest='synth.delta')
    p.add_argument('--sigma', type=float, dest='synth.sigma')
    p.add_argument('--segments', type=int, dest='synth.segments')
    p.add_argument('--test-fraction', type=float, dest='synth.test_fraction')

    p = sub.add_parser('tubes', help='Построить трубки по детекциям')
    _shared_flags(p)
    p.add_argument('--det', dest='paths.detections')
    p.add_argument('--lambda', type=float, dest='link.lambda_')
    p.add_argument('--eta', type=float, dest='link.eta')
    p.add_argument('--zeta1', type=int, dest='link.zeta1')
    p.add_argument('--zeta2', type=int, dest='link.zeta2')
    p.add_argument('--no-multivariate', action='store_const', const=False, dest='use_multivariate')

    p = sub.add_parser('extract', help='Признаки синтетического корпуса')
    _shared_flags(p)
    p.add_argument('--scene', dest='paths.scene')
    p.add_argument('--tubes', dest='paths.tubes')

    p = sub.add_parser('train', help='Обучить обе ветви')
    _shared_flags(p)
    _bag_flags(p)
    p.add_argument('--iterations', type=int, dest='train.iterations')
    p.add_argument('--lr', type=float, dest='train.learning_rate')
    p.add_argument('--batch-positive', type=int, dest='train.batch_positive')
    p.add_argument('--batch-negative', type=int, dest='train.batch_negative')
    p.add_argument('--bag-cap', type=int, dest='train.bag_cap')
    p.add_argument('--loss-mode', choices=LOSS_MODES, dest='train.loss_mode')
    p.add_argument('--heads', type=int, dest='train.heads')
    p.add_argument('--hidden1', type=int, dest='train.hidden1')
    p.add_argument('--hidden2', type=int, dest='train.hidden2')
    p.add_argument('--dropout', type=float, dest='train.dropout')
    p.add_argument('--weight-decay', type=float, dest='train.weight_decay')
    p.add_argument('--no-attention', action='store_const', const=False, dest='train.use_attention')
    p.add_argument('--m', type=int, dest='inference_m', help='Число частей трубки при обучении и выводе')
    p.add_argument('--whole-tubes', action='store_const', const=False, dest='train_on_subtubes',
                   help='Обучать трубочную ветвь на целых трубках')

    for name, help_text in (('infer', 'Лучшая трубка каждого видео'), ('eval', 'Полный отчет об оценке')):
        p = sub.add_parser(name, help=help_text)
        _shared_flags(p)
        _bag_flags(p)
        p.add_argument('--checkpoint', dest='paths.checkpoint')
        p.add_argument('--m', type=int, dest='inference_m')
        p.add_argument('--scoring', choices=SCORING_MODES, dest='scoring')
        if name == 'eval':
            p.add_argument('--det', dest='paths.detections')
            p.add_argument('--eps', type=float, nargs='+', dest='thresholds')
            p.add_argument('--far-threshold', type=float, dest='far_threshold')
            p.add_argument('--csv', dest='csv')
            p.add_argument('--baseline', action='store_true', help='Добавить случайный выбор трубки')

    p = sub.add_parser('gradcheck', help='Проверка градиентов конечными разностями')
    _shared_flags(p)
    p.add_argument('--seeds', type=int, default=20, help='Число зерен начиная с --seed')
    return parser


def _bag_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--tubes', dest='paths.tubes')
    parser.add_argument('--features', dest='paths.features')
    parser.add_argument('--gt', dest='paths.ground_truth')


def _overrides(args: argparse.Namespace) -> Dict:
    skip = {'command', 'config', 'out', 'log_level', 'log_file', 'csv', 'baseline', 'seeds'}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _select_split(records: Sequence[GroundTruthRecord], split: str) -> List[GroundTruthRecord]:
    """Записи нужной части; если ни одна не помечена так, то все."""
    chosen = [r for r in records if r.split == split]
    return chosen if chosen else list(records)


def _bag_factory(tubes_path: str, features: FeatureStore, cap: int, require_image: Optional[bool] = None,
                 parts: int = 1, clip_length: int = CLIP_LENGTH) -> Callable[[GroundTruthRecord], InstanceBag]:
    """Сборщик мешка по записи разметки; при parts > 1 трубки делятся на части."""
    grouped = tubes_by_video(load_tubes(tubes_path))

    def make(record: GroundTruthRecord) -> InstanceBag:
        bag = assemble_bag(record.video_id, record.label, grouped.get(record.video_id, []),
                           features, cap, require_image=require_image)
        return subdivide_bag(bag, parts, clip_length)
    return make


def _records_for_inference(config: PipelineConfig, features: FeatureStore) -> List[GroundTruthRecord]:
    if config.paths.ground_truth is not None:
        return _select_split(load_ground_truth(config.paths.ground_truth), SPLIT_TEST)
    videos = sorted({entry.video_id for entry in features.index.values()})
    return [GroundTruthRecord(video_id=v, label=LABEL_NORMAL) for v in videos]


def cmd_synth(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    out = args.out or config.paths.out
    if out is None:
        raise UsageError("synth: нужен --out")
    try:
        config.synth.validate()
    except ValueError as e:
        raise UsageError(f"synth: {e}") from e
    paths = generate_synthetic(config.synth, out)
    stats.add_counter('видео', config.synth.positive_videos + config.synth.negative_videos)
    for name, path in paths.items():
        logger.info(f"[SYNTH] {name}: {path}")


def cmd_tubes(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    config.validate(required=('detections',))
    out = args.out or config.paths.tubes
    if out is None:
        raise UsageError("tubes: нужен --out")
    dets = load_detections(config.paths.detections)
    by_video: Dict[str, list] = {}
    for det in dets:
        by_video.setdefault(det.video_id, []).append(det)

    worker = VideoStageWorker(
        'tubes', lambda video: build_video_tubes(by_video[video], config.link, config.use_multivariate),
        config.threads)
    stats.register_worker(worker)
    results = worker.run(sorted(by_video))
    tubes = [t for video_tubes in results for t in video_tubes]
    count = save_tubes(out, tubes)
    stats.add_counter('трубок', count)
    logger.info(f"[TUBES] ✅ {count} трубок из {len(dets)} детекций записано в {out}")


def cmd_extract(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    config.validate(required=('scene', 'tubes'))
    out = args.out or config.paths.features
    if out is None:
        raise UsageError("extract: нужен --out")
    scene = load_scene(config.paths.scene)
    store = extract_features(scene, load_tubes(config.paths.tubes), config.threads, stats)
    store.save(out)
    stats.add_counter('экземпляров', len(store))


def cmd_train(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    config.validate(required=('tubes', 'features', 'ground_truth'))
    out = args.out or config.paths.checkpoint
    if out is None:
        raise UsageError("train: нужен --out")
    features = FeatureStore.load(config.paths.features)
    records = _select_split(load_ground_truth(config.paths.ground_truth), SPLIT_TRAIN)

    parts = config.inference_m if config.train_on_subtubes else 1
    make_bag = _bag_factory(config.paths.tubes, features, config.train.bag_cap,
                            parts=parts, clip_length=config.clip_length)
    worker = VideoStageWorker('bags', make_bag, config.threads, describe=lambda r: r.video_id)
    stats.register_worker(worker)
    bags = worker.run(records)

    kind = 'целые трубки' if parts == 1 else f"части по M={parts}"
    logger.info(f"[TRAIN] Трубочные экземпляры: {kind}")
    result = train(bags, config.train)
    result.checkpoint.extra['tube_parts'] = parts
    save_checkpoint(out, result.checkpoint)
    trace_path = Path(out).with_suffix('.loss.csv')
    save_loss_trace(trace_path, result.trace)
    stats.add_counter('итераций', config.train.iterations)
    if len(result.trace):
        stats.add_counter('последняя потеря', float(result.trace['total'].iloc[-2:].sum()))
    logger.info(f"[TRAIN] Контрольная точка {out}, журнал потерь {trace_path}")


def _predict(config: PipelineConfig, stats: StatisticsManager):
    """Общая часть infer и eval: мешки тестовых видео и предсказания."""
    config.validate(required=('tubes', 'features', 'checkpoint'))
    features = FeatureStore.load(config.paths.features)
    checkpoint = load_checkpoint(config.paths.checkpoint)
    records = _records_for_inference(config, features)
    trained_parts = checkpoint.extra.get('tube_parts')
    if trained_parts not in (None, 1) and trained_parts != config.inference_m:
        logger.warning(f"[INFER] ⚠️ Трубочная ветвь обучена на частях M={trained_parts}, "
                       f"вывод идет с M={config.inference_m}")

    require_image = config.scoring not in (SCORING_TUBE, SCORING_RANDOM)
    make_bag = _bag_factory(config.paths.tubes, features, config.train.bag_cap, require_image)
    bag_worker = VideoStageWorker('bags', make_bag, config.threads, describe=lambda r: r.video_id)
    stats.register_worker(bag_worker)
    bags = bag_worker.run(records)

    rng = np.random.default_rng([config.seed, 3])
    if config.scoring == SCORING_RANDOM:
        # общий генератор: последовательно для воспроизводимости
        predictions = [predict_video(b, checkpoint.nets, config.inference_m, config.clip_length,
                                     config.scoring, rng) for b in bags]
    else:
        infer_worker = VideoStageWorker(
            'infer', lambda bag: predict_video(bag, checkpoint.nets, config.inference_m,
                                               config.clip_length, config.scoring),
            config.threads, describe=lambda b: b.video_id)
        stats.register_worker(infer_worker)
        predictions = infer_worker.run(bags)
    return records, bags, predictions, checkpoint


def cmd_infer(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    out = args.out or config.paths.predictions
    if out is None:
        raise UsageError("infer: нужен --out")
    _, _, predictions, _ = _predict(config, stats)
    count = save_predictions(out, predictions)
    stats.add_counter('видео', count)
    stats.add_counter('без локализации', sum(1 for p in predictions if not p.localized))


def _detector_frames(path: str) -> Dict[str, Set[int]]:
    frames: Dict[str, Set[int]] = {}
    for det in load_detections(path):
        frames.setdefault(det.video_id, set()).add(det.frame)
    return frames


def cmd_eval(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    if config.paths.checkpoint is None:
        raise UsageError("eval: нужен --checkpoint")
    config.validate(required=('tubes', 'features', 'checkpoint', 'ground_truth', 'detections'))
    out = args.out or config.paths.out
    if out is None:
        raise UsageError("eval: нужен --out")

    records, bags, predictions, checkpoint = _predict(config, stats)
    detector_frames = _detector_frames(config.paths.detections)

    scorings = []
    for record, bag in zip(records, bags):
        if not bag.videolet_instances:
            continue
        spans = [v.span for v in bag.videolet_instances]
        frame_count = record.frame_count or max(e for _, e in spans)
        scorings.append(FrameScoring(record.video_id, frame_count, spans, score_segments(bag, checkpoint.nets),
                                     record.abnormal_frames, record.is_abnormal))

    baseline = None
    if args.baseline:
        rng = np.random.default_rng([config.seed, 4])
        baseline = [predict_video(b, checkpoint.nets, config.inference_m, config.clip_length, SCORING_RANDOM, rng)
                    for b in bags]

    report = build_report(predictions, records, detector_frames, config.thresholds, config.far_threshold,
                          frame_scorings=scorings, baseline=baseline, config=config.to_dict())
    save_report(out, report)
    if args.csv:
        export_csv(args.csv, report)
    stats.print_metrics_report(
        {'VAUC': report.vauc, 'MIoU': report.miou, 'AUC по кадрам': report.frame_auc,
         'Ложные тревоги': report.false_alarm_rate},
        report.iou_at,
    )


def cmd_gradcheck(config: PipelineConfig, args, stats: StatisticsManager) -> None:
    if args.seeds < 1:
        raise UsageError("gradcheck: --seeds должно быть положительным")
    results = run_gradcheck(range(config.seed, config.seed + args.seeds))
    failed = [r.seed for r in results if not r.passed]
    stats.add_counter('зерен', len(results))
    stats.add_counter('макс. ошибка', max(r.max_error for r in results))
    if failed:
        raise PipelineError(f"Проверка градиентов не пройдена для зерен {failed}")


COMMANDS = {
    'synth': cmd_synth,
    'tubes': cmd_tubes,
    'extract': cmd_extract,
    'train': cmd_train,
    'infer': cmd_infer,
    'eval': cmd_eval,
    'gradcheck': cmd_gradcheck,
}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа командной строки.

    Args:
        argv: Аргументы без имени программы

    Returns:
        Код выхода: 0, 1 (использование) или 2 (данные)
    """
    try:
        args = build_parser().parse_args(argv)
        setup_logging(level=args.log_level or LOG_LEVEL, log_file=args.log_file or LOG_FILE,
                      command=args.command)
        config = apply_overrides(load_pipeline_config(args.config), _overrides(args))
        config.validate()
    except UsageError as e:
        print(f"Ошибка использования: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    stats = StatisticsManager(args.command)
    try:
        COMMANDS[args.command](config, args, stats)
    except UsageError as e:
        print(f"Ошибка использования: {e}", file=sys.stderr)
        return 1
    except (PipelineError, ValueError, OSError) as e:
        logger.error(f"[{args.command.upper()}] ❌ {e}")
        return 2
    stats.print_status_report()
    return 0


if __name__ == "__main__":
    sys.exit(cli())
