"""把偏差报告绘制为分组柱状图。

每个度量一张图：横轴分组为 方向（及过滤条件），组内每根柱子是一种方法。
SVG 输出逐字节可复现。
"""
import csv
import json
import os
from logging import getLogger

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from udit.constants import DIVERSITY_TABLE_FILENAME, REPORT_METRICS  # noqa: E402
from udit.exceptions import ArgumentError, ConfigurationError, DataError  # noqa: E402
from udit.metrics import BiasReport  # noqa: E402


_log = getLogger(__name__)

METRIC_TITLES = {
    'misclassification_rate': 'Misclassification rate',
    'drop_in_confidence': 'Drop in confidence',
    'feature_distance': 'Feature distance',
}

# 固定 SVG 中的元素 id 和元数据
_RC = {
    'svg.hashsalt': 'udit-report',
    'svg.fonttype': 'path',
    'figure.figsize': (6, 3.5),
}

HATCHES = [None, '//', '\\\\', 'xx', '..', '++']


def _group_label(report):
    label = report.direction or 'identity'
    if report.filter:
        label += ' [{}]'.format(', '.join(
            '{}={}'.format(key, value) for key, value in sorted(report.filter.items())))
    return label


def _layout(reports):
    groups, methods = [], []
    for report in reports:
        group = _group_label(report)
        method = report.method or 'model'
        if group not in groups:
            groups.append(group)
        if method not in methods:
            methods.append(method)
    return groups, methods


def _bar_chart(reports, metric, groups, methods, path, fmt):
    values = {(_group_label(r), r.method or 'model'): getattr(r, metric) for r in reports}
    width = 0.8 / len(methods)
    positions = np.arange(len(groups))
    with plt.rc_context(_RC):
        figure, axes = plt.subplots()
        for position, method in enumerate(methods):
            heights = [values.get((group, method), np.nan) for group in groups]
            axes.bar(positions + (position - (len(methods) - 1) / 2.0) * width, heights, width,
                     label=method, color=str(0.2 + 0.6 * position / max(1, len(methods) - 1)),
                     hatch=HATCHES[position % len(HATCHES)], edgecolor='k')
        axes.set_xticks(positions)
        axes.set_xticklabels(groups)
        axes.set_title(METRIC_TITLES[metric])
        axes.legend(loc='upper left')
        figure.tight_layout()
        figure.savefig(path, format=fmt, metadata={'Date': None} if fmt == 'svg' else None)
        plt.close(figure)
    return path


def write_diversity_table(reports, path):
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['method', 'direction', 'filter', 'diversity', 'n_diversity_pairs',
                         'n_inputs', 'n_samples_per_input'])
        for report in reports:
            writer.writerow([
                report.method or 'model',
                report.direction or '',
                json.dumps(report.filter, sort_keys=True) if report.filter else '',
                '{:.6f}'.format(report.diversity),
                report.n_diversity_pairs,
                report.n_inputs,
                report.n_samples_per_input,
            ])
    return path


def render_report(reports, out, formats=('svg',)):
    """为每个度量写一张分组柱状图（``<metric>.<fmt>``）和多样性表，返回全部文件路径。"""
    if not reports:
        raise ArgumentError("render_report needs at least one report")
    os.makedirs(out, exist_ok=True)
    groups, methods = _layout(reports)
    paths = []
    for metric in REPORT_METRICS:
        for fmt in formats:
            path = os.path.join(out, '{}.{}'.format(metric, fmt))
            paths.append(_bar_chart(reports, metric, groups, methods, path, fmt))
    paths.append(write_diversity_table(reports, os.path.join(out, DIVERSITY_TABLE_FILENAME)))
    _log.info("报告图表已写入 %s", out)
    return paths


def load_reports(paths):
    reports = []
    for path in paths:
        try:
            with open(path, encoding='utf-8') as handle:
                data = json.load(handle)
        except (OSError, ValueError) as exc:
            raise DataError("cannot read report {}: {}".format(path, exc))
        for item in data if isinstance(data, list) else [data]:
            reports.append(BiasReport.from_dict(item))
    return reports


def main(args, config):
    paths = list(config['reports']) + list(args.reports_args)
    if not paths:
        raise ConfigurationError("report needs at least one report file")
    formats = ('svg', 'png') if config['png'] else ('svg',)
    written = render_report(load_reports(paths), args.out, formats)
    print(json.dumps({'files': written}))
