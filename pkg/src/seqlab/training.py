"""Training loop, decoding, checkpoints and throughput measurement."""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Optimizer, TrainingError, clip_grad_norm
from .config import ModelConfig, format_config, parse_config_text
from .data import Alphabets, Instance, batch_instances, build_alphabets, read_corpus
from .data.corpus import format_token_line
from .evaluation import EvalReport, evaluate_classification, evaluate_spans
from .inference import EvaluationError
from .model import Prediction, SequenceModel, build_model
from .representation import ContextualProvider, FileProvider, SyntheticEncoderProvider

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PROVIDER_SUFFIX = ".ctx"
SYNTHETIC_PROVIDER = "synthetic"


class CheckpointError(RuntimeError):
    pass


# -- providers ----------------------------------------------------------------------

def _placement(config: ModelConfig) -> str:
    return "low_level" if config.low_level_transformer else "high_level"


def load_provider(config: ModelConfig, corpora: Dict[str, Sequence[Instance]]) -> Optional[ContextualProvider]:
    """Resolve the transformer setting into a provider.

    ``synthetic`` or ``synthetic:<dim>`` builds a frozen random encoder; any
    other value names a directory holding ``<corpus basename>.ctx`` files.
    """
    source = config.provider_source
    if not source:
        return None
    if source == SYNTHETIC_PROVIDER or source.startswith(SYNTHETIC_PROVIDER + ":"):
        _, _, dim = source.partition(":")
        dim = int(dim) if dim else (config.provider_dim or 64)
        return SyntheticEncoderProvider(dim=dim, placement=_placement(config))
    if not os.path.isdir(source):
        raise FileNotFoundError(f"provider directory {source!r} does not exist")
    pairs = []
    for path, instances in corpora.items():
        ctx = os.path.join(source, os.path.basename(path) + PROVIDER_SUFFIX)
        if not os.path.exists(ctx):
            raise FileNotFoundError(f"no provider file {ctx!r} for corpus {path!r}")
        pairs.append(([inst.words for inst in instances], ctx))
    return FileProvider.from_files(pairs, placement=_placement(config))


# -- prediction ---------------------------------------------------------------------

def predict_corpus(model: SequenceModel, instances: Sequence[Instance], batch_size: int,
                   nbest: int = 1) -> List[Prediction]:
    """Predictions in input order."""
    out: List[Optional[Prediction]] = [None] * len(instances)
    batches = batch_instances(instances, model.alphabets, batch_size, model.classification,
                              begin_token=model.begin_token)
    for batch in batches:
        for idx, pred in zip(batch.indices, model.predict(batch, nbest)):
            out[idx] = pred
    return out


def check_gold_labels(model: SequenceModel, instances: Sequence[Instance]) -> None:
    known = set(model.alphabets.label.items())
    for n, inst in enumerate(instances):
        gold = [inst.class_label] if model.classification else (inst.labels or [])
        unseen = sorted({g for g in gold if g is not None and g not in known})
        if unseen:
            raise EvaluationError(f"sentence {n + 1}: gold label(s) {unseen} never seen in training")


def score_predictions(model: SequenceModel, instances: Sequence[Instance], preds: Sequence[Prediction],
                      scheme: str = "auto") -> EvalReport:
    if model.classification:
        return evaluate_classification([i.class_label for i in instances], [p.class_label for p in preds])
    return evaluate_spans([i.labels for i in instances], [p.labels for p in preds], scheme)


def evaluate_model(model: SequenceModel, instances: Sequence[Instance], batch_size: int,
                   scheme: str = "auto") -> EvalReport:
    check_gold_labels(model, instances)
    start = time.perf_counter()
    preds = predict_corpus(model, instances, batch_size)
    elapsed = time.perf_counter() - start
    report = score_predictions(model, instances, preds, scheme)
    report.sentences_per_second = len(instances) / elapsed if elapsed > 0 else 0.0
    return report


# -- training -----------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    loss: float
    learning_rate: float
    dev: EvalReport
    seconds: float


@dataclass
class TrainResult:
    model: SequenceModel
    optimizer: Optimizer
    best_epoch: int  # 0 means the initialization
    best_metric: float
    history: List[EpochLog] = field(default_factory=list)


def _snapshot(model: SequenceModel) -> Dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


def _restore(model: SequenceModel, params: Dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters():
        p.data[...] = params[name]


def make_optimizer(model: SequenceModel, config: ModelConfig) -> Optimizer:
    hyper = {"momentum": config.momentum}
    if config.weight_decay is not None:
        hyper["weight_decay"] = config.weight_decay
    return Optimizer(model.parameters(), config.optimizer, config.lr, **hyper)


def train(config: ModelConfig, provider: Optional[ContextualProvider] = None,
          train_data: Optional[Sequence[Instance]] = None,
          dev_data: Optional[Sequence[Instance]] = None) -> TrainResult:
    """Train for ``config.iteration`` epochs, keeping the parameters of the best dev epoch.

    Corpora are read from the config paths unless passed in. Without a dev set
    the training data is used for model selection.
    """
    classification = config.sentence_classification
    corpora: Dict[str, Sequence[Instance]] = {}
    if train_data is None:
        train_data = read_corpus(config.train_dir, classification)
        corpora[config.train_dir] = train_data
    if dev_data is None and config.dev_dir:
        dev_data = read_corpus(config.dev_dir, classification)
        corpora[config.dev_dir] = dev_data
    if not train_data:
        raise TrainingError("training corpus is empty")
    extra = [w for inst in (dev_data or []) for w in inst.words]
    alphabets = build_alphabets(train_data, config.feature_names, extra_words=extra)
    if provider is None:
        provider = load_provider(config, corpora)
    model = build_model(config, alphabets, provider)
    optimizer = make_optimizer(model, config)
    selection = dev_data if dev_data else train_data
    if dev_data:
        check_gold_labels(model, dev_data)

    best_epoch, best_metric, best_params = 0, -1.0, _snapshot(model)
    history: List[EpochLog] = []
    base_lr = config.lr
    for epoch in range(1, config.iteration + 1):
        start = time.perf_counter()
        optimizer.learning_rate = base_lr / (1.0 + config.lr_decay * (epoch - 1))
        batches = batch_instances(train_data, alphabets, config.batch_size, classification,
                                  shuffle_seed=config.seed + epoch, begin_token=model.begin_token)
        total = 0.0
        for b, batch in enumerate(batches, start=1):
            optimizer.zero_grad()
            loss = model.loss(batch, train=True)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"loss diverged ({value}) at epoch {epoch}, batch {b}")
            loss.backward()
            if config.clip > 0:
                clip_grad_norm(optimizer.params, config.clip)
            try:
                optimizer.step()
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
            model.after_step()
            total += value
        report = evaluate_model(model, selection, config.batch_size, config.tag_scheme)
        seconds = time.perf_counter() - start
        history.append(EpochLog(epoch, total, optimizer.learning_rate, report, seconds))
        logger.info("epoch %d loss %.4f metric %.4f (%.1fs)", epoch, total, report.main_metric, seconds)
        if report.main_metric > best_metric:
            best_epoch, best_metric, best_params = epoch, report.main_metric, _snapshot(model)

    _restore(model, best_params)
    if config.iteration == 0:
        best_metric = evaluate_model(model, selection, config.batch_size, config.tag_scheme).main_metric
    if config.model_dir:
        save_checkpoint(config.model_dir, model, optimizer)
    return TrainResult(model, optimizer, best_epoch, best_metric, history)


# -- checkpoints --------------------------------------------------------------------

def _provider_meta(provider: Optional[ContextualProvider]) -> Optional[dict]:
    if provider is None:
        return None
    meta = {"dim": provider.dim, "begin_token": bool(provider.begin_token), "placement": provider.placement}
    if isinstance(provider, SyntheticEncoderProvider):
        meta.update(kind="synthetic", layers=len(provider.blocks),
                    ffn_mult=provider.blocks[0]["ff1"].shape[1] // provider.dim if provider.blocks else 4,
                    seed=provider._seed)
    else:
        meta["kind"] = "file"
    return meta


def save_checkpoint(path, model: SequenceModel, optimizer: Optional[Optimizer] = None) -> None:
    """One ``.npz`` holding a JSON header plus every named parameter (and optimizer buffers)."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": format_config(model.config),
        "alphabets": model.alphabets.to_dict(),
        "provider": _provider_meta(model.provider),
    }
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters()}
    if optimizer is not None:
        st = optimizer.state
        meta["optimizer"] = {"kind": st.kind, "learning_rate": st.learning_rate, "step_count": st.step_count}
        for pname, slots in st.buffers.items():
            for key, value in slots.items():
                arrays[f"optim/{pname}/{key}"] = value
    arrays["__meta__"] = np.array(json.dumps(meta))
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:  # a file handle stops numpy from appending ".npz"
        np.savez(f, **arrays)


@dataclass
class Checkpoint:
    config: ModelConfig
    alphabets: Alphabets
    params: Dict[str, np.ndarray]
    provider: Optional[dict]
    optimizer: Optional[dict] = None
    optimizer_buffers: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


def read_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            params, buffers = {}, {}
            for key in z.files:
                if key.startswith("param/"):
                    params[key[len("param/"):]] = z[key]
                elif key.startswith("optim/"):
                    pname, _, slot = key[len("optim/"):].rpartition("/")
                    buffers.setdefault(pname, {})[slot] = z[key]
    except (OSError, ValueError, KeyError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path!r}: {exc}") from None
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint format {meta.get('format_version')} is not supported "
                              f"(expected {CHECKPOINT_VERSION})")
    return Checkpoint(parse_config_text(meta["config"]), Alphabets.from_dict(meta["alphabets"]), params,
                      meta["provider"], meta.get("optimizer"), buffers)


def model_from_checkpoint(ckpt: Checkpoint, provider: Optional[ContextualProvider] = None) -> SequenceModel:
    config = copy.deepcopy(ckpt.config)
    # pretrained tables are already baked into the saved parameters
    config.word_emb_dir = None
    for feat in config.features:
        feat.emb_dir = None
    if ckpt.provider is not None and provider is None and ckpt.provider["kind"] == "synthetic":
        p = ckpt.provider
        provider = SyntheticEncoderProvider(p["dim"], p["layers"], p["ffn_mult"], p["seed"], p["placement"])
    if ckpt.provider is not None and provider is not None:
        if provider.dim != ckpt.provider["dim"] or bool(provider.begin_token) != ckpt.provider["begin_token"]:
            raise CheckpointError(f"provider (dim {provider.dim}, begin token {bool(provider.begin_token)}) does not "
                                  f"match the checkpoint's (dim {ckpt.provider['dim']}, "
                                  f"begin token {ckpt.provider['begin_token']})")
    model = build_model(config, ckpt.alphabets, provider)
    names = dict(model.named_parameters())
    if set(names) != set(ckpt.params):
        raise CheckpointError(f"parameter sets differ: missing {sorted(set(names) - set(ckpt.params))}, "
                              f"unexpected {sorted(set(ckpt.params) - set(names))}")
    for name, p in names.items():
        if p.data.shape != ckpt.params[name].shape:
            raise CheckpointError(f"parameter {name}: shape {ckpt.params[name].shape} vs model {p.data.shape}")
        p.data[...] = ckpt.params[name]
    return model


def load_checkpoint(path, provider: Optional[ContextualProvider] = None) -> SequenceModel:
    return model_from_checkpoint(read_checkpoint(path), provider)


# -- decoding -----------------------------------------------------------------------

@dataclass
class DecodeResult:
    predictions: List[Prediction]
    report: Optional[EvalReport]
    seconds: float
    sentences_per_second: float


def check_compatible(config: ModelConfig, ckpt: Checkpoint) -> None:
    """The decode config may omit architecture keys, but what it states must agree with the checkpoint."""
    problems = []
    if config.sentence_classification != ckpt.config.sentence_classification:
        problems.append("sentence_classification differs")
    if config.features and config.feature_names != list(ckpt.alphabets.features):
        problems.append(f"features {config.feature_names} vs checkpoint {list(ckpt.alphabets.features)}")
    if problems:
        raise CheckpointError("decode config does not match the checkpoint: " + "; ".join(problems))


def write_predictions(config: ModelConfig, model: SequenceModel, instances: Sequence[Instance],
                      preds: Sequence[Prediction], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst, pred in zip(instances, preds):
            if model.classification:
                f.write(pred.class_label + "\n")
                continue
            for t, (token, label) in enumerate(zip(inst.tokens, pred.labels)):
                gold = inst.labels[t] if inst.labels is not None else None
                f.write(f"{format_token_line(token, gold)} {label}\n")
            f.write("\n")


def write_nbest(path, preds: Sequence[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pred in preds:
            result = pred.nbest
            for k, labels in enumerate(pred.nbest_labels, start=1):
                f.write(f"# {k} {result.scores[k - 1]:.6f} {result.probs[k - 1]:.6f}\n")
                f.write(" ".join(labels) + "\n")
            f.write("\n")


def write_attention(path, instances: Sequence[Instance], preds: Sequence[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst, pred in zip(instances, preds):
            tokens = inst.words
            weights = list(pred.attention)
            if len(weights) == len(tokens) + 1:  # drop the begin-token slot
                weights = weights[1:]
            for tok, w in zip(tokens, weights):
                f.write(f"{tok}\t{w:.8g}\n")
            f.write("\n")


def decode(config: ModelConfig, model: Optional[SequenceModel] = None,
           provider: Optional[ContextualProvider] = None) -> DecodeResult:
    """Label ``raw_dir`` with the model at ``model_dir`` and write ``decode_dir`` (+ .nbest/.attention/.metrics)."""
    ckpt = None
    if model is None:
        ckpt = read_checkpoint(config.model_dir)
        check_compatible(config, ckpt)
    classification = (ckpt.config if ckpt else model.config).sentence_classification
    instances = read_corpus(config.raw_dir, classification, labeled=None)
    if model is None:
        if provider is None and ckpt.provider is not None and ckpt.provider["kind"] == "file":
            source_config = copy.deepcopy(ckpt.config)
            if config.provider_source:
                source_config.low_level_transformer = config.low_level_transformer
                source_config.high_level_transformer = config.high_level_transformer
            provider = load_provider(source_config, {config.raw_dir: instances})
        model = model_from_checkpoint(ckpt, provider)

    has_gold = bool(instances) and all(inst.has_gold for inst in instances)
    if has_gold:
        check_gold_labels(model, instances)
    nbest = config.nbest if (model.crf is not None and not classification) else 1
    start = time.perf_counter()
    preds = predict_corpus(model, instances, config.batch_size, nbest)
    seconds = time.perf_counter() - start
    speed = len(instances) / seconds if instances and seconds > 0 else 0.0

    write_predictions(config, model, instances, preds, config.decode_dir)
    if nbest > 1:
        write_nbest(config.decode_dir + ".nbest", preds)
    if preds and preds[0].attention is not None:
        write_attention(config.decode_dir + ".attention", instances, preds)
    report = None
    if has_gold:
        report = score_predictions(model, instances, preds, config.tag_scheme)
        report.sentences_per_second = speed
    text = report.format() if report else f"speed: {speed:.1f} sentences/s"
    with open(config.decode_dir + ".metrics", "w", encoding="utf-8") as f:
        f.write(text + "\n")
    return DecodeResult(preds, report, seconds, speed)


# -- throughput ---------------------------------------------------------------------

def throughput_report(model: SequenceModel, instances: Sequence[Instance],
                      batch_sizes: Sequence[int] = (1, 8, 64), repeats: int = 1) -> Tuple[List[dict], str]:
    """Decode speed per batch size; batches are encoded before the clock starts."""
    if not instances:
        raise ValueError("empty corpus")
    rows = []
    for size in batch_sizes:
        batches = batch_instances(instances, model.alphabets, size, model.classification,
                                  begin_token=model.begin_token)
        best = float("inf")
        for _ in range(max(1, repeats)):
            start = time.perf_counter()
            for batch in batches:
                model.predict(batch)
            best = min(best, time.perf_counter() - start)
        rows.append({"pattern": model.pattern.value, "batch_size": size, "sentences": len(instances),
                     "seconds": best, "sentences_per_second": len(instances) / best if best > 0 else 0.0})
    return rows, format_throughput(rows)


def format_throughput(rows: Sequence[dict]) -> str:
    header = f"{'pattern':<16} {'batch':>6} {'sentences':>10} {'seconds':>10} {'sent/s':>10}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['pattern']:<16} {r['batch_size']:>6} {r['sentences']:>10} "
                     f"{r['seconds']:>10.3f} {r['sentences_per_second']:>10.1f}")
    return "\n".join(lines)
