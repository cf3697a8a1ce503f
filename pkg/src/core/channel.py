# src/core/channel.py
"""
交错块衰落信道

- CoherencePattern: 单条链路的相干长度 T 与偏移 offset
- EqualityRequirement: 方案要求的超符号相等结构（每条链路一个分划模板）
- find_supersymbol: 在搜索窗内挑选（可交织的）时隙，使块结构匹配模板
- sample_realization: 按等价类抽取信道，可叠加逐时隙微扰 ε

所有下标从 0 开始：发射机、接收机、超符号内的时隙位置 0..L-1。
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import numpy as np
from config.settings import FieldMode
from src.core.numerics import field_dtype, frozen
from src.core.logger import log, debug

Partition = Tuple[Tuple[int, ...], ...]


class NoSupersymbolFound(RuntimeError):
    """搜索窗内不存在满足模板的时隙组合（相干结构不兼容）"""


@dataclass(frozen=True, order=True)
class LinkId:
    tx: int
    rx: int

    def __post_init__(self):
        if self.tx < 0 or self.rx < 0:
            raise ValueError(f"链路下标必须非负: {self}")

    def __str__(self) -> str:
        return f"{self.tx}-{self.rx}"

    @classmethod
    def parse(cls, text: str) -> "LinkId":
        tx, rx = text.strip().split("-")
        return cls(int(tx), int(rx))


@dataclass(frozen=True)
class CoherencePattern:
    link: LinkId
    coherence_length: int
    offset: int = 0

    def __post_init__(self):
        if self.coherence_length < 1:
            raise ValueError(f"相干长度必须 ≥ 1: {self.coherence_length}")
        if not 0 <= self.offset < self.coherence_length:
            raise ValueError(f"偏移必须满足 0 ≤ offset < T: offset={self.offset}, T={self.coherence_length}")


def block_index(p: CoherencePattern, t: int) -> int:
    """
    时隙 t 所在的相干块编号
    offset > 0 时开头不完整的块记为块 0，之后每 T 个时隙加一
    """
    if t < 0:
        raise ValueError(f"时隙必须非负: {t}")
    shifted = (t - p.offset) // p.coherence_length
    return shifted + 1 if p.offset > 0 else shifted


def _validate_partition(partition: Partition, length: int) -> Partition:
    flat = sorted(pos for cls in partition for pos in cls)
    if flat != list(range(length)):
        raise ValueError(f"分划 {partition} 不是 0..{length - 1} 的划分")
    if any(len(cls) == 0 for cls in partition):
        raise ValueError(f"分划含空类: {partition}")
    return tuple(sorted(tuple(sorted(cls)) for cls in partition))


def singleton_partition(length: int) -> Partition:
    return tuple((i,) for i in range(length))


@dataclass(frozen=True)
class EqualityRequirement:
    """
    length: 超符号长度 L
    templates: 每条受约束链路的分划；同类时隙须落在同一相干块，不同类落在不同块。
    未出现的链路不受约束（逐时隙独立抽取）。
    """
    length: int
    templates: Mapping[LinkId, Partition] = field(default_factory=dict)

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"超符号长度必须 ≥ 1: {self.length}")
        checked = {link: _validate_partition(p, self.length) for link, p in self.templates.items()}
        object.__setattr__(self, "templates", dict(sorted(checked.items())))

    @property
    def links(self) -> Tuple[LinkId, ...]:
        return tuple(self.templates)

    def restricted_to(self, links: Iterable[LinkId]) -> "EqualityRequirement":
        keep = set(links)
        return EqualityRequirement(self.length, {k: v for k, v in self.templates.items() if k in keep})

    def anchor_link(self) -> Optional[LinkId]:
        """类数最多的第一条链路（同步对照实验以它为准选时隙）"""
        if not self.templates:
            return None
        return max(self.templates, key=lambda link: (len(self.templates[link]), -self.links.index(link)))


def realize_partition(pattern: CoherencePattern, slots: Sequence[int]) -> Partition:
    """给定时隙在某条链路上实际形成的分划（按首次出现排序）"""
    classes: Dict[int, list] = {}
    for pos, t in enumerate(slots):
        classes.setdefault(block_index(pattern, t), []).append(pos)
    return tuple(tuple(c) for c in classes.values())


def _matches(pattern: CoherencePattern, slots: Sequence[int], template: Partition) -> bool:
    blocks = [block_index(pattern, t) for t in slots]
    seen = set()
    for cls in template:
        b = {blocks[pos] for pos in cls}
        if len(b) != 1:
            return False
        b = b.pop()
        if b in seen:
            return False
        seen.add(b)
    return True


@dataclass(frozen=True)
class SupersymbolPlan:
    """绝对时隙（严格递增）+ 每条受约束链路实际形成的分划"""
    slots: Tuple[int, ...]
    partitions: Mapping[LinkId, Partition] = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.slots, self.slots[1:])):
            raise ValueError(f"时隙必须严格递增: {self.slots}")
        object.__setattr__(self, "partitions", dict(sorted(self.partitions.items())))

    @property
    def length(self) -> int:
        return len(self.slots)

    def partition(self, link: LinkId) -> Partition:
        return self.partitions.get(link, singleton_partition(self.length))

    @classmethod
    def realize(cls, patterns: Iterable[CoherencePattern], slots: Sequence[int]) -> "SupersymbolPlan":
        """不做模板检查，直接记录各链路在这些时隙上的实际分划"""
        slots = tuple(int(t) for t in slots)
        return cls(slots, {p.link: realize_partition(p, slots) for p in patterns})

    def satisfies(self, req: EqualityRequirement, patterns: Iterable[CoherencePattern]) -> bool:
        by_link = {p.link: p for p in patterns}
        if len(self.slots) != req.length:
            return False
        for link, template in req.templates.items():
            if link not in by_link or not _matches(by_link[link], self.slots, template):
                return False
        return True


def default_horizon(req: EqualityRequirement, patterns: Iterable[CoherencePattern]) -> int:
    max_t = max((p.coherence_length for p in patterns), default=1)
    return 4 * req.length * max_t


def _block_intervals(patterns: Sequence[CoherencePattern], horizon: int) -> List[Tuple[int, int]]:
    """按所有块边界把 [0, horizon) 切成区间；同一区间内的时隙在每条链路上都属同一块"""
    cuts = {0, horizon}
    for p in patterns:
        first = p.offset if p.offset else p.coherence_length
        cuts.update(range(first, horizon, p.coherence_length))
    edges = sorted(cuts)
    return list(zip(edges, edges[1:]))


def _place(chosen: Sequence[int], intervals: Sequence[Tuple[int, int]]) -> Tuple[int, ...]:
    """
    给定每个位置所在区间，返回跨度最小、其次字典序最小的具体时隙：
    首区间的位置靠右，其余区间的位置靠左
    """
    counts: Dict[int, int] = {}
    for iv in chosen:
        counts[iv] = counts.get(iv, 0) + 1
    first = chosen[0]
    if len(counts) == 1:
        start = intervals[first][0]
        return tuple(range(start, start + len(chosen)))
    slots = list(range(intervals[first][1] - counts[first], intervals[first][1]))
    for iv in sorted(counts):
        if iv != first:
            slots.extend(range(intervals[iv][0], intervals[iv][0] + counts[iv]))
    return tuple(slots)


def find_supersymbol(
        patterns: Iterable[CoherencePattern],
        req: EqualityRequirement,
        search_horizon: Optional[int] = None
) -> SupersymbolPlan:
    """
    在 [0, horizon) 内找满足模板的时隙组合（允许不连续 = 交织）。
    多个候选时取跨度 t_L - t_1 最小者，再按字典序。

    块归属只取决于时隙落在哪个边界区间，所以回溯枚举的是区间序列而不是时隙，
    代价随区间数增长，与相干长度无关。
    """
    patterns = list(patterns)
    by_link = {p.link: p for p in patterns}
    missing = [str(link) for link in req.links if link not in by_link]
    if missing:
        raise ValueError(f"以下链路缺少相干模式: {', '.join(missing)}")

    horizon = default_horizon(req, patterns) if search_horizon is None else search_horizon
    if horizon < req.length:
        raise ValueError(f"搜索窗 {horizon} 小于超符号长度 {req.length}")

    constrained = [by_link[link] for link in req.links]
    intervals = _block_intervals(constrained, horizon)
    blocks = [{p.link: block_index(p, start) for p in constrained} for start, _ in intervals]
    class_of = {
        link: {pos: c for c, cls in enumerate(tpl) for pos in cls}
        for link, tpl in req.templates.items()
    }
    L = req.length
    chosen: List[int] = []
    best: Optional[Tuple[int, Tuple[int, ...]]] = None

    def fits(iv: int) -> bool:
        pos = len(chosen)
        if chosen.count(iv) >= intervals[iv][1] - intervals[iv][0]:
            return False
        for link, classes in class_of.items():
            b = blocks[iv][link]
            for q, prev in enumerate(chosen):
                same_class = classes[q] == classes[pos]
                if same_class != (blocks[prev][link] == b):
                    return False
        return True

    def extend():
        nonlocal best
        if len(chosen) == L:
            slots = _place(chosen, intervals)
            key = (slots[-1] - slots[0], slots)
            if best is None or key < best:
                best = key
            return
        lo = chosen[-1] if chosen else 0
        for iv in range(lo, len(intervals)):
            # 最后一个时隙至少是 intervals[iv][0]，首时隙至多是首区间末尾
            if chosen and best is not None and intervals[iv][0] - (intervals[chosen[0]][1] - 1) > best[0]:
                break
            if fits(iv):
                chosen.append(iv)
                extend()
                chosen.pop()

    extend()

    if best is None:
        raise NoSupersymbolFound(
            f"搜索窗 {horizon} 内没有满足模板的 {req.length} 时隙组合，请检查相干模式是否交错"
        )

    slots = best[1]
    plan = SupersymbolPlan(slots, {link: realize_partition(by_link[link], slots) for link in req.links})
    debug(f"超符号时隙: {slots}")
    return plan


# ==================== 相干模式构造 ====================

def staggered_patterns(offsets: Mapping[LinkId, int], coherence_length: int = 2) -> Tuple[CoherencePattern, ...]:
    return tuple(CoherencePattern(link, coherence_length, off) for link, off in sorted(offsets.items()))


def synchronized_patterns(links: Iterable[LinkId], coherence_length: int = 2) -> Tuple[CoherencePattern, ...]:
    """所有链路共享块边界（非交错对照）"""
    return tuple(CoherencePattern(link, coherence_length, 0) for link in sorted(set(links)))


def coherence_ratio_patterns(fast: LinkId, slow: LinkId, t_fast: int) -> Tuple[CoherencePattern, CoherencePattern]:
    """不交错、但 T_slow = 2·T_fast 的一对链路"""
    return CoherencePattern(fast, t_fast, 0), CoherencePattern(slow, 2 * t_fast, 0)


def synchronized_plan(req: EqualityRequirement, links: Iterable[LinkId], coherence_length: int = 2,
                      search_horizon: Optional[int] = None) -> SupersymbolPlan:
    """
    同步衰落对照：按锚链路的模板选时隙，然后记录所有链路在同步块上的实际分划
    """
    patterns = synchronized_patterns(links, coherence_length)
    anchor = req.anchor_link()
    if anchor is None:
        slots = tuple(range(req.length))
    else:
        slots = find_supersymbol(patterns, req.restricted_to([anchor]), search_horizon).slots
    constrained = [p for p in patterns if p.link in req.templates]
    log(f"同步衰落对照：时隙 {slots}")
    return SupersymbolPlan.realize(constrained, slots)


# ==================== 信道抽样 ====================

def trial_seed(master_seed: int, trial_index: int) -> int:
    """试验 i 的种子 = hash(master, i)，与执行顺序无关"""
    return int(np.random.SeedSequence([master_seed, trial_index]).generate_state(1, dtype=np.uint64)[0])


def _standard_normal(rng: np.random.Generator, shape, field: FieldMode) -> np.ndarray:
    if field == FieldMode.REAL:
        return rng.standard_normal(shape)
    # 循环对称复高斯，单位方差
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """
    gains[link] 形状 (L, rx_antennas, tx_antennas)，块内恒定（ε=0 时同类时隙逐位相等）
    """
    gains: Mapping[LinkId, np.ndarray]
    epsilon: float = 0.0
    field: FieldMode = FieldMode.COMPLEX

    @property
    def links(self) -> Tuple[LinkId, ...]:
        return tuple(sorted(self.gains))

    def at(self, link: LinkId, slot: int) -> np.ndarray:
        return self.gains[link][slot]

    @property
    def length(self) -> int:
        return next(iter(self.gains.values())).shape[0]


def sample_realization(
        plan: SupersymbolPlan,
        dims: Mapping[LinkId, Tuple[int, int]],
        epsilon: float = 0.0,
        rng_seed: int = 0,
        field: FieldMode = FieldMode.COMPLEX
) -> ChannelRealization:
    """
    dims[link] = (rx_antennas, tx_antennas)
    每个 (链路, 等价类, 矩阵元素) 独立抽一次标准高斯；类内每个时隙再叠加 std=ε 的独立微扰。
    两个子随机流（类抽样 / 微扰）保证同种子下 ε 实现与 ε=0 实现共享类抽样。
    """
    if epsilon < 0:
        raise ValueError(f"微扰强度 ε 必须非负: {epsilon}")
    class_ss, perturb_ss = np.random.SeedSequence(rng_seed).spawn(2)
    class_rng = np.random.default_rng(class_ss)
    perturb_rng = np.random.default_rng(perturb_ss)
    L = plan.length
    dtype = field_dtype(field)

    gains = {}
    for link in sorted(dims):
        n_rx, n_tx = dims[link]
        h = np.empty((L, n_rx, n_tx), dtype=dtype)
        for cls in plan.partition(link):
            draw = _standard_normal(class_rng, (n_rx, n_tx), field)
            for pos in cls:
                h[pos] = draw
        if epsilon > 0:
            h = h + epsilon * _standard_normal(perturb_rng, h.shape, field)
        gains[link] = frozen(h)

    return ChannelRealization(gains=gains, epsilon=float(epsilon), field=field)
