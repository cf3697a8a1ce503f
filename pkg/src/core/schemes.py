# src/core/schemes.py
"""
盲干扰对齐方案

一个抽象接口 BlindScheme，六个实现：
- MISO_BC_ONE_SIDED: 2 天线广播，只知道用户 1 第一个相干块的信道，3/2 DoF
- MISO_BC_NO_CSIT:   2 天线广播，完全无 CSIT，4/3 DoF
- X_CHANNEL:         把上面的两根天线拆成两个发射机，4/3 DoF
- MIMO_IC_1324:      (1,2) x (3,4) 天线的双用户干扰信道，(1, 3/2) DoF
- K_USER_IC:         K 用户单天线干扰信道，K/2 DoF
- TDMA_BASELINE:     两用户轮流占用时隙，1 DoF

预编码只依赖相干结构（以及声明过的少量 CSIT），解码器在接收端用完整信道做迫零。
"""
import abc
import functools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import ClassVar, Dict, FrozenSet, List, Mapping, Optional, Tuple
import numpy as np
from config.settings import SchemeId, RANK_TOL
from src.core.channel import (
    ChannelRealization,
    CoherencePattern,
    EqualityRequirement,
    LinkId,
    staggered_patterns,
)
from src.core.numerics import (
    ShapeError,
    SingularMatrixError,
    block_diagonal,
    column_space_basis,
    frozen,
    rank,
    solve,
    spectral_norm,
)
from src.core.logger import debug


class UnknownScheme(KeyError):
    """未注册的方案 id"""


class CsitViolation(PermissionError):
    """预编码器读取了未声明的信道系数"""


class DegenerateRealization(RuntimeError):
    """[G_d | basis(G_i)] 在阈值下秩亏（零测度样本，试验计数后剔除）"""


# ==================== 描述符 ====================

@dataclass(frozen=True)
class MessageSpec:
    name: str
    tx: int
    rx: int
    streams: int


@dataclass(frozen=True)
class StreamInfo:
    message: str
    tx: int
    rx: int


@dataclass(frozen=True)
class SchemeDescriptor:
    scheme_id: SchemeId
    k: Optional[int]
    tx_antennas: Tuple[int, ...]
    rx_antennas: Tuple[int, ...]
    length: int
    messages: Tuple[MessageSpec, ...]
    requirement: EqualityRequirement
    csit: FrozenSet[Tuple[LinkId, int]] = frozenset()
    expected_interference_dims: Tuple[int, ...] = ()
    default_offsets: Mapping[LinkId, int] = field(default_factory=dict)
    per_slot_receivers: FrozenSet[int] = frozenset()

    @property
    def n_tx(self) -> int:
        return len(self.tx_antennas)

    @property
    def n_rx(self) -> int:
        return len(self.rx_antennas)

    @property
    def links(self) -> Tuple[LinkId, ...]:
        return tuple(LinkId(j, k) for j in range(self.n_tx) for k in range(self.n_rx))

    @property
    def link_dims(self) -> Dict[LinkId, Tuple[int, int]]:
        return {link: (self.rx_antennas[link.rx], self.tx_antennas[link.tx]) for link in self.links}

    @property
    def streams(self) -> Tuple[StreamInfo, ...]:
        return tuple(StreamInfo(m.name, m.tx, m.rx) for m in self.messages for _ in range(m.streams))

    @property
    def message_names(self) -> Tuple[str, ...]:
        return tuple(m.name for m in self.messages)

    @property
    def claimed_dof(self) -> Dict[str, Fraction]:
        """每条消息的归一化 DoF = 流数 / 超符号长度"""
        return {m.name: Fraction(m.streams, self.length) for m in self.messages}

    @property
    def claimed_total(self) -> Fraction:
        return sum(self.claimed_dof.values(), Fraction(0))

    def default_patterns(self) -> Tuple[CoherencePattern, ...]:
        return staggered_patterns(self.default_offsets, coherence_length=2)


# ==================== CSIT 访问控制 ====================

class CsitView:
    """
    只暴露描述符声明过的 (链路, 时隙) 信道；其余访问抛 CsitViolation
    """

    def __init__(self, declared: FrozenSet[Tuple[LinkId, int]], realization: Optional[ChannelRealization] = None):
        self._declared = frozenset(declared)
        self._entries: Dict[Tuple[LinkId, int], np.ndarray] = {}
        if self._declared and realization is None:
            raise ValueError("声明了 CSIT 但没有提供信道实现")
        for link, slot in self._declared:
            self._entries[(link, slot)] = frozen(realization.at(link, slot))

    @property
    def declared(self) -> FrozenSet[Tuple[LinkId, int]]:
        return self._declared

    def get(self, link: LinkId, slot: int) -> np.ndarray:
        key = (link, slot)
        if key not in self._declared:
            raise CsitViolation(f"预编码器试图读取未声明的 CSIT: 链路 {link} 时隙 {slot}")
        return self._entries[key]


def csit_view(descriptor: SchemeDescriptor, realization: Optional[ChannelRealization]) -> CsitView:
    return CsitView(descriptor.csit, realization)


# ==================== 预编码结果 ====================

@dataclass(frozen=True, eq=False)
class PrecodedTransmission:
    """
    precoders[j] 形状 (tx_antennas[j]·L, 总流数)，按时隙堆叠；不属于发射机 j 的流对应零列。
    列为单位范数，功率单独放在 stream_powers。
    """
    precoders: Tuple[np.ndarray, ...]
    streams: Tuple[StreamInfo, ...]
    stream_powers: np.ndarray
    total_power: float

    def stacked(self) -> np.ndarray:
        return np.vstack(self.precoders)

    def scaled(self, total_power: float) -> "PrecodedTransmission":
        """同样的波束，按新的总功率线性缩放流功率"""
        if self.total_power <= 0:
            raise ValueError("参考功率必须为正")
        powers = self.stream_powers * (total_power / self.total_power)
        return PrecodedTransmission(self.precoders, self.streams, frozen(powers), float(total_power))


@dataclass(frozen=True, eq=False)
class EffectiveChannels:
    """某接收机上按超符号堆叠后的等效信道"""
    receiver: int
    desired: np.ndarray
    interference: np.ndarray
    desired_streams: Tuple[int, ...]
    interfering_streams: Tuple[int, ...]
    rx_antennas: int
    length: int

    @property
    def combined(self) -> np.ndarray:
        return np.hstack([self.desired, self.interference])

    @property
    def scale(self) -> float:
        return spectral_norm(self.combined)


@dataclass(frozen=True, eq=False)
class LinearDecoder:
    """matrix: (期望流数, rx_antennas·L)，输出每个期望流的软估计"""
    receiver: int
    matrix: np.ndarray
    desired_streams: Tuple[int, ...]
    nulled_dim: int


# ==================== 方案基类 ====================

Beam = Tuple[str, int, np.ndarray]  # (消息名, 发射机, 该发射机行上的波束向量)


class BlindScheme(abc.ABC):
    scheme_id: ClassVar[SchemeId]

    def __init__(self, k: Optional[int] = None):
        self.k = k
        self.descriptor = self._describe()

    @property
    def name(self) -> str:
        return self.scheme_id.value

    @abc.abstractmethod
    def _describe(self) -> SchemeDescriptor:
        raise NotImplementedError

    @abc.abstractmethod
    def _beamformers(self, csit: CsitView) -> List[Beam]:
        """按 descriptor.streams 的顺序返回每个流的原始波束（未归一化）"""
        raise NotImplementedError

    def precode(self, csit: CsitView, total_power: float) -> PrecodedTransmission:
        d = self.descriptor
        if total_power <= 0:
            raise ValueError(f"发射功率必须为正: {total_power}")
        if csit.declared != d.csit:
            raise CsitViolation(f"{self.name}: CSIT 视图与声明不一致")

        beams = self._beamformers(csit)
        streams = d.streams
        if len(beams) != len(streams):
            raise ShapeError(f"{self.name}: 波束数 {len(beams)} 与流数 {len(streams)} 不符")

        dtype = np.result_type(*(b[2] for b in beams))
        mats = [np.zeros((d.tx_antennas[j] * d.length, len(streams)), dtype=dtype) for j in range(d.n_tx)]
        for s, (message, tx, vec) in enumerate(beams):
            if message != streams[s].message or tx != streams[s].tx:
                raise ShapeError(f"{self.name}: 第 {s} 个波束与流描述不符")
            norm = np.linalg.norm(vec)
            mats[tx][:, s] = vec / norm if norm > 0 else vec

        powers = np.zeros(len(streams))
        for j in range(d.n_tx):
            ant = d.tx_antennas[j]
            active = np.stack([
                np.any(mats[j][t * ant:(t + 1) * ant] != 0, axis=0) for t in range(d.length)
            ])  # (L, 流数)
            per_slot = active.sum(axis=1)
            for s in np.flatnonzero(active.any(axis=0)):
                # 流 s 活跃的每个时隙里均分功率，取最紧的那个时隙
                powers[s] = total_power * min(1.0 / per_slot[t] for t in np.flatnonzero(active[:, s]))

        return PrecodedTransmission(
            precoders=tuple(frozen(m) for m in mats),
            streams=streams,
            stream_powers=frozen(powers),
            total_power=float(total_power),
        )


def _unit(n: int, *idx: int) -> np.ndarray:
    v = np.zeros(n)
    v[list(idx)] = 1.0
    return v


class MisoBcOneSided(BlindScheme):
    """2 天线广播，只用用户 1 在第一个时隙的信道"""
    scheme_id = SchemeId.MISO_BC_ONE_SIDED

    def _describe(self) -> SchemeDescriptor:
        u1, u2 = LinkId(0, 0), LinkId(0, 1)
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=None,
            tx_antennas=(2,), rx_antennas=(1, 1), length=2,
            messages=(MessageSpec("W1", 0, 0, 2), MessageSpec("W2", 0, 1, 1)),
            requirement=EqualityRequirement(2, {u1: ((0,), (1,)), u2: ((0, 1),)}),
            csit=frozenset({(u1, 0)}),
            expected_interference_dims=(0, 1),
            default_offsets={u1: 0, u2: 1},
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        h = csit.get(LinkId(0, 0), 0)[0]
        # 用户 2 的波束与 h^[1](1) 正交
        zf = np.array([h[1], -h[0], 0, 0])
        return [("W1", 0, _unit(4, 0, 2)), ("W1", 0, _unit(4, 1, 3)), ("W2", 0, zf)]


class MisoBcNoCsit(BlindScheme):
    """B1 = [I; I; 0], B2 = [0; I; I]，与信道取值无关"""
    scheme_id = SchemeId.MISO_BC_NO_CSIT

    def _describe(self) -> SchemeDescriptor:
        u1, u2 = LinkId(0, 0), LinkId(0, 1)
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=None,
            tx_antennas=(2,), rx_antennas=(1, 1), length=3,
            messages=(MessageSpec("W1", 0, 0, 2), MessageSpec("W2", 0, 1, 2)),
            requirement=EqualityRequirement(3, {u1: ((0,), (1, 2)), u2: ((0, 1), (2,))}),
            expected_interference_dims=(1, 1),
            default_offsets={u1: 0, u2: 1},
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        return [
            ("W1", 0, _unit(6, 0, 2)), ("W1", 0, _unit(6, 1, 3)),
            ("W2", 0, _unit(6, 2, 4)), ("W2", 0, _unit(6, 3, 5)),
        ]


class XChannel(BlindScheme):
    """
    两个单天线发射机，四条消息 W<tx><rx>。
    波束与 MISO_BC_NO_CSIT 相同，只是每个流只由一个发射机发送，无需协作。
    """
    scheme_id = SchemeId.X_CHANNEL

    def _describe(self) -> SchemeDescriptor:
        to_rx0 = ((0,), (1, 2))
        to_rx1 = ((0, 1), (2,))
        templates = {
            LinkId(0, 0): to_rx0, LinkId(1, 0): to_rx0,
            LinkId(0, 1): to_rx1, LinkId(1, 1): to_rx1,
        }
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=None,
            tx_antennas=(1, 1), rx_antennas=(1, 1), length=3,
            messages=(
                MessageSpec("W11", 0, 0, 1), MessageSpec("W21", 1, 0, 1),
                MessageSpec("W12", 0, 1, 1), MessageSpec("W22", 1, 1, 1),
            ),
            requirement=EqualityRequirement(3, templates),
            expected_interference_dims=(1, 1),
            default_offsets={link: link.rx for link in templates},
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        return [
            ("W11", 0, _unit(3, 0, 1)), ("W21", 1, _unit(3, 0, 1)),
            ("W12", 0, _unit(3, 1, 2)), ("W22", 1, _unit(3, 1, 2)),
        ]


class MimoIc1324(BlindScheme):
    """
    发射机 1 单天线、发射机 2 三天线；接收机 1 两天线、接收机 2 四天线。
    只约束进入接收机 1 的两条链路，接收机 2 的链路逐时隙独立。
    """
    scheme_id = SchemeId.MIMO_IC_1324

    def _describe(self) -> SchemeDescriptor:
        direct, cross = LinkId(0, 0), LinkId(1, 0)
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=None,
            tx_antennas=(1, 3), rx_antennas=(2, 4), length=2,
            messages=(MessageSpec("W1", 0, 0, 2), MessageSpec("W2", 1, 1, 3)),
            requirement=EqualityRequirement(2, {direct: ((0,), (1,)), cross: ((0, 1),)}),
            expected_interference_dims=(2, 2),
            default_offsets={direct: 0, cross: 1},
            per_slot_receivers=frozenset({1}),
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        beams: List[Beam] = [("W1", 0, _unit(2, 0)), ("W1", 0, _unit(2, 1))]
        # 发射机 2 重复发送 [I3; I3]
        beams += [("W2", 1, _unit(6, i, i + 3)) for i in range(3)]
        return beams


class KUserIc(BlindScheme):
    """每个发射机沿 [1 1]^T 重复发送；直连链路在超符号内变化，交叉链路不变"""
    scheme_id = SchemeId.K_USER_IC

    def __init__(self, k: Optional[int] = None):
        if k is None or k < 2:
            raise ValueError(f"K_USER_IC 需要 K ≥ 2，得到 {k}")
        super().__init__(k)

    def _describe(self) -> SchemeDescriptor:
        K = self.k
        templates = {}
        offsets = {}
        for j in range(K):
            for r in range(K):
                link = LinkId(j, r)
                templates[link] = ((0,), (1,)) if j == r else ((0, 1),)
                offsets[link] = 0 if j == r else 1
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=K,
            tx_antennas=(1,) * K, rx_antennas=(1,) * K, length=2,
            messages=tuple(MessageSpec(f"W{i + 1}", i, i, 1) for i in range(K)),
            requirement=EqualityRequirement(2, templates),
            expected_interference_dims=(1,) * K,
            default_offsets=offsets,
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        return [(f"W{i + 1}", i, np.ones(2)) for i in range(self.k)]


class TdmaBaseline(BlindScheme):
    """用户 k 在第 k 个时隙独占全部功率（第一根天线）"""
    scheme_id = SchemeId.TDMA_BASELINE

    def _describe(self) -> SchemeDescriptor:
        return SchemeDescriptor(
            scheme_id=self.scheme_id, k=None,
            tx_antennas=(2,), rx_antennas=(1, 1), length=2,
            messages=(MessageSpec("W1", 0, 0, 1), MessageSpec("W2", 0, 1, 1)),
            requirement=EqualityRequirement(2, {}),
            expected_interference_dims=(1, 1),
        )

    def _beamformers(self, csit: CsitView) -> List[Beam]:
        return [("W1", 0, _unit(4, 0)), ("W2", 0, _unit(4, 2))]


_REGISTRY: Dict[SchemeId, type] = {
    cls.scheme_id: cls
    for cls in (MisoBcOneSided, MisoBcNoCsit, XChannel, MimoIc1324, KUserIc, TdmaBaseline)
}


@functools.lru_cache(maxsize=64)
def _scheme_instance(scheme_id: SchemeId, k: Optional[int]) -> BlindScheme:
    return _REGISTRY[scheme_id](k) if scheme_id == SchemeId.K_USER_IC else _REGISTRY[scheme_id]()


def get_scheme(scheme_id, k: Optional[int] = None) -> BlindScheme:
    if isinstance(scheme_id, str):
        try:
            scheme_id = SchemeId.parse(scheme_id)
        except ValueError:
            raise UnknownScheme(f"未知的方案: {scheme_id}") from None
    if scheme_id not in _REGISTRY:
        raise UnknownScheme(f"未知的方案: {scheme_id}")
    if scheme_id != SchemeId.K_USER_IC:
        k = None
    return _scheme_instance(scheme_id, k)


def list_schemes() -> List[SchemeId]:
    return list(_REGISTRY)


# ==================== 对外操作 ====================

def describe(scheme_id, k: Optional[int] = None) -> SchemeDescriptor:
    return get_scheme(scheme_id, k).descriptor


def precode(d: SchemeDescriptor, csit: CsitView, total_power: float) -> PrecodedTransmission:
    return get_scheme(d.scheme_id, d.k).precode(csit, total_power)


def _receiver_channels(d: SchemeDescriptor, tx: PrecodedTransmission, r: ChannelRealization,
                       receiver: int) -> EffectiveChannels:
    L = d.length
    g = None
    for j in range(d.n_tx):
        link = LinkId(j, receiver)
        h_bd = block_diagonal([r.at(link, t) for t in range(L)])
        part = h_bd @ tx.precoders[j]
        g = part if g is None else g + part
    desired = tuple(s for s, info in enumerate(tx.streams) if info.rx == receiver)
    others = tuple(s for s, info in enumerate(tx.streams) if info.rx != receiver)
    return EffectiveChannels(
        receiver=receiver,
        desired=frozen(g[:, list(desired)]),
        interference=frozen(g[:, list(others)]),
        desired_streams=desired,
        interfering_streams=others,
        rx_antennas=d.rx_antennas[receiver],
        length=L,
    )


def effective_channels(d: SchemeDescriptor, tx: PrecodedTransmission,
                       r: ChannelRealization) -> Tuple[EffectiveChannels, ...]:
    """每个接收机的 (G_d, G_i)：块对角堆叠信道 × 对应流的预编码列"""
    if r.length != d.length:
        raise ShapeError(f"信道长度 {r.length} 与超符号长度 {d.length} 不符")
    return tuple(_receiver_channels(d, tx, r, k) for k in range(d.n_rx))


def interference_basis(ch: EffectiveChannels, tol: float = RANK_TOL,
                       max_rank: Optional[int] = None) -> np.ndarray:
    return column_space_basis(ch.interference, tol, reference=ch.scale, max_rank=max_rank)


def separability_matrix(ch: EffectiveChannels, tol: float = RANK_TOL,
                        max_rank: Optional[int] = None) -> np.ndarray:
    """[G_d | basis(G_i)]，满秩说明期望信号与干扰可分"""
    return np.hstack([ch.desired, interference_basis(ch, tol, max_rank)])


def _zero_forcing(ch: EffectiveChannels, tol: float, expected_dim: int) -> LinearDecoder:
    q = interference_basis(ch, tol, max_rank=expected_dim)
    n_desired = ch.desired.shape[1]
    combined = np.hstack([ch.desired, q])
    if rank(combined, tol) < n_desired + q.shape[1]:
        raise DegenerateRealization(f"接收机 {ch.receiver}: 期望信号与干扰子空间重叠")
    a = ch.desired - q @ (q.conj().T @ ch.desired)
    ah = a.conj().T
    try:
        d = solve(ah @ a, ah, tol)
    except SingularMatrixError as e:
        raise DegenerateRealization(f"接收机 {ch.receiver}: {e}") from e
    return LinearDecoder(ch.receiver, frozen(d), ch.desired_streams, q.shape[1])


def _per_slot_inversion(ch: EffectiveChannels, tol: float) -> LinearDecoder:
    """
    每个时隙单独求逆 [期望列 | 该时隙活跃的干扰列]，再对各时隙估计取平均
    """
    n_rx, L = ch.rx_antennas, ch.length
    n_desired = ch.desired.shape[1]
    d = np.zeros((n_desired, n_rx * L), dtype=np.result_type(ch.desired, ch.interference))
    nulled = 0
    for t in range(L):
        rows = slice(t * n_rx, (t + 1) * n_rx)
        gi_t = ch.interference[rows]
        active = [j for j in range(gi_t.shape[1]) if np.any(gi_t[:, j] != 0)]
        m = np.hstack([ch.desired[rows], gi_t[:, active]])
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"接收机 {ch.receiver} 时隙 {t}: 逐时隙矩阵不是方阵 {m.shape}")
        try:
            inv = solve(m, np.eye(n_rx), tol)
        except SingularMatrixError as e:
            raise DegenerateRealization(f"接收机 {ch.receiver} 时隙 {t}: {e}") from e
        d[:, rows] = inv[:n_desired]
        nulled += len(active)
    return LinearDecoder(ch.receiver, frozen(d / L), ch.desired_streams, nulled)


def build_decoder(
        d: SchemeDescriptor,
        tx: PrecodedTransmission,
        r: ChannelRealization,
        receiver: int,
        tol: float = RANK_TOL,
        channels: Optional[EffectiveChannels] = None
) -> LinearDecoder:
    """
    迫零解码器：行向量落在干扰子空间的正交补里，并把期望流的投影信道求逆（D·G_d = I）。
    干扰子空间取 min(数值秩, 方案设计维数) 个主方向；微扰或失去交错时，
    超出设计维数的干扰会残留在 SINR 里，而不是让试验作废。
    """
    ch = channels if channels is not None else _receiver_channels(d, tx, r, receiver)
    if receiver in d.per_slot_receivers:
        return _per_slot_inversion(ch, tol)
    dec = _zero_forcing(ch, tol, d.expected_interference_dims[receiver])
    debug(f"{d.scheme_id.value} 接收机 {receiver}: 迫零 {dec.nulled_dim} 维干扰")
    return dec


def support_violations(d: SchemeDescriptor, tx: PrecodedTransmission) -> List[int]:
    """返回同时占用多个发射机天线行的流（分布式发射约束）"""
    bad = []
    for s in range(len(tx.streams)):
        owners = [j for j in range(d.n_tx) if np.any(tx.precoders[j][:, s] != 0)]
        if len(owners) != 1:
            bad.append(s)
    return bad


def matches_no_csit_contract(a: PrecodedTransmission, b: PrecodedTransmission) -> bool:
    """两次预编码逐位相同"""
    return (
            len(a.precoders) == len(b.precoders)
            and all(np.array_equal(x, y) and x.dtype == y.dtype for x, y in zip(a.precoders, b.precoders))
            and np.array_equal(a.stream_powers, b.stream_powers)
    )
