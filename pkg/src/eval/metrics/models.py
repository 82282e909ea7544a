from pydantic import BaseModel, Field


class Metric(BaseModel):
    """
    A data model representing statistical metrics with mean and standard deviation.

    Attributes:
        mean (float): The arithmetic mean of the data.
        std (float): The population standard deviation of the data.
        count (int): Number of values the statistics were computed from.
    """

    mean: float
    std: float
    count: int = 0


class SuccessRateMetric(Metric):
    """
    Per-cloud top-k success rates summarised over a group of clouds.

    A cloud's rate is the fraction of its executed proposals whose episode
    succeeded, so ``mean`` and ``std`` lie in [0, 1]. An empty group reports
    zeros with ``count`` 0.
    """

    mean: float = Field(ge=0.0, le=1.0)
    std: float = Field(ge=0.0, le=1.0)


class CloudResult(BaseModel):
    """
    The outcome of executing the top-k proposals of one cloud.

    Attributes:
        record_id (str): Manifest record the cloud belongs to.
        instance_id (str): Instance the record was rendered from.
        kind (str | None): Procedural kind of the instance.
        split (str): Train or held-out instance.
        state_id (int): 0 for the closed state.
        closed (bool): Whether the joint state is the closed one.
        distance (float): Camera distance to its target in meters.
        yaw (float): Camera yaw about the target in degrees, 0 at the front.
        proposals (int): Number of proposals executed (at most k).
        successes (int): Number of successful episodes.
        rate (float): ``successes / proposals``.
        outcomes (list[str]): ``success`` or the failure reason per rank.
    """

    record_id: str
    instance_id: str
    kind: str | None
    split: str
    state_id: int
    closed: bool
    distance: float
    yaw: float
    proposals: int
    successes: int
    rate: float = Field(ge=0.0, le=1.0)
    outcomes: list[str]


class BinSummary(BaseModel):
    """Success rates of the clouds whose viewpoint falls in ``[low, high)``."""

    low: float
    high: float
    success_rate: SuccessRateMetric


class EvalReport(BaseModel):
    """
    Aggregated evaluation of a scorer over a manifest.

    Rates are internal: proposals are executed by the toolkit's kinematic
    episode simulator, not a dynamics engine, and are not comparable with
    success rates measured in physics simulation or on hardware.

    Attributes:
        note (str): The caveat above, repeated in every report file.
        scorer (str): Name of the score function.
        k (int): Proposals executed per cloud.
        split (str | None): Split the records were drawn from, None for all.
        records (list[CloudResult]): One entry per evaluated cloud.
        overall (SuccessRateMetric): Over every evaluated cloud.
        closed (SuccessRateMetric): Clouds of closed states.
        open (SuccessRateMetric): Clouds of open states.
        distance_bins (list[BinSummary]): Equal-width camera distance bins.
        yaw_bins (list[BinSummary]): Equal-width camera yaw bins.
        failure_reasons (dict[str, int]): Histogram over every executed proposal.
        by_split (dict[str, SuccessRateMetric]): Train versus held-out instances.
        by_kind (dict[str, SuccessRateMetric]): Per procedural kind.
        failed_records (list[str]): Records that could not be evaluated.
    """

    note: str
    scorer: str
    k: int
    split: str | None
    records: list[CloudResult]
    overall: SuccessRateMetric
    closed: SuccessRateMetric
    open: SuccessRateMetric
    distance_bins: list[BinSummary]
    yaw_bins: list[BinSummary]
    failure_reasons: dict[str, int]
    by_split: dict[str, SuccessRateMetric]
    by_kind: dict[str, SuccessRateMetric]
    failed_records: list[str] = []
