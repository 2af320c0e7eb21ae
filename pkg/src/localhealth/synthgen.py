"""Synthetic block-group universes and tweet corpora with a planted signal.

The planted model is linear with clipping: the outcome mixes a latent
per-cell distress-token rate, the normalized deprivation index, and Gaussian
noise, so a correctly wired pipeline can recover it without needing a large
corpus or a real encoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DEFAULT_YEARS, REGIONS, BlockGroup, TweetRecord
from .geo import GENERAL_CAP, load_keyword_table
from .seeding import rng_for

US_LAT_RANGE = (25.0, 49.0)
US_LON_RANGE = (-124.0, -67.0)


def _default_distress_pool() -> tuple[str, ...]:
    return tuple(f"dtok{i:02d}" for i in range(4))


def _default_neutral_pool() -> tuple[str, ...]:
    return tuple(f"ntok{i:03d}" for i in range(16))


@dataclass(frozen=True)
class SignalConfig:
    """Knobs for the planted text/ADI relationship driving the synthetic outcome."""

    n_bgs: int = 200
    years: tuple[int, ...] = DEFAULT_YEARS
    # compact pools concentrate the signal into few hash buckets, keeping the
    # planted rate recoverable within a short (CI-profile) training budget
    distress_pool: tuple[str, ...] = field(default_factory=_default_distress_pool)
    neutral_pool: tuple[str, ...] = field(default_factory=_default_neutral_pool)
    beta_text: float = 0.15
    beta_adi: float = 0.05
    noise_sigma: float = 0.01
    tweets_per_cell: tuple[int, int] = (120, 240)
    base: float = 0.08
    # latent distress rate per cell: pi ~ Beta(pi_alpha, pi_beta)
    pi_alpha: float = 1.0
    pi_beta: float = 1.0
    tokens_per_tweet: tuple[int, int] = (16, 40)
    # chance a tweet carries a category keyword, as base + gain * pi
    mh_rate: tuple[float, float] = (0.15, 0.05)
    fi_rate: tuple[float, float] = (0.10, 0.05)

    def __post_init__(self) -> None:
        if self.beta_text < 0 or self.beta_adi < 0 or self.noise_sigma < 0:
            raise ValueError("beta_text, beta_adi, and noise_sigma must be non-negative")
        if not self.distress_pool or not self.neutral_pool:
            raise ValueError("token pools must be non-empty")
        if set(self.distress_pool) & set(self.neutral_pool):
            raise ValueError("token pools must be disjoint")
        if self.tweets_per_cell[0] < 1 or self.tweets_per_cell[0] > self.tweets_per_cell[1]:
            raise ValueError(f"bad tweets_per_cell range {self.tweets_per_cell}")


def generate_universe(n_bgs: int, seed: int) -> list[BlockGroup]:
    """Deterministic universe: regions round-robin, ADI deciles cycled then uniform within.

    With n_bgs = 40 every (region, decile) stratum is hit exactly once;
    populations fall in the 600..3000 block-group range and county densities
    are log-uniform.
    """
    if n_bgs <= 0:
        raise ValueError("n_bgs must be positive")
    rng = rng_for(seed, "universe")
    bgs = []
    for i in range(n_bgs):
        region = REGIONS[i % 4]
        adi_bin = (i // 4) % 10
        adi = int(rng.integers(10 * adi_bin + 1, 10 * (adi_bin + 1) + 1))
        population = int(rng.integers(600, 3001))
        density = float(10.0 ** rng.uniform(1.0, 4.0))
        lat = float(rng.uniform(*US_LAT_RANGE))
        lon = float(rng.uniform(*US_LON_RANGE))
        bgs.append(
            BlockGroup(
                bg_id=f"BG{i:05d}", region=region, adi=adi, population=population,
                centroid=(round(lat, 6), round(lon, 6)), county_density=round(density, 3),
            )
        )
    return bgs


def generate_corpus(
    universe: list[BlockGroup], signal: SignalConfig, seed: int
) -> tuple[list[TweetRecord], dict[tuple[str, int], float], dict[tuple[str, int, str], int]]:
    """Tweet archive, outcome table, and count table for a universe.

    Per (bg, year): a latent distress rate pi drives both the token mix of
    every tweet and the outcome
        g = clip(base + beta_text*pi + beta_adi*(ADI/100) + N(0, sigma), 0, 1).
    Tweets carrying an MH or FI keyword land in those categories; the General
    cell is a uniform subsample of the keyword-free remainder (cap 1000).
    The count table tallies the full pre-cap stream per category, the General
    count being the size of the whole stream.
    """
    keywords = load_keyword_table()
    distress = np.array(signal.distress_pool)
    neutral = np.array(signal.neutral_pool)

    archive: list[TweetRecord] = []
    outcomes: dict[tuple[str, int], float] = {}
    counts: dict[tuple[str, int, str], int] = {}

    for bg in universe:
        for year in signal.years:
            rng = rng_for(seed, "cell", bg.bg_id, year)
            pi = float(rng.beta(signal.pi_alpha, signal.pi_beta))
            noise = float(rng.normal(0.0, signal.noise_sigma)) if signal.noise_sigma > 0 else 0.0
            g = signal.base + signal.beta_text * pi + signal.beta_adi * bg.adi_norm + noise
            outcomes[(bg.bg_id, year)] = float(np.clip(g, 0.0, 1.0))

            n_tweets = int(rng.integers(signal.tweets_per_cell[0], signal.tweets_per_cell[1] + 1))
            p_mh = signal.mh_rate[0] + signal.mh_rate[1] * pi
            p_fi = signal.fi_rate[0] + signal.fi_rate[1] * pi
            rolls = rng.random(n_tweets)
            mh_tweets, fi_tweets, plain_tweets = [], [], []
            for j in range(n_tweets):
                n_tok = int(rng.integers(signal.tokens_per_tweet[0], signal.tokens_per_tweet[1] + 1))
                from_distress = rng.random(n_tok) < pi
                tokens = np.where(
                    from_distress,
                    distress[rng.integers(0, len(distress), n_tok)],
                    neutral[rng.integers(0, len(neutral), n_tok)],
                ).tolist()
                if rolls[j] < p_mh:
                    category, pool = "MH", keywords["MH"]
                elif rolls[j] < p_mh + p_fi:
                    category, pool = "FI", keywords["FI"]
                else:
                    category, pool = "General", None
                if pool is not None:
                    kw = pool[int(rng.integers(0, len(pool)))]
                    tokens.insert(int(rng.integers(0, len(tokens) + 1)), kw)
                text = " ".join(tokens)
                record = TweetRecord(
                    tweet_id=f"{bg.bg_id}-{year}-{j:06d}", text=text,
                    bg_id=bg.bg_id, year=year, category=category,
                )
                {"MH": mh_tweets, "FI": fi_tweets, "General": plain_tweets}[category].append(record)

            if len(plain_tweets) > GENERAL_CAP:
                keep = sorted(rng.choice(len(plain_tweets), size=GENERAL_CAP, replace=False))
                general_tweets = [plain_tweets[i] for i in keep]
            else:
                general_tweets = plain_tweets

            archive.extend(mh_tweets)
            archive.extend(fi_tweets)
            archive.extend(general_tweets)
            counts[(bg.bg_id, year, "MH")] = len(mh_tweets)
            counts[(bg.bg_id, year, "FI")] = len(fi_tweets)
            counts[(bg.bg_id, year, "General")] = n_tweets

    return archive, outcomes, counts
