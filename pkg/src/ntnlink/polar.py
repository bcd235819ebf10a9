"""Polar coding for the NR broadcast channel: CRC-assisted list decoding.

Implements the TS 38.212 downlink polar chain at the sizes used by the
broadcast channel: 56 input bits (32 payload + 24 parity), mother code
N = 512, rate-matched to 864 bits by repetition, with input interleaving
enabled and no parity-check bits. Decoding is successive-cancellation list
(min-sum path metric) with an all-frozen-subtree shortcut; candidate
selection is CRC-assisted when a checker is supplied.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

# TS 38.212 Table 5.3.1.2-1, ascending reliability over 0..1023.
RELIABILITY_1024 = (
       0,    1,    2,    4,    8,   16,   32,    3,    5,   64,    9,    6,   17,   10,   18,  128,
      12,   33,   65,   20,  256,   34,   24,   36,    7,  129,   66,  512,   11,   40,   68,  130,
      19,   13,   48,   14,   72,  257,   21,  132,   35,  258,   26,  513,   80,   37,   25,   22,
     136,  260,  264,   38,  514,   96,   67,   41,  144,   28,   69,   42,  516,   49,   74,  272,
     160,  520,  288,  528,  192,  544,   70,   44,  131,   81,   50,   73,   15,  320,  133,   52,
      23,  134,  384,   76,  137,   82,   56,   27,   97,   39,  259,   84,  138,  145,  261,   29,
      43,   98,  515,   88,  140,   30,  146,   71,  262,  265,  161,  576,   45,  100,  640,   51,
     148,   46,   75,  266,  273,  517,  104,  162,   53,  193,  152,   77,  164,  768,  268,  274,
     518,   54,   83,   57,  521,  112,  135,   78,  289,  194,   85,  276,  522,   58,  168,  139,
      99,   86,   60,  280,   89,  290,  529,  524,  196,  141,  101,  147,  176,  142,  530,  321,
      31,  200,   90,  545,  292,  322,  532,  263,  149,  102,  105,  304,  296,  163,   92,   47,
     267,  385,  546,  324,  208,  386,  150,  153,  165,  106,   55,  328,  536,  577,  548,  113,
     154,   79,  269,  108,  578,  224,  166,  519,  552,  195,  270,  641,  523,  275,  580,  291,
      59,  169,  560,  114,  277,  156,   87,  197,  116,  170,   61,  531,  525,  642,  281,  278,
     526,  177,  293,  388,   91,  584,  769,  198,  172,  120,  201,  336,   62,  282,  143,  103,
     178,  294,   93,  644,  202,  592,  323,  392,  297,  770,  107,  180,  151,  209,  284,  648,
      94,  204,  298,  400,  608,  352,  325,  533,  155,  210,  305,  547,  300,  109,  184,  534,
     537,  115,  167,  225,  326,  306,  772,  157,  656,  329,  110,  117,  212,  171,  776,  330,
     226,  549,  538,  387,  308,  216,  416,  271,  279,  158,  337,  550,  672,  118,  332,  579,
     540,  389,  173,  121,  553,  199,  784,  179,  228,  338,  312,  704,  390,  174,  554,  581,
     393,  283,  122,  448,  353,  561,  203,   63,  340,  394,  527,  582,  556,  181,  295,  285,
     232,  124,  205,  182,  643,  562,  286,  585,  299,  354,  211,  401,  185,  396,  344,  586,
     645,  593,  535,  240,  206,   95,  327,  564,  800,  402,  356,  307,  301,  417,  213,  568,
     832,  588,  186,  646,  404,  227,  896,  594,  418,  302,  649,  771,  360,  539,  111,  331,
     214,  309,  188,  449,  217,  408,  609,  596,  551,  650,  229,  159,  420,  310,  541,  773,
     610,  657,  333,  119,  600,  339,  218,  368,  652,  230,  391,  313,  450,  542,  334,  233,
     555,  774,  175,  123,  658,  612,  341,  777,  220,  314,  424,  395,  673,  583,  355,  287,
     183,  234,  125,  557,  660,  616,  342,  316,  241,  778,  563,  345,  452,  397,  403,  207,
     674,  558,  785,  432,  357,  187,  236,  664,  624,  587,  780,  705,  126,  242,  565,  398,
     346,  456,  358,  405,  303,  569,  244,  595,  189,  566,  676,  361,  706,  589,  215,  786,
     647,  348,  419,  406,  464,  680,  801,  362,  590,  409,  570,  788,  597,  572,  219,  311,
     708,  598,  601,  651,  421,  792,  802,  611,  602,  410,  231,  688,  653,  248,  369,  190,
     364,  654,  659,  335,  480,  315,  221,  370,  613,  422,  425,  451,  614,  543,  235,  412,
     343,  372,  775,  317,  222,  426,  453,  237,  559,  833,  804,  712,  834,  661,  808,  779,
     617,  604,  433,  720,  816,  836,  347,  897,  243,  662,  454,  318,  675,  618,  898,  781,
     376,  428,  665,  736,  567,  840,  625,  238,  359,  457,  399,  787,  591,  678,  434,  677,
     349,  245,  458,  666,  620,  363,  127,  191,  782,  407,  436,  626,  571,  465,  681,  246,
     707,  350,  599,  668,  790,  460,  249,  682,  573,  411,  803,  789,  709,  365,  440,  628,
     689,  374,  423,  466,  793,  250,  371,  481,  574,  413,  603,  366,  468,  655,  900,  805,
     615,  684,  710,  429,  794,  252,  373,  605,  848,  690,  713,  632,  482,  806,  427,  904,
     414,  223,  663,  692,  835,  619,  472,  455,  796,  809,  714,  721,  837,  716,  864,  810,
     606,  912,  722,  696,  377,  435,  817,  319,  621,  812,  484,  430,  838,  667,  488,  239,
     378,  459,  622,  627,  437,  380,  818,  461,  496,  669,  679,  724,  841,  629,  351,  467,
     438,  737,  251,  462,  442,  441,  469,  247,  683,  842,  738,  899,  670,  783,  849,  820,
     728,  928,  791,  367,  901,  630,  685,  844,  633,  711,  253,  691,  824,  902,  686,  740,
     850,  375,  444,  470,  483,  415,  485,  905,  795,  473,  634,  744,  852,  960,  865,  693,
     797,  906,  715,  807,  474,  636,  694,  254,  717,  575,  913,  798,  811,  379,  697,  431,
     607,  489,  866,  723,  486,  908,  718,  813,  476,  856,  839,  725,  698,  914,  752,  868,
     819,  814,  439,  929,  490,  623,  671,  739,  916,  463,  843,  381,  497,  930,  821,  726,
     961,  872,  492,  631,  729,  700,  443,  741,  845,  920,  382,  822,  851,  730,  498,  880,
     742,  445,  471,  635,  932,  687,  903,  825,  500,  846,  745,  826,  732,  446,  962,  936,
     475,  853,  867,  637,  907,  487,  695,  746,  828,  753,  854,  857,  504,  799,  255,  964,
     909,  719,  477,  915,  638,  748,  944,  869,  491,  699,  754,  858,  478,  968,  383,  910,
     815,  976,  870,  917,  727,  493,  873,  701,  931,  756,  860,  499,  731,  823,  922,  874,
     918,  502,  933,  743,  760,  881,  494,  702,  921,  501,  876,  847,  992,  447,  733,  827,
     934,  882,  937,  963,  747,  505,  855,  924,  734,  829,  965,  938,  884,  506,  749,  945,
     966,  755,  859,  940,  830,  911,  871,  639,  888,  479,  946,  750,  969,  508,  861,  757,
     970,  919,  875,  862,  758,  948,  977,  923,  972,  761,  877,  952,  495,  703,  935,  978,
     883,  762,  503,  925,  878,  735,  993,  885,  939,  994,  980,  926,  764,  941,  967,  886,
     831,  947,  507,  889,  984,  751,  942,  996,  971,  890,  509,  949,  973, 1000,  892,  950,
     863,  759, 1008,  510,  979,  953,  763,  974,  954,  879,  981,  982,  927,  995,  765,  956,
     887,  985,  997,  986,  943,  891,  998,  766,  511,  988, 1001,  951, 1002,  893,  975,  894,
    1009,  955, 1004, 1010,  957,  983,  958,  987, 1012,  999, 1016,  767,  989, 1003,  990, 1005,
     959, 1011, 1013,  895, 1006, 1014, 1017, 1018,  991, 1020, 1007, 1015, 1019, 1021, 1022, 1023,
)

# TS 38.212 Table 5.3.1.1-1, interleaving pattern over the max payload of 164.
PAYLOAD_INTERLEAVER_164 = (
       0,    2,    4,    7,    9,   14,   19,   20,   24,   25,   26,   28,   31,   34,   42,   45,
      49,   50,   51,   53,   54,   56,   58,   59,   61,   62,   65,   66,   67,   69,   70,   71,
      72,   76,   77,   81,   82,   83,   87,   88,   89,   91,   93,   95,   98,  101,  104,  106,
     108,  110,  111,  113,  115,  118,  119,  120,  122,  123,  126,  127,  129,  132,  134,  138,
     139,  140,    1,    3,    5,    8,   10,   15,   21,   27,   29,   32,   35,   43,   46,   52,
      55,   57,   60,   63,   68,   73,   78,   84,   90,   92,   94,   96,   99,  102,  105,  107,
     109,  112,  114,  116,  121,  124,  128,  130,  133,  135,  141,    6,   11,   16,   22,   30,
      33,   36,   44,   47,   64,   74,   79,   85,   97,  100,  103,  117,  125,  131,  136,  142,
      12,   17,   23,   37,   48,   75,   80,   86,  137,  143,   13,   18,   38,  144,   39,  145,
      40,  146,   41,  147,  148,  149,  150,  151,  152,  153,  154,  155,  156,  157,  158,  159,
     160,  161,  162,  163,
)

# TS 38.212 Table 5.4.1.1-1.
SUB_BLOCK_INTERLEAVER_32 = (
    0, 1, 2, 4, 3, 5, 6, 7, 8, 16, 9, 17, 10, 18, 11, 19,
    12, 20, 13, 21, 14, 22, 15, 23, 24, 25, 26, 28, 27, 29, 30, 31,
)


def _ceil_log2(n: int) -> int:
    return int(np.ceil(np.log2(n)))


def polar_transform(u: np.ndarray) -> np.ndarray:
    """In-place-style butterfly u -> u G_N over GF(2); length must be 2^n."""
    x = np.array(u, dtype=np.uint8)
    n = x.size
    if n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    h = 1
    while h < n:
        for i in range(0, n, 2 * h):
            x[i : i + h] ^= x[i + h : i + 2 * h]
        h *= 2
    return x


class PolarCode:
    """Encoder/decoder pair for one (K, E) polar configuration.

    k counts CRC bits; e is the rate-matched length. Defaults are the
    broadcast-channel sizes. Construction precomputes the frozen set, the
    sub-block interleaver and the input interleaver (k <= 164 required
    when input interleaving is on).
    """

    def __init__(self, k: int = 56, e: int = 864, n_max: int = 9,
                 input_interleave: bool = True):
        if k <= 0 or e <= 0:
            raise ValueError("k and e must be positive")
        self.k = k
        self.e = e

        # Code-size selection per TS 38.212 5.3.1.
        n1 = _ceil_log2(e) - 1
        if k / e >= 9 / 16 or e > (9 / 8) * (1 << n1):
            n1 += 1
        n2 = _ceil_log2(k * 8)  # rate floor 1/8
        n = max(min(n1, n2, n_max), 5)
        self.n_code = 1 << n

        jj = np.array(
            [SUB_BLOCK_INTERLEAVER_32[(i * 32) // self.n_code] * (self.n_code // 32)
             + i % (self.n_code // 32) for i in range(self.n_code)],
            dtype=np.int64,
        )
        self.sub_block_perm = jj  # y[i] = x[jj[i]]

        rel = np.array([q for q in RELIABILITY_1024 if q < self.n_code], dtype=np.int64)
        drop: set[int] = set()
        if e < self.n_code:
            n = self.n_code
            if k / e <= 7 / 16:  # puncturing: head bits of y unobserved
                drop.update(jj[: n - e].tolist())
                if e >= 3 * n / 4:
                    drop.update(range((3 * n - 2 * e + 3) // 4))
                else:
                    drop.update(range((9 * n - 4 * e + 15) // 16))
            else:  # shortening: tail bits of y forced to zero
                drop.update(jj[e:].tolist())
        usable = [q for q in rel if q not in drop]
        if len(usable) < k:
            raise ValueError(f"cannot place {k} message bits in N={self.n_code}")
        self.message_positions = np.sort(np.array(usable[-k:], dtype=np.int64))
        self.frozen_mask = np.ones(self.n_code, dtype=bool)
        self.frozen_mask[self.message_positions] = False

        if input_interleave:
            if k > 164:
                raise ValueError("input interleaving defined only for k <= 164")
            gap = 164 - k
            pi = np.array([p - gap for p in PAYLOAD_INTERLEAVER_164 if p >= gap],
                          dtype=np.int64)
            self.input_perm = pi  # c'[j] = c[pi[j]]
        else:
            self.input_perm = None

    # -- encoding ----------------------------------------------------------

    def encode(self, bits: np.ndarray) -> np.ndarray:
        """k CRC-attached bits -> e rate-matched coded bits."""
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.k,):
            raise ValueError(f"expected {self.k} bits, got shape {bits.shape}")
        if self.input_perm is not None:
            bits = bits[self.input_perm]
        u = np.zeros(self.n_code, dtype=np.uint8)
        u[self.message_positions] = bits
        x = polar_transform(u)
        y = x[self.sub_block_perm]
        if self.e == self.n_code:
            return y
        if self.e > self.n_code:  # repetition
            reps = -(-self.e // self.n_code)
            return np.tile(y, reps)[: self.e]
        if self.k / self.e <= 7 / 16:  # puncturing drops the head
            return y[self.n_code - self.e :]
        return y[: self.e]  # shortening drops the (known-zero) tail

    # -- decoding ----------------------------------------------------------

    def rate_recover(self, llrs: np.ndarray) -> np.ndarray:
        """Fold e rate-matched LLRs back onto the N mother-code positions."""
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.shape != (self.e,):
            raise ValueError(f"expected {self.e} LLRs, got shape {llrs.shape}")
        n = self.n_code
        if self.e >= n:  # repetition: repeated observations add in LLR domain
            acc = np.bincount(np.arange(self.e) % n, weights=llrs, minlength=n)
        elif self.k / self.e <= 7 / 16:  # puncturing: unobserved head, zero LLR
            acc = np.concatenate([np.zeros(n - self.e), llrs])
        else:  # shortening: tail known zero, saturated LLR
            acc = np.concatenate([llrs, np.full(n - self.e, 1e9)])
        out = np.empty(n, dtype=np.float64)
        out[self.sub_block_perm] = acc
        return out

    def decode(
        self,
        llrs: np.ndarray,
        list_size: int = 8,
        crc_ok: Callable[[np.ndarray], bool] | None = None,
    ) -> tuple[np.ndarray, bool]:
        """Rate-matched LLRs (positive favors bit 0) -> (k bits, crc_pass).

        Runs list decoding and returns the lowest-cost candidate that
        satisfies ``crc_ok``; if none does (or no checker is given), the
        lowest-cost candidate with crc_pass=False (True when unchecked).
        """
        if list_size < 1:
            raise ValueError("list_size must be >= 1")
        folded = self.rate_recover(llrs)
        decoder = _SclDecoder(self.frozen_mask, list_size)
        u_candidates = decoder.decode(folded)
        messages = u_candidates[:, self.message_positions]
        if self.input_perm is not None:
            messages = messages[:, np.argsort(self.input_perm)]
        if crc_ok is None:
            return messages[0], True
        for cand in messages:
            if crc_ok(cand):
                return cand, True
        return messages[0], False


class _SclDecoder:
    """Recursive min-sum list decoder over the polar factor tree.

    Path state (costs and decided u-bits) lives on the instance; the
    recursion exchanges encoded subtree bits plus a row map that tracks how
    surviving paths re-index the LLR rows passed into each subtree.
    """

    def __init__(self, frozen_mask: np.ndarray, list_size: int):
        self.frozen = frozen_mask
        self.list_size = list_size

    def decode(self, llrs: np.ndarray) -> np.ndarray:
        self.costs = np.zeros(1)
        self.u = np.zeros((1, 0), dtype=np.uint8)
        self._recurse(llrs[None, :], 0)
        order = np.argsort(self.costs, kind="stable")
        self.costs = self.costs[order]
        return self.u[order]

    def _recurse(self, llrs: np.ndarray, idx: int) -> tuple[np.ndarray, np.ndarray]:
        paths, n = llrs.shape
        span = self.frozen[idx : idx + n]
        if span.all():
            # All-frozen subtree: zeros out, penalize LLRs voting for 1.
            self.costs = self.costs + np.maximum(-llrs, 0.0).sum(axis=1)
            self.u = np.concatenate([self.u, np.zeros((paths, n), np.uint8)], axis=1)
            return np.zeros((paths, n), np.uint8), np.arange(paths)
        if n == 1:
            return self._message_leaf(llrs[:, 0])
        half = n // 2
        a, b = llrs[:, :half], llrs[:, half:]
        left_llrs = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
        x_left, map_left = self._recurse(left_llrs, idx)
        right_llrs = b[map_left] + (1.0 - 2.0 * x_left) * a[map_left]
        x_right, map_right = self._recurse(right_llrs, idx + half)
        x = np.concatenate([x_left[map_right] ^ x_right, x_right], axis=1)
        return x, map_left[map_right]

    def _message_leaf(self, llr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        paths = llr.size
        costs = np.concatenate([self.costs + np.maximum(-llr, 0.0),
                                self.costs + np.maximum(llr, 0.0)])
        bits = np.concatenate([np.zeros(paths, np.uint8), np.ones(paths, np.uint8)])
        rows = np.concatenate([np.arange(paths), np.arange(paths)])
        keep = np.argsort(costs, kind="stable")[: self.list_size]
        self.costs = costs[keep]
        self.u = np.concatenate(
            [np.concatenate([self.u, self.u])[keep], bits[keep, None]], axis=1
        )
        return bits[keep, None], rows[keep]
