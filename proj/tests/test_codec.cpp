#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "genreg/codec.h"
#include "genreg/data.h"
#include "genreg/random.h"

using namespace genreg;

namespace {

const ValueVocabulary& example_vocab() {
    static const ValueVocabulary v = build_manual({30, 10, 5, 1, 0.5, 0.1, 0.05, 0.01});
    return v;
}

// Fewest tokens of any non-increasing decomposition hitting y exactly (integer tokens).
std::size_t brute_force_min(long y, const std::vector<long>& values, std::size_t limit) {
    std::size_t best = limit + 1;
    std::function<void(long, std::size_t, std::size_t)> go = [&](long rest, std::size_t from, std::size_t used) {
        if (rest == 0) {
            best = std::min(best, used);
            return;
        }
        if (used + 1 >= best) {
            return;
        }
        for (std::size_t i = from; i < values.size(); ++i) {
            if (values[i] <= rest) {
                go(rest - values[i], i, used + 1);
            }
        }
    };
    go(y, 0, 0);
    return best;
}

}  // namespace

TEST_CASE("encode examples") {
    const auto& v = example_vocab();
    const TokenSeq zero = encode(0.0, v);
    CHECK(zero.ids.empty());
    CHECK(zero.encoding_error == 0.0);

    const TokenSeq s = encode(47.0, v);
    CHECK(s.ids == std::vector<int>{3, 4, 5, 6, 6});
    CHECK(s.encoding_error == 0.0);
    CHECK(decode(s.ids, v) == 47.0);

    CHECK_THROWS_AS(encode(-1.0, v), std::invalid_argument);
    CHECK_THROWS_AS(encode(NAN, v), std::invalid_argument);
}

TEST_CASE("decode") {
    const auto& v = example_vocab();
    CHECK(decode(std::vector<int>{}, v) == 0.0);
    CHECK(decode(std::vector<int>{3, 4, 5, 6, 6}, v) == 47.0);
    CHECK(decode(std::vector<int>{kSosId, 3, kEosId}, v) == 30.0);
    CHECK_THROWS_AS(decode(std::vector<int>{99}, v), std::out_of_range);
    // additive and order-insensitive
    std::vector<int> perm{6, 3, 6, 5, 4};
    CHECK(decode(perm, v) == 47.0);
}

TEST_CASE("truncation at max_len") {
    const auto v = build_manual({1});
    const TokenSeq s = encode(40.0, v, {32, 0.001});
    CHECK(s.ids.size() == 32);
    CHECK(s.truncated);
    CHECK(s.encoding_error == doctest::Approx(8.0));
}

TEST_CASE("encoded sequences are non-increasing and within tolerance on construction data") {
    const Dataset d = synth_longtail(2000, 6, 5);
    const auto v = build_dynamic(d.targets);
    SplitMix64 rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double y = d.targets[rng.below(d.targets.size())];
        const TokenSeq s = encode(y, v);
        for (std::size_t t = 1; t < s.ids.size(); ++t) {
            CHECK(v.value_of(s.ids[t]) <= v.value_of(s.ids[t - 1]));
        }
        CHECK(std::abs(decode(s.ids, v) - y) <= 0.001 * y + 1e-12);
        CHECK(s.encoding_error >= -1e-9);
    }
}

TEST_CASE("validate_roundtrip") {
    const Dataset d = synth_longtail(3000, 6, 8);
    const auto v = build_dynamic(d.targets);
    const auto r = validate_roundtrip(d.targets, v);
    CHECK(r.count == 3000);
    CHECK(r.pct_within_tolerance == 100.0);
    CHECK(r.out_of_tolerance == 0);
    CHECK(r.max_rel_err <= 0.001 + 1e-12);

    const std::vector<double> zeros(10, 0.0);
    const auto z = validate_roundtrip(zeros, v);
    CHECK(z.max_rel_err == 0.0);
    CHECK(z.mean_seq_len == 0.0);

    const auto coarse = build_manual({10, 5});
    const std::vector<double> tiny{1.0};
    const auto t = validate_roundtrip(tiny, coarse);
    CHECK(t.out_of_tolerance == 1);
    CHECK(t.pct_within_tolerance == 0.0);
    CHECK(format_roundtrip_table(t).find("pct_within_tolerance") != std::string::npos);
}

TEST_CASE("greedy is minimal on divisibility-chain vocabularies") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<long> values{1};
        const int n = 2 + static_cast<int>(rng.below(3));
        for (int i = 0; i < n; ++i) {
            const long mult = std::vector<long>{2, 3, 5}[rng.below(3)];
            values.push_back(values.back() * mult);
        }
        std::reverse(values.begin(), values.end());
        const auto v = build_manual(std::vector<double>(values.begin(), values.end()));
        for (int k = 0; k < 15; ++k) {
            const long y = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(values.front() * 3)));
            const TokenSeq s = encode(static_cast<double>(y), v, {64, 0.0});
            REQUIRE(decode(s.ids, v) == static_cast<double>(y));
            CHECK(brute_force_min(y, values, s.ids.size()) == s.ids.size());
        }
    }
}
