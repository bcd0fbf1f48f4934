#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <vector>

#include "genreg/checkpoint.h"
#include "genreg/model.h"
#include "genreg/vocab.h"
#include "test_util.h"

using namespace genreg;
using genreg::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.feature_dim = 3;
    c.hidden_dim = 8;
    c.encoder_layers = 2;
    c.decoder_blocks = 1;
    c.attention_heads = 2;
    c.ffn_mult = 2;
    c.vocab_size = 6;
    c.max_len = 6;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("init_params is deterministic and validates") {
    const ModelConfig c = tiny_config();
    CHECK(init_params(c) == init_params(c));
    ModelConfig other = c;
    other.seed = 5;
    CHECK_FALSE(init_params(c) == init_params(other));

    ModelConfig bad = c;
    bad.attention_heads = 3;
    CHECK_THROWS_AS(init_params(bad), std::invalid_argument);
    bad = c;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(init_params(bad), std::invalid_argument);
}

TEST_CASE("parameter count matches the closed form") {
    for (HeadKind head : {HeadKind::gr, HeadKind::vr, HeadKind::ordinal}) {
        ModelConfig c = tiny_config();
        c.head = head;
        c.ordinal_buckets = 5;
        for (std::size_t blocks : {1, 2, 3}) {
            c.decoder_blocks = blocks;
            const ParamStore p = init_params(c);
            std::size_t enumerated = 0;
            for (const Tensor& t : p.tensors()) {
                enumerated += t.size();
            }
            CHECK(enumerated == expected_param_count(c));
            CHECK(p.scalar_count() == enumerated);
        }
    }
    ModelConfig c = tiny_config();
    const ParamStore p = init_params(c);
    CHECK(p.at("emb.token").rows() == c.vocab_size);
    CHECK(p.at("out.w").cols() == c.vocab_size);
    CHECK(p.at("emb.pos").rows() == c.max_len + 2);
}

TEST_CASE("config map round trip") {
    ModelConfig c = tiny_config();
    c.head = HeadKind::ordinal;
    c.ordinal_buckets = 7;
    const ModelConfig back = ModelConfig::from_map(c.to_map());
    CHECK(back.to_map() == c.to_map());
    CHECK_THROWS_AS(parse_head("xyz"), std::invalid_argument);
}

TEST_CASE("encode_features") {
    ModelConfig c = tiny_config();
    c.feature_dim = 8;
    c.encoder_layers = 1;
    ParamStore p = init_params(c);
    p.at("enc.0.w") = Tensor::identity(8);
    p.at("enc.0.b") = Tensor(1, 8, 0.0);
    const Tensor x = random_tensor(3, 8, 2);
    CHECK(encode_features(x, p, c) == x);

    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.name(i).starts_with("enc.")) {
            p.at(i).fill(0.0);
        }
    }
    CHECK(encode_features(x, p, c) == Tensor(3, 8, 0.0));

    ModelConfig c2 = tiny_config();
    const ParamStore q = init_params(c2);
    const Tensor x2 = random_tensor(2, 3, 9);
    const Tensor h = encode_features(x2, q, c2);
    // hand-rolled oracle: relu(x W0 + b0) W1 + b1
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> hidden(8);
        for (std::size_t j = 0; j < 8; ++j) {
            double s = q.at("enc.0.b")(0, j);
            for (std::size_t k = 0; k < 3; ++k) {
                s += x2(r, k) * q.at("enc.0.w")(k, j);
            }
            hidden[j] = std::max(0.0, s);
        }
        for (std::size_t j = 0; j < 8; ++j) {
            double s = q.at("enc.1.b")(0, j);
            for (std::size_t k = 0; k < 8; ++k) {
                s += hidden[k] * q.at("enc.1.w")(k, j);
            }
            CHECK(std::abs(h(r, j) - s) < 1e-12);
        }
    }
    CHECK_THROWS_AS(encode_features(random_tensor(2, 4, 1), q, c2), std::invalid_argument);
}

TEST_CASE("decoder shapes and id validation") {
    const ModelConfig c = tiny_config();
    const ParamStore p = init_params(c);
    const Tensor h = random_tensor(1, 8, 3);
    const std::vector<int> sos{kSosId};
    const Tensor logits = decoder_forward(h, sos, 1, 1, p, c);
    CHECK(logits.rows() == 1);
    CHECK(logits.cols() == c.vocab_size);
    CHECK(logits.all_finite());
    const std::vector<int> bad{kSosId, 17};
    CHECK_THROWS_AS(decoder_forward(h, bad, 1, 2, p, c), std::out_of_range);
    const std::vector<int> too_long(c.max_len + 2, kSosId);
    CHECK_THROWS_AS(decoder_forward(h, too_long, 1, too_long.size(), p, c), std::invalid_argument);
}

TEST_CASE("decoder causality by forward differencing") {
    const ModelConfig c = tiny_config();
    const ParamStore p = init_params(c);
    const Tensor h = random_tensor(1, 8, 3);
    const std::vector<int> ids{kSosId, 3, 4, 5, 3};
    const Tensor base = decoder_forward(h, ids, 1, ids.size(), p, c);
    for (std::size_t t = 1; t < ids.size(); ++t) {
        std::vector<int> changed = ids;
        changed[t] = changed[t] == 5 ? 4 : 5;
        const Tensor out = decoder_forward(h, changed, 1, ids.size(), p, c);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            bool same = true;
            for (std::size_t k = 0; k < c.vocab_size; ++k) {
                same = same && out(r, k) == base(r, k);
            }
            CHECK(same == (r < t));
        }
    }
}

TEST_CASE("causality holds exactly for gradients") {
    const ModelConfig c = tiny_config();
    const ParamStore params = init_params(c);
    const std::size_t len = 5;
    for (std::size_t t = 0; t < len; ++t) {
        Graph g;
        BoundParams p(g, params);
        Var inputs = g.variable(random_tensor(len, 8, 11));
        Var logits = decoder_logits(p, inputs, g.constant(random_tensor(1, 8, 12)), 1, len, c);
        Tensor pick(len, c.vocab_size, 0.0);
        for (std::size_t k = 0; k < c.vocab_size; ++k) {
            pick(t, k) = 1.0 + static_cast<double>(k);
        }
        g.backward(sum(mul(logits, g.constant(pick))));
        for (std::size_t r = t + 1; r < len; ++r) {
            for (double v : inputs.grad().row_span(r)) {
                CHECK(v == 0.0);
            }
        }
        double upstream = 0.0;
        for (double v : inputs.grad().row_span(t)) {
            upstream += std::abs(v);
        }
        CHECK(upstream > 0.0);
    }
}

TEST_CASE("parallel forward equals incremental prefix decoding") {
    const ModelConfig c = tiny_config();
    const ParamStore p = init_params(c);
    const Tensor h = random_tensor(2, 8, 5);
    const std::vector<int> ids{kSosId, 3, 4, 4, kSosId, 5, 3, 3};
    const Tensor full = decoder_forward(h, ids, 2, 4, p, c);
    for (std::size_t b = 0; b < 2; ++b) {
        Tensor hb(1, 8);
        std::copy(h.row_span(b).begin(), h.row_span(b).end(), hb.row_span(0).begin());
        for (std::size_t t = 1; t <= 4; ++t) {
            const std::vector<int> prefix(ids.begin() + static_cast<long>(b * 4),
                                          ids.begin() + static_cast<long>(b * 4 + t));
            const Tensor step = decoder_forward(hb, prefix, 1, t, p, c);
            for (std::size_t k = 0; k < c.vocab_size; ++k) {
                CHECK(std::abs(step(t - 1, k) - full(b * 4 + t - 1, k)) <= 1e-6);
            }
        }
    }
}

TEST_CASE("checkpoint round trip") {
    Checkpoint ck;
    ck.config = tiny_config();
    ck.params = init_params(ck.config);
    ck.vocab_values = {3.5, 1.25, 0.01};
    ck.standardizer.mean = {0.1, -2.0, 1.0 / 3.0};
    ck.standardizer.stddev = {1.0, 2.5, 0.7};
    ck.settings["note"] = "abc";
    const std::string bytes = serialize_checkpoint(ck);
    CHECK(bytes.substr(0, 7) == "GRCKPT1");
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.config.to_map() == ck.config.to_map());
    CHECK(back.vocab_values == ck.vocab_values);
    CHECK(back.standardizer.mean == ck.standardizer.mean);
    CHECK(back.settings.at("note") == "abc");
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        CHECK(back.params.name(i) == ck.params.name(i));
        for (std::size_t k = 0; k < ck.params.at(i).size(); ++k) {
            CHECK(back.params.at(i)[k] == static_cast<double>(static_cast<float>(ck.params.at(i)[k])));
        }
    }
    // float32 storage is idempotent
    CHECK(serialize_checkpoint(back) == bytes);

    const auto path = (std::filesystem::temp_directory_path() / "genreg_ckpt_test.bin").string();
    save_checkpoint(ck, path);
    CHECK(load_checkpoint(path).params == back.params);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects bad input") {
    Checkpoint ck;
    ck.config = tiny_config();
    ck.params = init_params(ck.config);
    std::string bytes = serialize_checkpoint(ck);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint("NOTACKPT"), doctest::Contains("magic"), std::runtime_error);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);

    // config claims a larger vocabulary than the stored blocks
    const std::string needle = "model.vocab_size=6";
    const auto pos = bytes.find(needle);
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, needle.size(), "model.vocab_size=7");
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes), doctest::Contains("does not match"), std::runtime_error);
}
