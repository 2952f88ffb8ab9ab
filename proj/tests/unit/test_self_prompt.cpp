#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"
#include "hsp/self_prompt/heatmap.hpp"
#include "hsp/self_prompt/prompt_bank.hpp"

using namespace hsp;
using num::Tensor;

namespace {

constexpr num::DType f64 = num::DType::f64;

prompt::PromptConfig config(std::size_t c, std::size_t n = 3) {
    prompt::PromptConfig cfg;
    cfg.count = c;
    cfg.layers = n;
    cfg.encoder_width = 96;
    cfg.decoder_width = 48;
    return cfg;
}

void fill(Tensor& t, double value) {
    for (auto& v : t.mutable_data<double>()) v = value;
}

}  // namespace

TEST_CASE("prompt bank init is deterministic in the seed") {
    const auto a = prompt::PromptBank::init(config(2), f64, 9);
    const auto b = prompt::PromptBank::init(config(2), f64, 9);
    const auto c = prompt::PromptBank::init(config(2), f64, 10);
    num::ParamList pa, pb, pc;
    a.collect("", pa);
    b.collect("", pb);
    c.collect("", pc);
    REQUIRE(pa.size() == pb.size());
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor.bit_equal(pb[i].tensor));
        differs = differs || !pa[i].tensor.bit_equal(pc[i].tensor);
    }
    CHECK(differs);
}

TEST_CASE("query shapes and answer shapes") {
    const auto bank = prompt::PromptBank::init(config(4), f64, 1);
    const auto qs = bank.queries();
    REQUIRE(qs.size() == 3);
    for (const auto& q : qs) CHECK(q.shape() == num::Shape{4, 96});
    CHECK(bank.compute_answers(0).shape() == num::Shape{4, 48});

    const auto single = prompt::PromptBank::init(config(1), f64, 1);
    CHECK(single.compute_answers(2).shape() == num::Shape{1, 48});
    CHECK_THROWS_AS(single.compute_answers(3), ConfigError);
}

TEST_CASE("prompt config validation") {
    CHECK_THROWS_AS(prompt::PromptBank::init(config(0), f64, 1), ConfigError);
    CHECK_THROWS_AS(prompt::PromptBank::init(config(1, 0), f64, 1), ConfigError);
    auto cfg = config(1);
    cfg.decoder_width = 96;
    CHECK_THROWS_AS(prompt::PromptBank::init(cfg, f64, 1), ConfigError);
}

TEST_CASE("truncating reduction and identity mlps copy the leading query entries") {
    auto bank = prompt::PromptBank::init(config(3, 1), f64, 2);
    auto& layer = bank.layer(0);
    fill(layer.reduce.weight, 0.0);
    for (std::size_t r = 0; r < 48; ++r) layer.reduce.weight.set(r * 96 + r, 1.0);
    // The MLP becomes the identity by shifting into gelu's linear regime
    // (gelu(x) == x in double precision for x >= ~40) and shifting back.
    const double shift = 50.0;
    for (auto& mlp : layer.mlps) {
        fill(mlp.fc1.weight, 0.0);
        fill(mlp.fc2.weight, 0.0);
        for (std::size_t r = 0; r < 48; ++r) {
            mlp.fc1.weight.set(r * 48 + r, 1.0);
            mlp.fc2.weight.set(r * 48 + r, 1.0);
        }
        fill(mlp.fc1.bias, shift);
        fill(mlp.fc2.bias, -shift);
    }
    const auto a = bank.compute_answers(0).to_vector();
    const auto q = layer.queries.to_vector();
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 48; ++k) {
            CHECK(std::abs(a[i * 48 + k] - q[i * 96 + k]) < 1e-12);
        }
    }
}

TEST_CASE("answer rows depend only on their own query row") {
    auto bank = prompt::PromptBank::init(config(4, 1), f64, 3);
    const auto before = bank.compute_answers(0).to_vector();
    Tensor& q = bank.layer(0).queries;
    for (std::size_t k = 0; k < 96; ++k) q.set(1 * 96 + k, q.at(1 * 96 + k) + 0.3);
    const auto after = bank.compute_answers(0).to_vector();
    bool row_changed = false;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k < 48; ++k) {
            if (i == 1) {
                row_changed = row_changed || after[i * 48 + k] != before[i * 48 + k];
            } else {
                CHECK(after[i * 48 + k] == before[i * 48 + k]);
            }
        }
    }
    CHECK(row_changed);
}

TEST_CASE("answer jacobian is block diagonal across prompts") {
    auto bank = prompt::PromptBank::init(config(3, 1), f64, 4);
    // d(A row i)/d(Q row k) via the gradient of a weighted sum of row i.
    for (std::size_t i = 0; i < 3; ++i) {
        num::ParamList params;
        bank.collect("", params);
        for (auto& p : params) p.tensor.zero_grad();
        const Tensor row = num::slice(bank.compute_answers(0), 0, i, i + 1);
        num::Rng rng(100 + i);
        num::backward(num::sum(num::mul(row, num::randn({1, 48}, f64, rng, 1.0))));
        const auto g = bank.layer(0).queries.grad_vector();
        for (std::size_t k = 0; k < 3; ++k) {
            double norm = 0;
            for (std::size_t t = 0; t < 96; ++t) norm += std::abs(g[k * 96 + t]);
            if (k == i) {
                CHECK(norm > 0.0);
            } else {
                CHECK(norm == 0.0);
            }
        }
    }
}

TEST_CASE("compute_answers is repeatable") {
    const auto bank = prompt::PromptBank::init(config(2), f64, 5);
    CHECK(bank.compute_answers(1).bit_equal(bank.compute_answers(1)));
}

TEST_CASE("every bank parameter receives gradient") {
    const auto bank = prompt::PromptBank::init(config(2), f64, 6);
    num::Rng rng(7);
    Tensor loss = Tensor::scalar(0.0, f64);
    for (std::size_t j = 0; j < 3; ++j) {
        const Tensor a = bank.compute_answers(j);
        loss = num::add(loss, num::sum(num::mul(a, num::randn(a.shape(), f64, rng, 1.0))));
        loss = num::add(loss, num::sum(num::mul(bank.queries()[j],
                                                num::randn({2, 96}, f64, rng, 1.0))));
    }
    num::backward(loss);
    num::ParamList params;
    bank.collect("", params);
    for (const auto& p : params) {
        REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
        double norm = 0;
        for (double g : p.tensor.grad_vector()) norm += std::abs(g);
        CHECK_MESSAGE(norm > 0.0, p.name);
    }
}

TEST_CASE("bank parameter count grows with the prompt count") {
    auto count = [](std::size_t c) {
        num::ParamList params;
        prompt::PromptBank::init(config(c), f64, 1).collect("", params);
        return num::count_elements(params);
    };
    // Per level: c*d_I queries, d_I*d_D reduction, c MLPs of 2*(d_D^2 + d_D).
    const std::size_t per_prompt = 96 + 2 * (48 * 48 + 48);
    CHECK(count(1) == 3 * (96 * 48 + per_prompt));
    CHECK(count(4) == 3 * (96 * 48 + 4 * per_prompt));
}

TEST_CASE("heatmap of uniform attention is all zeros") {
    std::vector<double> row(64, 1.0 / 64.0);
    const auto img = prompt::render_heatmap(row, 64);
    CHECK(img.width == 64);
    CHECK(img.height == 64);
    for (auto p : img.pixels) CHECK(p == 0);
}

TEST_CASE("one-hot attention lights the top-left patch") {
    std::vector<double> row(64, 0.0);
    row[0] = 1.0;
    const auto img = prompt::render_heatmap(row, 64);
    CHECK(img.pixels[0] == 255);
    // Far from the first patch everything is black.
    for (std::size_t y = 16; y < 64; ++y) {
        for (std::size_t x = 0; x < 64; ++x) CHECK(img.pixels[y * 64 + x] == 0);
    }
    // Brightest region sits in the first patch.
    CHECK(img.pixels[3 * 64 + 3] == 255);
    CHECK(img.pixels[0 * 64 + 12] < img.pixels[0 * 64 + 4]);
}

TEST_CASE("heatmap export counts and names") {
    std::vector<Tensor> q, a;
    num::Rng rng(8);
    for (int j = 0; j < 3; ++j) {
        q.push_back(num::softmax(num::randn({2, 64}, f64, rng, 1.0), 1));
        a.push_back(num::softmax(num::randn({2, 64}, f64, rng, 1.0), 1));
    }
    const auto maps = prompt::export_heatmaps(q, a, 64);
    REQUIRE(maps.size() == 12);
    CHECK(maps.front().filename() == "layer1_prompt1_Q.pgm");
    CHECK(maps.back().filename() == "layer3_prompt2_A.pgm");

    const auto dir = std::filesystem::temp_directory_path() / "hsp_heatmap_test";
    std::filesystem::remove_all(dir);
    prompt::write_heatmaps(dir, maps);
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto img = data::read_pnm(entry.path());
        CHECK(img.channels == 1);
        CHECK(img.width == 64);
        ++files;
    }
    CHECK(files == 12);
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS(prompt::export_heatmaps(q, std::span(a).first(2), 64), UsageError);
    std::vector<double> bad(10, 0.1);
    CHECK_THROWS_AS(prompt::render_heatmap(bad, 64), ShapeError);
}

TEST_CASE("pnm codec round-trips and rejects malformed input") {
    data::Image8 img;
    img.width = 3;
    img.height = 2;
    img.pixels = {0, 1, 2, 253, 254, 255};
    const auto bytes = data::encode_pnm(img);
    const auto back = data::decode_pnm(bytes, "mem");
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.pixels == img.pixels);

    std::string with_comment = "P5\n# note\n3 2\n255\n";
    std::vector<std::uint8_t> raw(with_comment.begin(), with_comment.end());
    raw.insert(raw.end(), img.pixels.begin(), img.pixels.end());
    CHECK(data::decode_pnm(raw, "mem").pixels == img.pixels);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(data::decode_pnm(truncated, "mem"), DatasetError);
    std::vector<std::uint8_t> p2{'P', '2', '\n'};
    CHECK_THROWS_AS(data::decode_pnm(p2, "mem"), DatasetError);
    CHECK_THROWS_AS(data::read_pnm("/nonexistent/x.pgm"), IoError);
}
