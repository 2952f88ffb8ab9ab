#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hsp/errors.hpp"
#include "hsp/trainer/checkpoint.hpp"
#include "hsp/trainer/config_json.hpp"
#include "hsp/trainer/plot.hpp"
#include "hsp/trainer/trainer.hpp"

using namespace hsp;
using num::Tensor;
namespace fs = std::filesystem;

namespace {

trainer::ModelConfig tiny_model() {
    trainer::ModelConfig m;
    m.encoder.image_size = 32;
    m.encoder.patch_size = 8;
    m.encoder.width = 32;
    m.encoder.depth = 4;
    m.encoder.global_layers = {1, 3};
    m.encoder.heads = 2;
    m.encoder.window_size = 2;
    m.encoder.lora_rank = 2;
    m.encoder.mlp_ratio = 2;
    m.decoder_width = 16;
    m.decoder_heads = 2;
    m.prompt_count = 2;
    return m;
}

trainer::TrainConfig tiny_train() {
    trainer::TrainConfig t;
    t.epochs = 2;
    t.batch_size = 3;
    t.seed = 3;
    t.monitor = false;
    return t;
}

const data::DatasetManifest& tiny_data() {
    static const data::DatasetManifest manifest = [] {
        const auto dir = fs::temp_directory_path() / "hsp_trainer_test_data";
        fs::remove_all(dir);
        data::SyntheticOptions opt;
        opt.count = 8;
        opt.test_count = 2;
        opt.image_size = 32;
        return data::generate_synthetic(opt, dir);
    }();
    return manifest;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("variant lattice") {
    CHECK(trainer::variant_of({true, true, true}) == trainer::Variant::ablation_3);
    CHECK(trainer::variant_of({false, false, false}) == trainer::Variant::ft_sam);
    CHECK_THROWS_AS(trainer::variant_of({true, false, true}), ConfigError);
    CHECK(trainer::variant_name(trainer::Variant::ablation_5) == "Ablation_5");
    std::set<std::string> names;
    for (auto v : trainer::kAllVariants) names.insert(trainer::variant_name(v));
    CHECK(names.size() == 6);
}

TEST_CASE("trainable parameter ordering across variants") {
    auto count = [](trainer::Variant v) {
        trainer::ModelConfig m;
        m.flags = trainer::flags_of(v);
        return trainer::Model(m, num::DType::f32, 1).trainable_count();
    };
    using trainer::Variant;
    CHECK(count(Variant::ablation_1) < count(Variant::ablation_4));
    CHECK(count(Variant::ablation_4) == count(Variant::ablation_5));
    CHECK(count(Variant::ablation_5) < count(Variant::ablation_2));
    CHECK(count(Variant::ablation_2) == count(Variant::ablation_3));
}

TEST_CASE("prompt count leaves spatial parameter counts unchanged") {
    auto spatial = [](std::size_t c) {
        auto m = tiny_model();
        m.prompt_count = c;
        trainer::Model model(m, num::DType::f32, 1);
        std::size_t n = 0;
        for (const auto& p : model.trainable_parameters()) {
            if (p.name.rfind("prompts.", 0) != 0) n += p.tensor.numel();
        }
        return n;
    };
    CHECK(spatial(1) == spatial(16));
}

TEST_CASE("model forward shapes and records per variant") {
    for (auto v : trainer::kAllVariants) {
        auto m = tiny_model();
        m.flags = trainer::flags_of(v);
        trainer::Model model(m, num::DType::f64, 5);
        const auto out = model.forward(Tensor::full({1, 32, 32}, 0.5, num::DType::f64));
        CHECK(out.logits.shape() == num::Shape{2, 32, 32});
        const std::size_t expect = m.flags.qa_pairs ? m.levels() : 0;
        CHECK(out.query_attention.size() == expect);
        CHECK(out.answer_attention.size() == expect);
        for (const auto& r : out.query_attention) CHECK(r.shape() == num::Shape{2, 16});
    }
}

TEST_CASE("adam step matches the closed form") {
    Tensor w = Tensor::from_values({2}, {1.0, -2.0}, num::DType::f64);
    w.set_requires_grad(true);
    trainer::Adam opt({{"w", w}}, {0.1});
    num::backward(num::sum(num::mul(w, Tensor::from_values({2}, {3.0, -0.5}, num::DType::f64))));
    opt.step();
    // First step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
    CHECK(w.at(0) == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
    CHECK(w.at(1) == doctest::Approx(-2.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(opt.steps() == 1);
    CHECK(opt.state().size() == 2);
}

TEST_CASE("zero learning rate keeps parameters and loss constant") {
    auto cfg = tiny_train();
    cfg.learning_rate = 0.0;
    trainer::Model fresh(tiny_model(), cfg.dtype, cfg.seed);
    const auto result = trainer::train(tiny_model(), cfg, tiny_data());
    const auto before = fresh.trainable_parameters();
    const auto after = result.model.trainable_parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i].tensor.bit_equal(before[i].tensor));
    REQUIRE(result.history.size() == 2);
    CHECK(result.history[0].train_loss == result.history[1].train_loss);
}

TEST_CASE("training updates trainables and leaves the backbone untouched") {
    const auto cfg = tiny_train();
    trainer::Model fresh(tiny_model(), cfg.dtype, cfg.seed);
    const auto result = trainer::train(tiny_model(), cfg, tiny_data());
    const auto frozen_before = fresh.frozen_parameters();
    const auto frozen_after = result.model.frozen_parameters();
    REQUIRE(frozen_before.size() == frozen_after.size());
    for (std::size_t i = 0; i < frozen_before.size(); ++i) {
        CHECK_MESSAGE(frozen_after[i].tensor.bit_equal(frozen_before[i].tensor), frozen_after[i].name);
    }
    const auto tb = fresh.trainable_parameters();
    const auto ta = result.model.trainable_parameters();
    std::size_t changed = 0;
    for (std::size_t i = 0; i < tb.size(); ++i) {
        if (!ta[i].tensor.bit_equal(tb[i].tensor)) changed += ta[i].tensor.numel();
    }
    CHECK(changed == result.model.trainable_count());
}

TEST_CASE("training is deterministic and checkpoints round trip") {
    const auto cfg = tiny_train();
    const auto dir = fs::temp_directory_path() / "hsp_trainer_test_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto a = trainer::train(tiny_model(), cfg, tiny_data());
    auto b = trainer::train(tiny_model(), cfg, tiny_data());
    trainer::save_checkpoint(dir / "a.hspc", trainer::make_checkpoint(a, cfg));
    trainer::save_checkpoint(dir / "b.hspc", trainer::make_checkpoint(b, cfg));
    CHECK(slurp(dir / "a.hspc") == slurp(dir / "b.hspc"));

    const auto loaded = trainer::load_checkpoint(dir / "a.hspc");
    CHECK(loaded.epoch == 2);
    CHECK(loaded.history.size() == 2);
    CHECK(loaded.history[1].train_loss == a.history[1].train_loss);
    const auto restored = trainer::restore_model(loaded);
    const auto image = data::load_batch(tiny_data(), "test", {0}).image(0);
    {
        num::NoGradGuard guard;
        CHECK(restored.forward(image).logits.bit_equal(a.model.forward(image).logits));
    }

    // Resuming from the checkpoint matches uninterrupted training.
    auto longer = cfg;
    longer.epochs = 3;
    auto resumed = trainer::restore_training(loaded);
    trainer::resume(resumed, longer, tiny_data());
    trainer::resume(a, longer, tiny_data());
    CHECK(resumed.history.back().train_loss == a.history.back().train_loss);
    num::NoGradGuard guard;
    CHECK(resumed.model.forward(image).logits.bit_equal(a.model.forward(image).logits));
    fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto dir = fs::temp_directory_path() / "hsp_trainer_test_corrupt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream(dir / "junk.hspc") << "HSPX";
    }
    CHECK_THROWS_AS(trainer::load_checkpoint(dir / "junk.hspc"), IoError);
    CHECK_THROWS_AS(trainer::load_checkpoint(dir / "missing.hspc"), IoError);
    const auto cfg = tiny_train();
    trainer::TrainResult r{trainer::Model(tiny_model(), cfg.dtype, 1),
                           trainer::Adam({}, {}), {}};
    trainer::save_checkpoint(dir / "ok.hspc", trainer::make_checkpoint(r, cfg));
    auto bytes = slurp(dir / "ok.hspc");
    bytes.resize(bytes.size() / 2);
    {
        std::ofstream out(dir / "cut.hspc", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(trainer::load_checkpoint(dir / "cut.hspc"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("evaluation is idempotent and thread-count independent") {
    trainer::Model model(tiny_model(), num::DType::f32, 9);
    const auto a = trainer::evaluate(model, tiny_data(), "train");
    const auto b = trainer::evaluate(model, tiny_data(), "train");
    const auto c = trainer::evaluate(model, tiny_data(), "train", 3);
    CHECK(trainer::to_json(a) == trainer::to_json(b));
    CHECK(trainer::to_json(a) == trainer::to_json(c));
    CHECK(a.per_image.size() == 6);

    auto wrong = tiny_model();
    wrong.encoder.image_size = 64;
    wrong.encoder.window_size = 4;
    trainer::Model big(wrong, num::DType::f32, 9);
    CHECK_THROWS_AS(trainer::evaluate(big, tiny_data(), "train"), ConfigError);
}

TEST_CASE("argmax prediction prefers the lower class on ties") {
    const Tensor logits = Tensor::from_values({2, 1, 3}, {0, 1, 2, 0, 2, 1}, num::DType::f64);
    const auto labels = trainer::predict_labels(logits);
    CHECK(labels.values == std::vector<std::uint8_t>{0, 1, 0});
}

TEST_CASE("config json is strict") {
    const auto m = tiny_model();
    const auto round = trainer::model_config_from_json(trainer::to_json(m));
    CHECK(trainer::to_json(round) == trainer::to_json(m));
    auto doc = trainer::to_json(m);
    doc["encoder"]["colour"] = 1;
    CHECK_THROWS_AS(trainer::model_config_from_json(doc), ConfigError);
    doc = trainer::to_json(m);
    doc["encoder"]["depth"] = "four";
    CHECK_THROWS_AS(trainer::model_config_from_json(doc), ConfigError);
    doc = trainer::to_json(m);
    doc["variant"]["hierarchical_decoding"] = false;
    CHECK_THROWS_AS(trainer::model_config_from_json(doc), ConfigError);

    const auto t = trainer::train_config_from_json({{"epochs", 3}, {"dtype", "float64"}});
    CHECK(t.epochs == 3);
    CHECK(t.dtype == num::DType::f64);
    CHECK(t.loss.alpha == 0.8);
    CHECK_THROWS_AS(trainer::train_config_from_json({{"epochs", -1}}), ConfigError);
    CHECK_THROWS_AS(trainer::train_config_from_json({{"lr", 0.1}}), ConfigError);
    CHECK_THROWS_AS(trainer::train_config_from_json({{"alpha", 2.0}}), ConfigError);
}

TEST_CASE("csv tables and plot") {
    std::vector<trainer::AblationRow> rows(1);
    rows[0].variant = trainer::Variant::ablation_3;
    rows[0].dice = 0.5;
    rows[0].hd = 1.25;
    rows[0].params = 42;
    CHECK(trainer::ablation_csv(rows) == "variant,dice,hd,params\nAblation_3,0.500000,1.250000,42\n");
    std::vector<trainer::SweepRow> sweep{{1, 0.9, 0.8}, {2, 0.91, std::nullopt}};
    CHECK(trainer::sweep_csv(sweep) == "count,source_dice,target_dice\n1,0.900000,0.800000\n2,0.910000,\n");

    const auto img = trainer::render_line_plot({{{0.2, 0.8, 0.5}, 255}}, 0.0, 1.0);
    CHECK(img.width == 320);
    CHECK(img.height == 240);
    std::size_t lit = 0;
    for (auto p : img.pixels) lit += p == 255;
    CHECK(lit > 50);
}
