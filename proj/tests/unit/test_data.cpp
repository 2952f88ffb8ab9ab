#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "hsp/data/dataset.hpp"
#include "hsp/errors.hpp"

using namespace hsp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("hsp_data_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("task and domain names") {
    CHECK(data::parse_task("vessels") == data::Task::vessels);
    CHECK(data::task_name(data::Task::instances) == "instances");
    try {
        data::parse_task("circles");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("blobs, vessels, instances") != std::string::npos);
    }
    CHECK_THROWS_AS(data::parse_domain("other"), ConfigError);
}

TEST_CASE("generation is byte-identical for identical arguments") {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    data::SyntheticOptions opt;
    opt.count = 6;
    data::generate_synthetic(opt, a);
    data::generate_synthetic(opt, b);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        CHECK_MESSAGE(slurp(entry.path()) == slurp(b / rel), rel.string());
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("blobs masks are binary and non-trivial") {
    for (std::size_t i = 0; i < 20; ++i) {
        const auto s = data::render_sample(data::Task::blobs, 64, 7, i, data::Domain::source);
        std::size_t fg = 0;
        for (auto v : s.mask.values) {
            CHECK(v <= 1);
            fg += v;
        }
        CHECK(fg > 0);
        CHECK(fg < 64 * 64);
    }
}

TEST_CASE("instances masks have at least 20 components") {
    for (std::size_t size : {32, 64}) {
        for (std::size_t i = 0; i < 10; ++i) {
            const auto s = data::render_sample(data::Task::instances, size, 3, i, data::Domain::source);
            CHECK(data::count_components(s.mask, 1) >= 20);
        }
    }
}

TEST_CASE("vessels are thin structures") {
    const auto s = data::render_sample(data::Task::vessels, 64, 5, 0, data::Domain::source);
    std::size_t fg = 0;
    for (auto v : s.mask.values) fg += v;
    CHECK(fg > 20);
    CHECK(fg < 64 * 64 / 2);
}

TEST_CASE("source and target share masks and differ in appearance") {
    for (auto task : {data::Task::blobs, data::Task::vessels, data::Task::instances}) {
        const auto src = data::render_sample(task, 64, 11, 2, data::Domain::source);
        const auto tgt = data::render_sample(task, 64, 11, 2, data::Domain::target);
        CHECK(src.mask == tgt.mask);
        CHECK(src.image.pixels != tgt.image.pixels);
    }
}

TEST_CASE("manifest splits and loading") {
    const auto dir = scratch("manifest");
    data::SyntheticOptions opt;
    opt.count = 10;
    opt.image_size = 32;
    const auto generated = data::generate_synthetic(opt, dir);
    const auto m = data::DatasetManifest::load(dir / "manifest.json");
    CHECK(m.name == generated.name);
    CHECK(m.split("train").size() == 7);
    CHECK(m.split("test").size() == 3);
    CHECK(m.split("val").empty());
    CHECK_NOTHROW(m.validate_files());

    std::set<std::string> seen;
    for (const auto& s : {"train", "val", "test"}) {
        for (const auto& e : m.split(s)) CHECK(seen.insert(e.image).second);
    }

    const auto one = data::load_batch(m, "train", {0});
    CHECK(one.size() == 1);
    CHECK(one.images.shape() == num::Shape{1, 1, 32, 32});
    const auto batch = data::load_batch(m, "test", {2, 0});
    CHECK(batch.ids[0] == m.split("test")[2].image);
    for (double v : batch.images.to_vector()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(batch.image(1).shape() == num::Shape{1, 32, 32});
    CHECK_THROWS_AS(data::load_batch(m, "test", {3}), UsageError);

    // Mask round trip: decode, re-encode, compare bytes.
    const auto mask_path = dir / m.split("train")[0].mask;
    const auto encoded = data::encode_pnm(data::labels_to_image(one.labels[0]));
    CHECK(std::vector<char>(encoded.begin(), encoded.end()) == slurp(mask_path));
    fs::remove_all(dir);
}

TEST_CASE("explicit test count") {
    const auto dir = scratch("testcount");
    data::SyntheticOptions opt;
    opt.count = 12;
    opt.image_size = 32;
    opt.test_count = 5;
    const auto m = data::generate_synthetic(opt, dir);
    CHECK(m.split("train").size() == 7);
    CHECK(m.split("test").size() == 5);
    opt.test_count = 12;
    CHECK_THROWS_AS(data::generate_synthetic(opt, dir), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("dataset errors name the offending file") {
    const auto dir = scratch("errors");
    data::SyntheticOptions opt;
    opt.count = 3;
    opt.image_size = 32;
    auto m = data::generate_synthetic(opt, dir);
    // A mask label beyond num_classes.
    data::LabelMap bad(32, 32);
    bad.values[0] = 5;
    data::write_pnm(dir / m.split("train")[0].mask, data::labels_to_image(bad));
    try {
        data::load_batch(m, "train", {0});
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find(m.split("train")[0].mask) != std::string::npos);
    }
    {
        std::ofstream(dir / m.split("train")[1].image) << "garbage";
    }
    CHECK_THROWS_AS(data::load_batch(m, "train", {1}), DatasetError);
    CHECK_THROWS_AS(data::DatasetManifest::load(dir / "missing.json"), IoError);
    {
        std::ofstream(dir / "broken.json") << "{\"name\": 1}";
    }
    CHECK_THROWS_AS(data::DatasetManifest::load(dir / "broken.json"), DatasetError);
    fs::remove_all(dir);
}

TEST_CASE("resizing keeps labels exact") {
    data::LabelMap m(4, 4);
    m.at(0, 0) = 1;
    m.at(3, 3) = 2;
    const auto up = data::resize_labels(m, 8);
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) CHECK(up.at(y, x) == m.at(y / 2, x / 2));
    }
    const auto down = data::resize_labels(up, 4);
    CHECK(down == m);

    data::Image8 img;
    img.width = 2;
    img.height = 2;
    img.pixels = {0, 255, 255, 0};
    const auto big = data::resize_image(img, 4);
    CHECK(big.pixels.size() == 16);
    CHECK(big.pixels[0] == 0);
}

TEST_CASE("rgb images load as three planes") {
    const auto dir = scratch("rgb");
    fs::create_directories(dir);
    data::Image8 rgb;
    rgb.width = 2;
    rgb.height = 2;
    rgb.channels = 3;
    rgb.pixels = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    data::write_pnm(dir / "a.ppm", rgb);
    data::write_pnm(dir / "a_mask.pgm", data::labels_to_image(data::LabelMap(2, 2)));
    data::DatasetManifest m;
    m.name = "rgb";
    m.image_size = 2;
    m.root = dir;
    m.splits["train"].push_back({"a.ppm", "a_mask.pgm"});
    const auto batch = data::load_batch(m, "train", {0}, num::DType::f64);
    CHECK(batch.images.shape() == num::Shape{1, 3, 2, 2});
    const auto v = batch.images.to_vector();
    CHECK(v[0] == 1.0);  // red plane, pixel 0
    CHECK(v[4 + 1] == 1.0);  // green plane, pixel 1
    fs::remove_all(dir);
}
