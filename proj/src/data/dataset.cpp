#include "hsp/data/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "hsp/errors.hpp"
#include "hsp/numerics/interp.hpp"
#include "hsp/numerics/ops.hpp"
#include "json.hpp"

namespace hsp::data {

namespace {

const std::set<std::string> kSplitNames{"train", "val", "test"};

}  // namespace

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(path.string() + ": malformed manifest: " + e.what());
    }
    DatasetManifest m;
    m.root = path.parent_path();
    try {
        m.name = doc.at("name").get<std::string>();
        m.num_classes = doc.at("num_classes").get<std::size_t>();
        m.image_size = doc.at("image_size").get<std::size_t>();
        for (const auto& [split, entries] : doc.at("splits").items()) {
            if (!kSplitNames.count(split)) {
                throw DatasetError(path.string() + ": unknown split '" + split + "'");
            }
            auto& list = m.splits[split];
            for (const auto& e : entries) {
                list.push_back({e.at("image").get<std::string>(), e.at("mask").get<std::string>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(path.string() + ": invalid manifest: " + e.what());
    }
    if (m.num_classes < 2 || m.num_classes > 256) {
        throw DatasetError(path.string() + ": num_classes must be in [2, 256]");
    }
    if (m.image_size == 0) throw DatasetError(path.string() + ": image_size must be positive");
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    nlohmann::json splits_json = nlohmann::json::object();
    for (const auto& [split, entries] : splits) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : entries) list.push_back({{"image", e.image}, {"mask", e.mask}});
        splits_json[split] = list;
    }
    const nlohmann::json doc{{"name", name},
                             {"num_classes", num_classes},
                             {"image_size", image_size},
                             {"splits", splits_json}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("failed writing manifest " + path.string());
}

const std::vector<SampleEntry>& DatasetManifest::split(const std::string& name) const {
    static const std::vector<SampleEntry> empty;
    if (!kSplitNames.count(name)) throw UsageError("unknown split '" + name + "'");
    const auto it = splits.find(name);
    return it == splits.end() ? empty : it->second;
}

void DatasetManifest::validate_files() const {
    std::set<std::filesystem::path> seen;
    for (const auto& [split, entries] : splits) {
        for (const auto& e : entries) {
            const auto image_path = (root / e.image).lexically_normal();
            if (!seen.insert(image_path).second) {
                throw DatasetError(name + ": " + e.image + " appears in more than one split entry");
            }
            read_pnm(image_path);
            labels_from_image(read_pnm(root / e.mask), num_classes, (root / e.mask).string());
        }
    }
}

num::Tensor SampleBatch::image(std::size_t i) const {
    const auto& s = images.shape();
    num::NoGradGuard guard;
    return num::reshape(num::slice(images, 0, i, i + 1), {s[1], s[2], s[3]});
}

LabelMap labels_from_image(const Image8& mask, std::size_t num_classes, const std::string& origin) {
    if (mask.channels != 1) throw DatasetError(origin + ": masks must be single-channel");
    LabelMap labels(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        if (mask.pixels[i] >= num_classes) {
            throw DatasetError(origin + ": label " + std::to_string(mask.pixels[i]) +
                               " exceeds num_classes " + std::to_string(num_classes));
        }
        labels.values[i] = mask.pixels[i];
    }
    return labels;
}

Image8 labels_to_image(const LabelMap& labels) {
    Image8 img;
    img.width = labels.width;
    img.height = labels.height;
    img.pixels = labels.values;
    return img;
}

Image8 resize_image(const Image8& image, std::size_t size) {
    if (image.width == size && image.height == size) return image;
    Image8 out;
    out.width = size;
    out.height = size;
    out.channels = image.channels;
    out.pixels.resize(size * size * image.channels);
    std::vector<double> plane(image.width * image.height);
    for (std::size_t ch = 0; ch < image.channels; ++ch) {
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane[i] = image.pixels[i * image.channels + ch];
        }
        const auto resized = num::resize_bilinear(plane, image.height, image.width, size, size);
        for (std::size_t i = 0; i < resized.size(); ++i) {
            out.pixels[i * image.channels + ch] =
                static_cast<std::uint8_t>(std::lround(std::clamp(resized[i], 0.0, 255.0)));
        }
    }
    return out;
}

LabelMap resize_labels(const LabelMap& labels, std::size_t size) {
    if (labels.width == size && labels.height == size) return labels;
    LabelMap out(size, size);
    for (std::size_t y = 0; y < size; ++y) {
        const std::size_t sy = std::min(labels.height - 1, (2 * y + 1) * labels.height / (2 * size));
        for (std::size_t x = 0; x < size; ++x) {
            const std::size_t sx = std::min(labels.width - 1, (2 * x + 1) * labels.width / (2 * size));
            out.at(y, x) = labels.at(sy, sx);
        }
    }
    return out;
}

namespace {

// Interleaved (H, W, C) -> planar (C, H, W), appended to `values`.
void append_planar(const Image8& image, std::vector<double>& values) {
    const std::size_t n = image.width * image.height, channels = image.channels;
    const std::size_t base = values.size();
    values.resize(base + channels * n);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t i = 0; i < n; ++i) values[base + ch * n + i] = image.pixels[i * channels + ch] / 255.0;
    }
}

}  // namespace

num::Tensor image_tensor(const Image8& image, std::size_t size, num::DType dtype) {
    const Image8 resized = resize_image(image, size);
    std::vector<double> values;
    append_planar(resized, values);
    return num::Tensor::from_values({resized.channels, size, size}, values, dtype);
}

SampleBatch load_batch(const DatasetManifest& manifest, const std::string& split,
                       const std::vector<std::size_t>& indices, num::DType dtype) {
    const auto& entries = manifest.split(split);
    if (indices.empty()) throw UsageError("load_batch: no indices given");
    const std::size_t size = manifest.image_size;
    SampleBatch batch;
    std::vector<double> values;
    std::size_t channels = 0;
    for (std::size_t idx : indices) {
        if (idx >= entries.size()) {
            throw UsageError("load_batch: index " + std::to_string(idx) + " out of range for split '" +
                             split + "' with " + std::to_string(entries.size()) + " entries");
        }
        const SampleEntry& e = entries[idx];
        const Image8 image = resize_image(read_pnm(manifest.root / e.image), size);
        const std::string mask_path = (manifest.root / e.mask).string();
        const Image8 mask_image = read_pnm(manifest.root / e.mask);
        LabelMap labels = resize_labels(labels_from_image(mask_image, manifest.num_classes, mask_path), size);
        if (channels == 0) channels = image.channels;
        if (image.channels != channels) {
            throw DatasetError((manifest.root / e.image).string() + ": channel count " +
                               std::to_string(image.channels) + " differs from batch (" +
                               std::to_string(channels) + ")");
        }
        append_planar(image, values);
        batch.labels.push_back(std::move(labels));
        batch.ids.push_back(e.image);
    }
    batch.images = num::Tensor::from_values({indices.size(), channels, size, size}, values, dtype);
    return batch;
}

}  // namespace hsp::data
