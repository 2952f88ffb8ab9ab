#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsp/data/label_map.hpp"
#include "hsp/data/pnm.hpp"
#include "hsp/numerics/tensor.hpp"

namespace hsp::data {

enum class Task { blobs, vessels, instances };
enum class Domain { source, target };

// Throws ConfigError listing the valid names.
Task parse_task(const std::string& name);
std::string task_name(Task task);
Domain parse_domain(const std::string& name);
std::string domain_name(Domain domain);

struct SampleEntry {
    std::string image;  // relative to the manifest directory
    std::string mask;
};

struct DatasetManifest {
    std::string name;
    std::size_t num_classes = 2;
    std::size_t image_size = 64;
    std::map<std::string, std::vector<SampleEntry>> splits;  // train, val, test
    std::filesystem::path root;  // directory holding manifest.json

    static DatasetManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Empty vector for a split that is absent.
    const std::vector<SampleEntry>& split(const std::string& name) const;
    // Checks split disjointness, file presence, decodability and label range.
    void validate_files() const;
};

struct SyntheticSample {
    Image8 image;
    LabelMap mask;
};

// Pure function of its arguments. Masks do not depend on `domain`.
SyntheticSample render_sample(Task task, std::size_t image_size, std::uint64_t seed,
                              std::size_t index, Domain domain);

struct SyntheticOptions {
    Task task = Task::blobs;
    std::size_t count = 200;
    std::uint64_t seed = 7;
    std::size_t image_size = 64;
    Domain domain = Domain::source;
    // Samples held out for test; default is 30% of count.
    std::optional<std::size_t> test_count;
};

// Writes images/, masks/ and manifest.json under `out_dir`.
DatasetManifest generate_synthetic(const SyntheticOptions& options,
                                   const std::filesystem::path& out_dir);

struct SampleBatch {
    num::Tensor images;  // (B, C, H, W) in [0, 1]
    std::vector<LabelMap> labels;
    std::vector<std::string> ids;

    std::size_t size() const { return labels.size(); }
    // (C, H, W) view of one image, off the tape.
    num::Tensor image(std::size_t i) const;
};

SampleBatch load_batch(const DatasetManifest& manifest, const std::string& split,
                       const std::vector<std::size_t>& indices, num::DType dtype = num::DType::f32);

// Bilinear for intensities, nearest for labels (half-pixel centres).
Image8 resize_image(const Image8& image, std::size_t size);
LabelMap resize_labels(const LabelMap& labels, std::size_t size);

// Resized (C, size, size) tensor with intensities scaled to [0, 1].
num::Tensor image_tensor(const Image8& image, std::size_t size, num::DType dtype = num::DType::f32);

LabelMap labels_from_image(const Image8& mask, std::size_t num_classes, const std::string& origin);
Image8 labels_to_image(const LabelMap& labels);

// Number of 8-connected components of label `value`.
std::size_t count_components(const LabelMap& labels, std::uint8_t value);

}  // namespace hsp::data
