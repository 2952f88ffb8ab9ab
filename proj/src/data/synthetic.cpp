#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hsp/data/dataset.hpp"
#include "hsp/errors.hpp"
#include "hsp/numerics/random.hpp"

namespace hsp::data {

namespace {

constexpr double kSourceNoise = 0.05;
constexpr double kTargetNoise = 0.15;
constexpr double kTargetContrast = 0.7;

// Intensity canvas plus exact mask, filled by the task renderers.
struct Canvas {
    std::size_t size;
    std::vector<double> background;
    std::vector<double> alpha;       // foreground coverage in [0,1]
    std::vector<double> foreground;  // intensity where covered
    LabelMap mask;

    explicit Canvas(std::size_t n)
        : size(n), background(n * n), alpha(n * n, 0.0), foreground(n * n, 0.0), mask(n, n) {}

    void cover(std::size_t y, std::size_t x, double a, double intensity, bool inside) {
        const std::size_t i = y * size + x;
        if (a > alpha[i]) {
            alpha[i] = a;
            foreground[i] = intensity;
        }
        if (inside) mask.values[i] = 1;
    }
};

std::string stream(Task task, const char* part, std::size_t index) {
    return "synthetic/" + task_name(task) + "/" + part + "/" + std::to_string(index);
}

void paint_background(Canvas& c, num::Rng& rng) {
    const double base = rng.uniform(0.15, 0.35);
    const double gy = rng.uniform(-0.1, 0.1);
    const double gx = rng.uniform(-0.1, 0.1);
    const double n = static_cast<double>(c.size);
    for (std::size_t y = 0; y < c.size; ++y) {
        for (std::size_t x = 0; x < c.size; ++x) {
            c.background[y * c.size + x] = base + gy * (y / n - 0.5) + gx * (x / n - 0.5);
        }
    }
}

void render_blobs(Canvas& c, num::Rng& geo, num::Rng& look) {
    const double s = static_cast<double>(c.size) / 64.0;
    const double n = static_cast<double>(c.size);
    const auto count = 1 + static_cast<std::size_t>(geo.next() % 3);
    for (std::size_t b = 0; b < count; ++b) {
        const double cy = geo.uniform(0.2, 0.8) * n;
        const double cx = geo.uniform(0.2, 0.8) * n;
        const double ra = geo.uniform(7.0, 16.0) * s;
        const double rb = geo.uniform(7.0, 16.0) * s;
        const double theta = geo.uniform(0.0, std::numbers::pi);
        const double intensity = look.uniform(0.6, 0.85);
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        const double edge = 1.2;  // pixels of soft falloff
        for (std::size_t y = 0; y < c.size; ++y) {
            for (std::size_t x = 0; x < c.size; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const double u = (ct * dx + st * dy) / ra;
                const double v = (-st * dx + ct * dy) / rb;
                const double rho = std::sqrt(u * u + v * v);
                const double a = 1.0 / (1.0 + std::exp(-(1.0 - rho) * std::min(ra, rb) / edge));
                c.cover(y, x, a, intensity, rho <= 1.0);
            }
        }
    }
}

struct Vec2 {
    double y;
    double x;
};

void render_vessels(Canvas& c, num::Rng& geo, num::Rng& look) {
    const double s = static_cast<double>(c.size) / 64.0;
    const double n = static_cast<double>(c.size);
    const auto count = 2 + static_cast<std::size_t>(geo.next() % 3);
    std::vector<double> dist(c.size * c.size);
    for (std::size_t k = 0; k < count; ++k) {
        Vec2 p[4];
        for (auto& q : p) q = {geo.uniform(-0.1, 1.1) * n, geo.uniform(-0.1, 1.1) * n};
        const double half_width = std::max(0.8, geo.uniform(0.8, 1.8) * s);
        const double intensity = look.uniform(0.65, 0.85);
        constexpr std::size_t kSteps = 128;
        std::vector<Vec2> pts;
        for (std::size_t i = 0; i <= kSteps; ++i) {
            const double t = static_cast<double>(i) / kSteps;
            const double u = 1.0 - t;
            const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
            pts.push_back({b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y,
                           b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x});
        }
        std::fill(dist.begin(), dist.end(), 1e30);
        const double reach = half_width + 1.0;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const Vec2 a = pts[i];
            const Vec2 b = pts[i + 1];
            const auto lo_y = static_cast<long>(std::floor(std::min(a.y, b.y) - reach));
            const auto hi_y = static_cast<long>(std::ceil(std::max(a.y, b.y) + reach));
            const auto lo_x = static_cast<long>(std::floor(std::min(a.x, b.x) - reach));
            const auto hi_x = static_cast<long>(std::ceil(std::max(a.x, b.x) + reach));
            const double ey = b.y - a.y;
            const double ex = b.x - a.x;
            const double len2 = std::max(ey * ey + ex * ex, 1e-12);
            for (long y = std::max(0L, lo_y); y <= std::min<long>(c.size - 1, hi_y); ++y) {
                for (long x = std::max(0L, lo_x); x <= std::min<long>(c.size - 1, hi_x); ++x) {
                    const double t = std::clamp(((y - a.y) * ey + (x - a.x) * ex) / len2, 0.0, 1.0);
                    const double dy = y - (a.y + t * ey);
                    const double dx = x - (a.x + t * ex);
                    double& d = dist[y * c.size + x];
                    d = std::min(d, std::sqrt(dy * dy + dx * dx));
                }
            }
        }
        for (std::size_t y = 0; y < c.size; ++y) {
            for (std::size_t x = 0; x < c.size; ++x) {
                const double d = dist[y * c.size + x];
                if (d > reach) continue;
                c.cover(y, x, std::clamp(half_width + 0.5 - d, 0.0, 1.0), intensity, d <= half_width);
            }
        }
    }
}

void render_instances(Canvas& c, num::Rng& geo, num::Rng& look) {
    const double s = static_cast<double>(c.size) / 64.0;
    const double n = static_cast<double>(c.size);
    const auto wanted = 20 + static_cast<std::size_t>(geo.next() % 41);
    struct Disk {
        double y, x, r;
    };
    std::vector<Disk> disks;
    // Centres at least r1 + r2 + 1.5 apart keep rasterized disks from touching
    // even diagonally.
    for (std::size_t attempt = 0; attempt < 50000 && disks.size() < wanted; ++attempt) {
        const double r = std::max(1.0, geo.uniform(1.5, 2.8) * s);
        const double y = geo.uniform(r + 1.0, n - r - 1.0);
        const double x = geo.uniform(r + 1.0, n - r - 1.0);
        const bool clear = std::all_of(disks.begin(), disks.end(), [&](const Disk& d) {
            return std::hypot(d.y - y, d.x - x) >= d.r + r + 1.5;
        });
        if (clear) disks.push_back({y, x, r});
    }
    if (disks.size() < 20) {
        throw DatasetError("instances: could not place 20 separated disks at image size " +
                           std::to_string(c.size));
    }
    for (const Disk& d : disks) {
        const double intensity = look.uniform(0.6, 0.9);
        const auto lo_y = static_cast<std::size_t>(std::max(0.0, std::floor(d.y - d.r - 1)));
        const auto hi_y = std::min(c.size - 1, static_cast<std::size_t>(std::ceil(d.y + d.r + 1)));
        const auto lo_x = static_cast<std::size_t>(std::max(0.0, std::floor(d.x - d.r - 1)));
        const auto hi_x = std::min(c.size - 1, static_cast<std::size_t>(std::ceil(d.x + d.r + 1)));
        for (std::size_t y = lo_y; y <= hi_y; ++y) {
            for (std::size_t x = lo_x; x <= hi_x; ++x) {
                const double dist = std::hypot(static_cast<double>(y) - d.y, static_cast<double>(x) - d.x);
                c.cover(y, x, std::clamp(d.r + 0.5 - dist, 0.0, 1.0), intensity, dist <= d.r);
            }
        }
    }
}

}  // namespace

Task parse_task(const std::string& name) {
    if (name == "blobs") return Task::blobs;
    if (name == "vessels") return Task::vessels;
    if (name == "instances") return Task::instances;
    throw ConfigError("unknown task '" + name + "' (valid tasks: blobs, vessels, instances)");
}

std::string task_name(Task task) {
    switch (task) {
        case Task::blobs: return "blobs";
        case Task::vessels: return "vessels";
        case Task::instances: return "instances";
    }
    return "unknown";
}

Domain parse_domain(const std::string& name) {
    if (name == "source") return Domain::source;
    if (name == "target") return Domain::target;
    throw ConfigError("unknown domain '" + name + "' (valid domains: source, target)");
}

std::string domain_name(Domain domain) {
    return domain == Domain::source ? "source" : "target";
}

SyntheticSample render_sample(Task task, std::size_t image_size, std::uint64_t seed,
                              std::size_t index, Domain domain) {
    if (image_size < 16) throw ConfigError("synthetic: image_size must be at least 16");
    num::Rng geo(num::mix_seed(seed, stream(task, "geometry", index)));
    num::Rng look(num::mix_seed(seed, stream(task, "appearance", index)));
    num::Rng noise(num::mix_seed(seed, stream(task, "noise", index)));
    Canvas canvas(image_size);
    paint_background(canvas, look);
    switch (task) {
        case Task::blobs: render_blobs(canvas, geo, look); break;
        case Task::vessels: render_vessels(canvas, geo, look); break;
        case Task::instances: render_instances(canvas, geo, look); break;
    }
    const bool target = domain == Domain::target;
    const double sigma = target ? kTargetNoise : kSourceNoise;
    SyntheticSample out;
    out.image.width = image_size;
    out.image.height = image_size;
    out.image.pixels.resize(image_size * image_size);
    for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
        double v = canvas.background[i] + canvas.alpha[i] * (canvas.foreground[i] - canvas.background[i]);
        if (target) v = 0.5 + kTargetContrast * (v - 0.5);
        v = std::clamp(v + noise.normal(0.0, sigma), 0.0, 1.0);
        out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.mask = std::move(canvas.mask);
    return out;
}

DatasetManifest generate_synthetic(const SyntheticOptions& options,
                                   const std::filesystem::path& out_dir) {
    if (options.count == 0) throw ConfigError("synthetic: count must be at least 1");
    const std::size_t test = options.test_count.value_or(
        static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(options.count))));
    if (test >= options.count) {
        throw ConfigError("synthetic: test count " + std::to_string(test) +
                          " leaves no training samples out of " + std::to_string(options.count));
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (!ec) std::filesystem::create_directories(out_dir / "masks", ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    manifest.name = task_name(options.task) + "-" + domain_name(options.domain) + "-s" +
                    std::to_string(options.seed);
    manifest.num_classes = 2;
    manifest.image_size = options.image_size;
    manifest.root = out_dir;
    manifest.splits["train"];
    manifest.splits["val"];
    manifest.splits["test"];
    const std::size_t train = options.count - test;
    for (std::size_t i = 0; i < options.count; ++i) {
        const auto sample =
            render_sample(options.task, options.image_size, options.seed, i, options.domain);
        char stem[32];
        std::snprintf(stem, sizeof stem, "%05zu.pgm", i);
        SampleEntry entry{std::string("images/") + stem, std::string("masks/") + stem};
        write_pnm(out_dir / entry.image, sample.image);
        write_pnm(out_dir / entry.mask, labels_to_image(sample.mask));
        manifest.splits[i < train ? "train" : "test"].push_back(entry);
    }
    manifest.save(out_dir / "manifest.json");
    return manifest;
}

std::size_t count_components(const LabelMap& labels, std::uint8_t value) {
    const std::size_t h = labels.height;
    const std::size_t w = labels.width;
    std::vector<bool> seen(h * w, false);
    std::vector<std::size_t> stack;
    std::size_t components = 0;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (seen[start] || labels.values[start] != value) continue;
        ++components;
        seen[start] = true;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const long py = static_cast<long>(p / w);
            const long px = static_cast<long>(p % w);
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    const long y = py + dy;
                    const long x = px + dx;
                    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
                    const std::size_t q = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
                    if (!seen[q] && labels.values[q] == value) {
                        seen[q] = true;
                        stack.push_back(q);
                    }
                }
            }
        }
    }
    return components;
}

}  // namespace hsp::data
