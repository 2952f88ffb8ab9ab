#include "hsp/loss_metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "hsp/errors.hpp"

namespace hsp::loss {

namespace {

struct Counts {
    std::size_t pred = 0;
    std::size_t target = 0;
    std::size_t both = 0;
};

Counts count(const std::vector<bool>& pred, const std::vector<bool>& target) {
    if (pred.size() != target.size()) {
        throw ShapeError("metrics: masks of " + std::to_string(pred.size()) + " and " +
                         std::to_string(target.size()) + " pixels");
    }
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        c.pred += pred[i];
        c.target += target[i];
        c.both += pred[i] && target[i];
    }
    return c;
}

struct Point {
    double y;
    double x;
};

// Foreground pixels with a 4-neighbour outside the mask; the image border counts as outside.
std::vector<Point> boundary(const std::vector<bool>& mask, std::size_t h, std::size_t w) {
    std::vector<Point> out;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!mask[y * w + x]) continue;
            const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w ||
                              !mask[(y - 1) * w + x] || !mask[(y + 1) * w + x] ||
                              !mask[y * w + x - 1] || !mask[y * w + x + 1];
            if (edge) out.push_back({static_cast<double>(y), static_cast<double>(x)});
        }
    }
    return out;
}

double directed(const std::vector<Point>& from, const std::vector<Point>& to) {
    double worst = 0;
    for (const Point& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const Point& q : to) {
            const double dy = p.y - q.y;
            const double dx = p.x - q.x;
            best = std::min(best, dy * dy + dx * dx);
            if (best <= worst) break;  // cannot raise the running maximum
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double dice_score(const std::vector<bool>& pred, const std::vector<bool>& target) {
    const Counts c = count(pred, target);
    if (c.pred + c.target == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.target);
}

double iou_score(const std::vector<bool>& pred, const std::vector<bool>& target) {
    const Counts c = count(pred, target);
    const std::size_t uni = c.pred + c.target - c.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(uni);
}

double hausdorff_distance(const std::vector<bool>& pred, const std::vector<bool>& target,
                          std::size_t height, std::size_t width) {
    const Counts c = count(pred, target);
    if (pred.size() != height * width) throw ShapeError("metrics: mask size does not match extents");
    if (c.pred == 0 && c.target == 0) return 0.0;
    if (c.pred == 0 || c.target == 0) {
        return std::sqrt(static_cast<double>(height * height + width * width));
    }
    const auto bp = boundary(pred, height, width);
    const auto bt = boundary(target, height, width);
    return std::max(directed(bp, bt), directed(bt, bp));
}

MetricReport compute_metrics(const data::LabelMap& pred, const data::LabelMap& target,
                             std::size_t num_classes) {
    if (pred.height != target.height || pred.width != target.width) {
        throw ShapeError("metrics: label maps differ in extent");
    }
    if (num_classes < 2) throw ConfigError("metrics: need at least one foreground class");
    MetricReport report;
    const std::size_t n = pred.values.size();
    for (std::size_t k = 1; k < num_classes; ++k) {
        std::vector<bool> p(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = pred.values[i] == k;
            t[i] = target.values[i] == k;
        }
        ClassMetrics m;
        m.label = k;
        m.dice = dice_score(p, t);
        m.iou = iou_score(p, t);
        m.hd = hausdorff_distance(p, t, pred.height, pred.width);
        report.dice += m.dice;
        report.iou += m.iou;
        report.hd += m.hd;
        report.per_class.push_back(m);
    }
    const double classes = static_cast<double>(num_classes - 1);
    report.dice /= classes;
    report.iou /= classes;
    report.hd /= classes;
    return report;
}

MetricReport average(std::span<const MetricReport> reports) {
    MetricReport out;
    if (reports.empty()) return out;
    out.per_class = reports.front().per_class;
    for (auto& c : out.per_class) c.dice = c.iou = c.hd = 0;
    for (const auto& r : reports) {
        out.dice += r.dice;
        out.iou += r.iou;
        out.hd += r.hd;
        if (r.per_class.size() != out.per_class.size()) {
            throw ShapeError("metrics: reports disagree on class count");
        }
        for (std::size_t k = 0; k < r.per_class.size(); ++k) {
            out.per_class[k].dice += r.per_class[k].dice;
            out.per_class[k].iou += r.per_class[k].iou;
            out.per_class[k].hd += r.per_class[k].hd;
        }
    }
    const double n = static_cast<double>(reports.size());
    out.dice /= n;
    out.iou /= n;
    out.hd /= n;
    for (auto& c : out.per_class) {
        c.dice /= n;
        c.iou /= n;
        c.hd /= n;
    }
    return out;
}

std::string to_key_value(const MetricReport& report) {
    return "dice=" + fixed(report.dice) + " iou=" + fixed(report.iou) + " hd=" + fixed(report.hd);
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : report.per_class) {
        classes.push_back({{"label", c.label}, {"dice", c.dice}, {"iou", c.iou}, {"hd", c.hd}});
    }
    return {{"dice", report.dice}, {"iou", report.iou}, {"hd", report.hd}, {"per_class", classes}};
}

}  // namespace hsp::loss
