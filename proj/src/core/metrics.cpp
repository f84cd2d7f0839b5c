#include "metrics.hpp"

#include <sstream>

namespace ivusseg {

namespace {

void require_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!a.same_dims(b))
        throw DimError(std::string(what) + ": mask dimensions differ, " + std::to_string(a.h) +
                       "x" + std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                       std::to_string(b.w));
}

} // namespace

std::size_t BinaryMask::foreground() const {
    std::size_t n = 0;
    for (std::uint8_t p : v) n += p;
    return n;
}

Tensor BinaryMask::to_tensor() const {
    Tensor t({1, 1, h, w});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
    return t;
}

std::pair<long long, long long> areas(const BinaryMask& a, const BinaryMask& b) {
    require_dims(a, b, "areas");
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        inter += a.v[i] & b.v[i];
        uni += a.v[i] | b.v[i];
    }
    return {inter, uni};
}

double jaccard_from_areas(long long intersection, long long uni) {
    if (uni == 0) return 1.0;  // both masks empty: perfect agreement
    return static_cast<double>(intersection) / static_cast<double>(uni);
}

double dice_from_areas(long long intersection, long long uni) {
    if (uni == 0) return 1.0;
    // |X|+|Y| = I+U, so D = 2I/(I+U) = 2J/(1+J).
    return 2.0 * static_cast<double>(intersection) /
           static_cast<double>(intersection + uni);
}

double dice_coefficient(const BinaryMask& x, const BinaryMask& y) {
    const auto [inter, uni] = areas(x, y);
    return dice_from_areas(inter, uni);
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
    const auto [inter, uni] = areas(a, b);
    return jaccard_from_areas(inter, uni);
}

BinaryMask binarize(const Tensor& pred, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("binarize: threshold must lie in (0,1), got " +
                          std::to_string(threshold));
    int h, w;
    if (pred.rank() == 4) {
        if (pred.dim(0) != 1 || pred.dim(1) != 1)
            throw DimError("binarize: expected a single-image 1x1xHxW tensor, got " +
                           pred.shape_str());
        h = pred.dim(2);
        w = pred.dim(3);
    } else if (pred.rank() == 2) {
        h = pred.dim(0);
        w = pred.dim(1);
    } else {
        throw DimError("binarize: expected rank 2 or 4 tensor, got " + pred.shape_str());
    }
    BinaryMask m(h, w);
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = pred[i] >= threshold ? 1 : 0;
    return m;
}

NodePtr soft_dice_loss(const NodePtr& pred, const BinaryMask& target, double smooth) {
    const Tensor& p = pred->value;
    Tensor t;
    if (p.rank() == 4 && p.dim(0) == 1 && p.dim(1) == 1 && p.dim(2) == target.h &&
        p.dim(3) == target.w) {
        t = target.to_tensor();
    } else {
        throw DimError("soft_dice_loss: prediction " + p.shape_str() +
                       " does not match target mask " + std::to_string(target.h) + "x" +
                       std::to_string(target.w));
    }
    return graph::soft_dice_loss(pred, t, smooth);
}

double soft_dice_loss_value(const Tensor& pred, const Tensor& target, double smooth) {
    auto node = graph::soft_dice_loss(graph::constant(pred), target, smooth);
    return node->value[0];
}

MetricsReport evaluate_set(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs,
                           const std::vector<std::string>& ids) {
    if (pairs.empty())
        throw DataError("evaluate_set: empty prediction/truth list");
    MetricsReport report;
    report.rows.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [pred, truth] = pairs[i];
        const auto [inter, uni] = areas(pred, truth);
        MetricsRow row;
        row.image_id = i < ids.size() ? ids[i] : std::to_string(i);
        row.intersection_area = inter;
        row.union_area = uni;
        row.jaccard = jaccard_from_areas(inter, uni);
        row.dice = dice_from_areas(inter, uni);
        report.rows.push_back(std::move(row));
        report.average_jaccard += report.rows.back().jaccard;
        report.average_dice += report.rows.back().dice;
    }
    report.average_jaccard /= static_cast<double>(report.rows.size());
    report.average_dice /= static_cast<double>(report.rows.size());
    return report;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "image_id,intersection_area,unit_area,jaccard,dice\n";
    for (const MetricsRow& r : rows)
        os << r.image_id << ',' << r.intersection_area << ',' << r.union_area << ','
           << r.jaccard << ',' << r.dice << '\n';
    return os.str();
}

} // namespace ivusseg
