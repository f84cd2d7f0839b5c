#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace ivusseg {

// H x W bitmap, values strictly {0,1}.
struct BinaryMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int h, int w) : h(h), w(w), v(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::size_t numel() const { return v.size(); }
    std::size_t foreground() const;
    bool same_dims(const BinaryMask& o) const { return h == o.h && w == o.w; }

    Tensor to_tensor() const;  // 1x1xHxW
};

struct MetricsRow {
    std::string image_id;
    long long intersection_area = 0;
    long long union_area = 0;  // "unit area" column of the report
    double jaccard = 0.0;
    double dice = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    double average_jaccard = 0.0;
    double average_dice = 0.0;

    // Header: image_id,intersection_area,unit_area,jaccard,dice
    std::string to_csv() const;
};

// Exact pixel counts (|A n B|, |A u B|).
std::pair<long long, long long> areas(const BinaryMask& a, const BinaryMask& b);

// 2|XnY| / (|X|+|Y|); 1 when both masks are empty.
double dice_coefficient(const BinaryMask& x, const BinaryMask& y);

// |AnB| / |AuB|; 1 when both masks are empty.
double jaccard(const BinaryMask& a, const BinaryMask& b);

// From exact areas: J = I/U, D = 2J/(1+J) (= 2I/(I+U)); both 1 when U == 0.
double jaccard_from_areas(long long intersection, long long uni);
double dice_from_areas(long long intersection, long long uni);

// pixel = 1 iff p >= threshold.
BinaryMask binarize(const Tensor& pred, double threshold = 0.5);

// Differentiable training loss over a prediction node (see graph::soft_dice_loss).
NodePtr soft_dice_loss(const NodePtr& pred, const BinaryMask& target, double smooth = 1.0);
// Plain value, for logging paths that have no tape.
double soft_dice_loss_value(const Tensor& pred, const Tensor& target, double smooth = 1.0);

MetricsReport evaluate_set(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs,
                           const std::vector<std::string>& ids = {});

} // namespace ivusseg
