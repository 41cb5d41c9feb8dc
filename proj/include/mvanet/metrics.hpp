#pragma once

#include <string>
#include <vector>

#include "mvanet/tensor.hpp"

namespace mvanet {

struct MetricsReport {
    double f_max = 0.0;
    double f_weighted = 0.0;
    double s_measure = 0.0;
    double e_measure = 0.0;
    double mae = 0.0;
    Index images_evaluated = 0;
    double throughput = 0.0;  // images/second, filled by the caller
};

// Exact Euclidean distance transform of the background with the index of the
// nearest foreground pixel. Ties go to the lexicographically smallest
// (squared distance, source column, source row). nearest = -1 when the map
// has no foreground.
struct DistanceField {
    Index h = 0, w = 0;
    std::vector<double> dist;     // Euclidean distance, 0 on foreground
    std::vector<Index> nearest;   // flat y*w+x index of the closest foreground pixel
};
DistanceField distance_transform(const Tensor& gt);

// Per-image metric kernels; pred in [0,1], gt binary, both (1,1,H,W).
double mae_single(const Tensor& pred, const Tensor& gt);
double f_max_single(const Tensor& pred, const Tensor& gt);       // 256 thresholds, beta^2 = 0.3
double f_weighted_single(const Tensor& pred, const Tensor& gt);  // distance-weighted P/R
double s_measure_single(const Tensor& pred, const Tensor& gt);   // alpha = 0.5
double e_measure_single(const Tensor& pred, const Tensor& gt);   // mean over 256 thresholds

MetricsReport compute_all(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts);

void write_report_kv(const MetricsReport& r, const std::string& path);
void write_report_table(const MetricsReport& r, const std::string& path);

} // namespace mvanet
