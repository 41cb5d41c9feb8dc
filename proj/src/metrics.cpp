#include "mvanet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "mvanet/errors.hpp"

namespace mvanet {

namespace {

constexpr double kBeta2 = 0.3;
const double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt))
        throw ConfigError("prediction " + pred.shape_str() + " does not match ground truth " +
                          gt.shape_str());
    if (pred.rank() != 4 || pred.dim(0) != 1 || pred.dim(1) != 1)
        throw ConfigError("metrics expect (1,1,H,W) maps, got " + pred.shape_str());
    for (Index i = 0; i < gt.numel(); ++i)
        if (gt.data()[i] != 0.0 && gt.data()[i] != 1.0)
            throw ConfigError("ground truth is not binary");
}

double plane_mean(const Tensor& t) {
    double s = 0;
    for (Index i = 0; i < t.numel(); ++i) s += t.data()[i];
    return s / static_cast<double>(t.numel());
}

// MATLAB-style round: half away from zero.
Index round_half_away(double v) { return static_cast<Index>(std::floor(v + 0.5)); }

} // namespace

DistanceField distance_transform(const Tensor& gt) {
    const Index H = gt.dim(2), W = gt.dim(3);
    const double* g = gt.data();
    DistanceField f;
    f.h = H;
    f.w = W;
    f.dist.assign(H * W, std::numeric_limits<double>::infinity());
    f.nearest.assign(H * W, -1);

    // Per column: closest foreground row at or above / below each y.
    std::vector<Index> up(H * W), down(H * W);
    for (Index c = 0; c < W; ++c) {
        Index last = -1;
        for (Index y = 0; y < H; ++y) {
            if (g[y * W + c] != 0.0) last = y;
            up[y * W + c] = last;
        }
        last = -1;
        for (Index y = H - 1; y >= 0; --y) {
            if (g[y * W + c] != 0.0) last = y;
            down[y * W + c] = last;
        }
    }

    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            const Index i = y * W + x;
            if (g[i] != 0.0) {
                f.dist[i] = 0.0;
                f.nearest[i] = i;
                continue;
            }
            Index best_d2 = -1, best_c = -1, best_r = -1;
            for (Index c = 0; c < W; ++c) {
                const Index ru = up[y * W + c];
                const Index rd = down[y * W + c];
                Index r;
                if (ru < 0 && rd < 0) continue;
                if (ru < 0) r = rd;
                else if (rd < 0) r = ru;
                else r = (y - ru <= rd - y) ? ru : rd;  // tie inside a column: smaller row
                const Index d2 = (x - c) * (x - c) + (y - r) * (y - r);
                // Columns are visited left to right and rows resolved above, so a
                // strict comparison realizes the (distance^2, column, row) tie rule.
                if (best_d2 < 0 || d2 < best_d2) {
                    best_d2 = d2;
                    best_c = c;
                    best_r = r;
                }
            }
            if (best_d2 >= 0) {
                f.dist[i] = std::sqrt(static_cast<double>(best_d2));
                f.nearest[i] = best_r * W + best_c;
            }
        }
    return f;
}

double mae_single(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt);
    double s = 0;
    for (Index i = 0; i < pred.numel(); ++i) s += std::abs(pred.data()[i] - gt.data()[i]);
    return s / static_cast<double>(pred.numel());
}

double f_max_single(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt);
    const Index n = pred.numel();
    double total_fg = 0;
    for (Index i = 0; i < n; ++i) total_fg += gt.data()[i];
    double best = 0;
    for (int k = 0; k < 256; ++k) {
        const double t = static_cast<double>(k) / 255.0;
        double tp = 0, fp = 0;
        for (Index i = 0; i < n; ++i)
            if (pred.data()[i] >= t) (gt.data()[i] != 0.0 ? tp : fp) += 1.0;
        const double p = (tp + fp > 0) ? tp / (tp + fp) : 0.0;
        const double r = (total_fg > 0) ? tp / total_fg : 0.0;
        const double denom = kBeta2 * p + r;
        const double fscore = (denom > 0) ? (1.0 + kBeta2) * p * r / denom : 0.0;
        best = std::max(best, fscore);
    }
    return best;
}

double f_weighted_single(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt);
    const Index H = pred.dim(2), W = pred.dim(3), n = H * W;
    const double* p = pred.data();
    const double* g = gt.data();
    double fg = 0;
    for (Index i = 0; i < n; ++i) fg += g[i];
    if (fg == 0) return 0.0;  // no foreground: score defined as 0

    DistanceField df = distance_transform(gt);
    std::vector<double> err(n), err_t(n);
    for (Index i = 0; i < n; ++i) err[i] = std::abs(p[i] - g[i]);
    for (Index i = 0; i < n; ++i) err_t[i] = (g[i] != 0.0) ? err[i] : err[df.nearest[i]];

    // 7x7 Gaussian, sigma 5, zero padded.
    double kernel[7][7];
    double ksum = 0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            kernel[dy + 3][dx + 3] = std::exp(-(dx * dx + dy * dy) / (2.0 * 25.0));
            ksum += kernel[dy + 3][dx + 3];
        }
    for (auto& row : kernel)
        for (double& v : row) v /= ksum;

    std::vector<double> smoothed(n, 0.0);
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            double acc = 0;
            for (int dy = -3; dy <= 3; ++dy) {
                const Index yy = y + dy;
                if (yy < 0 || yy >= H) continue;
                for (int dx = -3; dx <= 3; ++dx) {
                    const Index xx = x + dx;
                    if (xx < 0 || xx >= W) continue;
                    acc += kernel[dy + 3][dx + 3] * err_t[yy * W + xx];
                }
            }
            smoothed[y * W + x] = acc;
        }

    double tpw = fg, fpw = 0;
    for (Index i = 0; i < n; ++i) {
        double e = err[i];
        if (g[i] != 0.0) {
            if (smoothed[i] < e) e = smoothed[i];  // forgive isolated errors near structure
            tpw -= e;
        } else {
            const double b = 2.0 - std::exp(std::log(0.5) / 5.0 * df.dist[i]);
            fpw += e * b;
        }
    }
    const double recall = tpw / fg;
    const double precision = (tpw + fpw > 0) ? tpw / (tpw + fpw) : 0.0;
    const double denom = kBeta2 * precision + recall;
    return (denom > 0) ? (1.0 + kBeta2) * precision * recall / denom : 0.0;
}

namespace {

double object_similarity(const std::vector<double>& values) {
    const size_t n = values.size();
    if (n == 0) return 0.0;
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    if (n > 1) {
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n - 1);
    }
    return 2.0 * mean / (mean * mean + 1.0 + std::sqrt(var) + kEps);
}

double s_object(const Tensor& pred, const Tensor& gt) {
    const Index n = pred.numel();
    std::vector<double> on_fg, on_bg;
    for (Index i = 0; i < n; ++i) {
        if (gt.data()[i] != 0.0) on_fg.push_back(pred.data()[i]);
        else on_bg.push_back(1.0 - pred.data()[i]);
    }
    const double u = plane_mean(gt);
    return u * object_similarity(on_fg) + (1.0 - u) * object_similarity(on_bg);
}

struct Quadrant {
    Index y0, y1, x0, x1;  // half-open
    Index count() const { return (y1 - y0) * (x1 - x0); }
};

double region_ssim(const Tensor& pred, const Tensor& gt, const Quadrant& q) {
    const Index W = pred.dim(3);
    const double n = static_cast<double>(q.count());
    if (n == 0) return 0.0;  // weight is zero as well
    double mx = 0, my = 0;
    for (Index y = q.y0; y < q.y1; ++y)
        for (Index x = q.x0; x < q.x1; ++x) {
            mx += pred.data()[y * W + x];
            my += gt.data()[y * W + x];
        }
    mx /= n;
    my /= n;
    double sx = 0, sy = 0, sxy = 0;
    for (Index y = q.y0; y < q.y1; ++y)
        for (Index x = q.x0; x < q.x1; ++x) {
            const double dx = pred.data()[y * W + x] - mx;
            const double dy = gt.data()[y * W + x] - my;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    sx /= n - 1 + kEps;
    sy /= n - 1 + kEps;
    sxy /= n - 1 + kEps;
    const double aleph = 4.0 * mx * my * sxy;
    const double beth = (mx * mx + my * my) * (sx + sy);
    if (aleph != 0.0) return aleph / (beth + kEps);
    return (beth == 0.0) ? 1.0 : 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
    const Index H = gt.dim(2), W = gt.dim(3);
    double total = 0, sx = 0, sy = 0;
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
            const double v = gt.data()[y * W + x];
            total += v;
            sx += v * static_cast<double>(x + 1);  // 1-based, as in the reference code
            sy += v * static_cast<double>(y + 1);
        }
    const Index cx = round_half_away(sx / total);
    const Index cy = round_half_away(sy / total);
    const double area = static_cast<double>(H * W);
    const Quadrant lt{0, cy, 0, cx};
    const Quadrant rt{0, cy, cx, W};
    const Quadrant lb{cy, H, 0, cx};
    const Quadrant rb{cy, H, cx, W};
    const double w1 = static_cast<double>(lt.count()) / area;
    const double w2 = static_cast<double>(rt.count()) / area;
    const double w3 = static_cast<double>(lb.count()) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    return w1 * region_ssim(pred, gt, lt) + w2 * region_ssim(pred, gt, rt) +
           w3 * region_ssim(pred, gt, lb) + w4 * region_ssim(pred, gt, rb);
}

} // namespace

double s_measure_single(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt);
    const double y = plane_mean(gt);
    if (y == 0.0) return 1.0 - plane_mean(pred);
    if (y == 1.0) return plane_mean(pred);
    const double q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
    return std::max(q, 0.0);
}

double e_measure_single(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt);
    const Index n = pred.numel();
    const double* p = pred.data();
    const double* g = gt.data();
    double fg = 0;
    for (Index i = 0; i < n; ++i) fg += g[i];
    const double mg = fg / static_cast<double>(n);

    double acc = 0;
    for (int k = 0; k < 256; ++k) {
        const double t = static_cast<double>(k) / 255.0;
        double mf = 0;
        for (Index i = 0; i < n; ++i) mf += (p[i] >= t) ? 1.0 : 0.0;
        mf /= static_cast<double>(n);
        double sum_enh = 0;
        for (Index i = 0; i < n; ++i) {
            const double fm = (p[i] >= t) ? 1.0 : 0.0;
            double enh;
            if (fg == 0.0) {
                enh = 1.0 - fm;
            } else if (fg == static_cast<double>(n)) {
                enh = fm;
            } else {
                const double af = fm - mf;
                const double ag = g[i] - mg;
                const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
                enh = (align + 1.0) * (align + 1.0) / 4.0;
            }
            sum_enh += enh;
        }
        acc += sum_enh / (static_cast<double>(n) - 1.0 + kEps);
    }
    return acc / 256.0;
}

MetricsReport compute_all(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts) {
    if (preds.empty() || gts.empty()) throw ConfigError("no images to evaluate");
    if (preds.size() != gts.size())
        throw ConfigError("got " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(gts.size()) + " ground truths");
    MetricsReport r;
    for (size_t i = 0; i < preds.size(); ++i) {
        r.f_max += f_max_single(preds[i], gts[i]);
        r.f_weighted += f_weighted_single(preds[i], gts[i]);
        r.s_measure += s_measure_single(preds[i], gts[i]);
        r.e_measure += e_measure_single(preds[i], gts[i]);
        r.mae += mae_single(preds[i], gts[i]);
    }
    const double n = static_cast<double>(preds.size());
    r.f_max /= n;
    r.f_weighted /= n;
    r.s_measure /= n;
    r.e_measure /= n;
    r.mae /= n;
    r.images_evaluated = static_cast<Index>(preds.size());
    return r;
}

namespace {

void open_or_throw(std::ofstream& out, const std::string& path) {
    out.open(path);
    if (!out) throw IoError("cannot write " + path);
}

} // namespace

void write_report_kv(const MetricsReport& r, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path);
    out.precision(10);
    out << "f_max=" << r.f_max << "\n"
        << "f_weighted=" << r.f_weighted << "\n"
        << "s_measure=" << r.s_measure << "\n"
        << "e_measure=" << r.e_measure << "\n"
        << "mae=" << r.mae << "\n"
        << "images_evaluated=" << r.images_evaluated << "\n"
        << "throughput=" << r.throughput << "\n";
}

void write_report_table(const MetricsReport& r, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path);
    out.precision(10);
    out << "f_max\tf_weighted\ts_measure\te_measure\tmae\timages_evaluated\tthroughput\n"
        << r.f_max << "\t" << r.f_weighted << "\t" << r.s_measure << "\t" << r.e_measure << "\t"
        << r.mae << "\t" << r.images_evaluated << "\t" << r.throughput << "\n";
}

} // namespace mvanet
