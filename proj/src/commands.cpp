#include "mvanet/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "mvanet/attention.hpp"
#include "mvanet/checkpoint.hpp"
#include "mvanet/data.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/image_io.hpp"
#include "mvanet/metrics.hpp"
#include "mvanet/model.hpp"
#include "mvanet/trainer.hpp"

namespace mvanet {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Tensor filled_pattern(const std::vector<Index>& shape) {
    Tensor t(shape);
    double* d = t.data();
    for (Index i = 0; i < t.numel(); ++i)
        d[i] = 0.05 * std::sin(0.37 * static_cast<double>(i));
    return t;
}

// One localization-style attention pass: K/V projection of the token source,
// then scores/softmax/apply against fixed queries.
double time_attention(const ad::Var& q, const ad::Var& kv_source, const ad::Var& wkv,
                      int heads, int reps) {
    double best = 0;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        ad::Var kv = ad::linear(kv_source, wkv, nullptr);
        const Index c = q->value.dim(2);
        ad::Var k = ad::slice(kv, 2, 0, c);
        ad::Var v = ad::slice(kv, 2, c, c);
        ad::Var p = ad::softmax_rows(ad::attention_scores(q, k, heads));
        ad::Var out = ad::attention_apply(p, v, heads);
        volatile double sink = out->value.data()[0];
        (void)sink;
        const double ms = ms_since(t0);
        if (r == 0 || ms < best) best = ms;
    }
    return best;
}

RunConfig config_from(const CheckpointData& data, Index size_override) {
    RunConfig cfg = parse_config_text(data.config_text);
    if (size_override > 0) cfg.model.image_size = size_override;
    return cfg;
}

// Model state straight off a checkpoint, with an optional square-size
// override for inference on other resolutions (the network itself has no
// size-dependent parameters).
struct LoadedModel {
    RunConfig cfg;
    ParamRegistry reg;
    MvaNet model;

    LoadedModel(const CheckpointData& data, Index size_override)
        : cfg(config_from(data, size_override)), reg(cfg.seed), model(reg, cfg.model) {
        restore(reg, data);
    }
};

} // namespace

AttentionBench bench_attention(Index channels, int heads, Index q_side, Index kv_side,
                               const std::vector<int>& windows) {
    AttentionBench b;
    const auto clipped = clip_windows(windows, kv_side, kv_side);
    b.q_tokens = q_side * q_side;
    b.full_tokens = kv_side * kv_side;
    b.pooled_tokens = pooled_token_count(kv_side, kv_side, clipped);

    const double c = static_cast<double>(channels);
    const auto cost = [&](Index nk) {
        const double n = static_cast<double>(nk);
        return n * c * 2.0 * c + 2.0 * static_cast<double>(b.q_tokens) * n * c;
    };
    b.full_multiplies = cost(b.full_tokens);
    b.pooled_multiplies = cost(b.pooled_tokens);
    b.reduction_percent = 100.0 * (1.0 - b.pooled_multiplies / b.full_multiplies);

    ad::Var q = ad::constant(filled_pattern({b.q_tokens, 1, channels}));
    ad::Var feature = ad::constant(filled_pattern({1, channels, kv_side, kv_side}));
    ad::Var wkv = ad::constant(filled_pattern({channels, 2 * channels}));
    ad::Var full_source = ad::tokenize(feature);

    constexpr int kReps = 5;
    b.full_ms = time_attention(q, full_source, wkv, heads, kReps);
    double pooled_best = 0;
    for (int r = 0; r < kReps; ++r) {
        const auto t0 = Clock::now();
        ad::Var pooled_source = pooled_tokens(feature, clipped);
        ad::Var kv = ad::linear(pooled_source, wkv, nullptr);
        ad::Var k = ad::slice(kv, 2, 0, channels);
        ad::Var v = ad::slice(kv, 2, channels, channels);
        ad::Var p = ad::softmax_rows(ad::attention_scores(q, k, heads));
        ad::Var out = ad::attention_apply(p, v, heads);
        volatile double sink = out->value.data()[0];
        (void)sink;
        const double ms = ms_since(t0);
        if (r == 0 || ms < pooled_best) pooled_best = ms;
    }
    b.pooled_ms = pooled_best;
    return b;
}

BenchReport run_bench(const RunConfig& cfg) {
    BenchReport report;
    const Index kv_side = cfg.model.image_size / 32;
    const Index q_side = kv_side / cfg.model.grid.rows;
    report.attention = bench_attention(cfg.model.widths[4], cfg.model.heads, q_side,
                                       kv_side, cfg.model.windows);

    ParamRegistry reg(cfg.seed);
    MvaNet model(reg, cfg.model);
    const Tensor image = generate_synthetic(cfg.seed, 1, cfg.model.image_size)[0].image;
    model.forward(image, false);  // warm up allocator and caches
    const auto t0 = Clock::now();
    model.forward(image, false);
    report.forward_ms = ms_since(t0);
    report.images_per_second = 1000.0 / report.forward_ms;
    return report;
}

int cmd_gen_data(std::uint64_t seed, int count, Index size, const std::string& out_dir) {
    try {
        const auto samples = generate_synthetic(seed, count, size);
        save_dataset(samples, out_dir);
        std::cout << "wrote " << samples.size() << " samples of " << size << "x" << size
                  << " to " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_train(const std::string& config_path) {
    try {
        std::string path = config_path.empty() ? default_config_path() : config_path;
        if (path.empty())
            throw ConfigError("no config file given and MVANET_CONFIG is not set");
        const RunConfig cfg = load_config(path);
        const TrainResult result = train_from_config(cfg, std::cout);
        std::cout << "trained " << result.steps << " steps, final total "
                  << result.totals.back() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir) {
    try {
        LoadedModel lm(read_checkpoint(checkpoint_path), 0);
        const auto dataset = load_dataset(data_dir);
        if (dataset.empty()) throw ConfigError("dataset at " + data_dir + " is empty");
        const Index s = lm.cfg.model.image_size;
        std::vector<Tensor> preds, gts;
        preds.reserve(dataset.size());
        const auto t0 = Clock::now();
        for (const auto& sample : dataset) {
            if (sample.image.dim(2) != s || sample.image.dim(3) != s)
                throw ConfigError("sample " + sample.id + " is " + sample.image.shape_str() +
                                  " but the checkpoint was trained at " + std::to_string(s) +
                                  "x" + std::to_string(s));
            preds.push_back(lm.model.forward(sample.image, false).prediction->value);
            gts.push_back(sample.mask);
        }
        const double seconds = ms_since(t0) / 1000.0;
        MetricsReport report = compute_all(preds, gts);
        report.throughput = static_cast<double>(dataset.size()) / seconds;
        std::filesystem::create_directories(out_dir);
        write_report_kv(report, out_dir + "/metrics.txt");
        write_report_table(report, out_dir + "/metrics.tsv");
        std::cout << "f_max=" << report.f_max << " f_weighted=" << report.f_weighted
                  << " s_measure=" << report.s_measure << " e_measure=" << report.e_measure
                  << " mae=" << report.mae << "\n"
                  << report.images_evaluated << " images at " << report.throughput
                  << " images/s; reports in " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_infer(const std::string& checkpoint_path, const std::string& image_path,
              const std::string& out_path) {
    try {
        const CheckpointData data = read_checkpoint(checkpoint_path);
        RunConfig cfg = parse_config_text(data.config_text);
        const Tensor image = read_ppm(image_path);
        const Index h = image.dim(2), w = image.dim(3);
        const Index rows = cfg.model.grid.rows;
        const Index need = 64 * rows;
        const Index need_deep = 32 * rows * rows;
        if (h != w || h % need != 0 || h % need_deep != 0)
            throw ConfigError("image is " + std::to_string(w) + "x" + std::to_string(h) +
                              "; inference needs a square side divisible by 64*rows=" +
                              std::to_string(need) + " and 32*rows^2=" +
                              std::to_string(need_deep) + " for the " +
                              std::to_string(rows) + "x" + std::to_string(cfg.model.grid.cols) +
                              " grid");
        LoadedModel lm(data, h);
        const auto t0 = Clock::now();
        const Tensor pred = lm.model.forward(image, false).prediction->value;
        const double ms = ms_since(t0);
        write_pgm(out_path, pred);
        std::cout << "wrote " << out_path << " (" << w << "x" << h << ") in " << ms
                  << " ms\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_bench(const std::string& config_path) {
    try {
        std::string path = config_path.empty() ? default_config_path() : config_path;
        if (path.empty())
            throw ConfigError("no config file given and MVANET_CONFIG is not set");
        const RunConfig cfg = load_config(path);
        const BenchReport r = run_bench(cfg);
        const auto& a = r.attention;
        std::cout << "localization attention, key source " << cfg.model.image_size / 32
                  << "x" << cfg.model.image_size / 32 << ", " << a.q_tokens
                  << " queries, channels " << cfg.model.widths[4] << ":\n"
                  << "  tokens:     full " << a.full_tokens << ", pooled "
                  << a.pooled_tokens << "\n"
                  << "  multiplies: full " << a.full_multiplies << ", pooled "
                  << a.pooled_multiplies << " (reduction " << a.reduction_percent
                  << "%)\n"
                  << "  wall time:  full " << a.full_ms << " ms, pooled " << a.pooled_ms
                  << " ms\n"
                  << "end-to-end at " << cfg.model.image_size << "x"
                  << cfg.model.image_size << ": " << r.forward_ms << " ms/image, "
                  << r.images_per_second << " images/s\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace mvanet
