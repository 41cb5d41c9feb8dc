#include "mvanet/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "mvanet/checkpoint.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/losses.hpp"

namespace mvanet {

namespace {

double scalar_of(const ad::Var& v) { return v->value.data()[0]; }

double stream_sum(const std::vector<ad::Var>& vars) {
    double s = 0;
    for (const auto& v : vars)
        if (v) s += scalar_of(v);
    return s;
}

std::string dump_components(std::uint64_t step, const LossBreakdown& lb) {
    std::ostringstream ss;
    ss << "non-finite loss at step " << step << ": total=" << scalar_of(lb.total)
       << " final=" << scalar_of(lb.l_f);
    for (size_t i = 0; i < lb.l_l.size(); ++i) {
        ss << " level" << (i + 1) << "={local=" << scalar_of(lb.l_l[i])
           << ",global=" << scalar_of(lb.l_g[i]);
        if (i < lb.l_a.size() && lb.l_a[i]) ss << ",attn=" << scalar_of(lb.l_a[i]);
        ss << "}";
    }
    return ss.str();
}

} // namespace

Trainer::Trainer(const RunConfig& cfg)
    : cfg_((validate_run_config(cfg), cfg)), reg_(cfg.seed), model_(reg_, cfg.model) {}

TrainResult Trainer::run(const std::vector<Sample>& dataset, std::ostream& log) {
    if (dataset.empty()) throw ConfigError("training dataset is empty");
    const Index s = cfg_.model.image_size;
    for (const auto& sample : dataset) {
        if (sample.image.rank() != 4 || sample.image.dim(1) != 3 ||
            sample.image.dim(2) != s || sample.image.dim(3) != s)
            throw ConfigError("sample " + sample.id + " is " + sample.image.shape_str() +
                              ", config wants (1,3," + std::to_string(s) + "," +
                              std::to_string(s) + ")");
    }

    const auto params = reg_.trainable();
    std::vector<Tensor> m, v;
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.push_back(Tensor::zeros(p->value.shape()));
        v.push_back(Tensor::zeros(p->value.shape()));
    }

    std::filesystem::create_directories(cfg_.out_dir);
    const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg_.epochs);

    TrainResult result;
    result.totals.reserve(total_steps);
    for (std::uint64_t t = 0; t < total_steps; ++t) {
        // One step = one pass over the dataset: images go through one at a
        // time (each expanded to its views), gradients accumulate, and a
        // single optimizer update is applied on the summed loss. The logged
        // total is therefore the objective itself.
        ad::zero_grad(params);
        double total = 0, lf = 0, ll = 0, lg = 0, la = 0;
        for (std::size_t k = 0; k < dataset.size(); ++k) {
            const Sample* sample = &dataset[k];
            Sample augmented;
            if (cfg_.augment) {
                const std::uint64_t n = t * dataset.size() + k + 1;
                augmented = augment(*sample, cfg_.seed ^ (0xD1B54A32D192ED03ULL * n)).sample;
                sample = &augmented;
            }

            ForwardResult fwd = model_.forward(sample->image, true);
            LossBreakdown lb = total_loss(fwd.supervision, sample->mask, cfg_.loss);
            const double item = scalar_of(lb.total);
            if (!std::isfinite(item)) {
                const std::string dump = dump_components(t + 1, lb);
                log << dump << "\n";
                throw std::runtime_error(dump);
            }
            total += item;
            lf += scalar_of(lb.l_f);
            ll += stream_sum(lb.l_l);
            lg += stream_sum(lb.l_g);
            la += stream_sum(lb.l_a);
            ad::backward(lb.total);
        }
        result.totals.push_back(total);

        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t + 1));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t + 1));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            double* theta = p->value.data();
            double* mi = m[i].data();
            double* vi = v[i].data();
            const double* g = p->has_grad ? p->grad.data() : nullptr;
            for (Index j = 0; j < p->value.numel(); ++j) {
                const double gj = g ? g[j] : 0.0;
                mi[j] = cfg_.beta1 * mi[j] + (1.0 - cfg_.beta1) * gj;
                vi[j] = cfg_.beta2 * vi[j] + (1.0 - cfg_.beta2) * gj * gj;
                theta[j] -= cfg_.lr * (mi[j] / bc1) / (std::sqrt(vi[j] / bc2) + cfg_.adam_eps);
            }
        }

        log << "step " << (t + 1) << "/" << total_steps << std::setprecision(6)
            << std::fixed << " total " << total << " final " << lf << " local " << ll
            << " global " << lg << " attn " << la << std::defaultfloat
            << std::setprecision(6) << "\n";

        if ((t + 1) % static_cast<std::uint64_t>(cfg_.checkpoint_every) == 0 &&
            t + 1 != total_steps) {
            const std::string path =
                cfg_.out_dir + "/checkpoint_" + std::to_string(t + 1) + ".ckpt";
            write_checkpoint(path, snapshot(reg_, cfg_, t + 1));
            log << "wrote " << path << "\n";
        }
    }

    result.steps = total_steps;
    result.final_checkpoint = cfg_.out_dir + "/checkpoint_final.ckpt";
    write_checkpoint(result.final_checkpoint, snapshot(reg_, cfg_, total_steps));
    log << "wrote " << result.final_checkpoint << "\n";
    return result;
}

TrainResult train_from_config(const RunConfig& cfg, std::ostream& log) {
    Trainer trainer(cfg);
    return trainer.run(load_dataset(cfg.data_dir), log);
}

} // namespace mvanet
