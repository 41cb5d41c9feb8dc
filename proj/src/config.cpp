#include "mvanet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mvanet/errors.hpp"

namespace mvanet {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

template <typename T>
std::vector<T> parse_list(const std::string& v, const std::string& key) {
    std::vector<T> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(key + ": empty list element");
        out.push_back(static_cast<T>(parse_int(item, key)));
    }
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return out;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = line.substr(1, line.size() - 2);
            if (section != "model" && section != "loss" && section != "train" &&
                section != "paths")
                throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (section == "model") {
            if (key == "image_size") cfg.model.image_size = parse_int(val, qual);
            else if (key == "patch_rows") cfg.model.grid.rows = static_cast<int>(parse_int(val, qual));
            else if (key == "patch_cols") cfg.model.grid.cols = static_cast<int>(parse_int(val, qual));
            else if (key == "widths") cfg.model.widths = parse_list<Index>(val, qual);
            else if (key == "strides") cfg.strides = parse_list<int>(val, qual);
            else if (key == "decoder_width") cfg.model.decoder_width = parse_int(val, qual);
            else if (key == "heads") cfg.model.heads = static_cast<int>(parse_int(val, qual));
            else if (key == "windows") cfg.model.windows = parse_list<int>(val, qual);
            else if (key == "mclm") cfg.model.use_mclm = parse_bool(val, qual);
            else if (key == "mcrm") cfg.model.use_mcrm = parse_bool(val, qual);
            else if (key == "vrm") cfg.model.use_vrm = parse_bool(val, qual);
            else if (key == "views") cfg.model.views = parse_view_mode(val);
            else throw ConfigError("unknown key " + qual);
        } else if (section == "loss") {
            if (key == "lambda_g") cfg.loss.lambda_g = parse_double(val, qual);
            else if (key == "lambda_a") cfg.loss.lambda_a = parse_double(val, qual);
            else if (key == "weighted_iou") cfg.loss.weighted_iou = parse_bool(val, qual);
            else throw ConfigError("unknown key " + qual);
        } else if (section == "train") {
            if (key == "lr") cfg.lr = parse_double(val, qual);
            else if (key == "beta1") cfg.beta1 = parse_double(val, qual);
            else if (key == "beta2") cfg.beta2 = parse_double(val, qual);
            else if (key == "adam_eps") cfg.adam_eps = parse_double(val, qual);
            else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(val, qual));
            else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(val, qual));
            else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(parse_int(val, qual));
            else if (key == "augment") cfg.augment = parse_bool(val, qual);
            else throw ConfigError("unknown key " + qual);
        } else if (section == "paths") {
            if (key == "data") cfg.data_dir = val;
            else if (key == "out") cfg.out_dir = val;
            else throw ConfigError("unknown key " + qual);
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        }
    }
    validate_run_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[model]\n"
        << "image_size = " << cfg.model.image_size << "\n"
        << "patch_rows = " << cfg.model.grid.rows << "\n"
        << "patch_cols = " << cfg.model.grid.cols << "\n";
    out << "widths = ";
    for (size_t i = 0; i < cfg.model.widths.size(); ++i)
        out << (i ? "," : "") << cfg.model.widths[i];
    out << "\nstrides = ";
    for (size_t i = 0; i < cfg.strides.size(); ++i) out << (i ? "," : "") << cfg.strides[i];
    out << "\ndecoder_width = " << cfg.model.decoder_width << "\n"
        << "heads = " << cfg.model.heads << "\n";
    out << "windows = ";
    for (size_t i = 0; i < cfg.model.windows.size(); ++i)
        out << (i ? "," : "") << cfg.model.windows[i];
    out << "\nmclm = " << (cfg.model.use_mclm ? "true" : "false") << "\n"
        << "mcrm = " << (cfg.model.use_mcrm ? "true" : "false") << "\n"
        << "vrm = " << (cfg.model.use_vrm ? "true" : "false") << "\n"
        << "views = " << view_mode_name(cfg.model.views) << "\n\n";
    out << "[loss]\n"
        << "lambda_g = " << cfg.loss.lambda_g << "\n"
        << "lambda_a = " << cfg.loss.lambda_a << "\n"
        << "weighted_iou = " << (cfg.loss.weighted_iou ? "true" : "false") << "\n\n";
    out << "[train]\n"
        << "lr = " << cfg.lr << "\n"
        << "beta1 = " << cfg.beta1 << "\n"
        << "beta2 = " << cfg.beta2 << "\n"
        << "adam_eps = " << cfg.adam_eps << "\n"
        << "epochs = " << cfg.epochs << "\n"
        << "seed = " << cfg.seed << "\n"
        << "checkpoint_every = " << cfg.checkpoint_every << "\n"
        << "augment = " << (cfg.augment ? "true" : "false") << "\n\n";
    out << "[paths]\n"
        << "data = " << cfg.data_dir << "\n"
        << "out = " << cfg.out_dir << "\n";
    return out.str();
}

void validate_run_config(const RunConfig& cfg) {
    validate_model_config(cfg.model);
    const std::vector<int> ladder{4, 8, 16, 32, 32};
    if (cfg.strides != ladder)
        throw ConfigError("this build realizes the stride ladder 4,8,16,32,32");
    if (cfg.loss.lambda_g < 0 || cfg.loss.lambda_a < 0)
        throw ConfigError("loss weights must be non-negative");
    if (cfg.lr < 0) throw ConfigError("learning rate must be non-negative");
    if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
        throw ConfigError("optimizer moment coefficients must lie in [0,1)");
    if (cfg.adam_eps <= 0) throw ConfigError("adam_eps must be positive");
    if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
    if (cfg.checkpoint_every < 1) throw ConfigError("checkpoint_every must be at least 1");
}

std::string default_config_path() {
    const char* env = std::getenv("MVANET_CONFIG");
    return env ? env : "";
}

} // namespace mvanet
