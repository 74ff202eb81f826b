#include "chartcast/config.hpp"

#include "chartcast/selectfuse.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace chartcast {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            std::size_t line) {
    std::ostringstream os;
    os << "invalid value for config key '" << key << "': '" << value << "'";
    if (line) os << " (line " << line << ")";
    throw std::runtime_error(os.str());
}

// Full-precision float formatting that parses back bit-identically.
std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// One visitor drives parsing, serialization, and the known-key list, so the
// three can never drift apart.
template <class F>
void visit_fields(RunConfig& c, F&& f) {
    f("data.path", c.data_path);
    f("data.has_header", c.data_has_header);
    f("data.date_column", c.data_date_column);
    f("data.seasonal_period", c.data_seasonal_period);
    f("data.T", c.data_lookback);
    f("data.H_f", c.data_horizon);
    f("data.window_stride", c.data_window_stride);
    f("data.split_train", c.data_split_train);
    f("data.split_val", c.data_split_val);
    f("data.split_test", c.data_split_test);
    f("data.few_shot", c.data_few_shot);
    f("data.std_floor", c.data_std_floor);
    f("synth.variates", c.synth_variates);
    f("synth.length", c.synth_length);
    f("synth.noise", c.synth_noise);
    f("synth.seed", c.synth_seed);
    f("patch.PL", c.patch_len);
    f("patch.S_p", c.patch_stride);
    f("model.dim", c.model_dim);
    f("model.depth", c.model_depth);
    f("model.heads", c.model_heads);
    f("model.ffn_ratio", c.model_ffn_ratio);
    f("model.activation", c.model_activation);
    f("vision.dim", c.vision_dim);
    f("vision.depth", c.vision_depth);
    f("vision.heads", c.vision_heads);
    f("vision.ffn_ratio", c.vision_ffn_ratio);
    f("vision.image_patch", c.vision_image_patch);
    f("vision.pool", c.vision_pool);
    f("vision.freeze", c.vision_freeze);
    f("render.height", c.render_height);
    f("render.width", c.render_width);
    f("render.stroke", c.render_stroke);
    f("render.grayscale", c.render_grayscale);
    f("align.per_variate", c.align_per_variate);
    f("align.tau_init", c.align_tau_init);
    f("fuse.strategy", c.fuse_strategy);
    f("train.lambda1", c.train_lambda1);
    f("train.lambda2", c.train_lambda2);
    f("train.lr_encoder", c.train_lr_encoder);
    f("train.lr_head", c.train_lr_head);
    f("train.schedule", c.train_schedule);
    f("train.gamma", c.train_gamma);
    f("train.batch_size", c.train_batch_size);
    f("train.max_epochs", c.train_max_epochs);
    f("train.patience", c.train_patience);
    f("train.gen_loss", c.train_gen_loss);
    f("train.weight_decay", c.train_weight_decay);
    f("train.clip_norm", c.train_clip_norm);
    f("train.seed", c.train_seed);
    f("ablate.no_align", c.ablate_no_align);
    f("ablate.no_colorize", c.ablate_no_colorize);
    f("ablate.no_select", c.ablate_no_select);
    f("ablate.language_only", c.ablate_language_only);
    f("out.dir", c.out_dir);
}

struct Setter {
    const std::string& key;
    const std::string& value;
    std::size_t line;
    bool found = false;

    void operator()(const char* k, std::string& field) {
        if (key != k) return;
        found = true;
        field = value;
    }
    void operator()(const char* k, bool& field) {
        if (key != k) return;
        found = true;
        if (value == "true" || value == "1") field = true;
        else if (value == "false" || value == "0") field = false;
        else bad_value(key, value, line);
    }
    void operator()(const char* k, double& field) {
        if (key != k) return;
        found = true;
        try {
            std::size_t used = 0;
            field = std::stod(value, &used);
            if (used != value.size()) bad_value(key, value, line);
        } catch (const std::logic_error&) {
            bad_value(key, value, line);
        }
    }
    template <class Int>
    void parse_int(const char* k, Int& field) {
        if (key != k) return;
        found = true;
        Int v{};
        const auto* b = value.data();
        const auto* e = b + value.size();
        const auto r = std::from_chars(b, e, v);
        if (r.ec != std::errc{} || r.ptr != e) bad_value(key, value, line);
        field = v;
    }
    // std::size_t and std::uint64_t are the same type here; one overload
    // covers both.
    void operator()(const char* k, std::size_t& field) { parse_int(k, field); }
    void operator()(const char* k, std::int64_t& field) { parse_int(k, field); }
};

struct Printer {
    std::ostringstream& os;
    void operator()(const char* k, const std::string& v) { os << k << "=" << v << "\n"; }
    void operator()(const char* k, bool v) { os << k << "=" << (v ? "true" : "false") << "\n"; }
    void operator()(const char* k, double v) { os << k << "=" << format_double(v) << "\n"; }
    void operator()(const char* k, std::size_t v) { os << k << "=" << v << "\n"; }
    void operator()(const char* k, std::int64_t v) { os << k << "=" << v << "\n"; }
};

void check(bool ok, const std::string& message) {
    if (!ok) throw std::runtime_error("config: " + message);
}

}  // namespace

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig e;
    e.dim = model_dim;
    e.depth = model_depth;
    e.heads = model_heads;
    e.ffn_ratio = model_ffn_ratio;
    e.use_relu = model_activation == "relu";
    return e;
}

VisionConfig RunConfig::vision_config() const {
    VisionConfig v;
    v.dim = vision_dim;
    v.depth = vision_depth;
    v.heads = vision_heads;
    v.ffn_ratio = vision_ffn_ratio;
    v.image_patch = vision_image_patch;
    v.mean_pool = vision_pool == "mean";
    v.freeze = vision_freeze;
    return v;
}

PatchConfig RunConfig::patch_config() const { return {patch_len, patch_stride}; }

std::optional<std::size_t> RunConfig::date_column() const {
    if (data_date_column < 0) return std::nullopt;
    return static_cast<std::size_t>(data_date_column);
}

void apply_pair(RunConfig& cfg, const std::string& key, const std::string& value,
                std::size_t line) {
    Setter s{key, value, line};
    visit_fields(cfg, s);
    if (!s.found) {
        std::ostringstream os;
        os << "unknown config key '" << key << "'";
        if (line) os << " (line " << line << ")";
        throw std::runtime_error(os.str());
    }
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    RunConfig cfg;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            std::ostringstream os;
            os << "malformed config line " << lineno << " (expected key=value): '"
               << s << "'";
            throw std::runtime_error(os.str());
        }
        apply_pair(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), lineno);
    }
    resolve(cfg);
    return cfg;
}

void resolve(RunConfig& cfg) {
    // Language-only mode drops the vision branch entirely, so there is
    // nothing to align against; the colorization ablation is exactly the
    // grayscale palette.
    if (cfg.ablate_language_only) cfg.ablate_no_align = true;
    if (cfg.ablate_no_colorize) cfg.render_grayscale = true;

    check(cfg.data_lookback >= 2, "data.T must be at least 2");
    check(cfg.data_horizon >= 1, "data.H_f must be at least 1");
    check(cfg.data_window_stride >= 1, "data.window_stride must be positive");
    check(cfg.data_split_train > 0.0 && cfg.data_split_train < 1.0,
          "data.split_train must lie in (0, 1)");
    check(cfg.data_split_val >= 0.0 && cfg.data_split_val < 1.0,
          "data.split_val must lie in [0, 1)");
    check(cfg.data_split_test > 0.0 && cfg.data_split_test < 1.0,
          "data.split_test must lie in (0, 1)");
    check(cfg.data_split_train + cfg.data_split_val + cfg.data_split_test <=
              1.0 + 1e-12,
          "split fractions must sum to at most 1");
    check(cfg.data_few_shot > 0.0 && cfg.data_few_shot <= 1.0,
          "data.few_shot must lie in (0, 1]");
    check(cfg.data_std_floor > 0.0, "data.std_floor must be positive");
    check(cfg.synth_variates >= 1, "synth.variates must be positive");
    check(cfg.synth_length > cfg.data_lookback + cfg.data_horizon,
          "synth.length must exceed data.T + data.H_f");
    check(cfg.synth_noise >= 0.0, "synth.noise must be nonnegative");

    check(cfg.patch_stride >= 1, "patch.S_p must be positive");
    check(cfg.patch_stride <= cfg.patch_len, "patch.S_p must not exceed patch.PL");
    check(cfg.patch_len <= cfg.data_lookback, "patch.PL must not exceed data.T");

    check(cfg.model_dim >= 1 && cfg.model_heads >= 1 &&
              cfg.model_dim % cfg.model_heads == 0,
          "model.dim must be a positive multiple of model.heads");
    check(cfg.model_ffn_ratio >= 1, "model.ffn_ratio must be positive");
    check(cfg.model_activation == "gelu" || cfg.model_activation == "relu",
          "model.activation must be gelu or relu");
    check(cfg.vision_dim >= 1 && cfg.vision_heads >= 1 &&
              cfg.vision_dim % cfg.vision_heads == 0,
          "vision.dim must be a positive multiple of vision.heads");
    check(cfg.vision_pool == "cls" || cfg.vision_pool == "mean",
          "vision.pool must be cls or mean");
    check(cfg.vision_image_patch >= 1 &&
              cfg.render_height % cfg.vision_image_patch == 0 &&
              cfg.render_width % cfg.vision_image_patch == 0,
          "render dimensions must be multiples of vision.image_patch");
    check(cfg.render_stroke >= 1, "render.stroke must be positive");

    check(cfg.align_tau_init > 0.0, "align.tau_init must be positive");
    try {
        fuse_strategy_from_string(cfg.fuse_strategy);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("config: ") + e.what());
    }

    check(cfg.train_lambda1 >= 0.0 && cfg.train_lambda2 >= 0.0,
          "loss weights must be nonnegative");
    check(cfg.train_lr_encoder > 0.0 && cfg.train_lr_head > 0.0,
          "learning rates must be positive");
    check(cfg.train_schedule == "cosine_to_zero" ||
              cfg.train_schedule == "exponential",
          "train.schedule must be cosine_to_zero or exponential");
    check(cfg.train_gamma > 0.0 && cfg.train_gamma <= 1.0,
          "train.gamma must lie in (0, 1]");
    check(cfg.train_batch_size >= 1, "train.batch_size must be positive");
    check(cfg.train_max_epochs >= 1, "train.max_epochs must be positive");
    check(cfg.train_patience >= 1, "train.patience must be positive");
    check(cfg.train_gen_loss == "mse" || cfg.train_gen_loss == "smape",
          "train.gen_loss must be mse or smape");
    check(cfg.train_weight_decay >= 0.0, "train.weight_decay must be nonnegative");
    check(cfg.train_clip_norm > 0.0, "train.clip_norm must be positive");
    check(!cfg.out_dir.empty(), "out.dir must not be empty");
}

std::string to_string(const RunConfig& cfg) {
    std::ostringstream os;
    Printer p{os};
    visit_fields(const_cast<RunConfig&>(cfg), p);
    return os.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    out << to_string(cfg);
}

}  // namespace chartcast
