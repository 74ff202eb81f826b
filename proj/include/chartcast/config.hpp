#pragma once

// Flat key=value run configuration with dotted namespaces. The parser is
// strict: unknown keys and malformed values are errors that name the key and
// line. Saved snapshots round-trip byte-for-byte and re-resolve to
// themselves.

#include <cstdint>
#include <optional>
#include <string>

#include "chartcast/branches.hpp"
#include "chartcast/encoder.hpp"

namespace chartcast {

struct RunConfig {
    // data
    std::string data_path;  // empty -> bundled synthetic generator
    bool data_has_header = true;
    std::int64_t data_date_column = 0;  // -1 -> no timestamp column
    std::size_t data_seasonal_period = 24;
    std::size_t data_lookback = 96;       // T
    std::size_t data_horizon = 24;        // H_f
    std::size_t data_window_stride = 1;
    double data_split_train = 0.7;
    double data_split_val = 0.1;
    double data_split_test = 0.2;
    double data_few_shot = 1.0;
    double data_std_floor = 1e-5;

    // bundled synthetic generator
    std::size_t synth_variates = 3;
    std::size_t synth_length = 2200;
    double synth_noise = 0.1;
    std::uint64_t synth_seed = 7;

    // patching
    std::size_t patch_len = 16;    // key patch.PL
    std::size_t patch_stride = 8;  // key patch.S_p

    // shared/language transformer
    std::size_t model_dim = 64;
    std::size_t model_depth = 2;
    std::size_t model_heads = 4;
    std::size_t model_ffn_ratio = 4;
    std::string model_activation = "gelu";  // gelu | relu

    // vision transformer
    std::size_t vision_dim = 64;
    std::size_t vision_depth = 2;
    std::size_t vision_heads = 4;
    std::size_t vision_ffn_ratio = 4;
    std::size_t vision_image_patch = 16;
    std::string vision_pool = "cls";  // cls | mean
    bool vision_freeze = false;

    // chart rendering
    std::size_t render_height = 64;
    std::size_t render_width = 64;
    std::size_t render_stroke = 2;
    bool render_grayscale = false;

    // contrastive alignment
    bool align_per_variate = false;
    double align_tau_init = 0.07;

    // fusion
    std::string fuse_strategy = "replace_last";

    // training
    double train_lambda1 = 1.0;
    double train_lambda2 = 0.1;
    double train_lr_encoder = 1e-4;
    double train_lr_head = 1e-3;
    std::string train_schedule = "cosine_to_zero";  // cosine_to_zero | exponential
    double train_gamma = 0.5;
    std::size_t train_batch_size = 16;
    std::size_t train_max_epochs = 30;
    std::size_t train_patience = 30;
    std::string train_gen_loss = "mse";  // mse | smape
    double train_weight_decay = 0.01;
    double train_clip_norm = 1.0;
    std::uint64_t train_seed = 2024;

    // ablation switches
    bool ablate_no_align = false;
    bool ablate_no_colorize = false;
    bool ablate_no_select = false;
    bool ablate_language_only = false;

    // output
    std::string out_dir = "out";

    EncoderConfig encoder_config() const;
    VisionConfig vision_config() const;
    PatchConfig patch_config() const;
    std::optional<std::size_t> date_column() const;
};

// Defaults overlaid with the file's pairs, then validated and resolved.
RunConfig load_config(const std::string& path);

// Parses one "key=value" pair into cfg; unknown key or bad value throws
// with the key (and line number when nonzero) in the message.
void apply_pair(RunConfig& cfg, const std::string& key, const std::string& value,
                std::size_t line = 0);

// Enforces flag implications (language-only disables alignment, the
// colorization ablation forces grayscale) and checks every value. Idempotent.
void resolve(RunConfig& cfg);

std::string to_string(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace chartcast
