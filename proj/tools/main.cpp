// chartcast command line: train / eval / ablate / render / synth.
//
// Every verb reads the same flat key=value config (defaults when --config is
// omitted), honors a handful of overriding flags, and writes its artifacts
// under the configured output directory. Errors exit 1 after a single
// "error: ..." line on stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chartcast/config.hpp"
#include "chartcast/dataset.hpp"
#include "chartcast/metrics.hpp"
#include "chartcast/model.hpp"
#include "chartcast/png.hpp"
#include "chartcast/raster.hpp"
#include "chartcast/train.hpp"

using namespace chartcast;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool grayscale = false;
    bool language_only = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path,
                    "Key=value config file (defaults apply when omitted)");
    cmd->add_option("--seed", o.seed, "Override train.seed");
    cmd->add_option("--out", o.out_dir, "Override out.dir");
    cmd->add_flag("--grayscale", o.grayscale,
                  "Render charts without per-variate colors");
    cmd->add_flag("--language-only", o.language_only,
                  "Drop the vision branch entirely");
}

RunConfig build_config(const CommonOpts& o) {
    RunConfig cfg =
        o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) cfg.train_seed = *o.seed;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.grayscale) cfg.render_grayscale = true;
    if (o.language_only) cfg.ablate_language_only = true;
    resolve(cfg);
    return cfg;
}

RawSeries load_series(const RunConfig& cfg) {
    if (cfg.data_path.empty()) {
        RawSeries s = synth_multisine(cfg.synth_variates, cfg.synth_length,
                                      cfg.synth_seed, cfg.synth_noise);
        s.seasonal_period = cfg.data_seasonal_period;
        return s;
    }
    return load_csv(cfg.data_path, cfg.data_has_header, cfg.date_column(),
                    cfg.data_seasonal_period);
}

std::string dataset_label(const RunConfig& cfg) {
    if (cfg.data_path.empty()) return "synthetic";
    return std::filesystem::path(cfg.data_path).stem().string();
}

struct SplitWindows {
    std::vector<SeriesWindow> train, val, test;
};

SplitWindows build_windows(const RawSeries& series, const RunConfig& cfg) {
    const SplitSpec spec{cfg.data_split_train, cfg.data_split_val,
                         cfg.data_split_test, cfg.data_few_shot};
    const SplitRanges r =
        chronological_split(series, spec, cfg.data_lookback, cfg.data_horizon);
    SplitWindows w;
    auto cut = [&](std::size_t b, std::size_t e) {
        auto ws = make_windows(series, cfg.data_lookback, cfg.data_horizon,
                               cfg.data_window_stride, b, e);
        for (auto& win : ws) instance_normalize(win, cfg.data_std_floor);
        return ws;
    };
    w.train = cut(r.train_begin, r.train_end);
    w.val = cut(r.val_begin, r.val_end);
    w.test = cut(r.test_begin, r.test_end);
    return w;
}

// One aggregate report per split: element-mean point metrics over every
// (window, variate) horizon, per-horizon MASE scaled by the lookback's
// seasonal differences, and OWA against the seasonal-naive reference
// forecast built from the same lookbacks.
MetricReport evaluate_split(const ChartcastModel& model,
                            const std::vector<SeriesWindow>& windows,
                            std::size_t m) {
    std::vector<double> all_true, all_model, all_naive;
    double mase_model_sum = 0.0, mase_naive_sum = 0.0;
    std::size_t mase_n = 0;

    for (const SeriesWindow& w : windows) {
        const auto out = model.forward(w, false);
        const Tensor target = model.target(w);
        const std::size_t h = w.horizon;
        for (std::size_t c = 0; c < w.channels; ++c) {
            std::vector<double> y_true(h), y_pred(h), history(w.lookback);
            for (std::size_t t = 0; t < h; ++t) {
                y_true[t] = target.values()[c * h + t];
                y_pred[t] = out.forecast.values()[c * h + t];
            }
            for (std::size_t t = 0; t < w.lookback; ++t)
                history[t] =
                    w.x[t * w.channels + c] * w.norm_std[c] + w.norm_mean[c];
            const std::vector<double> y_naive = naive2_forecast(history, h, m);

            all_true.insert(all_true.end(), y_true.begin(), y_true.end());
            all_model.insert(all_model.end(), y_pred.begin(), y_pred.end());
            all_naive.insert(all_naive.end(), y_naive.begin(), y_naive.end());

            const auto mm = mase(y_true, y_pred, m, &history);
            const auto mn = mase(y_true, y_naive, m, &history);
            if (mm && mn) {
                mase_model_sum += *mm;
                mase_naive_sum += *mn;
                ++mase_n;
            }
        }
    }

    auto assemble = [&](const std::vector<double>& pred, double mase_sum) {
        MetricReport rep;
        const PointMetrics pm = point_metrics(all_true, pred);
        rep.mse = pm.mse;
        rep.mae = pm.mae;
        rep.smape = pm.smape;
        rep.mape = pm.mape;
        if (mase_n > 0) rep.mase = mase_sum / static_cast<double>(mase_n);
        rep.horizon = windows.empty() ? 0 : windows.front().horizon;
        rep.seasonal_period = m;
        return rep;
    };
    MetricReport rep = assemble(all_model, mase_model_sum);
    const MetricReport ref = assemble(all_naive, mase_naive_sum);
    rep.owa = owa(rep, ref);
    return rep;
}

void append_line(const std::string& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << line << "\n";
}

std::string opt_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

int cmd_train(const CommonOpts& o) {
    const RunConfig cfg = build_config(o);
    std::filesystem::create_directories(cfg.out_dir);

    const RawSeries series = load_series(cfg);
    const SplitWindows w = build_windows(series, cfg);
    std::printf("data: %s, %zu steps x %zu variates -> %zu/%zu/%zu windows\n",
                dataset_label(cfg).c_str(), series.length, series.channels,
                w.train.size(), w.val.size(), w.test.size());

    ChartcastModel model(cfg, series.channels);
    std::printf("model: %zu parameters in %zu tensors\n",
                model.registry().total_scalars(),
                model.registry().params().size());

    const std::string ckpt = cfg.out_dir + "/checkpoint.txt";
    const TrainResult r = train_model(
        model, w.train, w.val, cfg, ckpt, [](const EpochLog& e) {
            std::printf("%s\n", format_epoch(e).c_str());
            std::fflush(stdout);
        });

    std::ofstream epochs(cfg.out_dir + "/epochs.txt");
    for (const EpochLog& e : r.log) epochs << format_epoch(e) << "\n";
    epochs.close();
    save_config(cfg, cfg.out_dir + "/config.txt");

    if (r.diverged)
        throw std::runtime_error("training diverged: " + r.divergence_reason);
    std::printf("best val_gen %.8g at epoch %zu (%zu epochs%s)\n", r.best_val,
                r.best_epoch, r.epochs_run,
                r.early_stopped ? ", early stop" : "");

    const MetricReport test =
        evaluate_split(model, w.test, cfg.data_seasonal_period);
    append_line(cfg.out_dir + "/metrics.jsonl",
                test.json_line(dataset_label(cfg), "train"));
    std::printf("test: mse=%.6g mae=%.6g smape=%.4f", test.mse, test.mae,
                test.smape);
    if (test.mase) std::printf(" mase=%.4f", *test.mase);
    if (test.owa) std::printf(" owa=%.4f", *test.owa);
    std::printf("\ncheckpoint: %s\n", ckpt.c_str());
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint,
             const std::string& split) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    RunConfig cfg = ck.model->config();
    if (!o.config_path.empty()) cfg = load_config(o.config_path);
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    resolve(cfg);

    const RawSeries series = load_series(cfg);
    if (series.channels != ck.model->variates() ||
        cfg.data_lookback != ck.model->lookback() ||
        cfg.data_horizon != ck.model->horizon()) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "checkpoint expects N=%zu T=%zu H_f=%zu but the dataset "
                      "provides N=%zu T=%zu H_f=%zu",
                      ck.model->variates(), ck.model->lookback(),
                      ck.model->horizon(), series.channels, cfg.data_lookback,
                      cfg.data_horizon);
        throw std::runtime_error(buf);
    }

    const SplitWindows w = build_windows(series, cfg);
    const std::vector<SeriesWindow>* chosen = &w.test;
    if (split == "train")
        chosen = &w.train;
    else if (split == "val")
        chosen = &w.val;
    else if (split != "test")
        throw std::runtime_error("unknown split '" + split +
                                 "' (expected train, val or test)");
    if (chosen->empty()) throw std::runtime_error("split has no windows");

    const MetricReport rep =
        evaluate_split(*ck.model, *chosen, cfg.data_seasonal_period);
    std::filesystem::create_directories(cfg.out_dir);
    append_line(cfg.out_dir + "/metrics.jsonl",
                rep.json_line(dataset_label(cfg), "eval-" + split));
    std::printf("%s split (%zu windows): mse=%.6g mae=%.6g smape=%.4f",
                split.c_str(), chosen->size(), rep.mse, rep.mae, rep.smape);
    if (rep.mase) std::printf(" mase=%.4f", *rep.mase);
    if (rep.owa) std::printf(" owa=%.4f", *rep.owa);
    std::printf("\n");
    if (ck.model->has_vision()) {
        const double acc = evaluate_retrieval(
            *ck.model, *chosen,
            std::min<std::size_t>(cfg.train_batch_size, chosen->size()));
        std::printf("retrieval accuracy: %.4f\n", acc);
    }
    return 0;
}

int cmd_ablate(const CommonOpts& o, bool fusion_grid) {
    const RunConfig base = build_config(o);
    std::filesystem::create_directories(base.out_dir);

    struct Row {
        std::string name;
        RunConfig cfg;
    };
    std::vector<Row> rows;
    if (fusion_grid) {
        for (const char* s : {"replace_last", "replace_first", "concat_end"}) {
            RunConfig c = base;
            c.fuse_strategy = s;
            resolve(c);
            rows.push_back({s, c});
        }
    } else {
        auto variant = [&](const std::string& name, auto&& tweak) {
            RunConfig c = base;
            tweak(c);
            resolve(c);
            rows.push_back({name, c});
        };
        variant("full", [](RunConfig&) {});
        variant("no_align", [](RunConfig& c) { c.ablate_no_align = true; });
        variant("no_colorize",
                [](RunConfig& c) { c.ablate_no_colorize = true; });
        variant("no_select", [](RunConfig& c) { c.ablate_no_select = true; });
        variant("language_only",
                [](RunConfig& c) { c.ablate_language_only = true; });
    }

    // One dataset and one split shared by every row; only the model and its
    // training signal change.
    const RawSeries series = load_series(base);
    const SplitWindows w = build_windows(series, base);

    std::printf("# desk-scale comparison on '%s' (seed %llu): row ordering is\n"
                "# the signal here; absolute numbers are far from what the\n"
                "# same architecture reaches at full scale.\n",
                dataset_label(base).c_str(),
                static_cast<unsigned long long>(base.train_seed));
    std::printf("%-14s %10s %10s %9s %9s %9s %6s\n", "variant", "val_gen",
                "test_mse", "smape", "mase", "owa", "retr");

    const std::string jsonl = base.out_dir + "/ablation.jsonl";
    for (const Row& row : rows) {
        ChartcastModel model(row.cfg, series.channels);
        const TrainResult r = train_model(model, w.train, w.val, row.cfg);
        if (r.diverged)
            throw std::runtime_error("variant " + row.name +
                                     " diverged: " + r.divergence_reason);
        const MetricReport rep =
            evaluate_split(model, w.test, row.cfg.data_seasonal_period);
        const double retr = evaluate_retrieval(
            model, w.test,
            std::min<std::size_t>(row.cfg.train_batch_size, w.test.size()));
        std::printf("%-14s %10.5f %10.5f %9.4f %9s %9s %6.3f\n",
                    row.name.c_str(), r.best_val, rep.mse, rep.smape,
                    opt_cell(rep.mase).c_str(), opt_cell(rep.owa).c_str(),
                    retr);
        std::fflush(stdout);
        append_line(jsonl, rep.json_line(dataset_label(base), row.name));
    }
    std::printf("rows written to %s\n", jsonl.c_str());
    return 0;
}

int cmd_render(const CommonOpts& o, std::size_t window_index) {
    const RunConfig cfg = build_config(o);
    std::filesystem::create_directories(cfg.out_dir);

    const RawSeries series = load_series(cfg);
    auto windows = make_windows(series, cfg.data_lookback, cfg.data_horizon,
                                cfg.data_window_stride);
    if (window_index >= windows.size()) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "window index %zu out of range [0, %zu)", window_index,
                      windows.size());
        throw std::runtime_error(buf);
    }
    SeriesWindow w = windows[window_index];
    instance_normalize(w, cfg.data_std_floor);

    const auto images =
        render_sample(w, cfg.render_height, cfg.render_width,
                      cfg.render_stroke, cfg.render_grayscale);
    for (const VariateImage& img : images) {
        char name[96];
        std::snprintf(name, sizeof(name),
                      "window%zu_variate%zu_%02x%02x%02x.png", window_index,
                      img.variate_index, img.line_color[0], img.line_color[1],
                      img.line_color[2]);
        const std::string path = cfg.out_dir + "/" + name;
        write_png_rgb8(path, img.pixels.data(), img.width, img.height);
        std::printf("%s (%zux%zu, %zu clamped)\n", path.c_str(), img.width,
                    img.height, img.clamped);
    }
    return 0;
}

int cmd_synth(const CommonOpts& o) {
    const RunConfig cfg = build_config(o);
    std::filesystem::create_directories(cfg.out_dir);
    const RawSeries s = synth_multisine(cfg.synth_variates, cfg.synth_length,
                                        cfg.synth_seed, cfg.synth_noise);
    const std::string path = cfg.out_dir + "/synth.csv";
    save_csv(s, path);
    std::printf("%s: %zu steps x %zu variates (seed %llu, noise %g)\n",
                path.c_str(), s.length, s.channels,
                static_cast<unsigned long long>(cfg.synth_seed),
                cfg.synth_noise);
    return 0;
}

int check_thread_env() {
    const char* env = std::getenv("CHARTCAST_THREADS");
    if (!env) return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
        std::fprintf(stderr,
                     "error: CHARTCAST_THREADS must be a positive integer "
                     "(got '%s')\n",
                     env);
        return 1;
    }
    if (v > 1)
        std::fprintf(stderr,
                     "note: execution is single-threaded; CHARTCAST_THREADS=%ld "
                     "has no effect\n",
                     v);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (check_thread_env() != 0) return 1;

    CLI::App app{"chartcast: chart-grounded multivariate time-series "
                 "forecasting"};
    app.require_subcommand(1);

    CommonOpts train_o, eval_o, ablate_o, render_o, synth_o;
    std::string checkpoint, split = "test";
    bool fusion_grid = false;
    std::size_t window_index = 0;

    auto* c_train = app.add_subcommand(
        "train", "Train on the configured data and score the test split");
    add_common_flags(c_train, train_o);

    auto* c_eval =
        app.add_subcommand("eval", "Score a saved checkpoint on one split");
    add_common_flags(c_eval, eval_o);
    c_eval->add_option("--checkpoint", checkpoint, "Checkpoint file")
        ->required();
    c_eval->add_option("--split", split, "train | val | test");

    auto* c_ablate = app.add_subcommand(
        "ablate", "Train the ablation grid with shared data and seed");
    add_common_flags(c_ablate, ablate_o);
    c_ablate->add_flag("--fusion", fusion_grid,
                       "Compare fusion strategies instead of component drops");

    auto* c_render = app.add_subcommand(
        "render", "Write one chart PNG per variate of a lookback window");
    add_common_flags(c_render, render_o);
    c_render->add_option("--window", window_index, "Window index");

    auto* c_synth = app.add_subcommand(
        "synth", "Write the bundled synthetic series as CSV");
    add_common_flags(c_synth, synth_o);

    try {
        app.parse(argc, argv);
        if (c_train->parsed()) return cmd_train(train_o);
        if (c_eval->parsed()) return cmd_eval(eval_o, checkpoint, split);
        if (c_ablate->parsed()) return cmd_ablate(ablate_o, fusion_grid);
        if (c_render->parsed()) return cmd_render(render_o, window_index);
        if (c_synth->parsed()) return cmd_synth(synth_o);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
